#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace lmadapt {

enum class TokenizerKind { CharLevel, Bpe, WordLevel };

// Immutable after construction; encode is pure and parallelizable.
//
// CharLevel: one token per Unicode scalar, unknown scalars map to <unk>.
// WordLevel: one token per whitespace-delimited word, unknowns map to <unk>.
// Bpe: whitespace pre-tokenization (the whitespace run preceding a word is
//   attached to it), initial symbols are single bytes, then the
//   highest-priority applicable merge is applied until none applies. Final
//   symbols not in the vocab fall back to <0xNN> byte tokens; unmerged
//   pure-whitespace symbols with no vocab entry are delimiter whitespace and
//   produce no token.
struct Tokenizer {
    TokenizerKind kind = TokenizerKind::CharLevel;
    std::map<std::string, int32_t> vocab;
    std::vector<std::pair<std::string, std::string>> merges;  // priority = index
    std::set<int32_t> specials;  // excluded from fertility counts
    int32_t unk_id = -1;

    static Tokenizer char_level(const std::vector<std::string>& tokens);
    static Tokenizer word_level(const std::vector<std::string>& tokens);
    static Tokenizer bpe(const std::vector<std::string>& tokens,
                         const std::vector<std::pair<std::string, std::string>>& merges);

    // Vocab file: one token per line, id = line number. Merge file: two
    // tokens per line separated by one space, priority = line order. Tokens
    // use backslash escapes: \n \t \r \\ \s (space) \xNN.
    static Tokenizer load(TokenizerKind kind, const std::string& vocab_path,
                          const std::string& merges_path = "");

    std::vector<int32_t> encode(std::string_view text) const;
    size_t vocab_size() const { return vocab.size(); }

    void validate() const;  // dense ids, merge outputs present in vocab
};

std::string escape_token(std::string_view token);
std::string unescape_token(std::string_view text);

struct CorpusStats {
    uint64_t characters = 0;  // Unicode scalars
    uint64_t words = 0;       // whitespace-delimited
    double avg_word_len = 0;  // mean characters per word
    uint64_t samples = 0;
};

CorpusStats corpus_stats(const std::vector<std::string>& docs);

// (sum of non-special tokens) / (sum of words); errors when the corpus has no
// words.
double fertility(const Tokenizer& tok, const std::vector<std::string>& docs);

// Path may be a UTF-8 text file (one document), a directory of such files, or
// a .jsonl file with a "text" field per line.
std::vector<std::string> load_corpus(const std::string& path);

}  // namespace lmadapt
