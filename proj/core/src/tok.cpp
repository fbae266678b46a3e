#include "lmadapt/tok.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "lmadapt/error.hpp"

namespace lmadapt {

namespace {

bool is_space_byte(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool all_space(std::string_view s) {
    for (char c : s)
        if (!is_space_byte(c)) return false;
    return !s.empty();
}

// decodes the next UTF-8 scalar; invalid bytes count as one scalar each
size_t next_scalar_len(std::string_view s, size_t pos) {
    unsigned char c = static_cast<unsigned char>(s[pos]);
    size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xe0) == 0xc0) len = 2;
    else if ((c & 0xf0) == 0xe0) len = 3;
    else if ((c & 0xf8) == 0xf0) len = 4;
    if (pos + len > s.size()) return 1;
    for (size_t i = 1; i < len; ++i)
        if ((static_cast<unsigned char>(s[pos + i]) & 0xc0) != 0x80) return 1;
    return len;
}

uint64_t count_scalars(std::string_view s) {
    uint64_t n = 0;
    for (size_t pos = 0; pos < s.size(); pos += next_scalar_len(s, pos)) ++n;
    return n;
}

}  // namespace

std::string escape_token(std::string_view token) {
    std::string out;
    for (char c : token) {
        switch (c) {
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            case '\\': out += "\\\\"; break;
            case ' ': out += "\\s"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape_token(std::string_view text) {
    std::string out;
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\\' || i + 1 >= text.size()) {
            out += text[i];
            continue;
        }
        char c = text[++i];
        switch (c) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case 'r': out += '\r'; break;
            case 's': out += ' '; break;
            case '\\': out += '\\'; break;
            case 'x': {
                if (i + 2 >= text.size()) data_error("token escape: truncated \\xNN");
                auto hex = [](char h) -> int {
                    if (h >= '0' && h <= '9') return h - '0';
                    if (h >= 'a' && h <= 'f') return h - 'a' + 10;
                    if (h >= 'A' && h <= 'F') return h - 'A' + 10;
                    data_error("token escape: bad hex digit");
                };
                out += static_cast<char>(hex(text[i + 1]) * 16 + hex(text[i + 2]));
                i += 2;
                break;
            }
            default: data_error(std::string("token escape: unknown escape \\") + c);
        }
    }
    return out;
}

namespace {

Tokenizer from_tokens(TokenizerKind kind, const std::vector<std::string>& tokens) {
    Tokenizer t;
    t.kind = kind;
    for (size_t i = 0; i < tokens.size(); ++i) {
        auto [it, inserted] = t.vocab.emplace(tokens[i], static_cast<int32_t>(i));
        if (!inserted) data_error("tokenizer: duplicate vocab entry '" + escape_token(tokens[i]) + "'");
        if (tokens[i] == "<unk>") t.unk_id = static_cast<int32_t>(i);
    }
    return t;
}

}  // namespace

Tokenizer Tokenizer::char_level(const std::vector<std::string>& tokens) {
    return from_tokens(TokenizerKind::CharLevel, tokens);
}

Tokenizer Tokenizer::word_level(const std::vector<std::string>& tokens) {
    return from_tokens(TokenizerKind::WordLevel, tokens);
}

Tokenizer Tokenizer::bpe(const std::vector<std::string>& tokens,
                         const std::vector<std::pair<std::string, std::string>>& merges) {
    Tokenizer t = from_tokens(TokenizerKind::Bpe, tokens);
    t.merges = merges;
    t.validate();
    return t;
}

void Tokenizer::validate() const {
    std::set<int32_t> ids;
    for (const auto& [tok, id] : vocab) {
        (void)tok;
        ids.insert(id);
    }
    if (!ids.empty() && (*ids.begin() != 0 || *ids.rbegin() != static_cast<int32_t>(ids.size()) - 1))
        data_error("tokenizer: ids must be dense in [0, vocab size)");
    for (const auto& [l, r] : merges)
        if (vocab.find(l + r) == vocab.end())
            data_error("tokenizer: merge output '" + escape_token(l + r) + "' is not in the vocab");
}

Tokenizer Tokenizer::load(TokenizerKind kind, const std::string& vocab_path,
                          const std::string& merges_path) {
    std::ifstream vf(vocab_path);
    if (!vf) data_error("tokenizer: cannot open vocab file '" + vocab_path + "'");
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(vf, line)) tokens.push_back(unescape_token(line));

    std::vector<std::pair<std::string, std::string>> merges;
    if (!merges_path.empty()) {
        std::ifstream mf(merges_path);
        if (!mf) data_error("tokenizer: cannot open merges file '" + merges_path + "'");
        size_t lineno = 0;
        while (std::getline(mf, line)) {
            ++lineno;
            if (line.empty()) continue;
            size_t sp = line.find(' ');
            if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
                data_error("tokenizer: merges line " + std::to_string(lineno) +
                           " must be 'left right'");
            merges.emplace_back(unescape_token(line.substr(0, sp)),
                                unescape_token(line.substr(sp + 1)));
        }
    }

    Tokenizer t = from_tokens(kind, tokens);
    t.merges = std::move(merges);
    t.validate();
    return t;
}

namespace {

void encode_char_level(const Tokenizer& t, std::string_view text, std::vector<int32_t>& out) {
    for (size_t pos = 0; pos < text.size();) {
        size_t len = next_scalar_len(text, pos);
        auto it = t.vocab.find(std::string(text.substr(pos, len)));
        if (it != t.vocab.end())
            out.push_back(it->second);
        else if (t.unk_id >= 0)
            out.push_back(t.unk_id);
        pos += len;
    }
}

void encode_word_level(const Tokenizer& t, std::string_view text, std::vector<int32_t>& out) {
    size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && is_space_byte(text[pos])) ++pos;
        size_t start = pos;
        while (pos < text.size() && !is_space_byte(text[pos])) ++pos;
        if (pos == start) break;
        auto it = t.vocab.find(std::string(text.substr(start, pos - start)));
        if (it != t.vocab.end())
            out.push_back(it->second);
        else if (t.unk_id >= 0)
            out.push_back(t.unk_id);
    }
}

void encode_bpe_piece(const Tokenizer& t, std::string_view piece, std::vector<int32_t>& out) {
    std::vector<std::string> symbols;
    for (char c : piece) symbols.emplace_back(1, c);

    // repeatedly apply the best-ranked adjacent pair
    while (symbols.size() > 1) {
        size_t best_rank = t.merges.size();
        for (size_t i = 0; i + 1 < symbols.size(); ++i) {
            for (size_t r = 0; r < best_rank; ++r) {
                if (t.merges[r].first == symbols[i] && t.merges[r].second == symbols[i + 1]) {
                    best_rank = r;
                    break;
                }
            }
        }
        if (best_rank == t.merges.size()) break;
        const auto& [l, r] = t.merges[best_rank];
        std::vector<std::string> next;
        for (size_t i = 0; i < symbols.size();) {
            if (i + 1 < symbols.size() && symbols[i] == l && symbols[i + 1] == r) {
                next.push_back(l + r);
                i += 2;
            } else {
                next.push_back(symbols[i]);
                i += 1;
            }
        }
        symbols = std::move(next);
    }

    for (const auto& sym : symbols) {
        auto it = t.vocab.find(sym);
        if (it != t.vocab.end()) {
            out.push_back(it->second);
            continue;
        }
        if (all_space(sym)) continue;  // delimiter whitespace no merge absorbed
        // byte fallback
        for (unsigned char b : sym) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "<0x%02X>", b);
            auto bit = t.vocab.find(buf);
            if (bit != t.vocab.end())
                out.push_back(bit->second);
            else if (t.unk_id >= 0)
                out.push_back(t.unk_id);
        }
    }
}

void encode_bpe(const Tokenizer& t, std::string_view text, std::vector<int32_t>& out) {
    // pieces are non-whitespace runs, each carrying the whitespace run that
    // precedes it
    size_t pos = 0;
    while (pos < text.size()) {
        size_t ws_start = pos;
        while (pos < text.size() && is_space_byte(text[pos])) ++pos;
        size_t word_start = pos;
        while (pos < text.size() && !is_space_byte(text[pos])) ++pos;
        if (pos == word_start && ws_start == word_start) break;
        std::string_view piece = text.substr(ws_start, pos - ws_start);
        if (!piece.empty()) encode_bpe_piece(t, piece, out);
    }
}

}  // namespace

std::vector<int32_t> Tokenizer::encode(std::string_view text) const {
    std::vector<int32_t> out;
    switch (kind) {
        case TokenizerKind::CharLevel: encode_char_level(*this, text, out); break;
        case TokenizerKind::WordLevel: encode_word_level(*this, text, out); break;
        case TokenizerKind::Bpe: encode_bpe(*this, text, out); break;
    }
    return out;
}

CorpusStats corpus_stats(const std::vector<std::string>& docs) {
    CorpusStats st;
    st.samples = docs.size();
    uint64_t word_char_total = 0;
    for (const auto& doc : docs) {
        st.characters += count_scalars(doc);
        size_t pos = 0;
        std::string_view s(doc);
        while (pos < s.size()) {
            while (pos < s.size() && is_space_byte(s[pos])) ++pos;
            size_t start = pos;
            while (pos < s.size() && !is_space_byte(s[pos])) ++pos;
            if (pos > start) {
                ++st.words;
                word_char_total += count_scalars(s.substr(start, pos - start));
            }
        }
    }
    st.avg_word_len =
        st.words == 0 ? 0.0 : static_cast<double>(word_char_total) / static_cast<double>(st.words);
    return st;
}

double fertility(const Tokenizer& tok, const std::vector<std::string>& docs) {
    uint64_t tokens = 0;
    for (const auto& doc : docs) {
        for (int32_t id : tok.encode(doc))
            if (tok.specials.find(id) == tok.specials.end()) ++tokens;
    }
    CorpusStats st = corpus_stats(docs);
    if (st.words == 0) data_error("fertility: corpus has no words (division by zero word count)");
    return static_cast<double>(tokens) / static_cast<double>(st.words);
}

std::vector<std::string> load_corpus(const std::string& path) {
    namespace fs = std::filesystem;
    std::vector<std::string> docs;
    auto read_file = [](const fs::path& p) -> std::string {
        std::ifstream f(p, std::ios::binary);
        if (!f) data_error("corpus: cannot open '" + p.string() + "'");
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };

    fs::path p(path);
    if (!fs::exists(p)) data_error("corpus: path '" + path + "' does not exist");
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) docs.push_back(read_file(f));
        return docs;
    }
    if (p.extension() == ".jsonl") {
        std::ifstream f(p);
        if (!f) data_error("corpus: cannot open '" + path + "'");
        std::string line;
        size_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                data_error("corpus: line " + std::to_string(lineno) + " of '" + path +
                           "' is not valid JSON: " + e.what());
            }
            if (!j.contains("text") || !j["text"].is_string())
                data_error("corpus: line " + std::to_string(lineno) + " of '" + path +
                           "' has no string \"text\" field");
            docs.push_back(j["text"].get<std::string>());
        }
        return docs;
    }
    docs.push_back(read_file(p));
    return docs;
}

}  // namespace lmadapt
