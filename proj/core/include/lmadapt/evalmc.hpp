#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "lmadapt/model.hpp"
#include "lmadapt/tensor.hpp"
#include "lmadapt/tok.hpp"

namespace lmadapt {

struct McqItem {
    std::string question;
    std::array<std::string, 4> options;
    int answer = 0;  // 0..3
    std::string subject;
    std::string id;
};

// JSONL: one object per line with keys question, options (array of 4),
// answer ("A".."D", "0".."3" or integer 0..3), optional subject/id. CSV with
// header question,option_a,option_b,option_c,option_d,answer[,subject][,id]
// is also accepted. Errors carry the offending line number.
std::vector<McqItem> load_benchmark(const std::string& path);

enum class PromptFormat { Raw, Chat };

struct PromptTemplate {
    PromptFormat format = PromptFormat::Raw;
    std::string question_label = "Question";
    std::string answer_label = "Answer";
    std::string system_text =
        "You are a helpful assistant. Answer the question with a single letter.";
    std::array<std::string, 4> option_letters = {"A", "B", "C", "D"};
};

struct ChatMessage {
    std::string role;
    std::string content;
};

// Raw layout, byte-exact (no trailing space after the final colon):
//   {question_label}: {question}\nA. {opt1}\n...\nD. {opt4}\n{answer_label}:
std::string build_prompt_raw(const McqItem& item, const PromptTemplate& tmpl);
std::vector<ChatMessage> build_prompt_chat(const McqItem& item, const PromptTemplate& tmpl);
// Turn-marker rendering ending with the assistant opener:
//   <|system|>\n{system}\n<|user|>\n{body}\n<|assistant|>\n
std::string render_chat(const std::vector<ChatMessage>& messages);
// Raw prompt or rendered chat, whichever the template selects.
std::string build_prompt_text(const McqItem& item, const PromptTemplate& tmpl);

struct AnswerProbs {
    std::array<double, 4> probs{};
    int predicted = 0;
};

// Full-vocabulary softmax, then per letter the maximum probability over its
// single-token encodings ("A", " A", "\nA"), renormalized over the four
// letters. Ties resolve to the earliest letter.
AnswerProbs answer_probs(const Tensor& last_logits, const Tokenizer& tok,
                         const PromptTemplate& tmpl);

struct ItemRecord {
    int index = 0;
    std::string id;
    int predicted = 0;
    std::array<double, 4> probs{};
    bool correct = false;
};

struct EvalReport {
    double overall = 0.0;
    int64_t total = 0;
    int64_t correct = 0;
    int64_t skipped = 0;  // prompts longer than max_seq
    std::map<std::string, std::pair<int64_t, int64_t>> per_subject;  // correct / total
    std::vector<ItemRecord> items;  // sorted by input index
};

struct EvalOptions {
    bool strict = true;  // abort on a failed item instead of excluding it
    int threads = 1;     // > 1 splits items across threads
    ActQuantConfig act_quant;
};

EvalReport evaluate(const TinyLM& model, const std::vector<McqItem>& benchmark,
                    const PromptTemplate& tmpl, const Tokenizer& tok, const EvalOptions& opts = {});

void write_report_json(const EvalReport& report, const std::string& path);
std::string report_summary(const EvalReport& report);

int default_thread_count();  // LMADAPT_THREADS, else 1

}  // namespace lmadapt
