#include "lmadapt/evalmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lmadapt/error.hpp"

namespace lmadapt {

namespace {

int normalize_answer(const nlohmann::json& v, size_t lineno) {
    if (v.is_number_integer()) {
        int a = v.get<int>();
        if (a < 0 || a > 3)
            data_error("benchmark line " + std::to_string(lineno) + ": answer index " +
                       std::to_string(a) + " out of range 0..3");
        return a;
    }
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s.size() == 1) {
            if (s[0] >= 'A' && s[0] <= 'D') return s[0] - 'A';
            if (s[0] >= 'a' && s[0] <= 'd') return s[0] - 'a';
            if (s[0] >= '0' && s[0] <= '3') return s[0] - '0';
        }
        data_error("benchmark line " + std::to_string(lineno) + ": unknown answer label '" + s + "'");
    }
    data_error("benchmark line " + std::to_string(lineno) + ": answer must be a letter or index");
}

std::vector<McqItem> load_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) data_error("benchmark: cannot open '" + path + "'");
    std::vector<McqItem> items;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            data_error("benchmark line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        if (!j.contains("question") || !j["question"].is_string())
            data_error("benchmark line " + std::to_string(lineno) + ": missing string 'question'");
        if (!j.contains("options") || !j["options"].is_array() || j["options"].size() != 4)
            data_error("benchmark line " + std::to_string(lineno) +
                       ": 'options' must be an array of exactly 4");
        if (!j.contains("answer"))
            data_error("benchmark line " + std::to_string(lineno) + ": missing 'answer'");
        McqItem item;
        item.question = j["question"].get<std::string>();
        for (size_t i = 0; i < 4; ++i) {
            if (!j["options"][i].is_string())
                data_error("benchmark line " + std::to_string(lineno) + ": options must be strings");
            item.options[i] = j["options"][i].get<std::string>();
        }
        item.answer = normalize_answer(j["answer"], lineno);
        if (j.contains("subject") && j["subject"].is_string())
            item.subject = j["subject"].get<std::string>();
        if (j.contains("id")) {
            if (j["id"].is_string())
                item.id = j["id"].get<std::string>();
            else if (j["id"].is_number_integer())
                item.id = std::to_string(j["id"].get<int64_t>());
        }
        items.push_back(std::move(item));
    }
    return items;
}

// RFC-4180-ish: quoted fields may contain commas, quotes double up
std::vector<std::string> split_csv_line(const std::string& line, size_t lineno) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) data_error("benchmark line " + std::to_string(lineno) + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

std::vector<McqItem> load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) data_error("benchmark: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) data_error("benchmark: '" + path + "' is empty");
    std::vector<std::string> header = split_csv_line(line, 1);
    auto col = [&](const std::string& name) -> int {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    };
    int c_q = col("question"), c_a = col("option_a"), c_b = col("option_b"), c_c = col("option_c"),
        c_d = col("option_d"), c_ans = col("answer"), c_subj = col("subject"), c_id = col("id");
    if (c_q < 0 || c_a < 0 || c_b < 0 || c_c < 0 || c_d < 0 || c_ans < 0)
        data_error("benchmark: CSV header must name question,option_a..option_d,answer");

    std::vector<McqItem> items;
    size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line, lineno);
        auto get = [&](int idx) -> std::string {
            if (idx < 0 || static_cast<size_t>(idx) >= fields.size())
                data_error("benchmark line " + std::to_string(lineno) + ": missing column");
            return fields[static_cast<size_t>(idx)];
        };
        McqItem item;
        item.question = get(c_q);
        item.options = {get(c_a), get(c_b), get(c_c), get(c_d)};
        item.answer = normalize_answer(nlohmann::json(get(c_ans)), lineno);
        if (c_subj >= 0 && static_cast<size_t>(c_subj) < fields.size())
            item.subject = fields[static_cast<size_t>(c_subj)];
        if (c_id >= 0 && static_cast<size_t>(c_id) < fields.size())
            item.id = fields[static_cast<size_t>(c_id)];
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace

std::vector<McqItem> load_benchmark(const std::string& path) {
    if (path.ends_with(".csv")) return load_csv(path);
    return load_jsonl(path);
}

std::string build_prompt_raw(const McqItem& item, const PromptTemplate& tmpl) {
    std::string s = tmpl.question_label + ": " + item.question + "\n";
    for (size_t i = 0; i < 4; ++i)
        s += tmpl.option_letters[i] + ". " + item.options[i] + "\n";
    s += tmpl.answer_label + ":";
    return s;
}

std::vector<ChatMessage> build_prompt_chat(const McqItem& item, const PromptTemplate& tmpl) {
    return {{"system", tmpl.system_text}, {"user", build_prompt_raw(item, tmpl)}};
}

std::string render_chat(const std::vector<ChatMessage>& messages) {
    std::string s;
    for (const auto& m : messages) s += "<|" + m.role + "|>\n" + m.content + "\n";
    s += "<|assistant|>\n";
    return s;
}

std::string build_prompt_text(const McqItem& item, const PromptTemplate& tmpl) {
    if (tmpl.format == PromptFormat::Raw) return build_prompt_raw(item, tmpl);
    return render_chat(build_prompt_chat(item, tmpl));
}

AnswerProbs answer_probs(const Tensor& last_logits, const Tokenizer& tok,
                         const PromptTemplate& tmpl) {
    if (last_logits.rank() != 1)
        data_error("answer_probs: expected rank-1 logits, got " + shape_str(last_logits.shape()));
    const int64_t v = last_logits.dim(0);

    // full-vocabulary softmax in double
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < v; ++i) mx = std::max(mx, last_logits.get(i));
    std::vector<double> p(static_cast<size_t>(v));
    double sum = 0.0;
    for (int64_t i = 0; i < v; ++i) {
        p[static_cast<size_t>(i)] = std::exp(last_logits.get(i) - mx);
        sum += p[static_cast<size_t>(i)];
    }
    for (double& x : p) x /= sum;

    static const std::array<const char*, 3> kPrefixes = {"", " ", "\n"};
    AnswerProbs out;
    double qsum = 0.0;
    for (size_t letter = 0; letter < 4; ++letter) {
        double best = -1.0;
        for (const char* pfx : kPrefixes) {
            std::vector<int32_t> ids = tok.encode(std::string(pfx) + tmpl.option_letters[letter]);
            if (ids.size() != 1) continue;  // only single-token variants are live
            if (ids[0] < 0 || ids[0] >= v) continue;
            best = std::max(best, p[static_cast<size_t>(ids[0])]);
        }
        if (best < 0.0)
            config_error("answer_probs: no single-token encoding for letter '" +
                         tmpl.option_letters[letter] + "'");
        out.probs[letter] = best;
        qsum += best;
    }
    for (double& x : out.probs) x /= qsum;
    out.predicted = 0;
    for (size_t letter = 1; letter < 4; ++letter)
        if (out.probs[letter] > out.probs[static_cast<size_t>(out.predicted)])
            out.predicted = static_cast<int>(letter);
    return out;
}

int default_thread_count() {
    const char* env = std::getenv("LMADAPT_THREADS");
    if (env == nullptr) return 1;
    int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

EvalReport evaluate(const TinyLM& model, const std::vector<McqItem>& benchmark,
                    const PromptTemplate& tmpl, const Tokenizer& tok, const EvalOptions& opts) {
    struct Slot {
        bool skipped = false;
        bool failed = false;
        std::string error;
        ItemRecord rec;
    };
    std::vector<Slot> slots(benchmark.size());

    auto run_item = [&](size_t idx) {
        const McqItem& item = benchmark[idx];
        Slot& slot = slots[idx];
        try {
            std::string prompt = build_prompt_text(item, tmpl);
            std::vector<int32_t> ids = tok.encode(prompt);
            if (static_cast<int64_t>(ids.size()) > model.config.max_seq) {
                slot.skipped = true;
                return;
            }
            if (ids.empty()) data_error("evaluate: prompt tokenizes to nothing");
            ForwardOptions fo;
            fo.act_quant = opts.act_quant;
            Tensor logits = forward(model, ids, fo);
            const int64_t v = logits.dim(1);
            Tensor last(logits.dtype(), {v});
            for (int64_t j = 0; j < v; ++j) last.set(j, logits.get((logits.dim(0) - 1) * v + j));
            AnswerProbs ap = answer_probs(last, tok, tmpl);
            slot.rec.index = static_cast<int>(idx);
            slot.rec.id = item.id.empty() ? std::to_string(idx) : item.id;
            slot.rec.predicted = ap.predicted;
            slot.rec.probs = ap.probs;
            slot.rec.correct = ap.predicted == item.answer;
        } catch (const Error& e) {
            slot.failed = true;
            slot.error = e.what();
        }
    };

    int threads = std::max(1, opts.threads);
    if (threads <= 1 || benchmark.size() < 2) {
        for (size_t i = 0; i < benchmark.size(); ++i) run_item(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < benchmark.size(); i = next.fetch_add(1))
                    run_item(i);
            });
        for (auto& th : pool) th.join();
    }

    EvalReport report;
    for (size_t i = 0; i < benchmark.size(); ++i) {
        const Slot& slot = slots[i];
        if (slot.failed) {
            if (opts.strict)
                data_error("evaluate: item " + std::to_string(i) + " failed: " + slot.error);
            continue;
        }
        if (slot.skipped) {
            ++report.skipped;
            continue;
        }
        ++report.total;
        if (slot.rec.correct) ++report.correct;
        if (!benchmark[i].subject.empty()) {
            auto& [c, t] = report.per_subject[benchmark[i].subject];
            t += 1;
            if (slot.rec.correct) c += 1;
        }
        report.items.push_back(slot.rec);
    }
    report.overall =
        report.total == 0 ? 0.0 : static_cast<double>(report.correct) / static_cast<double>(report.total);
    return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["overall_accuracy"] = report.overall;
    j["total"] = report.total;
    j["correct"] = report.correct;
    j["skipped"] = report.skipped;
    nlohmann::json subj = nlohmann::json::object();
    for (const auto& [name, ct] : report.per_subject) {
        subj[name] = {{"correct", ct.first},
                      {"total", ct.second},
                      {"accuracy", ct.second == 0 ? 0.0
                                                  : static_cast<double>(ct.first) /
                                                        static_cast<double>(ct.second)}};
    }
    j["per_subject"] = subj;
    nlohmann::json items = nlohmann::json::array();
    for (const auto& r : report.items) {
        items.push_back({{"index", r.index},
                         {"id", r.id},
                         {"predicted", r.predicted},
                         {"probs", r.probs},
                         {"correct", r.correct}});
    }
    j["items"] = items;
    std::ofstream f(path, std::ios::trunc);
    if (!f) data_error("report: cannot open '" + path + "' for writing");
    f << j.dump(2) << "\n";
}

std::string report_summary(const EvalReport& report) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-24s %8s %8s %10s\n", "subject", "correct", "total",
                  "accuracy");
    os << line;
    for (const auto& [name, ct] : report.per_subject) {
        std::snprintf(line, sizeof line, "%-24s %8lld %8lld %9.1f%%\n", name.c_str(),
                      static_cast<long long>(ct.first), static_cast<long long>(ct.second),
                      ct.second == 0 ? 0.0 : 100.0 * ct.first / static_cast<double>(ct.second));
        os << line;
    }
    std::snprintf(line, sizeof line, "%-24s %8lld %8lld %9.1f%%\n", "overall",
                  static_cast<long long>(report.correct), static_cast<long long>(report.total),
                  100.0 * report.overall);
    os << line;
    if (report.skipped > 0) os << report.skipped << " items skipped (prompt over max_seq)\n";
    return os.str();
}

}  // namespace lmadapt
