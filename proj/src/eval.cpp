#include "multiqa/eval.hpp"

#include <algorithm>
#include <cctype>

#include "multiqa/errors.hpp"
#include "multiqa/jsonl.hpp"
#include "multiqa/prompts.hpp"
#include "multiqa/text.hpp"

namespace multiqa {

using nlohmann::json;

json AnswerSetMetrics::to_json() const {
    return json{{"precision", precision}, {"recall", recall}, {"f1", f1},
                {"tp", tp},               {"fp", fp},         {"fn", fn}};
}

std::vector<GoldRecord> load_gold_records(const std::filesystem::path& path) {
    std::vector<GoldRecord> records;
    for_each_jsonl(path, [&](const json& rec, long line) {
        GoldRecord gold;
        if (!rec.contains("question_id") || !rec.contains("question")) {
            throw ParseError("gold record needs question_id and question", line);
        }
        gold.question.id = rec.at("question_id").get<std::string>();
        gold.question.text = rec.at("question").get<std::string>();
        gold.question.dataset_tag = rec.value("dataset_tag", "");
        gold.question.question_type =
            question_type_from_string(rec.value("question_type", "unknown"));
        if (gold.question.text.empty()) throw ParseError("question text is empty", line);
        if (!rec.contains("answers") || !rec.at("answers").is_array() || rec.at("answers").empty()) {
            throw ParseError("gold record needs a non-empty answers array", line);
        }
        for (const auto& aliases : rec.at("answers")) {
            GoldAnswer answer;
            if (aliases.is_string()) {
                answer.aliases.push_back(aliases.get<std::string>());
            } else {
                answer.aliases = aliases.get<std::vector<std::string>>();
            }
            if (answer.aliases.empty()) throw ParseError("gold answer has no aliases", line);
            for (const auto& a : answer.aliases) {
                if (a.empty()) throw ParseError("gold alias is empty", line);
            }
            gold.answers.push_back(std::move(answer));
        }
        records.push_back(std::move(gold));
    });
    return records;
}

bool match(const std::string& prediction, const GoldAnswer& gold) {
    std::string p = normalize_for_match(prediction);
    for (const auto& alias : gold.aliases) {
        if (p == normalize_for_match(alias)) return true;
    }
    return false;
}

AnswerSetMetrics score_question(const std::vector<std::string>& predictions,
                                const GoldRecord& gold) {
    AnswerSetMetrics m;
    if (gold.answers.empty()) throw ContractError("gold answer set is empty");

    std::vector<bool> gold_matched(gold.answers.size(), false);
    long matching_predictions = 0;
    for (const auto& pred : predictions) {
        bool matched = false;
        for (size_t g = 0; g < gold.answers.size(); ++g) {
            if (match(pred, gold.answers[g])) {
                gold_matched[g] = true;
                matched = true;
            }
        }
        if (matched) ++matching_predictions;
    }

    m.tp = std::count(gold_matched.begin(), gold_matched.end(), true);
    m.fp = long(predictions.size()) - matching_predictions;
    m.fn = long(gold.answers.size()) - m.tp;
    m.precision = predictions.empty() ? 0.0
                                      : double(matching_predictions) / double(predictions.size());
    m.recall = double(m.tp) / double(gold.answers.size());
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

AnswerSetMetrics macro_average(const std::vector<AnswerSetMetrics>& per_question) {
    if (per_question.empty()) throw ContractError("cannot macro-average zero questions");
    AnswerSetMetrics m;
    for (const auto& q : per_question) {
        m.precision += q.precision;
        m.recall += q.recall;
        m.f1 += q.f1;
        m.tp += q.tp;
        m.fp += q.fp;
        m.fn += q.fn;
    }
    double n = double(per_question.size());
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    return m;
}

double arecall_at_k(const RetrievalPool& pool, const GoldRecord& gold, int k,
                    const PassageStore& store) {
    if (k < 1) throw ContractError("k must be positive");
    if (gold.answers.empty()) throw ContractError("gold answer set is empty");

    size_t n = std::min(size_t(k), pool.entries.size());
    std::vector<std::string> haystacks;
    haystacks.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const Passage& p = store.get_passage(pool.entries[i].passage_id);
        haystacks.push_back(normalize_answer(p.title + " " + p.text));
    }

    long covered = 0;
    for (const auto& answer : gold.answers) {
        bool found = false;
        for (const auto& alias : answer.aliases) {
            std::string needle = normalize_answer(alias);
            if (needle.empty()) continue;
            for (const auto& hay : haystacks) {
                if (hay.find(needle) != std::string::npos) {
                    found = true;
                    break;
                }
            }
            if (found) break;
        }
        if (found) ++covered;
    }
    return double(covered) / double(gold.answers.size());
}

std::optional<size_t> llm_judge_match(const std::string& prediction, const GoldRecord& gold,
                                      LlmClient& judge) {
    std::vector<std::vector<std::string>> aliases;
    aliases.reserve(gold.answers.size());
    for (const auto& a : gold.answers) aliases.push_back(a.aliases);

    ChatRequest request = render_judge_prompt(gold.question.text, aliases, prediction);
    request.model_id = judge.spec().model_id;
    std::string raw = trim(judge.generate(request));

    if (to_lower(raw).find("none") == 0) return std::nullopt;
    size_t pos = 0;
    while (pos < raw.size() && !std::isdigit(static_cast<unsigned char>(raw[pos]))) ++pos;
    if (pos == raw.size()) return std::nullopt;  // unparseable output: no match
    size_t end = pos;
    while (end < raw.size() && std::isdigit(static_cast<unsigned char>(raw[end]))) ++end;
    unsigned long index = std::stoul(raw.substr(pos, end - pos));
    if (index < 1 || index > gold.answers.size()) return std::nullopt;  // out of range
    return size_t(index);
}

AnswerSetMetrics score_question_judged(const std::vector<std::string>& predictions,
                                       const GoldRecord& gold, LlmClient& judge) {
    AnswerSetMetrics m;
    std::vector<bool> gold_matched(gold.answers.size(), false);
    long matching_predictions = 0;
    for (const auto& pred : predictions) {
        auto index = llm_judge_match(pred, gold, judge);
        if (index) {
            gold_matched[*index - 1] = true;
            ++matching_predictions;
        }
    }
    m.tp = std::count(gold_matched.begin(), gold_matched.end(), true);
    m.fp = long(predictions.size()) - matching_predictions;
    m.fn = long(gold.answers.size()) - m.tp;
    m.precision = predictions.empty() ? 0.0
                                      : double(matching_predictions) / double(predictions.size());
    m.recall = double(m.tp) / double(gold.answers.size());
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

}  // namespace multiqa
