#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "multiqa/corpus.hpp"
#include "multiqa/llm_client.hpp"
#include "multiqa/question.hpp"
#include "multiqa/retrieval.hpp"

namespace multiqa {

struct GoldAnswer {
    std::vector<std::string> aliases;  // non-empty; first is canonical
};

struct GoldRecord {
    Question question;
    std::vector<GoldAnswer> answers;  // non-empty
};

struct AnswerSetMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0;  // gold answers matched by at least one prediction
    long fp = 0;  // predictions matching no gold
    long fn = 0;  // gold answers matched by no prediction

    nlohmann::json to_json() const;
};

/// Gold file: JSON-lines {question_id, question, question_type, answers: [[alias,...],...]}.
std::vector<GoldRecord> load_gold_records(const std::filesystem::path& path);

/// Alias-aware exact match after normalization (trim, collapse whitespace,
/// casefold, strip one pair of surrounding quotes). No fuzzy matching.
bool match(const std::string& prediction, const GoldAnswer& gold);

/// Set precision/recall/F1. Precision counts matching predictions over all
/// predictions; recall counts matched golds over all golds; each gold and
/// each prediction counts at most once. Empty predictions score 0/0/0.
AnswerSetMetrics score_question(const std::vector<std::string>& predictions,
                                const GoldRecord& gold);

/// Arithmetic mean of precision, recall, and f1 independently (f1 is NOT
/// recomputed from the mean P/R); tp/fp/fn are summed.
AnswerSetMetrics macro_average(const std::vector<AnswerSetMetrics>& per_question);

/// Fraction of gold answers with some alias appearing as a normalized
/// substring of title+text of any top-k pool passage.
double arecall_at_k(const RetrievalPool& pool, const GoldRecord& gold, int k,
                    const PassageStore& store);

/// Appendix-style semantic matching: asks the judge for the 1-based index
/// of the matching gold answer or "None". Out-of-range or unparseable
/// output means no match.
std::optional<size_t> llm_judge_match(const std::string& prediction, const GoldRecord& gold,
                                      LlmClient& judge);

/// score_question with judge matching instead of exact matching.
AnswerSetMetrics score_question_judged(const std::vector<std::string>& predictions,
                                       const GoldRecord& gold, LlmClient& judge);

}  // namespace multiqa
