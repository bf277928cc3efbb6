#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "multiqa/corpus.hpp"
#include "multiqa/llm_client.hpp"
#include "multiqa/prompts.hpp"
#include "multiqa/question.hpp"
#include "multiqa/reader.hpp"
#include "multiqa/retrieval.hpp"

namespace multiqa {

enum class VerificationKind { categorical, factual };

struct VerificationQuestion {
    std::string template_text;  // holds exactly one [answer] placeholder
    VerificationKind kind = VerificationKind::factual;
    bool negated = false;  // retain on False instead of True (factual only)
    int ordinal = 0;
};

enum class PlanMode { generated, self_reflection, fallback_self_reflection };

struct VerificationPlan {
    std::string question_id;
    std::vector<VerificationQuestion> vqs;  // categorical first when present
    std::string raw_generation;             // audit trail
    PlanMode mode = PlanMode::generated;
    bool truncated = false;  // factual questions beyond the cap were dropped

    const VerificationQuestion* categorical() const;
    std::vector<const VerificationQuestion*> factual() const;

    nlohmann::json to_json() const;
    static VerificationPlan from_json(const nlohmann::json& j);
};

struct Verdict {
    std::string candidate_normalized;
    int vq_ordinal = 0;
    double p_plus = 0.0;
    double p_minus = 0.0;
    bool outcome = false;  // strictly p_plus > p_minus
    std::vector<std::string> evidence_passage_ids;

    nlohmann::json to_json() const;
    static Verdict from_json(const nlohmann::json& j);
};

struct FilterResult {
    std::string question_id;
    std::vector<AnswerCandidate> retained;
    std::vector<std::pair<AnswerCandidate, int>> rejected;  // with first failing ordinal
    std::vector<Verdict> verdicts;

    nlohmann::json to_json() const;
    static FilterResult from_json(const nlohmann::json& j);
};

struct IpvConfig {
    bool enabled = true;
    int k_extra = 1;
    bool skip_categorical = false;
    bool skip_factual = false;
    bool self_reflection = false;
    int max_factual_questions = 4;
    std::vector<std::string> positive_variants = {"True", "true", "TRUE"};
    std::vector<std::string> negative_variants = {"False", "false", "FALSE"};
    VqgFlavor flavor = VqgFlavor::standard;
    int parallelism = 4;

    static IpvConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Everything verification needs besides the candidate itself.
struct IpvContext {
    const PassageStore& store;
    const Retriever& retriever;
    LlmClient& verifier;
};

/// Parses a raw VQG response into a plan: first bullet is the categorical
/// question, the rest are factual. Throws ParseError on a missing section,
/// missing placeholder, zero factual questions, or a tagged categorical.
VerificationPlan parse_verification_plan(const Question& question, const std::string& raw,
                                         int max_factual_questions = 4);

/// Renders the few-shot VQG dialogue and parses the response; one retry on
/// a parse error, then a self-reflection fallback plan (flagged).
VerificationPlan generate_verification_plan(const Question& question, VqgFlavor flavor,
                                            LlmClient& vqg_client,
                                            int max_factual_questions = 4);

/// Single-question ablation plan: no categorical check, one factual
/// question asking whether the candidate answers the original question.
VerificationPlan self_reflection_plan(const Question& question);

/// Placeholder substitution with the candidate's exact surface form.
std::string instantiate(const VerificationQuestion& vq, const AnswerCandidate& candidate);

/// Evidence for one (candidate, verification question) pair. Categorical
/// questions ground on the source passage alone; factual add k_extra
/// pool-scoped retrievals (source excluded). Candidates without provenance
/// draw all evidence from the pool.
std::vector<Passage> gather_evidence(const AnswerCandidate& candidate,
                                     const VerificationQuestion& vq, const RetrievalPool& pool,
                                     int k_extra, const IpvContext& ctx);

struct CandidateDecision {
    bool kept = false;
    std::vector<Verdict> verdicts;
};

/// Categorical first with short-circuit on False (no factual retrieval),
/// then every factual question in ordinal order. Retention: categorical
/// True and every factual verdict matching its polarity.
CandidateDecision verify_candidate(const AnswerCandidate& candidate, const VerificationPlan& plan,
                                   const RetrievalPool& pool, const IpvConfig& config,
                                   const IpvContext& ctx);

/// Applies verify_candidate to every candidate, preserving order.
FilterResult filter_candidates(const CandidateSet& candidates, const VerificationPlan& plan,
                               const RetrievalPool& pool, const IpvConfig& config,
                               const IpvContext& ctx);

/// Pure retention rule over verdict outcomes in plan order (the oracle
/// side of the exhaustive truth-table check lives in tests).
bool retention_decision(const std::vector<VerificationQuestion>& vqs,
                        const std::vector<bool>& outcomes);

}  // namespace multiqa
