#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "multiqa/corpus.hpp"
#include "multiqa/llm_client.hpp"
#include "multiqa/question.hpp"
#include "multiqa/retrieval.hpp"

namespace multiqa {

struct AnswerCandidate {
    std::string surface;            // as generated
    std::string normalized;         // dedupe key: trim + collapse + casefold
    std::string source_passage_id;  // empty for concatenated / closed-book reads
    std::string question_id;

    bool operator==(const AnswerCandidate&) const = default;
};

struct CandidateSet {
    std::string question_id;
    std::vector<AnswerCandidate> candidates;
    ReadingMode reading_mode = ReadingMode::independent;
    long passages_read = 0;
    long failed_reads = 0;  // in-memory run accounting, not persisted

    nlohmann::json to_json() const;
    static CandidateSet from_json(const nlohmann::json& j);
};

struct ReaderOptions {
    int max_tokens = 512;
    double failure_budget = 0.5;  // abort the question beyond this failure fraction
    int parallelism = 4;
};

/// One generate call per top-k passage; answers unioned in rank order with
/// first-occurrence provenance. A failed read contributes nothing; more
/// than failure_budget of reads failing aborts the question.
CandidateSet read_independent(const Question& question, const RetrievalPool& pool, int k,
                              const PassageStore& store, LlmClient& client,
                              const ReaderOptions& options = {});

/// Single call over the whole top-k slice; candidates carry no provenance.
CandidateSet read_concatenated(const Question& question, const RetrievalPool& pool, int k,
                               const PassageStore& store, LlmClient& client,
                               const ReaderOptions& options = {});

CandidateSet read_closed_book(const Question& question, LlmClient& client,
                              const ReaderOptions& options = {});

/// Union + dedupe on the normalized form, keeping the first surface and
/// source seen. Parsed per-passage answer lists go in reading order.
std::vector<AnswerCandidate> dedupe_candidates(const std::vector<AnswerCandidate>& in_order);

}  // namespace multiqa
