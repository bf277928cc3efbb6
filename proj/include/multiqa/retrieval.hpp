#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "multiqa/corpus.hpp"
#include "multiqa/llm_client.hpp"
#include "multiqa/question.hpp"

namespace multiqa {

struct RankedPassage {
    std::string passage_id;
    double score = 0.0;
    int rank = 0;  // 1-based, gap-free within one result list

    bool operator==(const RankedPassage&) const = default;
};

enum class RetrieverKind { sparse, dense, fused };

RetrieverKind retriever_kind_from_string(const std::string& s);
std::string retriever_kind_name(RetrieverKind k);

struct PerRetrieverRank {
    std::optional<int> sparse_rank;
    std::optional<int> dense_rank;
};

struct RetrievalPool {
    std::string question_id;
    std::string retriever_id;
    std::vector<RankedPassage> entries;
    std::map<std::string, PerRetrieverRank> per_retriever_ranks;

    std::vector<nlohmann::json> to_jsonl() const;
    static RetrievalPool from_jsonl(const std::vector<nlohmann::json>& lines,
                                    std::string question_id, std::string retriever_id);
};

struct IndexStats {
    long doc_count = 0;
    double avg_doc_len = 0.0;
    long vocabulary_size = 0;

    bool operator==(const IndexStats&) const = default;
};

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

/// Okapi BM25 over an in-memory inverted index. IDF uses the nonnegative
/// form ln(1 + (N - df + 0.5) / (df + 0.5)); term weight is
/// tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl)). Repeated query tokens
/// contribute once per occurrence. Ties break by ascending passage id.
class Bm25Index {
public:
    static Bm25Index build(const PassageStore& store, Bm25Params params = {});
    static Bm25Index load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    IndexStats stats() const;

    /// Top-n matching passages by BM25 score. A query with no indexed
    /// terms yields an empty list.
    std::vector<RankedPassage> search(const std::string& query, size_t top_n) const;

    /// Same scoring restricted to the given passage ids.
    std::vector<RankedPassage> search_subset(const std::string& query, size_t top_n,
                                             const std::unordered_set<std::string>& allowed) const;

private:
    std::vector<RankedPassage> search_impl(const std::string& query, size_t top_n,
                                           const std::unordered_set<std::string>* allowed) const;

    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<int> doc_lens_;
    double avg_doc_len_ = 0.0;
    // term -> (doc index, term frequency), ascending doc index
    std::map<std::string, std::vector<std::pair<int, int>>> postings_;
};

/// Exhaustive inner-product search over unit-normalized passage embeddings.
/// The cache is a little-endian float32 matrix plus a JSON sidecar naming
/// the model, dimension, passage order, and source corpus hash.
class DenseIndex {
public:
    static DenseIndex build(const PassageStore& store, LlmClient& client, std::string model_id);
    static DenseIndex load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    size_t dimension() const { return dimension_; }
    const std::string& model_id() const { return model_id_; }
    const std::string& corpus_hash() const { return corpus_hash_; }

    std::vector<RankedPassage> search_vector(std::span<const float> query, size_t top_n) const;
    std::vector<RankedPassage> search(const std::string& query, LlmClient& client,
                                      size_t top_n) const;
    std::vector<RankedPassage> search_subset(const std::string& query, LlmClient& client,
                                             size_t top_n,
                                             const std::unordered_set<std::string>& allowed) const;

private:
    std::vector<RankedPassage> search_vector_impl(std::span<const float> query, size_t top_n,
                                                  const std::unordered_set<std::string>* allowed) const;
    std::vector<float> embed_query(const std::string& query, LlmClient& client) const;

    std::string model_id_;
    std::string corpus_hash_;
    size_t dimension_ = 0;
    std::vector<std::string> passage_ids_;
    std::vector<float> vectors_;  // row-major passage_ids_.size() x dimension_
};

/// Reciprocal rank fusion: fused(p) = sum over lists containing p of
/// 1/(k_rrf + rank). Requires at least two lists; output sorted by fused
/// score descending, ties by ascending passage id.
std::vector<RankedPassage> rrf_fuse(const std::vector<std::vector<RankedPassage>>& lists,
                                    int k_rrf);

struct RetrievalConfig {
    int pool_size = 1000;
    int top_k = 200;
    int k_rrf = 60;
    Bm25Params bm25;
    RetrieverKind kind = RetrieverKind::sparse;
    std::string embed_model_id;
};

/// Front door for the retrieval stage: owns whichever indexes the
/// configured retriever kind needs and serves pool construction plus
/// pool-scoped re-scoring for evidence gathering.
class Retriever {
public:
    Retriever(RetrievalConfig config, std::shared_ptr<const Bm25Index> sparse,
              std::shared_ptr<const DenseIndex> dense, std::shared_ptr<LlmClient> embed_client);

    std::vector<RankedPassage> sparse_search(const std::string& query, size_t top_n) const;
    std::vector<RankedPassage> dense_search(const std::string& query, size_t top_n) const;

    RetrievalPool build_pool(const Question& question, int pool_size, RetrieverKind kind) const;
    RetrievalPool build_pool(const Question& question) const {
        return build_pool(question, config_.pool_size, config_.kind);
    }

    /// Re-scores only the pool's members against a new query with the
    /// pool's retriever kind. Excluded ids are never returned.
    std::vector<RankedPassage> search_within_pool(
        const RetrievalPool& pool, const std::string& query, size_t k,
        const std::unordered_set<std::string>& exclude) const;

    const RetrievalConfig& config() const { return config_; }
    long pool_search_calls() const { return pool_search_calls_.load(); }
    void reset_counters() { pool_search_calls_ = 0; }

private:
    RetrievalConfig config_;
    std::shared_ptr<const Bm25Index> sparse_;
    std::shared_ptr<const DenseIndex> dense_;
    std::shared_ptr<LlmClient> embed_client_;
    mutable std::atomic<long> pool_search_calls_{0};
};

}  // namespace multiqa
