#include "multiqa/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "multiqa/errors.hpp"
#include "multiqa/jsonl.hpp"
#include "multiqa/text.hpp"

namespace multiqa {

using nlohmann::json;

RetrieverKind retriever_kind_from_string(const std::string& s) {
    if (s == "sparse") return RetrieverKind::sparse;
    if (s == "dense") return RetrieverKind::dense;
    if (s == "fused") return RetrieverKind::fused;
    throw ConfigError("unknown retriever kind '" + s + "'");
}

std::string retriever_kind_name(RetrieverKind k) {
    switch (k) {
        case RetrieverKind::sparse: return "sparse";
        case RetrieverKind::dense: return "dense";
        case RetrieverKind::fused: return "fused";
    }
    return "sparse";
}

namespace {

/// Sort scored candidates by descending score, ties by ascending id, and
/// assign gap-free 1-based ranks.
std::vector<RankedPassage> rank_scored(std::vector<std::pair<std::string, double>> scored,
                                       size_t top_n) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > top_n) scored.resize(top_n);
    std::vector<RankedPassage> out;
    out.reserve(scored.size());
    for (size_t i = 0; i < scored.size(); ++i) {
        out.push_back({scored[i].first, scored[i].second, int(i) + 1});
    }
    return out;
}

void append_le_f32(std::string& buf, float value) {
    auto bits = std::bit_cast<uint32_t>(value);
    buf.push_back(char(bits & 0xff));
    buf.push_back(char((bits >> 8) & 0xff));
    buf.push_back(char((bits >> 16) & 0xff));
    buf.push_back(char((bits >> 24) & 0xff));
}

float read_le_f32(const char* p) {
    uint32_t bits = uint32_t(uint8_t(p[0])) | (uint32_t(uint8_t(p[1])) << 8) |
                    (uint32_t(uint8_t(p[2])) << 16) | (uint32_t(uint8_t(p[3])) << 24);
    return std::bit_cast<float>(bits);
}

}  // namespace

// ---------------------------------------------------------------------------
// Bm25Index

Bm25Index Bm25Index::build(const PassageStore& store, Bm25Params params) {
    if (store.size() == 0) throw ContractError("cannot build an index over an empty corpus");
    Bm25Index index;
    index.params_ = params;

    long total_len = 0;
    std::map<std::string, std::map<int, int>> term_freqs;
    for (const Passage& p : store.passages()) {
        int doc_idx = int(index.doc_ids_.size());
        index.doc_ids_.push_back(p.id);
        auto tokens = tokenize(p.text);
        index.doc_lens_.push_back(int(tokens.size()));
        total_len += long(tokens.size());
        for (const auto& tok : tokens) ++term_freqs[tok][doc_idx];
    }
    index.avg_doc_len_ = index.doc_ids_.empty() ? 0.0 : double(total_len) / double(index.doc_ids_.size());
    for (auto& [term, freqs] : term_freqs) {
        auto& postings = index.postings_[term];
        postings.reserve(freqs.size());
        for (auto [doc_idx, tf] : freqs) postings.emplace_back(doc_idx, tf);
    }
    return index;
}

IndexStats Bm25Index::stats() const {
    return IndexStats{long(doc_ids_.size()), avg_doc_len_, long(postings_.size())};
}

std::vector<RankedPassage> Bm25Index::search(const std::string& query, size_t top_n) const {
    return search_impl(query, top_n, nullptr);
}

std::vector<RankedPassage> Bm25Index::search_subset(
    const std::string& query, size_t top_n, const std::unordered_set<std::string>& allowed) const {
    return search_impl(query, top_n, &allowed);
}

std::vector<RankedPassage> Bm25Index::search_impl(
    const std::string& query, size_t top_n,
    const std::unordered_set<std::string>* allowed) const {
    const double n_docs = double(doc_ids_.size());
    std::unordered_map<int, double> scores;
    for (const auto& tok : tokenize(query)) {
        auto it = postings_.find(tok);
        if (it == postings_.end()) continue;
        const auto& postings = it->second;
        double idf = std::log(1.0 + (n_docs - double(postings.size()) + 0.5) /
                                        (double(postings.size()) + 0.5));
        for (auto [doc_idx, tf] : postings) {
            double dl = double(doc_lens_[size_t(doc_idx)]);
            double denom = double(tf) + params_.k1 * (1.0 - params_.b + params_.b * dl / avg_doc_len_);
            scores[doc_idx] += idf * double(tf) * (params_.k1 + 1.0) / denom;
        }
    }

    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(scores.size());
    for (auto [doc_idx, score] : scores) {
        const std::string& id = doc_ids_[size_t(doc_idx)];
        if (allowed && allowed->count(id) == 0) continue;
        scored.emplace_back(id, score);
    }
    return rank_scored(std::move(scored), top_n);
}

void Bm25Index::save(const std::filesystem::path& path) const {
    json postings = json::object();
    for (const auto& [term, plist] : postings_) {
        json arr = json::array();
        for (auto [doc_idx, tf] : plist) arr.push_back(json::array({doc_idx, tf}));
        postings[term] = std::move(arr);
    }
    json j{{"k1", params_.k1},
           {"b", params_.b},
           {"avg_doc_len", avg_doc_len_},
           {"doc_ids", doc_ids_},
           {"doc_lens", doc_lens_},
           {"postings", std::move(postings)}};
    write_file(path, j.dump() + "\n");
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    json j = json::parse(read_file(path));
    Bm25Index index;
    index.params_.k1 = j.at("k1").get<double>();
    index.params_.b = j.at("b").get<double>();
    index.avg_doc_len_ = j.at("avg_doc_len").get<double>();
    index.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
    index.doc_lens_ = j.at("doc_lens").get<std::vector<int>>();
    for (const auto& [term, arr] : j.at("postings").items()) {
        auto& plist = index.postings_[term];
        for (const auto& pair : arr) plist.emplace_back(pair[0].get<int>(), pair[1].get<int>());
    }
    return index;
}

// ---------------------------------------------------------------------------
// DenseIndex

DenseIndex DenseIndex::build(const PassageStore& store, LlmClient& client, std::string model_id) {
    if (store.size() == 0) throw ContractError("cannot embed an empty corpus");
    std::vector<std::string> texts;
    texts.reserve(store.size());
    DenseIndex index;
    index.model_id_ = std::move(model_id);
    index.corpus_hash_ = store.manifest().content_hash;
    for (const Passage& p : store.passages()) {
        index.passage_ids_.push_back(p.id);
        texts.push_back(p.text);
    }
    auto vectors = client.embed(texts);
    if (vectors.empty()) throw BackendError("embedding backend returned no vectors");
    index.dimension_ = vectors.front().size();
    index.vectors_.reserve(vectors.size() * index.dimension_);
    for (const auto& v : vectors) {
        if (v.size() != index.dimension_) throw BackendError("inconsistent embedding dimensions");
        index.vectors_.insert(index.vectors_.end(), v.begin(), v.end());
    }
    return index;
}

std::vector<float> DenseIndex::embed_query(const std::string& query, LlmClient& client) const {
    auto vectors = client.embed({query});
    if (vectors.size() != 1) throw BackendError("query embedding failed");
    if (vectors.front().size() != dimension_) {
        throw ConfigError("query embedding dimension " + std::to_string(vectors.front().size()) +
                          " does not match cache dimension " + std::to_string(dimension_));
    }
    return vectors.front();
}

std::vector<RankedPassage> DenseIndex::search(const std::string& query, LlmClient& client,
                                              size_t top_n) const {
    return search_vector_impl(embed_query(query, client), top_n, nullptr);
}

std::vector<RankedPassage> DenseIndex::search_subset(
    const std::string& query, LlmClient& client, size_t top_n,
    const std::unordered_set<std::string>& allowed) const {
    return search_vector_impl(embed_query(query, client), top_n, &allowed);
}

std::vector<RankedPassage> DenseIndex::search_vector(std::span<const float> query,
                                                     size_t top_n) const {
    return search_vector_impl(query, top_n, nullptr);
}

std::vector<RankedPassage> DenseIndex::search_vector_impl(
    std::span<const float> query, size_t top_n,
    const std::unordered_set<std::string>* allowed) const {
    if (query.size() != dimension_) throw ConfigError("query vector dimension mismatch");
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(passage_ids_.size());
    for (size_t row = 0; row < passage_ids_.size(); ++row) {
        if (allowed && allowed->count(passage_ids_[row]) == 0) continue;
        const float* v = vectors_.data() + row * dimension_;
        double dot = 0.0;
        for (size_t i = 0; i < dimension_; ++i) dot += double(v[i]) * double(query[i]);
        scored.emplace_back(passage_ids_[row], dot);
    }
    return rank_scored(std::move(scored), top_n);
}

void DenseIndex::save(const std::filesystem::path& dir) const {
    std::string blob;
    blob.reserve(vectors_.size() * 4);
    for (float v : vectors_) append_le_f32(blob, v);
    write_file(dir / "vectors.bin", blob);
    json meta{{"model_id", model_id_},
              {"dimension", dimension_},
              {"passage_ids", passage_ids_},
              {"corpus_content_hash", corpus_hash_}};
    write_file(dir / "meta.json", meta.dump(2) + "\n");
}

DenseIndex DenseIndex::load(const std::filesystem::path& dir) {
    DenseIndex index;
    json meta = json::parse(read_file(dir / "meta.json"));
    index.model_id_ = meta.at("model_id").get<std::string>();
    index.dimension_ = meta.at("dimension").get<size_t>();
    index.passage_ids_ = meta.at("passage_ids").get<std::vector<std::string>>();
    index.corpus_hash_ = meta.value("corpus_content_hash", "");
    std::string blob = read_file(dir / "vectors.bin");
    size_t expected = index.passage_ids_.size() * index.dimension_ * 4;
    if (blob.size() != expected) {
        throw ParseError("embedding cache size mismatch: expected " + std::to_string(expected) +
                         " bytes, found " + std::to_string(blob.size()));
    }
    index.vectors_.resize(index.passage_ids_.size() * index.dimension_);
    for (size_t i = 0; i < index.vectors_.size(); ++i) {
        index.vectors_[i] = read_le_f32(blob.data() + i * 4);
    }
    return index;
}

// ---------------------------------------------------------------------------
// Fusion and pools

std::vector<RankedPassage> rrf_fuse(const std::vector<std::vector<RankedPassage>>& lists,
                                    int k_rrf) {
    if (lists.size() < 2) {
        throw ContractError("rrf_fuse needs at least two lists; use the single retriever directly");
    }
    if (k_rrf < 1) throw ContractError("k_rrf must be positive");
    std::map<std::string, double> fused;
    for (const auto& list : lists) {
        for (const auto& entry : list) {
            fused[entry.passage_id] += 1.0 / double(k_rrf + entry.rank);
        }
    }
    std::vector<std::pair<std::string, double>> scored(fused.begin(), fused.end());
    size_t n = scored.size();
    return rank_scored(std::move(scored), n);
}

std::vector<json> RetrievalPool::to_jsonl() const {
    std::vector<json> lines;
    lines.reserve(entries.size());
    for (const auto& e : entries) {
        json rec{{"passage_id", e.passage_id}, {"score", e.score}, {"rank", e.rank}};
        auto it = per_retriever_ranks.find(e.passage_id);
        if (it != per_retriever_ranks.end()) {
            if (it->second.sparse_rank) rec["sparse_rank"] = *it->second.sparse_rank;
            if (it->second.dense_rank) rec["dense_rank"] = *it->second.dense_rank;
        }
        lines.push_back(std::move(rec));
    }
    return lines;
}

RetrievalPool RetrievalPool::from_jsonl(const std::vector<json>& lines, std::string question_id,
                                        std::string retriever_id) {
    RetrievalPool pool;
    pool.question_id = std::move(question_id);
    pool.retriever_id = std::move(retriever_id);
    for (const auto& rec : lines) {
        RankedPassage e{rec.at("passage_id").get<std::string>(), rec.at("score").get<double>(),
                        rec.at("rank").get<int>()};
        PerRetrieverRank pr;
        if (rec.contains("sparse_rank")) pr.sparse_rank = rec["sparse_rank"].get<int>();
        if (rec.contains("dense_rank")) pr.dense_rank = rec["dense_rank"].get<int>();
        if (pr.sparse_rank || pr.dense_rank) pool.per_retriever_ranks[e.passage_id] = pr;
        pool.entries.push_back(std::move(e));
    }
    return pool;
}

Retriever::Retriever(RetrievalConfig config, std::shared_ptr<const Bm25Index> sparse,
                     std::shared_ptr<const DenseIndex> dense,
                     std::shared_ptr<LlmClient> embed_client)
    : config_(config), sparse_(std::move(sparse)), dense_(std::move(dense)),
      embed_client_(std::move(embed_client)) {}

std::vector<RankedPassage> Retriever::sparse_search(const std::string& query, size_t top_n) const {
    if (!sparse_) throw ConfigError("sparse index is not loaded");
    return sparse_->search(query, top_n);
}

std::vector<RankedPassage> Retriever::dense_search(const std::string& query, size_t top_n) const {
    if (!dense_ || !embed_client_) throw ConfigError("dense index or embedding backend missing");
    return dense_->search(query, *embed_client_, top_n);
}

RetrievalPool Retriever::build_pool(const Question& question, int pool_size,
                                    RetrieverKind kind) const {
    if (pool_size < 1) throw ContractError("pool_size must be positive");
    RetrievalPool pool;
    pool.question_id = question.id;
    pool.retriever_id = retriever_kind_name(kind);

    switch (kind) {
        case RetrieverKind::sparse: {
            pool.entries = sparse_search(question.text, size_t(pool_size));
            for (const auto& e : pool.entries) {
                pool.per_retriever_ranks[e.passage_id].sparse_rank = e.rank;
            }
            break;
        }
        case RetrieverKind::dense: {
            pool.entries = dense_search(question.text, size_t(pool_size));
            for (const auto& e : pool.entries) {
                pool.per_retriever_ranks[e.passage_id].dense_rank = e.rank;
            }
            break;
        }
        case RetrieverKind::fused: {
            auto sparse_list = sparse_search(question.text, size_t(pool_size));
            auto dense_list = dense_search(question.text, size_t(pool_size));
            auto fused = rrf_fuse({sparse_list, dense_list}, config_.k_rrf);
            if (fused.size() > size_t(pool_size)) {
                fused.resize(size_t(pool_size));
            }
            pool.entries = std::move(fused);
            for (const auto& e : sparse_list) {
                pool.per_retriever_ranks[e.passage_id].sparse_rank = e.rank;
            }
            for (const auto& e : dense_list) {
                pool.per_retriever_ranks[e.passage_id].dense_rank = e.rank;
            }
            break;
        }
    }
    return pool;
}

std::vector<RankedPassage> Retriever::search_within_pool(
    const RetrievalPool& pool, const std::string& query, size_t k,
    const std::unordered_set<std::string>& exclude) const {
    ++pool_search_calls_;
    if (pool.entries.empty()) return {};

    std::unordered_set<std::string> allowed;
    allowed.reserve(pool.entries.size());
    for (const auto& e : pool.entries) {
        if (exclude.count(e.passage_id) == 0) allowed.insert(e.passage_id);
    }
    if (allowed.empty()) return {};

    RetrieverKind kind = retriever_kind_from_string(pool.retriever_id);
    switch (kind) {
        case RetrieverKind::sparse:
            if (!sparse_) throw ConfigError("sparse index is not loaded");
            return sparse_->search_subset(query, k, allowed);
        case RetrieverKind::dense:
            if (!dense_ || !embed_client_) {
                throw ConfigError("dense index or embedding backend missing");
            }
            return dense_->search_subset(query, *embed_client_, k, allowed);
        case RetrieverKind::fused: {
            if (!sparse_ || !dense_ || !embed_client_) {
                throw ConfigError("fused re-scoring needs both indexes");
            }
            auto sparse_list = sparse_->search_subset(query, allowed.size(), allowed);
            auto dense_list = dense_->search_subset(query, *embed_client_, allowed.size(), allowed);
            auto fused = rrf_fuse({sparse_list, dense_list}, config_.k_rrf);
            if (fused.size() > k) fused.resize(k);
            return fused;
        }
    }
    return {};
}

}  // namespace multiqa
