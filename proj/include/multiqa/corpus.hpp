#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace multiqa {

/// One retrievable text chunk with stable identity and provenance.
struct Passage {
    std::string id;
    std::string title;
    std::string text;
    std::string doc_id;
    int chunk_index = 0;

    bool operator==(const Passage&) const = default;
};

struct CorpusManifest {
    std::string corpus_id;
    long passage_count = 0;
    int chunk_size_words = 0;
    std::string created_at;    // ISO-8601 UTC
    std::string content_hash;  // SHA-256 over passage texts in id order
};

/// Greedy fixed-size chunking of a whitespace-tokenized body. Every word
/// lands in exactly one chunk, order preserved; the final chunk may be
/// shorter. The title is carried on each passage, not counted in the budget.
std::vector<Passage> chunk_document(const std::string& doc_id, const std::string& title,
                                    const std::string& body, int chunk_size_words);

/// Immutable passage store: passages.jsonl plus a manifest.json sidecar.
/// Writes happen only through ingest(); reads are safe to share.
class PassageStore {
public:
    /// Ingests a JSON-lines document file ({id, title, text} per line),
    /// chunks each document, and persists the store under `dir`.
    /// Re-running on identical input yields an identical content_hash.
    static CorpusManifest ingest(const std::filesystem::path& source_path,
                                 const std::filesystem::path& dir, int chunk_size_words,
                                 const std::string& corpus_id = "corpus");

    static PassageStore load(const std::filesystem::path& dir);

    const Passage& get_passage(const std::string& id) const;
    bool contains(const std::string& id) const;

    const std::vector<Passage>& passages() const { return passages_; }
    const CorpusManifest& manifest() const { return manifest_; }
    size_t size() const { return passages_.size(); }

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, size_t> by_id_;
    CorpusManifest manifest_;
};

}  // namespace multiqa
