#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "multiqa/ipv.hpp"
#include "multiqa/llm_client.hpp"
#include "multiqa/question.hpp"
#include "multiqa/retrieval.hpp"

namespace multiqa {

struct ReaderStageConfig {
    ReadingMode mode = ReadingMode::independent;
    int max_tokens = 512;
    double failure_budget = 0.5;
};

/// Full run configuration. Loaded from a JSON file; every setting has a
/// default except the corpus source and dataset path. The normalized form
/// (to_json) is echoed into run manifests and metrics reports and feeds
/// the stage cache keys.
struct RunConfig {
    std::string corpus_id = "corpus";
    std::filesystem::path corpus_source;
    int chunk_size_words = 100;

    std::filesystem::path dataset_path;
    VqgFlavor flavor = VqgFlavor::standard;

    RetrievalConfig retrieval;
    ReaderStageConfig reader;
    IpvConfig ipv;

    BackendSpec reader_backend;
    BackendSpec vqg_backend;
    BackendSpec verifier_backend;
    BackendSpec judge_backend;
    BackendSpec embed_backend;
    bool judge_configured = false;
    bool embed_configured = false;
    int llm_max_concurrency = 4;

    bool eval_judge = false;

    std::filesystem::path output_dir = "out";
    int max_parallel_questions = 4;
    long seed = 0;

    /// Parses the file and resolves relative paths against its directory.
    static RunConfig load(const std::filesystem::path& path);
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

}  // namespace multiqa
