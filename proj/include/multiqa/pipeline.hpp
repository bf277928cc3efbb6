#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "multiqa/config.hpp"
#include "multiqa/corpus.hpp"
#include "multiqa/eval.hpp"
#include "multiqa/ipv.hpp"
#include "multiqa/reader.hpp"
#include "multiqa/retrieval.hpp"

namespace multiqa {

struct StageInfo {
    double seconds = 0.0;
    bool cached = false;
};

struct RunManifest {
    std::string run_id;
    std::string corpus_content_hash;
    nlohmann::json config_echo;
    std::map<std::string, StageInfo> stages;  // every completed stage has an entry
    std::map<std::string, std::map<std::string, double>> per_question_seconds;
    long llm_calls = 0;
    long retrieval_calls = 0;
    long reader_failures = 0;
    std::vector<std::string> completed_stages;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

/// Arithmetic mean seconds per question for each stage that ran; stages
/// with no per-question timing are omitted. Errors on a zero-question run.
std::map<std::string, double> report_latency(const RunManifest& manifest);

/// End-to-end runner: ingest-check -> index/embed -> pool -> read ->
/// verify (optional) -> evaluate, with content-addressed stage caching.
/// A stage whose key (config subset + upstream hashes) matches the saved
/// state and whose outputs exist is skipped.
class Pipeline {
public:
    explicit Pipeline(RunConfig config);

    /// Runs all stages. force recomputes everything, ignoring cached state.
    RunManifest run(bool force = false);

    // Individual stage entry points (CLI subcommands). Each ensures its
    // upstream stages first.
    void stage_ingest();
    void stage_index();
    void stage_embed();
    void stage_pool();
    void stage_read();
    void stage_verify();
    void stage_evaluate();

    nlohmann::json metrics_report() const;
    RunManifest manifest() const { return manifest_; }
    const RunConfig& config() const { return config_; }

    std::filesystem::path metrics_path() const;
    std::filesystem::path manifest_path() const;

private:
    struct StageOutcome {
        bool cached = false;
        std::string output_hash;
    };

    bool needs_sparse() const;
    bool needs_dense() const;

    // body may return a custom output hash; by default the produced files
    // are hashed.
    StageOutcome run_stage(const std::string& name, const std::string& key,
                           const std::vector<std::filesystem::path>& outputs,
                           const std::function<std::optional<std::string>()>& body);
    std::string stage_output_hash(const std::string& name) const;
    std::string hash_outputs(const std::vector<std::filesystem::path>& outputs) const;
    void save_stage_state();
    void load_stage_state();
    void write_manifest();

    const PassageStore& store();
    const std::vector<GoldRecord>& gold();
    std::shared_ptr<LlmClient> client_for(const BackendSpec& spec);
    Retriever& retriever();

    std::filesystem::path pool_path(const std::string& question_id) const;
    std::vector<std::filesystem::path> pool_paths();
    RetrievalPool load_pool(const std::string& question_id) const;

    std::string dataset_hash();
    std::string source_hash();

    RunConfig config_;
    RunManifest manifest_;
    nlohmann::json stage_state_;
    bool force_ = false;
    std::set<std::string> done_;  // stages executed by this instance

    std::optional<PassageStore> store_;
    std::optional<std::vector<GoldRecord>> gold_;
    std::shared_ptr<const Bm25Index> bm25_;
    std::shared_ptr<const DenseIndex> dense_;
    std::unique_ptr<Retriever> retriever_;
    std::map<std::string, std::shared_ptr<LlmClient>> clients_;  // keyed by spec hash
    std::string dataset_hash_;
    std::string source_hash_;
};

struct SweepPoint {
    nlohmann::json value;
    bool ok = false;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::string error;
};

struct SweepReport {
    std::string axis;
    std::vector<SweepPoint> points;
    bool partial = false;

    nlohmann::json to_json() const;
};

/// Reruns the pipeline per axis value ("k" varies retrieval.top_k,
/// "k_extra" varies ipv.k_extra) in the same output directory so the
/// untouched stages stay cached. Failed points leave a gap; the sweep
/// continues.
SweepReport sweep(const RunConfig& base, const std::string& axis,
                  const std::vector<nlohmann::json>& values);

}  // namespace multiqa
