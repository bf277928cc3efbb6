#include "multiqa/config.hpp"

#include "multiqa/errors.hpp"
#include "multiqa/jsonl.hpp"

namespace multiqa {

using nlohmann::json;

namespace {

BackendSpec backend_for_role(const json& llm, const char* role, bool* configured = nullptr) {
    if (llm.contains(role)) {
        if (configured) *configured = true;
        return BackendSpec::from_json(llm.at(role));
    }
    if (llm.contains("default")) {
        return BackendSpec::from_json(llm.at("default"));
    }
    if (configured) *configured = false;
    return BackendSpec{};  // only valid if the role is never exercised
}

void resolve(std::filesystem::path& p, const std::filesystem::path& base) {
    if (!p.empty() && p.is_relative()) p = base / p;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    if (j.contains("corpus")) {
        const json& c = j.at("corpus");
        cfg.corpus_id = c.value("id", "corpus");
        cfg.corpus_source = c.value("source", "");
        cfg.chunk_size_words = c.value("chunk_size_words", 100);
        if (cfg.chunk_size_words < 1) throw ConfigError("corpus.chunk_size_words must be >= 1");
    }
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        cfg.dataset_path = d.value("path", "");
        cfg.flavor = vqg_flavor_from_string(d.value("flavor", "default"));
    }
    if (j.contains("retrieval")) {
        const json& r = j.at("retrieval");
        cfg.retrieval.pool_size = r.value("pool_size", 1000);
        cfg.retrieval.top_k = r.value("top_k", 200);
        cfg.retrieval.k_rrf = r.value("k_rrf", 60);
        cfg.retrieval.kind = retriever_kind_from_string(r.value("kind", "sparse"));
        cfg.retrieval.embed_model_id = r.value("embed_model_id", "");
        if (r.contains("bm25")) {
            cfg.retrieval.bm25.k1 = r.at("bm25").value("k1", 0.9);
            cfg.retrieval.bm25.b = r.at("bm25").value("b", 0.4);
        }
        if (cfg.retrieval.pool_size < 1) throw ConfigError("retrieval.pool_size must be positive");
        if (cfg.retrieval.top_k < 1) throw ConfigError("retrieval.top_k must be positive");
        if (cfg.retrieval.k_rrf < 1) throw ConfigError("retrieval.k_rrf must be positive");
    }
    if (j.contains("reader")) {
        const json& r = j.at("reader");
        cfg.reader.mode = reading_mode_from_string(r.value("mode", "independent"));
        cfg.reader.max_tokens = r.value("max_tokens", 512);
        cfg.reader.failure_budget = r.value("failure_budget", 0.5);
    }
    if (j.contains("ipv")) {
        cfg.ipv = IpvConfig::from_json(j.at("ipv"));
    }
    cfg.ipv.flavor = cfg.flavor;
    if (j.contains("llm")) {
        const json& llm = j.at("llm");
        cfg.llm_max_concurrency = llm.value("max_concurrency", 4);
        cfg.reader_backend = backend_for_role(llm, "reader");
        cfg.vqg_backend = backend_for_role(llm, "vqg");
        cfg.verifier_backend = backend_for_role(llm, "verifier");
        cfg.judge_backend = backend_for_role(llm, "judge", &cfg.judge_configured);
        cfg.embed_backend = backend_for_role(llm, "embed", &cfg.embed_configured);
        if (llm.contains("default")) {
            cfg.judge_configured = true;
            cfg.embed_configured = true;
        }
    }
    if (j.contains("eval")) {
        cfg.eval_judge = j.at("eval").value("judge", false);
    }
    if (j.contains("run")) {
        const json& r = j.at("run");
        cfg.output_dir = r.value("output_dir", "out");
        cfg.max_parallel_questions = r.value("max_parallel_questions", 4);
        cfg.seed = r.value("seed", 0L);
    }
    cfg.ipv.parallelism = cfg.llm_max_concurrency;
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("config file does not exist: " + path.string());
    }
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
    RunConfig cfg = from_json(j);

    auto base = path.parent_path();
    resolve(cfg.corpus_source, base);
    resolve(cfg.dataset_path, base);
    resolve(cfg.output_dir, base);
    for (BackendSpec* spec : {&cfg.reader_backend, &cfg.vqg_backend, &cfg.verifier_backend,
                              &cfg.judge_backend, &cfg.embed_backend}) {
        if (!spec->script_path.empty()) {
            std::filesystem::path p = spec->script_path;
            resolve(p, base);
            spec->script_path = p.string();
        }
    }

    if (cfg.corpus_source.empty()) throw ConfigError("corpus.source is required");
    if (!std::filesystem::exists(cfg.corpus_source)) {
        throw ConfigError("corpus.source does not exist: " + cfg.corpus_source.string());
    }
    if (cfg.dataset_path.empty()) throw ConfigError("dataset.path is required");
    if (!std::filesystem::exists(cfg.dataset_path)) {
        throw ConfigError("dataset.path does not exist: " + cfg.dataset_path.string());
    }
    return cfg;
}

json RunConfig::to_json() const {
    json llm{{"max_concurrency", llm_max_concurrency},
             {"reader", reader_backend.to_json()},
             {"vqg", vqg_backend.to_json()},
             {"verifier", verifier_backend.to_json()}};
    if (judge_configured) llm["judge"] = judge_backend.to_json();
    if (embed_configured) llm["embed"] = embed_backend.to_json();

    return json{
        {"corpus",
         {{"id", corpus_id},
          {"source", corpus_source.string()},
          {"chunk_size_words", chunk_size_words}}},
        {"dataset", {{"path", dataset_path.string()}, {"flavor", vqg_flavor_name(flavor)}}},
        {"retrieval",
         {{"pool_size", retrieval.pool_size},
          {"top_k", retrieval.top_k},
          {"k_rrf", retrieval.k_rrf},
          {"kind", retriever_kind_name(retrieval.kind)},
          {"embed_model_id", retrieval.embed_model_id},
          {"bm25", {{"k1", retrieval.bm25.k1}, {"b", retrieval.bm25.b}}}}},
        {"reader",
         {{"mode", reading_mode_name(reader.mode)},
          {"max_tokens", reader.max_tokens},
          {"failure_budget", reader.failure_budget}}},
        {"ipv", ipv.to_json()},
        {"llm", std::move(llm)},
        {"eval", {{"judge", eval_judge}}},
        {"run",
         {{"output_dir", output_dir.string()},
          {"max_parallel_questions", max_parallel_questions},
          {"seed", seed}}}};
}

}  // namespace multiqa
