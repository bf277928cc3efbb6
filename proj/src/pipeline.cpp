#include "multiqa/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>

#include "multiqa/errors.hpp"
#include "multiqa/jsonl.hpp"
#include "multiqa/parallel.hpp"
#include "multiqa/sha256.hpp"

namespace multiqa {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string sanitize_filename(const std::string& s) {
    std::string out;
    bool changed = false;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
            out.push_back(c);
        } else {
            out.push_back('_');
            changed = true;
        }
    }
    if (changed || out.empty()) out += "-" + Sha256::hash(s).substr(0, 8);
    return out;
}

}  // namespace

json RunManifest::to_json() const {
    json stages_json = json::object();
    for (const auto& [name, info] : stages) {
        stages_json[name] = json{{"seconds", info.seconds}, {"cached", info.cached}};
    }
    json per_q = json::object();
    for (const auto& [stage, by_q] : per_question_seconds) {
        per_q[stage] = json(by_q);
    }
    return json{{"run_id", run_id},
                {"corpus_content_hash", corpus_content_hash},
                {"config", config_echo},
                {"stages", std::move(stages_json)},
                {"per_question_seconds", std::move(per_q)},
                {"counters",
                 {{"llm_calls", llm_calls},
                  {"retrieval_calls", retrieval_calls},
                  {"reader_failures", reader_failures}}},
                {"completed_stages", completed_stages}};
}

RunManifest RunManifest::from_json(const json& j) {
    RunManifest m;
    m.run_id = j.value("run_id", "");
    m.corpus_content_hash = j.value("corpus_content_hash", "");
    m.config_echo = j.value("config", json::object());
    if (j.contains("stages")) {
        for (const auto& [name, info] : j.at("stages").items()) {
            m.stages[name] = StageInfo{info.value("seconds", 0.0), info.value("cached", false)};
        }
    }
    if (j.contains("per_question_seconds")) {
        for (const auto& [stage, by_q] : j.at("per_question_seconds").items()) {
            for (const auto& [qid, secs] : by_q.items()) {
                m.per_question_seconds[stage][qid] = secs.get<double>();
            }
        }
    }
    if (j.contains("counters")) {
        m.llm_calls = j.at("counters").value("llm_calls", 0L);
        m.retrieval_calls = j.at("counters").value("retrieval_calls", 0L);
        m.reader_failures = j.at("counters").value("reader_failures", 0L);
    }
    if (j.contains("completed_stages")) {
        m.completed_stages = j.at("completed_stages").get<std::vector<std::string>>();
    }
    return m;
}

std::map<std::string, double> report_latency(const RunManifest& manifest) {
    std::map<std::string, double> means;
    size_t questions = 0;
    for (const auto& [stage, by_q] : manifest.per_question_seconds) {
        if (by_q.empty()) continue;
        questions = std::max(questions, by_q.size());
        double total = 0.0;
        for (const auto& [qid, secs] : by_q) total += secs;
        means[stage] = total / double(by_q.size());
    }
    if (questions == 0) throw ContractError("latency report needs at least one question");
    return means;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {
    manifest_.config_echo = config_.to_json();
    manifest_.run_id = Sha256::hash(manifest_.config_echo.dump()).substr(0, 12);
    load_stage_state();
}

bool Pipeline::needs_sparse() const {
    return config_.retrieval.kind == RetrieverKind::sparse ||
           config_.retrieval.kind == RetrieverKind::fused;
}

bool Pipeline::needs_dense() const {
    return config_.retrieval.kind == RetrieverKind::dense ||
           config_.retrieval.kind == RetrieverKind::fused;
}

std::filesystem::path Pipeline::metrics_path() const { return config_.output_dir / "metrics.json"; }
std::filesystem::path Pipeline::manifest_path() const {
    return config_.output_dir / "run_manifest.json";
}

void Pipeline::load_stage_state() {
    auto path = config_.output_dir / "stage_state.json";
    if (std::filesystem::exists(path)) {
        stage_state_ = json::parse(read_file(path), nullptr, false);
        if (stage_state_.is_discarded()) stage_state_ = json::object();
    } else {
        stage_state_ = json::object();
    }
}

void Pipeline::save_stage_state() {
    write_file(config_.output_dir / "stage_state.json", stage_state_.dump(2) + "\n");
}

void Pipeline::write_manifest() {
    if (retriever_) manifest_.retrieval_calls = retriever_->pool_search_calls();
    manifest_.llm_calls = 0;
    for (const auto& [key, client] : clients_) manifest_.llm_calls += client->call_count();
    write_file(manifest_path(), manifest_.to_json().dump(2) + "\n");
}

std::string Pipeline::hash_outputs(const std::vector<std::filesystem::path>& outputs) const {
    Sha256 h;
    for (const auto& p : outputs) {
        h.update(p.filename().string());
        h.update("\x1f");
        h.update(read_file(p));
        h.update("\x1e");
    }
    return h.hex_digest();
}

std::string Pipeline::stage_output_hash(const std::string& name) const {
    if (stage_state_.contains(name)) return stage_state_[name].value("output_hash", "");
    return "";
}

Pipeline::StageOutcome Pipeline::run_stage(const std::string& name, const std::string& key,
                                           const std::vector<std::filesystem::path>& outputs,
                                           const std::function<std::optional<std::string>()>& body) {
    auto start = Clock::now();
    bool outputs_exist = std::all_of(outputs.begin(), outputs.end(), [](const auto& p) {
        return std::filesystem::exists(p);
    });
    bool cached = !force_ && outputs_exist && stage_state_.contains(name) &&
                  stage_state_[name].value("key", "") == key;

    StageOutcome outcome;
    if (cached) {
        outcome.cached = true;
        outcome.output_hash = stage_state_[name].value("output_hash", "");
    } else {
        auto custom = body();
        outcome.output_hash = custom ? *custom : hash_outputs(outputs);
        stage_state_[name] = json{{"key", key}, {"output_hash", outcome.output_hash}};
        save_stage_state();
    }

    manifest_.stages[name] = StageInfo{seconds_since(start), outcome.cached};
    if (std::find(manifest_.completed_stages.begin(), manifest_.completed_stages.end(), name) ==
        manifest_.completed_stages.end()) {
        manifest_.completed_stages.push_back(name);
    }
    write_manifest();
    return outcome;
}

std::string Pipeline::source_hash() {
    if (source_hash_.empty()) source_hash_ = Sha256::hash(read_file(config_.corpus_source));
    return source_hash_;
}

std::string Pipeline::dataset_hash() {
    if (dataset_hash_.empty()) dataset_hash_ = Sha256::hash(read_file(config_.dataset_path));
    return dataset_hash_;
}

const PassageStore& Pipeline::store() {
    if (!store_) store_ = PassageStore::load(config_.output_dir / "corpus");
    return *store_;
}

const std::vector<GoldRecord>& Pipeline::gold() {
    if (!gold_) {
        auto records = load_gold_records(config_.dataset_path);
        std::sort(records.begin(), records.end(), [](const GoldRecord& a, const GoldRecord& b) {
            return a.question.id < b.question.id;
        });
        for (size_t i = 1; i < records.size(); ++i) {
            if (records[i].question.id == records[i - 1].question.id) {
                throw ParseError("duplicate question_id '" + records[i].question.id + "'");
            }
        }
        gold_ = std::move(records);
    }
    return *gold_;
}

std::shared_ptr<LlmClient> Pipeline::client_for(const BackendSpec& spec) {
    std::string key = spec.to_json().dump();
    auto it = clients_.find(key);
    if (it != clients_.end()) return it->second;
    auto client = std::make_shared<LlmClient>(spec, config_.llm_max_concurrency);
    clients_[key] = client;
    return client;
}

Retriever& Pipeline::retriever() {
    if (!retriever_) {
        if (needs_sparse()) {
            bm25_ = std::make_shared<Bm25Index>(
                Bm25Index::load(config_.output_dir / "index" / "bm25.json"));
        }
        std::shared_ptr<LlmClient> embed_client;
        if (needs_dense()) {
            auto dense = std::make_shared<DenseIndex>(
                DenseIndex::load(config_.output_dir / "embed"));
            if (dense->corpus_hash() != store().manifest().content_hash) {
                throw ConfigError("embedding cache was built for a different corpus");
            }
            dense_ = dense;
            embed_client = client_for(config_.embed_backend);
        }
        retriever_ = std::make_unique<Retriever>(config_.retrieval, bm25_, dense_, embed_client);
    }
    return *retriever_;
}

std::filesystem::path Pipeline::pool_path(const std::string& question_id) const {
    return config_.output_dir / "pools" /
           (sanitize_filename(question_id) + "." + retriever_kind_name(config_.retrieval.kind) +
            ".jsonl");
}

std::vector<std::filesystem::path> Pipeline::pool_paths() {
    std::vector<std::filesystem::path> paths;
    for (const auto& record : gold()) paths.push_back(pool_path(record.question.id));
    return paths;
}

RetrievalPool Pipeline::load_pool(const std::string& question_id) const {
    return RetrievalPool::from_jsonl(read_jsonl(pool_path(question_id)), question_id,
                                     retriever_kind_name(config_.retrieval.kind));
}

void Pipeline::stage_ingest() {
    if (done_.count("ingest")) return;
    std::string key = "ingest|" + source_hash() + "|" + std::to_string(config_.chunk_size_words) +
                      "|" + config_.corpus_id;
    auto corpus_dir = config_.output_dir / "corpus";
    run_stage("ingest", key, {corpus_dir / "passages.jsonl", corpus_dir / "manifest.json"}, [&] {
        auto manifest = PassageStore::ingest(config_.corpus_source, corpus_dir,
                                             config_.chunk_size_words, config_.corpus_id);
        store_.reset();  // reload from disk on next access
        return std::optional<std::string>(manifest.content_hash);
    });
    manifest_.corpus_content_hash = store().manifest().content_hash;
    done_.insert("ingest");
}

void Pipeline::stage_index() {
    if (done_.count("index")) return;
    stage_ingest();
    std::string key = "index|" + store().manifest().content_hash + "|" +
                      std::to_string(config_.retrieval.bm25.k1) + "|" +
                      std::to_string(config_.retrieval.bm25.b);
    auto path = config_.output_dir / "index" / "bm25.json";
    run_stage("index", key, {path}, [&]() -> std::optional<std::string> {
        Bm25Index index = Bm25Index::build(store(), config_.retrieval.bm25);
        index.save(path);
        bm25_ = std::make_shared<Bm25Index>(std::move(index));
        return std::nullopt;
    });
    done_.insert("index");
}

void Pipeline::stage_embed() {
    if (done_.count("embed")) return;
    stage_ingest();
    if (config_.retrieval.embed_model_id.empty()) {
        config_.retrieval.embed_model_id = config_.embed_backend.model_id;
    }
    std::string key = "embed|" + store().manifest().content_hash + "|" +
                      config_.retrieval.embed_model_id + "|" + config_.embed_backend.to_json().dump();
    auto dir = config_.output_dir / "embed";
    run_stage("embed", key, {dir / "vectors.bin", dir / "meta.json"},
              [&]() -> std::optional<std::string> {
                  auto client = client_for(config_.embed_backend);
                  DenseIndex index =
                      DenseIndex::build(store(), *client, config_.retrieval.embed_model_id);
                  index.save(dir);
                  dense_ = std::make_shared<DenseIndex>(std::move(index));
                  return std::nullopt;
              });
    done_.insert("embed");
}

void Pipeline::stage_pool() {
    if (done_.count("pool")) return;
    stage_ingest();
    if (needs_sparse()) stage_index();
    if (needs_dense()) stage_embed();

    json retrieval_echo{{"pool_size", config_.retrieval.pool_size},
                        {"kind", retriever_kind_name(config_.retrieval.kind)},
                        {"k_rrf", config_.retrieval.k_rrf},
                        {"k1", config_.retrieval.bm25.k1},
                        {"b", config_.retrieval.bm25.b},
                        {"embed_model_id", config_.retrieval.embed_model_id}};
    std::string key = "pool|" + store().manifest().content_hash + "|" + dataset_hash() + "|" +
                      retrieval_echo.dump();

    run_stage("pool", key, pool_paths(), [&]() -> std::optional<std::string> {
        const auto& records = gold();
        retriever();  // materialize indexes before the workers touch them
        std::vector<double> secs(records.size(), 0.0);
        parallel_for(records.size(), config_.max_parallel_questions, [&](size_t i) {
            auto start = Clock::now();
            RetrievalPool pool = retriever().build_pool(records[i].question);
            write_jsonl(pool_path(records[i].question.id), pool.to_jsonl());
            secs[i] = seconds_since(start);
        });
        for (size_t i = 0; i < records.size(); ++i) {
            manifest_.per_question_seconds["pool"][records[i].question.id] = secs[i];
        }
        return std::nullopt;
    });
    done_.insert("pool");
}

void Pipeline::stage_read() {
    if (done_.count("read")) return;
    stage_pool();

    std::string key = "read|" + stage_output_hash("pool") + "|" +
                      config_.reader_backend.to_json().dump() + "|" +
                      reading_mode_name(config_.reader.mode) + "|" +
                      std::to_string(config_.retrieval.top_k) + "|" +
                      std::to_string(config_.reader.max_tokens) + "|" +
                      std::to_string(config_.reader.failure_budget);
    auto path = config_.output_dir / "candidates.jsonl";

    run_stage("read", key, {path}, [&]() -> std::optional<std::string> {
        const auto& records = gold();
        store();  // load once before the workers share it
        auto client = client_for(config_.reader_backend);
        ReaderOptions options;
        options.max_tokens = config_.reader.max_tokens;
        options.failure_budget = config_.reader.failure_budget;
        options.parallelism = config_.llm_max_concurrency;

        std::vector<CandidateSet> sets(records.size());
        std::vector<double> secs(records.size(), 0.0);
        parallel_for(records.size(), config_.max_parallel_questions, [&](size_t i) {
            auto start = Clock::now();
            const Question& q = records[i].question;
            switch (config_.reader.mode) {
                case ReadingMode::independent:
                    sets[i] = read_independent(q, load_pool(q.id), config_.retrieval.top_k,
                                               store(), *client, options);
                    break;
                case ReadingMode::concatenated:
                    sets[i] = read_concatenated(q, load_pool(q.id), config_.retrieval.top_k,
                                                store(), *client, options);
                    break;
                case ReadingMode::closed_book:
                    sets[i] = read_closed_book(q, *client, options);
                    break;
            }
            secs[i] = seconds_since(start);
        });

        std::vector<json> lines;
        for (size_t i = 0; i < records.size(); ++i) {
            lines.push_back(sets[i].to_json());
            manifest_.reader_failures += sets[i].failed_reads;
            manifest_.per_question_seconds["read"][records[i].question.id] = secs[i];
        }
        write_jsonl(path, lines);
        return std::nullopt;
    });
    done_.insert("read");
}

void Pipeline::stage_verify() {
    if (done_.count("verify")) return;
    stage_read();

    std::string key = "verify|" + stage_output_hash("read") + "|" + config_.ipv.to_json().dump() +
                      "|" + config_.vqg_backend.to_json().dump() + "|" +
                      config_.verifier_backend.to_json().dump() + "|" +
                      vqg_flavor_name(config_.flavor);
    auto plans_path = config_.output_dir / "plans.jsonl";
    auto filter_path = config_.output_dir / "filter.jsonl";

    run_stage("verify", key, {plans_path, filter_path}, [&]() -> std::optional<std::string> {
        const auto& records = gold();
        std::map<std::string, CandidateSet> candidate_sets;
        for (const auto& rec : read_jsonl(config_.output_dir / "candidates.jsonl")) {
            CandidateSet set = CandidateSet::from_json(rec);
            candidate_sets[set.question_id] = std::move(set);
        }

        auto vqg_client = client_for(config_.vqg_backend);
        auto verifier_client = client_for(config_.verifier_backend);
        Retriever& ret = retriever();
        const PassageStore& passage_store = store();

        std::vector<VerificationPlan> plans(records.size());
        std::vector<FilterResult> results(records.size());
        std::vector<double> secs(records.size(), 0.0);
        parallel_for(records.size(), config_.max_parallel_questions, [&](size_t i) {
            auto start = Clock::now();
            const Question& q = records[i].question;
            auto set_it = candidate_sets.find(q.id);
            if (set_it == candidate_sets.end()) {
                throw NotFoundError("no candidate set for question '" + q.id + "'");
            }
            plans[i] = config_.ipv.self_reflection
                           ? self_reflection_plan(q)
                           : generate_verification_plan(q, config_.flavor, *vqg_client,
                                                        config_.ipv.max_factual_questions);
            IpvContext ctx{passage_store, ret, *verifier_client};
            results[i] = filter_candidates(set_it->second, plans[i], load_pool(q.id), config_.ipv,
                                           ctx);
            secs[i] = seconds_since(start);
        });

        std::vector<json> plan_lines, filter_lines;
        for (size_t i = 0; i < records.size(); ++i) {
            plan_lines.push_back(plans[i].to_json());
            filter_lines.push_back(results[i].to_json());
            manifest_.per_question_seconds["verify"][records[i].question.id] = secs[i];
        }
        write_jsonl(plans_path, plan_lines);
        write_jsonl(filter_path, filter_lines);
        return std::nullopt;
    });
    done_.insert("verify");
}

void Pipeline::stage_evaluate() {
    if (done_.count("evaluate")) return;
    if (config_.ipv.enabled) {
        stage_verify();
    } else {
        stage_read();
    }

    std::string upstream =
        config_.ipv.enabled ? stage_output_hash("verify") : stage_output_hash("read");
    std::string key = "evaluate|" + upstream + "|" + dataset_hash() + "|" +
                      (config_.eval_judge ? "judge|" + config_.judge_backend.to_json().dump()
                                          : "exact");

    run_stage("evaluate", key, {metrics_path()}, [&]() -> std::optional<std::string> {
        const auto& records = gold();

        std::map<std::string, std::vector<std::string>> predictions;
        if (config_.ipv.enabled) {
            for (const auto& rec : read_jsonl(config_.output_dir / "filter.jsonl")) {
                FilterResult result = FilterResult::from_json(rec);
                auto& preds = predictions[result.question_id];
                for (const auto& c : result.retained) preds.push_back(c.surface);
            }
        } else {
            for (const auto& rec : read_jsonl(config_.output_dir / "candidates.jsonl")) {
                CandidateSet set = CandidateSet::from_json(rec);
                auto& preds = predictions[set.question_id];
                for (const auto& c : set.candidates) preds.push_back(c.surface);
            }
        }

        std::shared_ptr<LlmClient> judge;
        if (config_.eval_judge) judge = client_for(config_.judge_backend);

        json per_question = json::array();
        std::vector<AnswerSetMetrics> all;
        for (const auto& record : records) {
            auto start = Clock::now();
            const auto& preds = predictions[record.question.id];
            AnswerSetMetrics m = config_.eval_judge ? score_question_judged(preds, record, *judge)
                                                    : score_question(preds, record);
            all.push_back(m);
            json entry = m.to_json();
            entry["question_id"] = record.question.id;
            entry["num_predictions"] = preds.size();
            per_question.push_back(std::move(entry));
            manifest_.per_question_seconds["evaluate"][record.question.id] =
                seconds_since(start);
        }

        json report{{"per_question", std::move(per_question)},
                    {"macro", macro_average(all).to_json()},
                    {"config_echo", manifest_.config_echo}};
        write_file(metrics_path(), report.dump(2) + "\n");
        return std::nullopt;
    });
    done_.insert("evaluate");
}

RunManifest Pipeline::run(bool force) {
    force_ = force;
    if (force) stage_state_ = json::object();
    try {
        stage_evaluate();
    } catch (...) {
        write_manifest();  // record partial completion for resume
        throw;
    }
    force_ = false;
    write_manifest();
    return manifest_;
}

json Pipeline::metrics_report() const {
    return json::parse(read_file(metrics_path()));
}

json SweepReport::to_json() const {
    json points_json = json::array();
    for (const auto& p : points) {
        json entry{{"value", p.value}, {"ok", p.ok}};
        if (p.ok) {
            entry["precision"] = p.precision;
            entry["recall"] = p.recall;
            entry["f1"] = p.f1;
        } else {
            entry["error"] = p.error;
        }
        points_json.push_back(std::move(entry));
    }
    return json{{"axis", axis}, {"points", std::move(points_json)}, {"partial", partial}};
}

SweepReport sweep(const RunConfig& base, const std::string& axis,
                  const std::vector<json>& values) {
    if (values.empty()) throw ContractError("sweep needs at least one axis value");
    if (axis != "k" && axis != "k_extra") {
        throw ConfigError("unknown sweep axis '" + axis + "' (expected k or k_extra)");
    }

    SweepReport report;
    report.axis = axis;
    for (const auto& value : values) {
        RunConfig cfg = base;
        if (axis == "k") {
            cfg.retrieval.top_k = value.get<int>();
        } else {
            cfg.ipv.k_extra = value.get<int>();
        }
        SweepPoint point;
        point.value = value;
        try {
            Pipeline pipeline(cfg);
            pipeline.run();
            json macro = pipeline.metrics_report().at("macro");
            point.ok = true;
            point.precision = macro.at("precision").get<double>();
            point.recall = macro.at("recall").get<double>();
            point.f1 = macro.at("f1").get<double>();
        } catch (const std::exception& e) {
            point.ok = false;
            point.error = e.what();
            report.partial = true;
        }
        report.points.push_back(std::move(point));
    }
    write_file(base.output_dir / "sweep.json", report.to_json().dump(2) + "\n");
    return report;
}

}  // namespace multiqa
