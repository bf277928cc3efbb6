#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "multiqa/config.hpp"
#include "multiqa/errors.hpp"
#include "multiqa/jsonl.hpp"
#include "multiqa/pipeline.hpp"

namespace {

using multiqa::Pipeline;
using multiqa::RunConfig;
using nlohmann::json;

void print_macro(const json& report) {
    const json& macro = report.at("macro");
    std::printf("questions: %zu\n", report.at("per_question").size());
    std::printf("precision: %.4f\nrecall:    %.4f\nf1:        %.4f\n",
                macro.at("precision").get<double>(), macro.at("recall").get<double>(),
                macro.at("f1").get<double>());
}

std::vector<json> parse_values(const std::string& csv) {
    std::vector<json> values;
    std::string current;
    for (char c : csv) {
        if (c == ',') {
            if (!current.empty()) values.push_back(json(std::stoi(current)));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) values.push_back(json(std::stoi(current)));
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiqa: retrieval-augmented multi-answer QA with answer verification"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path;
    std::string output_dir;
    bool resume = false;
    bool force = false;
    app.add_option("--config", config_path, "run configuration file (JSON)");
    app.add_option("--output-dir", output_dir, "override run.output_dir from the config");
    app.add_flag("--resume", resume, "reuse completed stage artifacts (default behavior)");
    app.add_flag("--force", force, "run only: recompute every stage, ignoring cached artifacts");

    auto* cmd_ingest = app.add_subcommand("ingest", "chunk and store the document corpus");
    auto* cmd_index = app.add_subcommand("index", "build the sparse (BM25) index");
    auto* cmd_embed = app.add_subcommand("embed", "build the dense embedding cache");
    auto* cmd_pool = app.add_subcommand("pool", "retrieve the per-question passage pools");
    auto* cmd_read = app.add_subcommand("read", "generate answer candidates from the pools");
    auto* cmd_verify = app.add_subcommand("verify", "filter candidates with verification");
    auto* cmd_evaluate = app.add_subcommand("evaluate", "score predictions against gold answers");
    auto* cmd_run = app.add_subcommand("run", "run the full pipeline");
    auto* cmd_sweep = app.add_subcommand("sweep", "rerun the pipeline across an axis of values");
    auto* cmd_report = app.add_subcommand("report", "print per-stage latency from the manifest");

    bool judge = false;
    cmd_evaluate->add_flag("--judge", judge, "match predictions with the LLM judge");

    std::string axis = "k";
    std::string values_csv;
    cmd_sweep->add_option("--axis", axis, "sweep axis: k or k_extra")->required();
    cmd_sweep->add_option("--values", values_csv, "comma-separated integer values")->required();

    CLI11_PARSE(app, argc, argv);
    (void)resume;  // stage caching is on unless --force is given

    try {
        if (config_path.empty()) throw multiqa::ConfigError("--config is required");
        RunConfig config = RunConfig::load(config_path);
        if (!output_dir.empty()) config.output_dir = output_dir;
        if (judge) config.eval_judge = true;

        if (app.got_subcommand(cmd_sweep)) {
            auto report = multiqa::sweep(config, axis, parse_values(values_csv));
            std::printf("%-10s %-10s %-10s %-10s\n", axis.c_str(), "precision", "recall", "f1");
            for (const auto& p : report.points) {
                if (p.ok) {
                    std::printf("%-10s %-10.4f %-10.4f %-10.4f\n", p.value.dump().c_str(),
                                p.precision, p.recall, p.f1);
                } else {
                    std::printf("%-10s failed: %s\n", p.value.dump().c_str(), p.error.c_str());
                }
            }
            return report.partial ? 3 : 0;
        }

        Pipeline pipeline(config);
        if (app.got_subcommand(cmd_report)) {
            auto manifest = multiqa::RunManifest::from_json(
                json::parse(multiqa::read_file(pipeline.manifest_path())));
            std::printf("%-12s %s\n", "stage", "mean seconds/question");
            for (const auto& [stage, mean] : multiqa::report_latency(manifest)) {
                std::printf("%-12s %.4f\n", stage.c_str(), mean);
            }
            std::printf("llm calls: %ld\nretrieval calls: %ld\n", manifest.llm_calls,
                        manifest.retrieval_calls);
            return 0;
        }

        if (app.got_subcommand(cmd_ingest)) {
            pipeline.stage_ingest();
            std::printf("corpus hash: %s\n", pipeline.manifest().corpus_content_hash.c_str());
        } else if (app.got_subcommand(cmd_index)) {
            pipeline.stage_index();
        } else if (app.got_subcommand(cmd_embed)) {
            pipeline.stage_embed();
        } else if (app.got_subcommand(cmd_pool)) {
            pipeline.stage_pool();
        } else if (app.got_subcommand(cmd_read)) {
            pipeline.stage_read();
        } else if (app.got_subcommand(cmd_verify)) {
            pipeline.stage_verify();
        } else if (app.got_subcommand(cmd_evaluate)) {
            pipeline.stage_evaluate();
            print_macro(pipeline.metrics_report());
        } else if (app.got_subcommand(cmd_run)) {
            pipeline.run(force);
            print_macro(pipeline.metrics_report());
        }
        return 0;
    } catch (const multiqa::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
