#include <doctest.h>

#include <algorithm>

#include "fixture.hpp"
#include "multiqa/errors.hpp"
#include "multiqa/jsonl.hpp"
#include "multiqa/pipeline.hpp"
#include "multiqa/sha256.hpp"
#include "test_helpers.hpp"

using namespace multiqa;
using multiqa::testing::build_fixture;
using multiqa::testing::fixture_expectations;
using multiqa::testing::TempDir;
using nlohmann::json;

namespace {

std::vector<std::string> sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
}

std::vector<std::string> retained_surfaces(const Pipeline& pipeline) {
    std::vector<std::string> out;
    for (const auto& rec : read_jsonl(pipeline.config().output_dir / "filter.jsonl")) {
        for (const auto& c : rec.at("retained")) out.push_back(c.at("surface").get<std::string>());
    }
    return out;
}

json macro_of(const Pipeline& pipeline) { return pipeline.metrics_report().at("macro"); }

}  // namespace

TEST_CASE("fixture pipeline without verification reproduces the noisy set") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());
    config.ipv.enabled = false;

    Pipeline pipeline(config);
    auto manifest = pipeline.run();

    json macro = macro_of(pipeline);
    CHECK(macro.at("precision").get<double>() == doctest::Approx(0.5));
    CHECK(macro.at("recall").get<double>() == doctest::Approx(1.0));
    CHECK(macro.at("f1").get<double>() == doctest::Approx(2.0 / 3.0));

    // Exactly the six scripted candidates, no more.
    auto candidate_lines = read_jsonl(config.output_dir / "candidates.jsonl");
    REQUIRE(candidate_lines.size() == 1);
    std::vector<std::string> surfaces;
    for (const auto& c : candidate_lines[0].at("candidates")) {
        surfaces.push_back(c.at("surface").get<std::string>());
    }
    CHECK(sorted(surfaces) == sorted(fixture_expectations().candidates));

    // One generate call per pool passage, nothing else.
    CHECK(manifest.llm_calls == 12);
    CHECK(manifest.stages.count("verify") == 0);
    CHECK(manifest.corpus_content_hash ==
          PassageStore::load(config.output_dir / "corpus").manifest().content_hash);
}

TEST_CASE("fixture pipeline with verification filters to the gold set") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());

    Pipeline pipeline(config);
    auto manifest = pipeline.run();

    json macro = macro_of(pipeline);
    CHECK(macro.at("precision").get<double>() == doctest::Approx(1.0));
    CHECK(macro.at("recall").get<double>() == doctest::Approx(1.0));
    CHECK(macro.at("f1").get<double>() == doctest::Approx(1.0));

    CHECK(sorted(retained_surfaces(pipeline)) ==
          sorted(fixture_expectations().retained_full));

    // The filter stage never increases the candidate count.
    auto candidates = read_jsonl(config.output_dir / "candidates.jsonl");
    REQUIRE(candidates.size() == 1);
    CHECK(retained_surfaces(pipeline).size() <= candidates[0].at("candidates").size());
    CHECK(manifest.stages.count("verify") == 1);
    CHECK(manifest.retrieval_calls > 0);
}

TEST_CASE("rerunning a finished pipeline issues zero llm calls and identical reports") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());

    Pipeline first(config);
    first.run();
    std::string report1 = read_file(first.metrics_path());

    Pipeline second(config);
    auto manifest = second.run();
    std::string report2 = read_file(second.metrics_path());

    CHECK(manifest.llm_calls == 0);
    CHECK(manifest.retrieval_calls == 0);
    CHECK(Sha256::hash(report1) == Sha256::hash(report2));
    for (const auto& [name, info] : manifest.stages) {
        CHECK(info.cached);
    }
}

TEST_CASE("cached stage output hashes equal a forced recomputation") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());

    Pipeline first(config);
    first.run();
    json state1 = json::parse(read_file(config.output_dir / "stage_state.json"));

    Pipeline second(config);
    second.run(/*force=*/true);
    json state2 = json::parse(read_file(config.output_dir / "stage_state.json"));

    for (const auto& [stage, info] : state1.items()) {
        INFO("stage ", stage);
        REQUIRE(state2.contains(stage));
        CHECK(info.at("output_hash") == state2.at(stage).at("output_hash"));
    }
}

TEST_CASE("byte-identical metrics across independent runs in a fresh directory") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());

    Pipeline first(config);
    first.run();
    std::string report1 = read_file(first.metrics_path());

    std::filesystem::remove_all(config.output_dir);
    Pipeline second(config);
    second.run();
    CHECK(read_file(second.metrics_path()) == report1);
}

TEST_CASE("ablation switches produce the scripted distinct answer sets") {
    TempDir tmp;
    RunConfig base = build_fixture(tmp.path());
    const auto& expected = fixture_expectations();

    std::vector<std::vector<std::string>> seen;
    auto run_variant = [&](const std::string& name, auto mutate,
                           const std::vector<std::string>& want) {
        RunConfig config = base;
        config.output_dir = tmp.path() / ("out-" + name);
        mutate(config);
        Pipeline pipeline(config);
        pipeline.run();
        auto got = sorted(retained_surfaces(pipeline));
        INFO("variant ", name);
        CHECK(got == sorted(want));
        seen.push_back(got);
    };

    run_variant("full", [](RunConfig&) {}, expected.retained_full);
    run_variant("no-extra", [](RunConfig& c) { c.ipv.k_extra = 0; }, expected.retained_no_extra);
    run_variant("skip-factual", [](RunConfig& c) { c.ipv.skip_factual = true; },
                expected.retained_skip_factual);
    run_variant("skip-categorical", [](RunConfig& c) { c.ipv.skip_categorical = true; },
                expected.retained_skip_categorical);
    run_variant("self-reflection", [](RunConfig& c) { c.ipv.self_reflection = true; },
                expected.retained_self_reflection);

    for (size_t i = 0; i < seen.size(); ++i) {
        for (size_t j = i + 1; j < seen.size(); ++j) {
            CHECK(seen[i] != seen[j]);
        }
    }
}

TEST_CASE("dense and fused retrieval run the same fixture end to end") {
    TempDir tmp;
    RunConfig base = build_fixture(tmp.path());
    base.ipv.enabled = false;  // reading responses are passage-keyed, pool order is free
    base.retrieval.embed_model_id = "stub-embed";

    SUBCASE("dense") {
        base.retrieval.kind = RetrieverKind::dense;
        base.output_dir = tmp.path() / "out-dense";
        Pipeline pipeline(base);
        auto manifest = pipeline.run();
        json macro = macro_of(pipeline);
        CHECK(macro.at("precision").get<double>() == doctest::Approx(0.5));
        CHECK(macro.at("recall").get<double>() == doctest::Approx(1.0));
        CHECK(manifest.stages.count("embed") == 1);
        CHECK(manifest.stages.count("index") == 0);
        // 1 corpus embed batch + 1 query embed + 12 reads
        CHECK(manifest.llm_calls == 14);
        CHECK(std::filesystem::exists(base.output_dir / "embed" / "vectors.bin"));
    }

    SUBCASE("fused") {
        base.retrieval.kind = RetrieverKind::fused;
        base.output_dir = tmp.path() / "out-fused";
        Pipeline pipeline(base);
        auto manifest = pipeline.run();
        json macro = macro_of(pipeline);
        CHECK(macro.at("recall").get<double>() == doctest::Approx(1.0));
        CHECK(manifest.stages.count("embed") == 1);
        CHECK(manifest.stages.count("index") == 1);

        // Fused pool entries carry per-retriever ranks for members of both lists.
        auto pools_dir = base.output_dir / "pools";
        bool saw_both = false;
        for (const auto& entry : std::filesystem::directory_iterator(pools_dir)) {
            for (const auto& rec : read_jsonl(entry.path())) {
                if (rec.contains("sparse_rank") && rec.contains("dense_rank")) saw_both = true;
            }
        }
        CHECK(saw_both);
    }
}

TEST_CASE("judge-based evaluation matches the scripted indices") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());
    config.ipv.enabled = false;
    config.eval_judge = true;
    config.output_dir = tmp.path() / "out-judge";

    Pipeline pipeline(config);
    auto manifest = pipeline.run();
    json macro = macro_of(pipeline);
    CHECK(macro.at("precision").get<double>() == doctest::Approx(0.5));
    CHECK(macro.at("recall").get<double>() == doctest::Approx(1.0));
    CHECK(manifest.llm_calls == 18);  // 12 reads + 6 judge calls
}

TEST_CASE("sweep over k reuses pools and recall never decreases") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());

    auto report = sweep(config, "k", {json(1), json(3), json(6), json(12)});
    REQUIRE(report.points.size() == 4);
    CHECK(!report.partial);
    double last_recall = 0.0;
    for (const auto& p : report.points) {
        REQUIRE(p.ok);
        CHECK(p.recall >= last_recall);
        last_recall = p.recall;
    }
    CHECK(report.points.back().recall == doctest::Approx(1.0));
    CHECK(std::filesystem::exists(config.output_dir / "sweep.json"));
}

TEST_CASE("sweep over k_extra shows the extra-retrieval rescue") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());

    auto report = sweep(config, "k_extra", {json(0), json(1)});
    REQUIRE(report.points.size() == 2);
    CHECK(report.points[0].f1 < report.points[1].f1);
    CHECK(report.points[1].f1 == doctest::Approx(1.0));
    CHECK(report.points[0].recall < report.points[1].recall);  // the filtered true positive
}

TEST_CASE("sweep rejects empty values and unknown axes") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());
    CHECK_THROWS_AS(sweep(config, "k", {}), ContractError);
    CHECK_THROWS_AS(sweep(config, "pool", {json(1)}), ConfigError);
}

TEST_CASE("latency report averages per-question stage seconds") {
    RunManifest manifest;
    manifest.per_question_seconds["read"] = {{"q1", 1.0}, {"q2", 3.0}};
    manifest.per_question_seconds["pool"] = {{"q1", 0.5}, {"q2", 0.5}};
    auto means = report_latency(manifest);
    CHECK(means.at("read") == doctest::Approx(2.0));
    CHECK(means.at("pool") == doctest::Approx(0.5));
    CHECK(means.count("verify") == 0);  // absent stage omitted

    CHECK_THROWS_AS(report_latency(RunManifest{}), ContractError);
}

TEST_CASE("run manifest round-trips through JSON") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());
    Pipeline pipeline(config);
    auto manifest = pipeline.run();

    auto loaded = RunManifest::from_json(json::parse(read_file(pipeline.manifest_path())));
    CHECK(loaded.run_id == manifest.run_id);
    CHECK(loaded.llm_calls == manifest.llm_calls);
    CHECK(loaded.stages.size() == manifest.stages.size());
    CHECK(loaded.per_question_seconds.count("read") == 1);

    auto means = report_latency(loaded);
    CHECK(means.count("read") == 1);
    CHECK(means.count("verify") == 1);
}

TEST_CASE("config validation failures are config errors") {
    TempDir tmp;
    RunConfig config = build_fixture(tmp.path());
    write_file(tmp / "broken.json", "{not json");
    CHECK_THROWS_AS(RunConfig::load(tmp / "broken.json"), ConfigError);

    json missing = json::parse(read_file(tmp / "config.json"));
    missing["corpus"]["source"] = "absent.jsonl";
    write_file(tmp / "missing.json", missing.dump());
    CHECK_THROWS_AS(RunConfig::load(tmp / "missing.json"), ConfigError);
}
