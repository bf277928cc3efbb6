#include "fixture.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "multiqa/corpus.hpp"
#include "multiqa/errors.hpp"
#include "multiqa/ipv.hpp"
#include "multiqa/jsonl.hpp"
#include "multiqa/prompts.hpp"
#include "multiqa/retrieval.hpp"
#include "multiqa/text.hpp"

namespace multiqa::testing {

using nlohmann::json;

namespace {

const char* kQuestionText = "Which films were directed by Ava Neri and produced by Bo Quist?";

struct FixtureDoc {
    const char* id;
    const char* title;
    const char* text;
    const char* reading_response;
};

// Every text shares at least one question term so the whole corpus lands in
// the BM25 pool and the reader visits all 12 passages at k=12.
const FixtureDoc kDocs[] = {
    {"silver-creek", "Silver Creek",
     "Silver Creek is a 1998 drama film directed by Ava Neri and produced by Bo Quist. The story "
     "follows a mining town through a hard winter.",
     "* Silver Creek"},
    {"iron-harbor", "Iron Harbor",
     "Iron Harbor is a 2003 thriller film directed by Ava Neri. The film was shot on location "
     "around a northern shipping port.",
     "* Iron Harbor"},
    {"iron-harbor-production", "Iron Harbor (production)",
     "Production of Iron Harbor wrapped after two years of delays. The film was produced by Bo "
     "Quist with a small crew.",
     "There is no answer."},
    {"paper-moon-rising", "Paper Moon Rising",
     "Paper Moon Rising is a 2007 film directed by Ava Neri and produced by Bo Quist, released "
     "to modest acclaim.",
     "* Paper Moon Rising"},
    {"field-concert-hall", "Field Concert Hall",
     "Field Concert Hall hosted the premiere of several films directed by Ava Neri. The hall "
     "seats nine hundred guests.",
     "* Field Concert Hall"},
    {"glass-anthem", "Glass Anthem",
     "Glass Anthem is a 2001 film directed by Ava Neri and produced by Mira Voss for a rival "
     "studio.",
     "* Glass Anthem"},
    {"blue-meridian", "Blue Meridian",
     "Blue Meridian is a 1999 film produced by Bo Quist and directed by Lena Ortiz.",
     "* Blue Meridian"},
    {"harbor-birds", "Harbor Birds",
     "Gulls gather near the harbor and nest by the cranes in early spring.",
     "There is no answer."},
    {"mining-history", "Mining History",
     "The region was shaped by mining and the towns that grew by the pits.",
     "There is no answer."},
    {"port-logistics", "Port Logistics",
     "Container schedules are planned months ahead and revised by the week.",
     "There is no answer."},
    {"winter-drama", "Winter Almanac",
     "Snowfall records were kept by hand and compared year by year.",
     "There is no answer."},
    {"ava-neri-bio", "Ava Neri",
     "Ava Neri is a film director known for long collaborations and quiet dramas.",
     "There is no answer."},
};

const char* kVqgResponse =
    "Thought: To filter answers effectively, the first question should confirm that the answer "
    "is a film. The second question will verify if the film was directed by Ava Neri. The third "
    "question will confirm if the film was produced by Bo Quist.\n"
    "Verification Questions: \n"
    "* Is \"[answer]\" a film?\n"
    "* Was the film \"[answer]\" directed by Ava Neri?\n"
    "* Was the film \"[answer]\" produced by Bo Quist?";

struct CandidateScript {
    const char* surface;
    const char* source_doc;  // doc id; passage id is doc#0
    bool cat;                // categorical verdict
    bool f1_k1, f2_k1;       // factual verdicts with k_extra=1 evidence
    bool f1_k0, f2_k0;       // factual verdicts with source-only evidence
    bool self_reflection;    // single-question verdict
};

// Truth table behind every ablation row. "Iron Harbor" is the
// multi-evidence candidate: its producer fact lives in another passage, so
// the k_extra=0 evidence cannot support f2.
const CandidateScript kCandidates[] = {
    {"Silver Creek", "silver-creek", true, true, true, true, true, true},
    {"Iron Harbor", "iron-harbor", true, true, true, true, false, false},
    {"Paper Moon Rising", "paper-moon-rising", true, true, true, true, true, true},
    {"Field Concert Hall", "field-concert-hall", false, true, true, true, true, false},
    {"Glass Anthem", "glass-anthem", true, true, false, true, false, true},
    {"Blue Meridian", "blue-meridian", true, false, true, false, true, false},
};

json verdict_distribution(bool outcome) {
    return json{{"token_distribution",
                 {{"True", outcome ? 0.92 : 0.03}, {"False", outcome ? 0.03 : 0.92}}}};
}

}  // namespace

const FixtureExpectations& fixture_expectations() {
    static const FixtureExpectations expectations = [] {
        FixtureExpectations e;
        e.question_id = "q-films";
        for (const auto& c : kCandidates) e.candidates.push_back(c.surface);
        e.retained_full = {"Silver Creek", "Iron Harbor", "Paper Moon Rising"};
        e.retained_no_extra = {"Silver Creek", "Paper Moon Rising"};
        e.retained_skip_factual = {"Silver Creek", "Iron Harbor", "Paper Moon Rising",
                                   "Glass Anthem", "Blue Meridian"};
        e.retained_skip_categorical = {"Silver Creek", "Iron Harbor", "Paper Moon Rising",
                                       "Field Concert Hall"};
        e.retained_self_reflection = {"Silver Creek", "Paper Moon Rising", "Glass Anthem"};
        return e;
    }();
    return expectations;
}

RunConfig build_fixture(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const Question question{"q-films", kQuestionText, "fixture", QuestionType::intersection};

    {
        std::ofstream docs(dir / "docs.jsonl");
        for (const auto& d : kDocs) {
            docs << json{{"id", d.id}, {"title", d.title}, {"text", d.text}}.dump() << "\n";
        }
        std::ofstream gold(dir / "gold.jsonl");
        gold << json{{"question_id", question.id},
                     {"question", question.text},
                     {"question_type", "intersection"},
                     {"answers",
                      json::array({json::array({"Silver Creek"}),
                                   json::array({"Iron Harbor"}),
                                   json::array({"Paper Moon Rising"})})}}
                    .dump()
             << "\n";
    }

    // Build the same pool the pipeline will build so evidence-dependent
    // verification prompts hash identically.
    auto build_dir = dir / "_fixture_build";
    PassageStore::ingest(dir / "docs.jsonl", build_dir / "corpus", 100, "fixture");
    auto store = PassageStore::load(build_dir / "corpus");
    auto bm25 = std::make_shared<Bm25Index>(Bm25Index::build(store, {0.9, 0.4}));
    RetrievalConfig retrieval_config;
    retrieval_config.pool_size = 1000;
    retrieval_config.kind = RetrieverKind::sparse;
    Retriever retriever(retrieval_config, bm25, nullptr, nullptr);
    RetrievalPool pool = retriever.build_pool(question, 1000, RetrieverKind::sparse);
    if (pool.entries.size() != std::size(kDocs)) {
        throw std::logic_error("fixture drift: pool must cover all 12 passages, got " +
                               std::to_string(pool.entries.size()));
    }

    LlmClient unused(std::make_unique<StubBackend>(json::object()));
    IpvContext ctx{store, retriever, unused};

    json script = json::object();

    // Reading responses, one per passage.
    for (const auto& d : kDocs) {
        const Passage& p = store.get_passage(std::string(d.id) + "#0");
        ChatRequest request =
            render_reading_prompt(question, std::span<const Passage>(&p, 1),
                                  ReadingMode::independent);
        script[prompt_content_hash(request)] = {{"text", d.reading_response}};
    }

    // Verification question generation.
    script[prompt_content_hash(render_vqg_dialogue(question, VqgFlavor::standard))] = {
        {"text", kVqgResponse}};

    // Deterministic unit embeddings so dense/fused configurations run on the
    // same fixture. Axis mix keeps the vectors distinct and stable.
    {
        auto embed_of = [](size_t i) {
            double a = 1.0 + double(i % 3), b = double(i % 5), c = double(i % 7);
            double norm = std::sqrt(a * a + b * b + c * c);
            return json::array({a / norm, b / norm, c / norm});
        };
        for (size_t i = 0; i < std::size(kDocs); ++i) {
            script[embed_content_hash(kDocs[i].text)] = {{"embedding", embed_of(i)}};
        }
        script[embed_content_hash(question.text)] = {{"embedding", embed_of(1)}};
    }

    // LLM-as-judge replies: index of the semantically matching gold answer.
    {
        const std::vector<std::vector<std::string>> gold_aliases{
            {"Silver Creek"}, {"Iron Harbor"}, {"Paper Moon Rising"}};
        const std::map<std::string, std::string> judge_replies{
            {"Silver Creek", "1"},      {"Iron Harbor", "2"},   {"Paper Moon Rising", "3"},
            {"Field Concert Hall", "None"}, {"Glass Anthem", "None"}, {"Blue Meridian", "None"}};
        for (const auto& [surface, reply] : judge_replies) {
            ChatRequest request = render_judge_prompt(question.text, gold_aliases, surface);
            script[prompt_content_hash(request)] = {{"text", reply}};
        }
    }

    // Verification verdicts for every reachable configuration.
    auto plan = parse_verification_plan(question, kVqgResponse);
    auto self_plan = self_reflection_plan(question);
    for (const auto& c : kCandidates) {
        AnswerCandidate cand;
        cand.surface = c.surface;
        cand.normalized = normalize_answer(c.surface);
        cand.source_passage_id = std::string(c.source_doc) + "#0";
        cand.question_id = question.id;

        auto add = [&](const VerificationQuestion& vq, int k_extra, bool outcome) {
            auto evidence = gather_evidence(cand, vq, pool, k_extra, ctx);
            ChatRequest request =
                render_verification_prompt(evidence, instantiate(vq, cand));
            script[prompt_content_hash(request)] = verdict_distribution(outcome);
        };
        add(plan.vqs[0], 1, c.cat);  // categorical evidence ignores k_extra
        add(plan.vqs[1], 1, c.f1_k1);
        add(plan.vqs[2], 1, c.f2_k1);
        add(plan.vqs[1], 0, c.f1_k0);
        add(plan.vqs[2], 0, c.f2_k0);
        add(self_plan.vqs[0], 1, c.self_reflection);
    }

    write_file(dir / "stub.json", script.dump(2) + "\n");

    json backend{{"kind", "stub"}, {"script_path", "stub.json"}, {"model_id", "scripted"}};
    json config{
        {"corpus", {{"id", "fixture"}, {"source", "docs.jsonl"}, {"chunk_size_words", 100}}},
        {"dataset", {{"path", "gold.jsonl"}, {"flavor", "default"}}},
        {"retrieval",
         {{"kind", "sparse"},
          {"pool_size", 1000},
          {"top_k", 12},
          {"k_rrf", 60},
          {"bm25", {{"k1", 0.9}, {"b", 0.4}}}}},
        {"reader", {{"mode", "independent"}, {"max_tokens", 512}}},
        {"ipv", {{"enabled", true}, {"k_extra", 1}}},
        {"llm", {{"max_concurrency", 4}, {"default", backend}}},
        {"eval", {{"judge", false}}},
        {"run", {{"output_dir", "out"}, {"max_parallel_questions", 2}, {"seed", 0}}}};
    write_file(dir / "config.json", config.dump(2) + "\n");

    return RunConfig::load(dir / "config.json");
}

}  // namespace multiqa::testing
