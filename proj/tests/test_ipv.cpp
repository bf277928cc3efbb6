#include <doctest.h>

#include "multiqa/errors.hpp"
#include "multiqa/ipv.hpp"
#include "multiqa/text.hpp"
#include "test_helpers.hpp"

using namespace multiqa;
using multiqa::testing::Doc;
using multiqa::testing::make_store;
using multiqa::testing::TempDir;
using nlohmann::json;

namespace {

const Question kQ{"q1", "What film was directed by Radha Mohan and produced by Prakash Raj?", "",
                  QuestionType::intersection};

VerificationQuestion vq(const std::string& tmpl, VerificationKind kind, bool negated, int ordinal) {
    return VerificationQuestion{tmpl, kind, negated, ordinal};
}

AnswerCandidate candidate(const std::string& surface, const std::string& source) {
    AnswerCandidate c;
    c.surface = surface;
    c.normalized = normalize_answer(surface);
    c.source_passage_id = source;
    c.question_id = kQ.id;
    return c;
}

struct IpvFixture {
    TempDir tmp;
    PassageStore store;
    std::shared_ptr<const Bm25Index> index;
    Retriever retriever;
    RetrievalPool pool;

    IpvFixture()
        : store(make_store(tmp, {{"src", "Carrie", "Carrie is a film directed by Radha Mohan"},
                                 {"ex1", "Production", "Carrie was produced by Prakash Raj"},
                                 {"ex2", "Other", "an unrelated passage about trains"}})),
          index(std::make_shared<Bm25Index>(Bm25Index::build(store))),
          retriever(RetrievalConfig{}, index, nullptr, nullptr) {
        pool.question_id = kQ.id;
        pool.retriever_id = "sparse";
        int rank = 1;
        for (const auto& p : store.passages()) {
            pool.entries.push_back({p.id, 1.0 / rank, rank});
            ++rank;
        }
    }
};

json verdict_entry(bool outcome) {
    return json{{"token_distribution", {{"True", outcome ? 0.9 : 0.05},
                                        {"False", outcome ? 0.05 : 0.9}}}};
}

}  // namespace

TEST_CASE("instantiate replaces the placeholder with the exact surface") {
    auto q = vq("Is \"[answer]\" a film?", VerificationKind::categorical, false, 0);
    CHECK(instantiate(q, candidate("Carrie", "src#0")) == "Is \"Carrie\" a film?");

    auto mid = vq("Was [answer] released in 1976?", VerificationKind::factual, false, 1);
    CHECK(instantiate(mid, candidate("Carrie", "")) == "Was Carrie released in 1976?");

    auto quoted = vq("Is \"[answer]\" real?", VerificationKind::factual, false, 1);
    CHECK(instantiate(quoted, candidate("The \"Thing\"", "")) == "Is \"The \"Thing\"\" real?");
}

TEST_CASE("parse_verification_plan builds categorical-first plans") {
    std::string raw =
        "Thought: check category, then the two directors.\n"
        "Verification Questions: \n"
        "* Is \"[answer]\" a film?\n"
        "* Was the film \"[answer]\" directed by Radha Mohan?\n"
        "* Was the film \"[answer]\" produced by Prakash Raj?\n";
    auto plan = parse_verification_plan(kQ, raw);
    REQUIRE(plan.vqs.size() == 3);
    CHECK(plan.categorical() != nullptr);
    CHECK(plan.categorical()->ordinal == 0);
    CHECK(plan.factual().size() == 2);
    CHECK(plan.vqs[1].template_text == "Was the film \"[answer]\" directed by Radha Mohan?");
    CHECK(plan.mode == PlanMode::generated);
}

TEST_CASE("parse_verification_plan flags negated factual questions") {
    std::string raw =
        "Verification Questions: \n"
        "* Is \"[answer]\" a highway system?\n"
        "* Is the highway system \"[answer]\" maintained by Tottori Prefecture? [NEGATION]\n";
    auto plan = parse_verification_plan(kQ, raw);
    REQUIRE(plan.vqs.size() == 2);
    CHECK(!plan.vqs[0].negated);
    CHECK(plan.vqs[1].negated);
    CHECK(plan.vqs[1].kind == VerificationKind::factual);
}

TEST_CASE("parse_verification_plan validates placeholders and factual count") {
    CHECK_THROWS_AS(parse_verification_plan(
                        kQ, "Verification Questions: \n* Is it a film?\n* Is \"[answer]\" x?\n"),
                    ParseError);
    CHECK_THROWS_AS(parse_verification_plan(kQ, "Verification Questions: \n* Is \"[answer]\" x?\n"),
                    ParseError);  // zero factual questions
    // Factual questions beyond the cap are dropped with a flag.
    std::string many = "Verification Questions: \n* Is \"[answer]\" a film?\n";
    for (int i = 0; i < 6; ++i) many += "* Is \"[answer]\" fact " + std::to_string(i) + "?\n";
    auto plan = parse_verification_plan(kQ, many, 4);
    CHECK(plan.factual().size() == 4);
    CHECK(plan.truncated);
}

TEST_CASE("generate_verification_plan retries once then falls back to self-reflection") {
    ChatRequest request = render_vqg_dialogue(kQ, VqgFlavor::standard);
    json script{{prompt_content_hash(request), {{"text", "no placeholder anywhere"}}}};
    LlmClient client(std::make_unique<StubBackend>(script));
    auto plan = generate_verification_plan(kQ, VqgFlavor::standard, client);
    CHECK(plan.mode == PlanMode::fallback_self_reflection);
    CHECK(client.call_count() == 2);  // one retry before the fallback
    REQUIRE(plan.vqs.size() == 1);
    CHECK(plan.vqs[0].kind == VerificationKind::factual);
}

TEST_CASE("generate_verification_plan parses the scripted dialogue response") {
    ChatRequest request = render_vqg_dialogue(kQ, VqgFlavor::standard);
    json script{{prompt_content_hash(request),
                 {{"text",
                   "Thought: check film category first.\n"
                   "Verification Questions: \n"
                   "* Is \"[answer]\" a film?\n"
                   "* Was the film \"[answer]\" directed by Radha Mohan?\n"}}}};
    LlmClient client(std::make_unique<StubBackend>(script));
    auto plan = generate_verification_plan(kQ, VqgFlavor::standard, client);
    CHECK(plan.mode == PlanMode::generated);
    CHECK(plan.vqs.size() == 2);
    CHECK(plan.raw_generation.find("Thought:") == 0);
}

TEST_CASE("self_reflection_plan embeds the question verbatim") {
    auto plan = self_reflection_plan(kQ);
    REQUIRE(plan.vqs.size() == 1);
    CHECK(plan.categorical() == nullptr);
    CHECK(plan.vqs[0].template_text ==
          "Is \"[answer]\" a correct answer to the question: " + kQ.text + "?");
    CHECK(instantiate(plan.vqs[0], candidate("Carrie", "")).find("Carrie") != std::string::npos);
}

TEST_CASE("gather_evidence grounding rules") {
    IpvFixture f;
    LlmClient unused(std::make_unique<StubBackend>(json::object()));
    IpvContext ctx{f.store, f.retriever, unused};
    auto cand = candidate("Carrie", "src#0");

    SUBCASE("factual with k_extra=1 yields source first plus one extra") {
        auto factual = vq("Was the film \"[answer]\" produced by Prakash Raj?",
                          VerificationKind::factual, false, 1);
        auto evidence = gather_evidence(cand, factual, f.pool, 1, ctx);
        REQUIRE(evidence.size() == 2);
        CHECK(evidence[0].id == "src#0");
        CHECK(evidence[1].id == "ex1#0");  // the production passage matches the query
    }

    SUBCASE("factual with k_extra=0 uses the source alone and never searches") {
        auto factual = vq("Was \"[answer]\" produced by Prakash Raj?", VerificationKind::factual,
                          false, 1);
        long before = f.retriever.pool_search_calls();
        auto evidence = gather_evidence(cand, factual, f.pool, 0, ctx);
        REQUIRE(evidence.size() == 1);
        CHECK(evidence[0].id == "src#0");
        CHECK(f.retriever.pool_search_calls() == before);
    }

    SUBCASE("categorical ignores k_extra") {
        auto cat = vq("Is \"[answer]\" a film?", VerificationKind::categorical, false, 0);
        auto evidence = gather_evidence(cand, cat, f.pool, 3, ctx);
        REQUIRE(evidence.size() == 1);
        CHECK(evidence[0].id == "src#0");
    }

    SUBCASE("no provenance draws k_extra+1 from the pool") {
        auto factual = vq("Was the film \"[answer]\" produced by Prakash Raj?",
                          VerificationKind::factual, false, 1);
        auto no_src = candidate("Carrie", "");
        auto evidence = gather_evidence(no_src, factual, f.pool, 1, ctx);
        CHECK(evidence.size() == 2);
    }

    SUBCASE("empty pool degrades to the source alone") {
        RetrievalPool empty;
        empty.question_id = kQ.id;
        empty.retriever_id = "sparse";
        auto factual = vq("Was \"[answer]\" produced?", VerificationKind::factual, false, 1);
        auto evidence = gather_evidence(cand, factual, empty, 1, ctx);
        REQUIRE(evidence.size() == 1);
        CHECK(evidence[0].id == "src#0");
    }
}

namespace {

/// Builds a stub script that answers each verification question with the
/// wanted outcome, given the evidence the pipeline will actually gather.
json script_for_combo(const IpvFixture& f, const AnswerCandidate& cand,
                      const std::vector<VerificationQuestion>& vqs,
                      const std::vector<bool>& outcomes, int k_extra) {
    LlmClient unused(std::make_unique<StubBackend>(json::object()));
    IpvContext ctx{f.store, f.retriever, unused};
    json script = json::object();
    for (size_t i = 0; i < vqs.size(); ++i) {
        auto evidence = gather_evidence(cand, vqs[i], f.pool, k_extra, ctx);
        ChatRequest request = render_verification_prompt(evidence, instantiate(vqs[i], cand));
        script[prompt_content_hash(request)] = verdict_entry(outcomes[i]);
    }
    return script;
}

}  // namespace

TEST_CASE("retention rule matches exhaustive enumeration with short-circuit accounting") {
    IpvFixture f;
    auto cand = candidate("Carrie", "src#0");
    IpvConfig config;
    config.k_extra = 1;
    config.parallelism = 1;

    // Plans with 1 categorical + up to 3 factual questions, any negation subset.
    for (int n_factual = 1; n_factual <= 3; ++n_factual) {
        for (int neg_mask = 0; neg_mask < (1 << n_factual); ++neg_mask) {
            VerificationPlan plan;
            plan.question_id = kQ.id;
            plan.vqs.push_back(vq("Is \"[answer]\" a film?", VerificationKind::categorical, false, 0));
            for (int i = 0; i < n_factual; ++i) {
                plan.vqs.push_back(vq("Does \"[answer]\" satisfy fact " + std::to_string(i) + "?",
                                      VerificationKind::factual, (neg_mask >> i) & 1, i + 1));
            }

            for (int combo = 0; combo < (1 << (n_factual + 1)); ++combo) {
                std::vector<bool> outcomes;
                for (int i = 0; i <= n_factual; ++i) outcomes.push_back((combo >> i) & 1);

                // Independent statement of the paper's rule.
                bool expected = outcomes[0];
                for (int i = 0; i < n_factual; ++i) {
                    bool pass = plan.vqs[size_t(i) + 1].negated ? !outcomes[size_t(i) + 1]
                                                                : outcomes[size_t(i) + 1];
                    expected = expected && pass;
                }

                LlmClient verifier(std::make_unique<StubBackend>(
                    script_for_combo(f, cand, plan.vqs, outcomes, config.k_extra)));
                IpvContext ctx{f.store, f.retriever, verifier};

                long search_before = f.retriever.pool_search_calls();
                auto decision = verify_candidate(cand, plan, f.pool, config, ctx);
                long searches = f.retriever.pool_search_calls() - search_before;

                CHECK(decision.kept == expected);
                CHECK(retention_decision(plan.vqs, outcomes) == expected);
                if (!outcomes[0]) {
                    // Categorical failure short-circuits: no factual retrieval,
                    // exactly one verdict.
                    CHECK(searches == 0);
                    CHECK(verifier.call_count() == 1);
                    CHECK(decision.verdicts.size() == 1);
                } else {
                    CHECK(searches == n_factual);  // one k_extra search per factual question
                    CHECK(verifier.call_count() == 1 + n_factual);
                    CHECK(decision.verdicts.size() == size_t(n_factual) + 1);
                }
                for (const auto& v : decision.verdicts) {
                    CHECK(v.outcome == (v.p_plus > v.p_minus));
                    CHECK(!v.evidence_passage_ids.empty());
                }
            }
        }
    }
}

TEST_CASE("equal probability masses yield outcome False") {
    IpvFixture f;
    auto cand = candidate("Carrie", "src#0");
    VerificationPlan plan;
    plan.question_id = kQ.id;
    plan.vqs.push_back(vq("Is \"[answer]\" a film?", VerificationKind::categorical, false, 0));
    plan.vqs.push_back(vq("Is \"[answer]\" real?", VerificationKind::factual, false, 1));

    LlmClient unused(std::make_unique<StubBackend>(json::object()));
    IpvContext dummy{f.store, f.retriever, unused};
    auto evidence = gather_evidence(cand, plan.vqs[0], f.pool, 1, dummy);
    ChatRequest request = render_verification_prompt(evidence, instantiate(plan.vqs[0], cand));
    json script{{prompt_content_hash(request),
                 {{"token_distribution", {{"True", 0.5}, {"False", 0.5}}}}}};

    LlmClient verifier(std::make_unique<StubBackend>(script));
    IpvContext ctx{f.store, f.retriever, verifier};
    IpvConfig config;
    config.parallelism = 1;
    auto decision = verify_candidate(cand, plan, f.pool, config, ctx);
    CHECK(!decision.kept);
    REQUIRE(decision.verdicts.size() == 1);  // tie rejects at the categorical step
    CHECK(!decision.verdicts[0].outcome);
}

TEST_CASE("backend failure on a verdict is conservative False") {
    IpvFixture f;
    auto cand = candidate("Carrie", "src#0");
    VerificationPlan plan;
    plan.question_id = kQ.id;
    plan.vqs.push_back(vq("Is \"[answer]\" a film?", VerificationKind::categorical, false, 0));
    plan.vqs.push_back(vq("Is \"[answer]\" x?", VerificationKind::factual, false, 1));

    LlmClient verifier(std::make_unique<StubBackend>(json::object()));  // everything unscripted
    IpvContext ctx{f.store, f.retriever, verifier};
    IpvConfig config;
    config.parallelism = 1;
    auto decision = verify_candidate(cand, plan, f.pool, config, ctx);
    CHECK(!decision.kept);
    CHECK(decision.verdicts.size() == 1);
    CHECK(decision.verdicts[0].p_plus == 0.0);
    CHECK(decision.verdicts[0].p_minus == 0.0);
}

TEST_CASE("filter_candidates partitions and preserves order") {
    IpvFixture f;
    VerificationPlan plan;
    plan.question_id = kQ.id;
    plan.vqs.push_back(vq("Is \"[answer]\" a film?", VerificationKind::categorical, false, 0));
    plan.vqs.push_back(vq("Does \"[answer]\" check out?", VerificationKind::factual, false, 1));

    CandidateSet set;
    set.question_id = kQ.id;
    set.candidates = {candidate("Keep Me", "src#0"), candidate("Drop Me", "ex1#0"),
                      candidate("Also Keep", "ex2#0")};

    IpvConfig config;
    config.parallelism = 1;
    json script = json::object();
    LlmClient unused(std::make_unique<StubBackend>(json::object()));
    IpvContext dummy{f.store, f.retriever, unused};
    std::vector<std::vector<bool>> outcomes{{true, true}, {true, false}, {true, true}};
    for (size_t c = 0; c < set.candidates.size(); ++c) {
        for (size_t i = 0; i < plan.vqs.size(); ++i) {
            auto evidence = gather_evidence(set.candidates[c], plan.vqs[i], f.pool, config.k_extra,
                                            dummy);
            ChatRequest request =
                render_verification_prompt(evidence, instantiate(plan.vqs[i], set.candidates[c]));
            script[prompt_content_hash(request)] = verdict_entry(outcomes[c][i]);
        }
    }

    LlmClient verifier(std::make_unique<StubBackend>(script));
    IpvContext ctx{f.store, f.retriever, verifier};
    auto result = filter_candidates(set, plan, f.pool, config, ctx);

    REQUIRE(result.retained.size() == 2);
    CHECK(result.retained[0].surface == "Keep Me");
    CHECK(result.retained[1].surface == "Also Keep");
    REQUIRE(result.rejected.size() == 1);
    CHECK(result.rejected[0].first.surface == "Drop Me");
    CHECK(result.rejected[0].second == 1);  // the failing factual ordinal
    CHECK(result.retained.size() + result.rejected.size() == set.candidates.size());
    CHECK(result.verdicts.size() == 6);

    // Filtering never adds candidates.
    for (const auto& r : result.retained) {
        bool found = false;
        for (const auto& c : set.candidates) found |= c.normalized == r.normalized;
        CHECK(found);
    }
}

TEST_CASE("empty candidate set filters to an empty result") {
    IpvFixture f;
    LlmClient verifier(std::make_unique<StubBackend>(json::object()));
    IpvContext ctx{f.store, f.retriever, verifier};
    CandidateSet empty;
    empty.question_id = kQ.id;
    auto result = filter_candidates(empty, self_reflection_plan(kQ), f.pool, IpvConfig{}, ctx);
    CHECK(result.retained.empty());
    CHECK(result.rejected.empty());
    CHECK(result.verdicts.empty());
}

TEST_CASE("self-reflection plans issue exactly one verdict per candidate") {
    IpvFixture f;
    auto plan = self_reflection_plan(kQ);
    CandidateSet set;
    set.question_id = kQ.id;
    set.candidates = {candidate("Carrie", "src#0"), candidate("Misery", "ex1#0")};

    IpvConfig config;
    config.parallelism = 1;
    json script = json::object();
    LlmClient unused(std::make_unique<StubBackend>(json::object()));
    IpvContext dummy{f.store, f.retriever, unused};
    for (const auto& c : set.candidates) {
        auto evidence = gather_evidence(c, plan.vqs[0], f.pool, config.k_extra, dummy);
        ChatRequest request = render_verification_prompt(evidence, instantiate(plan.vqs[0], c));
        script[prompt_content_hash(request)] = verdict_entry(c.surface == "Carrie");
    }
    LlmClient verifier(std::make_unique<StubBackend>(script));
    IpvContext ctx{f.store, f.retriever, verifier};
    auto result = filter_candidates(set, plan, f.pool, config, ctx);
    CHECK(result.verdicts.size() == set.candidates.size());
    REQUIRE(result.retained.size() == 1);
    CHECK(result.retained[0].surface == "Carrie");
}

TEST_CASE("plans and filter results round-trip through JSON") {
    VerificationPlan plan;
    plan.question_id = "q1";
    plan.raw_generation = "Verification Questions:\n* ...";
    plan.vqs.push_back(vq("Is \"[answer]\" a film?", VerificationKind::categorical, false, 0));
    plan.vqs.push_back(vq("Was \"[answer]\" made? [x]", VerificationKind::factual, true, 1));
    auto plan2 = VerificationPlan::from_json(plan.to_json());
    CHECK(plan2.question_id == plan.question_id);
    REQUIRE(plan2.vqs.size() == 2);
    CHECK(plan2.vqs[1].negated);
    CHECK(plan2.vqs[1].kind == VerificationKind::factual);

    FilterResult result;
    result.question_id = "q1";
    result.retained.push_back(candidate("A", "p#0"));
    result.rejected.emplace_back(candidate("B", "p#1"), 2);
    Verdict v;
    v.candidate_normalized = "a";
    v.vq_ordinal = 1;
    v.p_plus = 0.8;
    v.p_minus = 0.1;
    v.outcome = true;
    v.evidence_passage_ids = {"p#0"};
    result.verdicts.push_back(v);
    auto result2 = FilterResult::from_json(result.to_json());
    CHECK(result2.retained.size() == 1);
    CHECK(result2.rejected.size() == 1);
    CHECK(result2.rejected[0].second == 2);
    REQUIRE(result2.verdicts.size() == 1);
    CHECK(result2.verdicts[0].outcome);
}
