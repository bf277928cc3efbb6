#include "multiqa/ipv.hpp"

#include <algorithm>

#include "multiqa/errors.hpp"
#include "multiqa/parallel.hpp"
#include "multiqa/text.hpp"

namespace multiqa {

using nlohmann::json;

namespace {

std::string kind_name(VerificationKind k) {
    return k == VerificationKind::categorical ? "categorical" : "factual";
}

VerificationKind kind_from_string(const std::string& s) {
    if (s == "categorical") return VerificationKind::categorical;
    if (s == "factual") return VerificationKind::factual;
    throw ConfigError("unknown verification kind '" + s + "'");
}

std::string mode_name(PlanMode m) {
    switch (m) {
        case PlanMode::generated: return "generated";
        case PlanMode::self_reflection: return "self_reflection";
        case PlanMode::fallback_self_reflection: return "fallback_self_reflection";
    }
    return "generated";
}

PlanMode mode_from_string(const std::string& s) {
    if (s == "generated") return PlanMode::generated;
    if (s == "self_reflection") return PlanMode::self_reflection;
    if (s == "fallback_self_reflection") return PlanMode::fallback_self_reflection;
    throw ConfigError("unknown plan mode '" + s + "'");
}

json candidate_to_json(const AnswerCandidate& c) {
    return json{{"surface", c.surface},
                {"normalized", c.normalized},
                {"source_passage_id", c.source_passage_id},
                {"question_id", c.question_id}};
}

AnswerCandidate candidate_from_json(const json& j) {
    AnswerCandidate c;
    c.surface = j.at("surface").get<std::string>();
    c.normalized = j.at("normalized").get<std::string>();
    c.source_passage_id = j.value("source_passage_id", "");
    c.question_id = j.value("question_id", "");
    return c;
}

}  // namespace

const VerificationQuestion* VerificationPlan::categorical() const {
    for (const auto& vq : vqs) {
        if (vq.kind == VerificationKind::categorical) return &vq;
    }
    return nullptr;
}

std::vector<const VerificationQuestion*> VerificationPlan::factual() const {
    std::vector<const VerificationQuestion*> out;
    for (const auto& vq : vqs) {
        if (vq.kind == VerificationKind::factual) out.push_back(&vq);
    }
    return out;
}

json VerificationPlan::to_json() const {
    json qs = json::array();
    for (const auto& vq : vqs) {
        qs.push_back({{"template", vq.template_text},
                      {"kind", kind_name(vq.kind)},
                      {"negated", vq.negated},
                      {"ordinal", vq.ordinal}});
    }
    return json{{"question_id", question_id},
                {"vqs", std::move(qs)},
                {"raw_generation", raw_generation},
                {"mode", mode_name(mode)},
                {"truncated", truncated}};
}

VerificationPlan VerificationPlan::from_json(const json& j) {
    VerificationPlan plan;
    plan.question_id = j.at("question_id").get<std::string>();
    plan.raw_generation = j.value("raw_generation", "");
    plan.mode = mode_from_string(j.value("mode", "generated"));
    plan.truncated = j.value("truncated", false);
    for (const auto& q : j.at("vqs")) {
        VerificationQuestion vq;
        vq.template_text = q.at("template").get<std::string>();
        vq.kind = kind_from_string(q.at("kind").get<std::string>());
        vq.negated = q.value("negated", false);
        vq.ordinal = q.at("ordinal").get<int>();
        plan.vqs.push_back(std::move(vq));
    }
    return plan;
}

json Verdict::to_json() const {
    return json{{"candidate_normalized", candidate_normalized},
                {"vq_ordinal", vq_ordinal},
                {"p_plus", p_plus},
                {"p_minus", p_minus},
                {"outcome", outcome},
                {"evidence_passage_ids", evidence_passage_ids}};
}

Verdict Verdict::from_json(const json& j) {
    Verdict v;
    v.candidate_normalized = j.at("candidate_normalized").get<std::string>();
    v.vq_ordinal = j.at("vq_ordinal").get<int>();
    v.p_plus = j.at("p_plus").get<double>();
    v.p_minus = j.at("p_minus").get<double>();
    v.outcome = j.at("outcome").get<bool>();
    v.evidence_passage_ids = j.at("evidence_passage_ids").get<std::vector<std::string>>();
    return v;
}

json FilterResult::to_json() const {
    json retained_json = json::array();
    for (const auto& c : retained) retained_json.push_back(candidate_to_json(c));
    json rejected_json = json::array();
    for (const auto& [c, ordinal] : rejected) {
        rejected_json.push_back({{"candidate", candidate_to_json(c)}, {"failing_vq_ordinal", ordinal}});
    }
    json verdicts_json = json::array();
    for (const auto& v : verdicts) verdicts_json.push_back(v.to_json());
    return json{{"question_id", question_id},
                {"retained", std::move(retained_json)},
                {"rejected", std::move(rejected_json)},
                {"verdicts", std::move(verdicts_json)}};
}

FilterResult FilterResult::from_json(const json& j) {
    FilterResult r;
    r.question_id = j.at("question_id").get<std::string>();
    for (const auto& c : j.at("retained")) r.retained.push_back(candidate_from_json(c));
    for (const auto& e : j.at("rejected")) {
        r.rejected.emplace_back(candidate_from_json(e.at("candidate")),
                                e.at("failing_vq_ordinal").get<int>());
    }
    for (const auto& v : j.at("verdicts")) r.verdicts.push_back(Verdict::from_json(v));
    return r;
}

IpvConfig IpvConfig::from_json(const json& j) {
    IpvConfig cfg;
    cfg.enabled = j.value("enabled", true);
    cfg.k_extra = j.value("k_extra", 1);
    cfg.skip_categorical = j.value("skip_categorical", false);
    cfg.skip_factual = j.value("skip_factual", false);
    cfg.self_reflection = j.value("self_reflection", false);
    cfg.max_factual_questions = j.value("max_factual_questions", 4);
    if (j.contains("positive_variants")) {
        cfg.positive_variants = j.at("positive_variants").get<std::vector<std::string>>();
    }
    if (j.contains("negative_variants")) {
        cfg.negative_variants = j.at("negative_variants").get<std::vector<std::string>>();
    }
    if (cfg.k_extra < 0) throw ConfigError("ipv.k_extra must be nonnegative");
    return cfg;
}

json IpvConfig::to_json() const {
    return json{{"enabled", enabled},
                {"k_extra", k_extra},
                {"skip_categorical", skip_categorical},
                {"skip_factual", skip_factual},
                {"self_reflection", self_reflection},
                {"max_factual_questions", max_factual_questions},
                {"positive_variants", positive_variants},
                {"negative_variants", negative_variants}};
}

VerificationPlan parse_verification_plan(const Question& question, const std::string& raw,
                                         int max_factual_questions) {
    auto lines = parse_vqg_response(raw);

    VerificationPlan plan;
    plan.question_id = question.id;
    plan.raw_generation = raw;

    for (size_t i = 0; i < lines.size(); ++i) {
        VerificationQuestion vq;
        vq.template_text = lines[i].text;
        vq.negated = lines[i].negated;
        vq.kind = i == 0 ? VerificationKind::categorical : VerificationKind::factual;
        vq.ordinal = int(i);
        if (!has_single_placeholder(vq.template_text)) {
            throw ParseError("verification question lacks a single [answer] placeholder: " +
                             vq.template_text);
        }
        if (vq.kind == VerificationKind::categorical && vq.negated) {
            throw ParseError("categorical verification question cannot carry [NEGATION]");
        }
        if (vq.kind == VerificationKind::factual &&
            int(plan.factual().size()) >= max_factual_questions) {
            plan.truncated = true;  // VQG drifted past the requested 2-3 questions
            continue;
        }
        plan.vqs.push_back(std::move(vq));
    }
    if (plan.factual().empty()) {
        throw ParseError("VQG produced no factual verification questions");
    }
    return plan;
}

VerificationPlan generate_verification_plan(const Question& question, VqgFlavor flavor,
                                            LlmClient& vqg_client, int max_factual_questions) {
    ChatRequest request = render_vqg_dialogue(question, flavor);
    request.model_id = vqg_client.spec().model_id;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string raw = vqg_client.generate(request);
        try {
            return parse_verification_plan(question, raw, max_factual_questions);
        } catch (const ParseError&) {
            if (attempt == 1) break;
        }
    }
    VerificationPlan plan = self_reflection_plan(question);
    plan.mode = PlanMode::fallback_self_reflection;
    return plan;
}

VerificationPlan self_reflection_plan(const Question& question) {
    VerificationPlan plan;
    plan.question_id = question.id;
    plan.mode = PlanMode::self_reflection;
    VerificationQuestion vq;
    vq.template_text =
        std::string("Is \"") + kAnswerPlaceholder +
        "\" a correct answer to the question: " + question.text + "?";
    vq.kind = VerificationKind::factual;
    vq.ordinal = 0;
    plan.vqs.push_back(std::move(vq));
    return plan;
}

std::string instantiate(const VerificationQuestion& vq, const AnswerCandidate& candidate) {
    return fill_placeholder(vq.template_text, candidate.surface);
}

std::vector<Passage> gather_evidence(const AnswerCandidate& candidate,
                                     const VerificationQuestion& vq, const RetrievalPool& pool,
                                     int k_extra, const IpvContext& ctx) {
    const bool has_source = !candidate.source_passage_id.empty();
    const std::string query = fill_placeholder(vq.template_text, candidate.surface);

    auto fetch = [&](const std::vector<RankedPassage>& ranked) {
        std::vector<Passage> out;
        out.reserve(ranked.size());
        for (const auto& r : ranked) out.push_back(ctx.store.get_passage(r.passage_id));
        return out;
    };

    if (vq.kind == VerificationKind::categorical) {
        if (has_source) return {ctx.store.get_passage(candidate.source_passage_id)};
        return fetch(ctx.retriever.search_within_pool(pool, query, 1, {}));
    }

    if (has_source) {
        std::vector<Passage> evidence{ctx.store.get_passage(candidate.source_passage_id)};
        if (k_extra > 0 && !pool.entries.empty()) {
            auto extra = ctx.retriever.search_within_pool(pool, query, size_t(k_extra),
                                                          {candidate.source_passage_id});
            for (auto& p : fetch(extra)) evidence.push_back(std::move(p));
        }
        return evidence;
    }
    return fetch(ctx.retriever.search_within_pool(pool, query, size_t(k_extra) + 1, {}));
}

namespace {

Verdict score_one(const AnswerCandidate& candidate, const VerificationQuestion& vq,
                  const std::vector<Passage>& evidence, const IpvConfig& config,
                  const IpvContext& ctx) {
    Verdict verdict;
    verdict.candidate_normalized = candidate.normalized;
    verdict.vq_ordinal = vq.ordinal;
    for (const auto& p : evidence) verdict.evidence_passage_ids.push_back(p.id);

    ChatRequest request = render_verification_prompt(evidence, instantiate(vq, candidate));
    request.model_id = ctx.verifier.spec().model_id;
    try {
        BinaryScore score =
            ctx.verifier.score_binary(request, config.positive_variants, config.negative_variants);
        verdict.p_plus = score.p_plus.probability_mass;
        verdict.p_minus = score.p_minus.probability_mass;
    } catch (const BackendError&) {
        // Conservative: an unscorable verdict rejects.
        verdict.p_plus = 0.0;
        verdict.p_minus = 0.0;
    }
    verdict.outcome = verdict.p_plus > verdict.p_minus;
    return verdict;
}

}  // namespace

CandidateDecision verify_candidate(const AnswerCandidate& candidate, const VerificationPlan& plan,
                                   const RetrievalPool& pool, const IpvConfig& config,
                                   const IpvContext& ctx) {
    CandidateDecision decision;
    bool kept = true;

    // A question that yields no evidence at all (no provenance and no pool
    // match) cannot be verified; its outcome is False without an LLM call,
    // mirroring the verification prompt's insufficient-evidence rule.
    auto evaluate = [&](const VerificationQuestion& vq) {
        auto evidence = gather_evidence(candidate, vq, pool, config.k_extra, ctx);
        if (evidence.empty()) return false;
        Verdict verdict = score_one(candidate, vq, evidence, config, ctx);
        bool outcome = verdict.outcome;
        decision.verdicts.push_back(std::move(verdict));
        return outcome;
    };

    const VerificationQuestion* categorical = plan.categorical();
    if (categorical != nullptr && !config.skip_categorical) {
        if (!evaluate(*categorical)) {
            // Skip factual verification entirely; no extra retrieval happens.
            decision.kept = false;
            return decision;
        }
    }

    if (!config.skip_factual) {
        for (const auto* vq : plan.factual()) {
            bool outcome = evaluate(*vq);
            bool passed = vq->negated ? !outcome : outcome;
            kept = kept && passed;
        }
    }

    decision.kept = kept;
    return decision;
}

FilterResult filter_candidates(const CandidateSet& candidates, const VerificationPlan& plan,
                               const RetrievalPool& pool, const IpvConfig& config,
                               const IpvContext& ctx) {
    FilterResult result;
    result.question_id = candidates.question_id;

    std::vector<CandidateDecision> decisions(candidates.candidates.size());
    parallel_for(candidates.candidates.size(), config.parallelism, [&](size_t i) {
        decisions[i] = verify_candidate(candidates.candidates[i], plan, pool, config, ctx);
    });

    for (size_t i = 0; i < decisions.size(); ++i) {
        const AnswerCandidate& candidate = candidates.candidates[i];
        CandidateDecision& decision = decisions[i];
        if (decision.kept) {
            result.retained.push_back(candidate);
        } else {
            int failing = -1;
            for (const auto& v : decision.verdicts) {
                const VerificationQuestion* vq = nullptr;
                for (const auto& q : plan.vqs) {
                    if (q.ordinal == v.vq_ordinal) vq = &q;
                }
                if (vq == nullptr) continue;
                bool passed = vq->negated ? !v.outcome : v.outcome;
                if (!passed) {
                    failing = v.vq_ordinal;
                    break;
                }
            }
            result.rejected.emplace_back(candidate, failing);
        }
        for (auto& v : decision.verdicts) result.verdicts.push_back(std::move(v));
    }
    return result;
}

bool retention_decision(const std::vector<VerificationQuestion>& vqs,
                        const std::vector<bool>& outcomes) {
    if (vqs.size() != outcomes.size()) throw ContractError("one outcome per verification question");
    for (size_t i = 0; i < vqs.size(); ++i) {
        bool passed = vqs[i].kind == VerificationKind::categorical
                          ? outcomes[i]
                          : (vqs[i].negated ? !outcomes[i] : outcomes[i]);
        if (!passed) return false;
    }
    return true;
}

}  // namespace multiqa
