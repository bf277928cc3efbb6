#include "multiqa/reader.hpp"

#include <algorithm>
#include <unordered_set>

#include "multiqa/errors.hpp"
#include "multiqa/parallel.hpp"
#include "multiqa/prompts.hpp"
#include "multiqa/text.hpp"

namespace multiqa {

using nlohmann::json;

QuestionType question_type_from_string(const std::string& s) {
    if (s == "simple") return QuestionType::simple;
    if (s == "intersection") return QuestionType::intersection;
    if (s == "composition") return QuestionType::composition;
    return QuestionType::unknown;
}

std::string question_type_name(QuestionType t) {
    switch (t) {
        case QuestionType::simple: return "simple";
        case QuestionType::intersection: return "intersection";
        case QuestionType::composition: return "composition";
        case QuestionType::unknown: return "unknown";
    }
    return "unknown";
}

ReadingMode reading_mode_from_string(const std::string& s) {
    if (s == "independent") return ReadingMode::independent;
    if (s == "concatenated") return ReadingMode::concatenated;
    if (s == "closed_book") return ReadingMode::closed_book;
    throw ConfigError("unknown reading mode '" + s + "'");
}

std::string reading_mode_name(ReadingMode m) {
    switch (m) {
        case ReadingMode::independent: return "independent";
        case ReadingMode::concatenated: return "concatenated";
        case ReadingMode::closed_book: return "closed_book";
    }
    return "independent";
}

json CandidateSet::to_json() const {
    json cands = json::array();
    for (const auto& c : candidates) {
        cands.push_back({{"surface", c.surface},
                         {"normalized", c.normalized},
                         {"source_passage_id", c.source_passage_id}});
    }
    return json{{"question_id", question_id},
                {"mode", reading_mode_name(reading_mode)},
                {"passages_read", passages_read},
                {"candidates", std::move(cands)}};
}

CandidateSet CandidateSet::from_json(const json& j) {
    CandidateSet set;
    set.question_id = j.at("question_id").get<std::string>();
    set.reading_mode = reading_mode_from_string(j.at("mode").get<std::string>());
    set.passages_read = j.at("passages_read").get<long>();
    for (const auto& c : j.at("candidates")) {
        AnswerCandidate cand;
        cand.surface = c.at("surface").get<std::string>();
        cand.normalized = c.at("normalized").get<std::string>();
        cand.source_passage_id = c.value("source_passage_id", "");
        cand.question_id = set.question_id;
        set.candidates.push_back(std::move(cand));
    }
    return set;
}

std::vector<AnswerCandidate> dedupe_candidates(const std::vector<AnswerCandidate>& in_order) {
    std::vector<AnswerCandidate> out;
    std::unordered_set<std::string> seen;
    for (const auto& c : in_order) {
        if (c.normalized.empty()) continue;
        if (seen.insert(c.normalized).second) out.push_back(c);
    }
    return out;
}

namespace {

std::vector<AnswerCandidate> candidates_from_response(const std::string& raw,
                                                      const Question& question,
                                                      const std::string& source_passage_id) {
    std::vector<AnswerCandidate> out;
    for (const auto& surface : parse_answer_list(raw)) {
        AnswerCandidate c;
        c.surface = surface;
        c.normalized = normalize_answer(surface);
        c.source_passage_id = source_passage_id;
        c.question_id = question.id;
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

CandidateSet read_independent(const Question& question, const RetrievalPool& pool, int k,
                              const PassageStore& store, LlmClient& client,
                              const ReaderOptions& options) {
    if (pool.entries.empty()) throw ContractError("cannot read from an empty pool");
    if (k < 1) throw ContractError("k must be positive");
    size_t n = std::min(size_t(k), pool.entries.size());

    std::vector<std::vector<AnswerCandidate>> per_passage(n);
    std::vector<char> failed(n, 0);
    parallel_for(n, options.parallelism, [&](size_t i) {
        const Passage& passage = store.get_passage(pool.entries[i].passage_id);
        ChatRequest request =
            render_reading_prompt(question, std::span<const Passage>(&passage, 1),
                                  ReadingMode::independent);
        request.max_tokens = options.max_tokens;
        request.model_id = client.spec().model_id;
        try {
            per_passage[i] = candidates_from_response(client.generate(request), question,
                                                      passage.id);
        } catch (const BackendError&) {
            failed[i] = 1;
        }
    });

    long failures = std::count(failed.begin(), failed.end(), 1);
    if (double(failures) > options.failure_budget * double(n)) {
        throw BackendError("reading failed for " + std::to_string(failures) + " of " +
                           std::to_string(n) + " passages");
    }

    // Union in rank order, not completion order.
    std::vector<AnswerCandidate> in_order;
    for (auto& list : per_passage) {
        for (auto& c : list) in_order.push_back(std::move(c));
    }

    CandidateSet set;
    set.question_id = question.id;
    set.reading_mode = ReadingMode::independent;
    set.passages_read = long(n);
    set.failed_reads = failures;
    set.candidates = dedupe_candidates(in_order);
    return set;
}

CandidateSet read_concatenated(const Question& question, const RetrievalPool& pool, int k,
                               const PassageStore& store, LlmClient& client,
                               const ReaderOptions& options) {
    if (pool.entries.empty()) throw ContractError("cannot read from an empty pool");
    if (k < 1) throw ContractError("k must be positive");
    size_t n = std::min(size_t(k), pool.entries.size());

    std::vector<Passage> passages;
    passages.reserve(n);
    for (size_t i = 0; i < n; ++i) passages.push_back(store.get_passage(pool.entries[i].passage_id));

    ChatRequest request = render_reading_prompt(question, passages, ReadingMode::concatenated);
    request.max_tokens = options.max_tokens;
    request.model_id = client.spec().model_id;

    CandidateSet set;
    set.question_id = question.id;
    set.reading_mode = ReadingMode::concatenated;
    set.passages_read = long(n);
    set.candidates = dedupe_candidates(candidates_from_response(client.generate(request), question,
                                                                /*source_passage_id=*/""));
    return set;
}

CandidateSet read_closed_book(const Question& question, LlmClient& client,
                              const ReaderOptions& options) {
    ChatRequest request = render_reading_prompt(question, {}, ReadingMode::closed_book);
    request.max_tokens = options.max_tokens;
    request.model_id = client.spec().model_id;

    CandidateSet set;
    set.question_id = question.id;
    set.reading_mode = ReadingMode::closed_book;
    set.passages_read = 0;
    set.candidates = dedupe_candidates(candidates_from_response(client.generate(request), question,
                                                                /*source_passage_id=*/""));
    return set;
}

}  // namespace multiqa
