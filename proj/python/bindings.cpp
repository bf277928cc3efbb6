#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "multiqa/config.hpp"
#include "multiqa/corpus.hpp"
#include "multiqa/eval.hpp"
#include "multiqa/ipv.hpp"
#include "multiqa/pipeline.hpp"
#include "multiqa/prompts.hpp"
#include "multiqa/retrieval.hpp"
#include "multiqa/sha256.hpp"
#include "multiqa/text.hpp"

namespace py = pybind11;
using namespace multiqa;
using nlohmann::json;

namespace {

py::object json_to_py(const json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

/// In-memory BM25 search over (id, title, text) documents. Ingests through
/// the regular store machinery in a scratch directory.
class SearchIndex {
public:
    SearchIndex(const std::vector<std::tuple<std::string, std::string, std::string>>& docs,
                double k1, double b) {
        namespace fs = std::filesystem;
        std::random_device rd;
        fs::path dir = fs::temp_directory_path() /
                       ("multiqa-py-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        fs::create_directories(dir);
        auto source = dir / "docs.jsonl";
        {
            std::ofstream out(source);
            for (const auto& [id, title, text] : docs) {
                out << json{{"id", id}, {"title", title}, {"text", text}}.dump() << "\n";
            }
        }
        PassageStore::ingest(source, dir / "corpus", 1 << 20);
        store_ = PassageStore::load(dir / "corpus");
        index_ = Bm25Index::build(store_, {k1, b});
        fs::remove_all(dir);
    }

    std::vector<std::tuple<std::string, double, int>> search(const std::string& query,
                                                             size_t top_n) const {
        std::vector<std::tuple<std::string, double, int>> out;
        for (const auto& r : index_.search(query, top_n)) {
            out.emplace_back(r.passage_id, r.score, r.rank);
        }
        return out;
    }

    py::dict stats() const {
        py::dict d;
        auto s = index_.stats();
        d["doc_count"] = s.doc_count;
        d["avg_doc_len"] = s.avg_doc_len;
        d["vocabulary_size"] = s.vocabulary_size;
        return d;
    }

private:
    PassageStore store_;
    Bm25Index index_;
};

std::vector<std::pair<std::string, double>> py_rrf_fuse(
    const std::vector<std::vector<std::string>>& ranked_id_lists, int k_rrf) {
    std::vector<std::vector<RankedPassage>> lists;
    for (const auto& ids : ranked_id_lists) {
        std::vector<RankedPassage> list;
        for (size_t i = 0; i < ids.size(); ++i) list.push_back({ids[i], 0.0, int(i) + 1});
        lists.push_back(std::move(list));
    }
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : rrf_fuse(lists, k_rrf)) out.emplace_back(e.passage_id, e.score);
    return out;
}

py::dict py_score_question(const std::vector<std::string>& predictions,
                           const std::vector<std::vector<std::string>>& gold_aliases) {
    GoldRecord gold;
    gold.question = Question{"q", "q", "", QuestionType::unknown};
    for (const auto& aliases : gold_aliases) gold.answers.push_back(GoldAnswer{aliases});
    auto m = score_question(predictions, gold);
    return json_to_py(m.to_json()).cast<py::dict>();
}

py::list py_parse_verification_plan(const std::string& question_text, const std::string& raw) {
    Question q{"q", question_text, "", QuestionType::unknown};
    auto plan = parse_verification_plan(q, raw);
    py::list out;
    for (const auto& vq : plan.vqs) {
        py::dict d;
        d["template"] = vq.template_text;
        d["kind"] = vq.kind == VerificationKind::categorical ? "categorical" : "factual";
        d["negated"] = vq.negated;
        d["ordinal"] = vq.ordinal;
        out.append(d);
    }
    return out;
}

bool py_retention_decision(const std::vector<std::string>& kinds,
                           const std::vector<bool>& negated, const std::vector<bool>& outcomes) {
    if (kinds.size() != negated.size() || kinds.size() != outcomes.size()) {
        throw py::value_error("kinds, negated, and outcomes must have equal length");
    }
    std::vector<VerificationQuestion> vqs;
    for (size_t i = 0; i < kinds.size(); ++i) {
        VerificationQuestion vq;
        vq.kind = kinds[i] == "categorical" ? VerificationKind::categorical
                                            : VerificationKind::factual;
        vq.negated = negated[i];
        vq.ordinal = int(i);
        vq.template_text = "[answer]";
        vqs.push_back(vq);
    }
    return retention_decision(vqs, outcomes);
}

py::dict py_run(const std::string& config_path, bool force) {
    Pipeline pipeline(RunConfig::load(config_path));
    pipeline.run(force);
    return json_to_py(pipeline.metrics_report()).cast<py::dict>();
}

}  // namespace

PYBIND11_MODULE(_multiqa, m) {
    m.doc() = "Core operations of the multiqa retrieval QA engine";

    py::class_<Passage>(m, "Passage")
        .def_readonly("id", &Passage::id)
        .def_readonly("title", &Passage::title)
        .def_readonly("text", &Passage::text)
        .def_readonly("doc_id", &Passage::doc_id)
        .def_readonly("chunk_index", &Passage::chunk_index)
        .def("__repr__", [](const Passage& p) { return "<Passage " + p.id + ">"; });

    m.def("chunk_document", &chunk_document, py::arg("doc_id"), py::arg("title"), py::arg("body"),
          py::arg("chunk_size_words"),
          "Greedy fixed-size chunking; every word lands in exactly one chunk.");

    m.def("sha256", [](const std::string& s) { return Sha256::hash(s); });
    m.def("normalize_answer", [](const std::string& s) { return normalize_answer(s); });
    m.def("normalize_for_match", [](const std::string& s) { return normalize_for_match(s); });

    m.def("parse_answer_list", &parse_answer_list, py::arg("raw"),
          "Extract bulleted answers from a reader response.");
    m.def("is_abstention", &is_abstention, py::arg("raw"));
    m.def("parse_verification_plan", &py_parse_verification_plan, py::arg("question"),
          py::arg("raw"), "Parse a verification-question-generation response.");

    m.def("rrf_fuse", &py_rrf_fuse, py::arg("ranked_id_lists"), py::arg("k_rrf") = 60,
          "Reciprocal rank fusion over id lists given in rank order.");

    py::class_<SearchIndex>(m, "SearchIndex")
        .def(py::init<const std::vector<std::tuple<std::string, std::string, std::string>>&,
                      double, double>(),
             py::arg("docs"), py::arg("k1") = 0.9, py::arg("b") = 0.4)
        .def("search", &SearchIndex::search, py::arg("query"), py::arg("top_n") = 10)
        .def("stats", &SearchIndex::stats);

    m.def("score_question", &py_score_question, py::arg("predictions"), py::arg("gold_aliases"),
          "Set precision/recall/F1 against alias lists.");
    m.def("retention_decision", &py_retention_decision, py::arg("kinds"), py::arg("negated"),
          py::arg("outcomes"), "Retention rule over verification verdict outcomes.");

    m.def("run", &py_run, py::arg("config_path"), py::arg("force") = false,
          "Run the full pipeline from a config file and return the metrics report.");
}
