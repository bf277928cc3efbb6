#include "multiqa/corpus.hpp"

#include <chrono>
#include <set>

#include "multiqa/errors.hpp"
#include "multiqa/jsonl.hpp"
#include "multiqa/sha256.hpp"
#include "multiqa/text.hpp"

namespace multiqa {

namespace {

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json passage_to_json(const Passage& p) {
    return json{{"id", p.id},
                {"doc_id", p.doc_id},
                {"chunk_index", p.chunk_index},
                {"title", p.title},
                {"text", p.text}};
}

Passage passage_from_json(const json& rec) {
    Passage p;
    p.id = rec.at("id").get<std::string>();
    p.doc_id = rec.at("doc_id").get<std::string>();
    p.chunk_index = rec.at("chunk_index").get<int>();
    p.title = rec.at("title").get<std::string>();
    p.text = rec.at("text").get<std::string>();
    return p;
}

}  // namespace

std::vector<Passage> chunk_document(const std::string& doc_id, const std::string& title,
                                    const std::string& body, int chunk_size_words) {
    if (chunk_size_words < 1) throw ContractError("chunk_size_words must be >= 1");
    std::vector<std::string> words = split_words(body);
    if (words.empty()) throw ParseError("document '" + doc_id + "' has an empty body");

    std::vector<Passage> chunks;
    for (size_t start = 0; start < words.size(); start += size_t(chunk_size_words)) {
        size_t end = std::min(words.size(), start + size_t(chunk_size_words));
        std::string text;
        for (size_t i = start; i < end; ++i) {
            if (i > start) text.push_back(' ');
            text += words[i];
        }
        Passage p;
        p.chunk_index = int(chunks.size());
        p.id = doc_id + "#" + std::to_string(p.chunk_index);
        p.title = title;
        p.text = std::move(text);
        p.doc_id = doc_id;
        chunks.push_back(std::move(p));
    }
    return chunks;
}

CorpusManifest PassageStore::ingest(const std::filesystem::path& source_path,
                                    const std::filesystem::path& dir, int chunk_size_words,
                                    const std::string& corpus_id) {
    if (chunk_size_words < 1) throw ConfigError("chunk_size_words must be >= 1");

    std::vector<Passage> passages;
    std::set<std::string> seen_docs;
    for_each_jsonl(source_path, [&](const json& rec, long line) {
        if (!rec.is_object()) throw ParseError("record is not an object", line);
        for (const char* field : {"id", "title", "text"}) {
            if (!rec.contains(field) || !rec.at(field).is_string()) {
                throw ParseError(std::string("record missing string field '") + field + "'", line);
            }
        }
        std::string doc_id = rec.at("id").get<std::string>();
        if (!seen_docs.insert(doc_id).second) {
            throw ParseError("duplicate doc_id '" + doc_id + "'", line);
        }
        auto chunks = chunk_document(doc_id, rec.at("title").get<std::string>(),
                                     rec.at("text").get<std::string>(), chunk_size_words);
        for (auto& c : chunks) passages.push_back(std::move(c));
    });

    std::vector<json> lines;
    lines.reserve(passages.size());
    Sha256 hasher;
    // Hash in id order so the digest is independent of input file ordering.
    std::vector<const Passage*> by_id;
    by_id.reserve(passages.size());
    for (const auto& p : passages) by_id.push_back(&p);
    std::sort(by_id.begin(), by_id.end(),
              [](const Passage* a, const Passage* b) { return a->id < b->id; });
    for (const Passage* p : by_id) {
        hasher.update(p->id);
        hasher.update("\x1f");
        hasher.update(p->text);
        hasher.update("\x1e");
    }

    for (const auto& p : passages) lines.push_back(passage_to_json(p));
    write_jsonl(dir / "passages.jsonl", lines);

    CorpusManifest manifest;
    manifest.corpus_id = corpus_id;
    manifest.passage_count = long(passages.size());
    manifest.chunk_size_words = chunk_size_words;
    manifest.created_at = utc_timestamp();
    manifest.content_hash = hasher.hex_digest();
    json m{{"corpus_id", manifest.corpus_id},
           {"passage_count", manifest.passage_count},
           {"chunk_size_words", manifest.chunk_size_words},
           {"created_at", manifest.created_at},
           {"content_hash", manifest.content_hash}};
    write_file(dir / "manifest.json", m.dump(2) + "\n");
    return manifest;
}

PassageStore PassageStore::load(const std::filesystem::path& dir) {
    PassageStore store;
    json m = json::parse(read_file(dir / "manifest.json"));
    store.manifest_.corpus_id = m.at("corpus_id").get<std::string>();
    store.manifest_.passage_count = m.at("passage_count").get<long>();
    store.manifest_.chunk_size_words = m.at("chunk_size_words").get<int>();
    store.manifest_.created_at = m.at("created_at").get<std::string>();
    store.manifest_.content_hash = m.at("content_hash").get<std::string>();

    for_each_jsonl(dir / "passages.jsonl", [&](const json& rec, long) {
        store.passages_.push_back(passage_from_json(rec));
    });
    for (size_t i = 0; i < store.passages_.size(); ++i) {
        if (!store.by_id_.emplace(store.passages_[i].id, i).second) {
            throw ParseError("duplicate passage id '" + store.passages_[i].id + "' in store");
        }
    }
    if (long(store.passages_.size()) != store.manifest_.passage_count) {
        throw ParseError("manifest passage_count does not match store");
    }
    return store;
}

const Passage& PassageStore::get_passage(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw NotFoundError("unknown passage id '" + id + "'");
    return passages_[it->second];
}

bool PassageStore::contains(const std::string& id) const { return by_id_.count(id) > 0; }

}  // namespace multiqa
