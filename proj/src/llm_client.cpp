#include "multiqa/llm_client.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "multiqa/errors.hpp"
#include "multiqa/jsonl.hpp"
#include "multiqa/sha256.hpp"
#include "multiqa/text.hpp"

namespace multiqa {

using nlohmann::json;

std::string role_name(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::string prompt_content_hash(const ChatRequest& request) {
    Sha256 h;
    for (const auto& m : request.messages) {
        h.update(role_name(m.role));
        h.update(":");
        h.update(m.content);
        h.update("\n");
    }
    return h.hex_digest();
}

std::string embed_content_hash(const std::string& text) { return Sha256::hash(text); }

BackendSpec BackendSpec::from_json(const json& j) {
    BackendSpec spec;
    std::string kind = j.value("kind", "stub");
    if (kind == "http") {
        spec.kind = Kind::http;
    } else if (kind == "stub") {
        spec.kind = Kind::stub;
    } else {
        throw ConfigError("unknown backend kind '" + kind + "'");
    }
    spec.base_url = j.value("base_url", "");
    spec.model_id = j.value("model_id", "");
    spec.api_key_env = j.value("api_key_env", "");
    spec.script_path = j.value("script_path", "");
    spec.timeout_ms = j.value("timeout_ms", 30000);
    spec.max_retries = j.value("max_retries", 3);
    spec.retry_backoff_ms = j.value("retry_backoff_ms", 1000);
    spec.embed_batch_size = j.value("embed_batch_size", 16);
    spec.logprob_fallback = j.value("logprob_fallback", true);
    if (spec.kind == Kind::http && spec.base_url.empty()) {
        throw ConfigError("http backend requires base_url");
    }
    if (spec.kind == Kind::stub && spec.script_path.empty()) {
        throw ConfigError("stub backend requires script_path");
    }
    return spec;
}

json BackendSpec::to_json() const {
    return json{{"kind", kind == Kind::http ? "http" : "stub"},
                {"base_url", base_url},
                {"model_id", model_id},
                {"api_key_env", api_key_env},
                {"script_path", script_path},
                {"timeout_ms", timeout_ms},
                {"max_retries", max_retries},
                {"retry_backoff_ms", retry_backoff_ms},
                {"embed_batch_size", embed_batch_size},
                {"logprob_fallback", logprob_fallback}};
}

std::optional<bool> parse_verdict_text(const std::string& completion,
                                       const std::vector<std::string>& positive_variants,
                                       const std::vector<std::string>& negative_variants) {
    auto in_set = [](const std::string& tok, const std::vector<std::string>& set) {
        return std::find(set.begin(), set.end(), tok) != set.end();
    };
    size_t i = 0;
    while (i < completion.size()) {
        while (i < completion.size() && !std::isalnum(static_cast<unsigned char>(completion[i]))) ++i;
        size_t start = i;
        while (i < completion.size() && std::isalnum(static_cast<unsigned char>(completion[i]))) ++i;
        if (i == start) break;
        std::string tok = completion.substr(start, i - start);
        if (in_set(tok, positive_variants)) return true;
        if (in_set(tok, negative_variants)) return false;
    }
    return std::nullopt;
}

namespace {

/// Sums probability mass over tokens whose whitespace-trimmed text is in the
/// variant set. `masses` maps token text to probability.
double variant_mass(const std::map<std::string, double>& masses,
                    const std::vector<std::string>& variants) {
    double total = 0.0;
    for (const auto& [token, prob] : masses) {
        std::string t = trim(token);
        if (std::find(variants.begin(), variants.end(), t) != variants.end()) total += prob;
    }
    return total;
}

BinaryScore make_score(double plus, double minus, const std::vector<std::string>& pos,
                       const std::vector<std::string>& neg) {
    BinaryScore s;
    s.p_plus = {pos.empty() ? "True" : pos.front(), plus};
    s.p_minus = {neg.empty() ? "False" : neg.front(), minus};
    return s;
}

json messages_to_json(const ChatRequest& request) {
    json msgs = json::array();
    for (const auto& m : request.messages) {
        msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    return msgs;
}

class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendSpec spec) : spec_(std::move(spec)) {
        // Split scheme://host[:port] from any path prefix (e.g. /v1).
        auto scheme_end = spec_.base_url.find("://");
        if (scheme_end == std::string::npos) throw ConfigError("base_url must include a scheme");
        auto path_start = spec_.base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            host_ = spec_.base_url;
        } else {
            host_ = spec_.base_url.substr(0, path_start);
            path_prefix_ = spec_.base_url.substr(path_start);
            while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
        }
    }

    std::string generate(const ChatRequest& request) override {
        json body = chat_body(request);
        json resp = post_json("/chat/completions", body);
        return message_content(resp);
    }

    BinaryScore score_binary(const ChatRequest& request,
                             const std::vector<std::string>& positive_variants,
                             const std::vector<std::string>& negative_variants) override {
        json body = chat_body(request);
        body["logprobs"] = true;
        body["top_logprobs"] = 20;
        json resp = post_json("/chat/completions", body);

        const json& choice = first_choice(resp);
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array() &&
            !choice["logprobs"]["content"].empty()) {
            return score_from_logprobs(choice, positive_variants, negative_variants);
        }
        if (!spec_.logprob_fallback) {
            throw BackendError("backend returned no token logprobs");
        }
        auto verdict = parse_verdict_text(message_content(resp), positive_variants, negative_variants);
        if (!verdict) throw BackendError("unparseable verdict: " + message_content(resp));
        return make_score(*verdict ? 1.0 : 0.0, *verdict ? 0.0 : 1.0, positive_variants,
                          negative_variants);
    }

    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
        json body{{"model", spec_.model_id}, {"input", texts}};
        json resp = post_json("/embeddings", body);
        if (!resp.contains("data") || !resp["data"].is_array()) {
            throw BackendError("embeddings response missing data array");
        }
        std::vector<std::vector<float>> out(texts.size());
        size_t filled = 0;
        for (const auto& item : resp["data"]) {
            size_t idx = item.value("index", filled);
            if (idx >= out.size()) throw BackendError("embedding index out of range");
            out[idx] = item.at("embedding").get<std::vector<float>>();
            ++filled;
        }
        if (filled != texts.size()) throw BackendError("embeddings response is incomplete");
        return out;
    }

private:
    json chat_body(const ChatRequest& request) const {
        return json{{"model", spec_.model_id.empty() ? "default" : spec_.model_id},
                    {"messages", messages_to_json(request)},
                    {"max_tokens", request.max_tokens},
                    {"temperature", request.temperature}};
    }

    static const json& first_choice(const json& resp) {
        if (!resp.contains("choices") || !resp["choices"].is_array() || resp["choices"].empty()) {
            throw BackendError("chat response has no choices");
        }
        return resp["choices"][0];
    }

    static std::string message_content(const json& resp) {
        const json& choice = first_choice(resp);
        if (!choice.contains("message") || !choice["message"].contains("content")) {
            throw BackendError("chat response has no message content");
        }
        return choice["message"]["content"].get<std::string>();
    }

    BinaryScore score_from_logprobs(const json& choice, const std::vector<std::string>& pos,
                                    const std::vector<std::string>& neg) const {
        // The verification prompt mandates a response of the form
        // "Answer: True"; if the backend echoes the prefix as generated
        // tokens, the verdict is the first token after it.
        std::string text = choice["message"]["content"].get<std::string>();
        size_t verdict_offset = 0;
        while (verdict_offset < text.size() &&
               std::isspace(static_cast<unsigned char>(text[verdict_offset]))) {
            ++verdict_offset;
        }
        if (to_lower(text.substr(verdict_offset, 6)) == "answer") {
            verdict_offset += 6;
            while (verdict_offset < text.size() &&
                   (text[verdict_offset] == ':' ||
                    std::isspace(static_cast<unsigned char>(text[verdict_offset])))) {
                ++verdict_offset;
            }
        }

        const json& tokens = choice["logprobs"]["content"];
        size_t offset = 0;
        for (const auto& tok : tokens) {
            std::string tok_text = tok.value("token", "");
            size_t tok_end = offset + tok_text.size();
            if (tok_end > verdict_offset || &tok == &tokens.back()) {
                std::map<std::string, double> masses;
                if (tok.contains("top_logprobs")) {
                    for (const auto& alt : tok["top_logprobs"]) {
                        masses[alt.value("token", "")] = std::exp(alt.value("logprob", -1e30));
                    }
                }
                masses.emplace(tok_text, std::exp(tok.value("logprob", -1e30)));
                return make_score(variant_mass(masses, pos), variant_mass(masses, neg), pos, neg);
            }
            offset = tok_end;
        }
        throw BackendError("no verdict token in logprobs");
    }

    json post_json(const std::string& path, const json& body) {
        std::string full_path = path_prefix_ + path;
        std::string payload = body.dump();
        int attempts = spec_.max_retries + 1;
        int backoff_ms = spec_.retry_backoff_ms;
        std::string last_error;
        int last_status = 0;

        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms *= 2;
            }
            httplib::Client client(host_);
            time_t timeout_sec = spec_.timeout_ms / 1000;
            time_t timeout_usec = (spec_.timeout_ms % 1000) * 1000;
            client.set_connection_timeout(timeout_sec, timeout_usec);
            client.set_read_timeout(timeout_sec, timeout_usec);
            httplib::Headers headers;
            if (!spec_.api_key_env.empty()) {
                if (const char* key = std::getenv(spec_.api_key_env.c_str())) {
                    headers.emplace("Authorization", std::string("Bearer ") + key);
                }
            }
            auto res = client.Post(full_path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            last_status = res->status;
            if (res->status >= 200 && res->status < 300) {
                json parsed = json::parse(res->body, nullptr, false);
                if (parsed.is_discarded()) throw BackendError("invalid JSON from backend");
                return parsed;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "retryable status " + std::to_string(res->status);
                continue;
            }
            throw BackendError("backend returned status " + std::to_string(res->status) + ": " +
                                   res->body,
                               res->status);
        }
        throw BackendError("backend unreachable after " + std::to_string(attempts) +
                               " attempts: " + last_error,
                           last_status);
    }

    BackendSpec spec_;
    std::string host_;
    std::string path_prefix_;
};

}  // namespace

StubBackend::StubBackend(const std::string& script_path)
    : StubBackend(json::parse(read_file(script_path))) {}

StubBackend::StubBackend(json script) : script_(std::move(script)) {
    if (!script_.is_object()) throw ConfigError("stub script must be a JSON object");
}

const json& StubBackend::entry_for(const std::string& hash, const std::string& what) const {
    auto it = script_.find(hash);
    if (it == script_.end()) {
        throw BackendError("unscripted " + what + " (content hash " + hash + ")");
    }
    return *it;
}

std::string StubBackend::generate(const ChatRequest& request) {
    const json& entry = entry_for(prompt_content_hash(request), "prompt");
    if (!entry.contains("text")) throw BackendError("stub entry has no text");
    return entry["text"].get<std::string>();
}

BinaryScore StubBackend::score_binary(const ChatRequest& request,
                                      const std::vector<std::string>& positive_variants,
                                      const std::vector<std::string>& negative_variants) {
    const json& entry = entry_for(prompt_content_hash(request), "prompt");
    if (entry.contains("token_distribution")) {
        std::map<std::string, double> masses;
        for (const auto& [token, prob] : entry["token_distribution"].items()) {
            masses[token] = prob.get<double>();
        }
        return make_score(variant_mass(masses, positive_variants),
                          variant_mass(masses, negative_variants), positive_variants,
                          negative_variants);
    }
    if (!entry.contains("text")) throw BackendError("stub entry has no text");
    auto verdict =
        parse_verdict_text(entry["text"].get<std::string>(), positive_variants, negative_variants);
    if (!verdict) {
        throw BackendError("unparseable verdict: " + entry["text"].get<std::string>());
    }
    return make_score(*verdict ? 1.0 : 0.0, *verdict ? 0.0 : 1.0, positive_variants,
                      negative_variants);
}

std::vector<std::vector<float>> StubBackend::embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        const json& entry = entry_for(embed_content_hash(text), "embedding input");
        if (!entry.contains("embedding")) throw BackendError("stub entry has no embedding");
        out.push_back(entry["embedding"].get<std::vector<float>>());
    }
    return out;
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
    if (spec.kind == BackendSpec::Kind::http) return std::make_unique<HttpBackend>(spec);
    return std::make_unique<StubBackend>(spec.script_path);
}

struct LlmClient::Slot {
    LlmClient* owner;
    explicit Slot(LlmClient* c) : owner(c) {}
    Slot(Slot&& other) noexcept : owner(other.owner) { other.owner = nullptr; }
    Slot(const Slot&) = delete;
    ~Slot() {
        if (owner) {
            std::lock_guard<std::mutex> lock(slot_mutex());
            --owner->in_flight_;
            slot_cv().notify_one();
        }
    }
    static std::mutex& slot_mutex() {
        static std::mutex m;
        return m;
    }
    static std::condition_variable& slot_cv() {
        static std::condition_variable cv;
        return cv;
    }
};

LlmClient::LlmClient(const BackendSpec& spec, int max_concurrency)
    : spec_(spec), backend_(make_backend(spec)), max_concurrency_(std::max(1, max_concurrency)) {}

LlmClient::LlmClient(std::unique_ptr<Backend> backend, int max_concurrency, BackendSpec spec)
    : spec_(std::move(spec)), backend_(std::move(backend)),
      max_concurrency_(std::max(1, max_concurrency)) {}

LlmClient::Slot LlmClient::acquire() {
    std::unique_lock<std::mutex> lock(Slot::slot_mutex());
    Slot::slot_cv().wait(lock, [&] { return in_flight_.load() < max_concurrency_; });
    ++in_flight_;
    return Slot(this);
}

std::string LlmClient::generate(const ChatRequest& request) {
    auto slot = acquire();
    ++calls_;
    return backend_->generate(request);
}

BinaryScore LlmClient::score_binary(const ChatRequest& request,
                                    const std::vector<std::string>& positive_variants,
                                    const std::vector<std::string>& negative_variants) {
    auto slot = acquire();
    ++calls_;
    return backend_->score_binary(request, positive_variants, negative_variants);
}

std::vector<std::vector<float>> LlmClient::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    std::vector<std::vector<float>> all;
    all.reserve(texts.size());
    size_t batch = size_t(std::max(1, spec_.embed_batch_size));
    for (size_t start = 0; start < texts.size(); start += batch) {
        size_t end = std::min(texts.size(), start + batch);
        std::vector<std::string> chunk(texts.begin() + long(start), texts.begin() + long(end));
        auto slot = acquire();
        ++calls_;
        auto vectors = backend_->embed(chunk);
        if (vectors.size() != chunk.size()) throw BackendError("embedding count mismatch");
        for (auto& v : vectors) all.push_back(std::move(v));
    }

    size_t dim = all.empty() ? 0 : all.front().size();
    for (auto& v : all) {
        if (v.size() != dim) throw BackendError("inconsistent embedding dimensions in batch");
        double norm = 0.0;
        for (float x : v) norm += double(x) * double(x);
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (float& x : v) x = float(double(x) / norm);
        }
    }
    return all;
}

}  // namespace multiqa
