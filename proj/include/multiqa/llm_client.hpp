#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace multiqa {

enum class Role { system, user, assistant };

std::string role_name(Role role);

struct Message {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    std::vector<Message> messages;
    int max_tokens = 512;
    double temperature = 0.0;
    std::string model_id;
};

struct ChoiceScore {
    std::string label;
    double probability_mass = 0.0;
};

struct BinaryScore {
    ChoiceScore p_plus;
    ChoiceScore p_minus;
};

struct BackendSpec {
    enum class Kind { http, stub };
    Kind kind = Kind::stub;
    std::string base_url;              // required for http
    std::string model_id;
    std::string api_key_env;           // env var holding the key; never the key itself
    std::string script_path;           // required for stub
    int timeout_ms = 30000;
    int max_retries = 3;
    int retry_backoff_ms = 1000;       // doubles per attempt
    int embed_batch_size = 16;
    bool logprob_fallback = true;      // score via plain generation when logprobs are unavailable

    static BackendSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Canonical content hash of a chat request: SHA-256 over
/// "role:content\n" per message. Stub scripts are keyed by this digest.
std::string prompt_content_hash(const ChatRequest& request);

/// Content hash keying an embedding lookup in a stub script.
std::string embed_content_hash(const std::string& text);

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string generate(const ChatRequest& request) = 0;
    virtual BinaryScore score_binary(const ChatRequest& request,
                                     const std::vector<std::string>& positive_variants,
                                     const std::vector<std::string>& negative_variants) = 0;
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

/// Deterministic scripted backend for tests and offline runs. The script is
/// a JSON object mapping content hashes to
///   {"text": ..., "token_distribution": {token: prob, ...}, "embedding": [...]}.
/// Unscripted prompts raise BackendError so fixture drift fails loudly.
class StubBackend : public Backend {
public:
    explicit StubBackend(const std::string& script_path);
    explicit StubBackend(nlohmann::json script);

    std::string generate(const ChatRequest& request) override;
    BinaryScore score_binary(const ChatRequest& request,
                             const std::vector<std::string>& positive_variants,
                             const std::vector<std::string>& negative_variants) override;
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

private:
    const nlohmann::json& entry_for(const std::string& hash, const std::string& what) const;
    nlohmann::json script_;
};

/// Thread-safe facade over one backend: bounds in-flight requests with a
/// semaphore, counts calls for run manifests, and owns unit-normalization
/// of embeddings.
class LlmClient {
public:
    explicit LlmClient(const BackendSpec& spec, int max_concurrency = 4);
    LlmClient(std::unique_ptr<Backend> backend, int max_concurrency = 4, BackendSpec spec = {});

    std::string generate(const ChatRequest& request);

    /// Probability mass of each variant set at the verdict position. Masses
    /// live in [0,1] and need not sum to 1.
    BinaryScore score_binary(const ChatRequest& request,
                             const std::vector<std::string>& positive_variants,
                             const std::vector<std::string>& negative_variants);

    /// One unit-normalized vector per input, order preserved. Requests are
    /// split into batches of the spec's embed_batch_size.
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts);

    long call_count() const { return calls_.load(); }
    void reset_call_count() { calls_ = 0; }

    const BackendSpec& spec() const { return spec_; }

private:
    struct Slot;
    Slot acquire();

    BackendSpec spec_;
    std::unique_ptr<Backend> backend_;
    std::atomic<long> calls_{0};
    std::atomic<int> in_flight_{0};
    int max_concurrency_;
};

/// Parses a free-text verdict: strips an optional leading "Answer:" prefix
/// and returns the first whitespace/punctuation-delimited token that equals
/// a member of either variant set. Used by the no-logprob fallback path.
std::optional<bool> parse_verdict_text(const std::string& completion,
                                       const std::vector<std::string>& positive_variants,
                                       const std::vector<std::string>& negative_variants);

}  // namespace multiqa
