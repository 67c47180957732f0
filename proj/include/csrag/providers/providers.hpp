#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace csrag::providers {

using Vector = std::vector<double>;

struct ChatRequest {
    std::string model_id;
    std::string prompt;
    int max_new_tokens = 150;
    double temperature = 0.5;
};

/// Category name -> score in [0, 1].
using ModerationScores = std::map<std::string, double>;

/// Categories reported by the stub moderator (and requested from remote ones).
inline const std::vector<std::string> kModerationCategories = {"harassment", "hate", "self-harm", "sexual",
                                                              "violence"};

class ChatProvider {
  public:
    virtual ~ChatProvider() = default;
    /// Throws PreconditionError on an empty prompt/model or max_new_tokens < 1,
    /// ProviderError on terminal failure.
    virtual std::string complete(const ChatRequest& req) = 0;
};

class EmbedProvider {
  public:
    virtual ~EmbedProvider() = default;
    /// One vector per text, input order. Throws PreconditionError on an empty list.
    virtual std::vector<Vector> embed(const std::string& model_id, const std::vector<std::string>& texts) = 0;
};

class ModerationProvider {
  public:
    virtual ~ModerationProvider() = default;
    /// Throws PreconditionError on empty text.
    virtual ModerationScores moderate(const std::string& text) = 0;
};

struct ProviderSet {
    std::shared_ptr<ChatProvider> chat;
    std::shared_ptr<EmbedProvider> embed;
    std::shared_ptr<ModerationProvider> moderation;
};

// ---------------------------------------------------------------- stubs

inline constexpr std::size_t kStubEmbeddingDim = 64;

/// Offline providers whose outputs are pure functions of (seed, inputs).
ProviderSet make_stub_providers(std::uint64_t seed);

/// Stub moderator with an explicit trigger table: token -> (category, score).
/// Neutral text scores 0.0 in every category.
std::shared_ptr<ModerationProvider> make_stub_moderator(
    std::map<std::string, std::pair<std::string, double>> triggers);

/// The default trigger table used by make_stub_providers.
std::map<std::string, std::pair<std::string, double>> default_stub_triggers();

// --------------------------------------------------------------- remote

struct ProviderConfig {
    std::string base_url;
    std::string api_key_env;  ///< env var holding the key; empty sends no auth header
    std::chrono::milliseconds timeout{60000};
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double requests_per_minute = 60.0;
    std::size_t max_in_flight = 4;
    std::size_t embed_batch_size = 64;
    std::filesystem::path replay_log;  ///< record here when non-empty (see TransportMode)
};

/// Throws ValidationError for out-of-range values.
void validate(const ProviderConfig& cfg);

struct TransportResult {
    int status = 0;  ///< 0: no HTTP response
    std::string body;
    std::string error;
    bool timed_out = false;
};

/// POSTs a JSON body to `path` under the configured base URL.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual TransportResult post(const std::string& path, const std::string& body,
                                 const std::map<std::string, std::string>& headers) = 0;
};

std::unique_ptr<Transport> make_http_transport(const ProviderConfig& cfg);

/// Forwards to `inner` and appends every exchange to a JSONL log. Headers are
/// never written, so credentials stay out of the log.
std::unique_ptr<Transport> make_recording_transport(std::unique_ptr<Transport> inner,
                                                    const std::filesystem::path& log);

/// Serves responses from a log written by the recording transport, matching
/// on (path, body); repeated identical requests replay in recorded order.
/// An unmatched request throws ProviderError.
std::unique_ptr<Transport> make_replay_transport(const std::filesystem::path& log);

/// Structured client events: "request", "retry", "backoff", "success", "failure".
struct ProviderEvent {
    std::string type;
    std::string request_id;
    std::string endpoint;
    int attempt = 0;
    int status = 0;
    long long backoff_ms = 0;
    std::string detail;
};

using EventSink = std::function<void(const ProviderEvent&)>;
nlohmann::json to_json(const ProviderEvent& e);

/// Sleep hook so tests can observe backoff without waiting.
using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// OpenAI-compatible client for `/chat/completions`, `/embeddings` and
/// `/moderations`. Safe for concurrent use; one rate limiter and in-flight
/// cap are shared by all three endpoints.
class OpenAiClient final : public ChatProvider, public EmbedProvider, public ModerationProvider {
  public:
    OpenAiClient(ProviderConfig cfg, std::unique_ptr<Transport> transport, EventSink sink = {},
                 Sleeper sleep = {});
    ~OpenAiClient() override;

    std::string complete(const ChatRequest& req) override;
    std::vector<Vector> embed(const std::string& model_id, const std::vector<std::string>& texts) override;
    ModerationScores moderate(const std::string& text) override;

    /// Model used for moderation requests.
    void set_moderation_model(std::string model) { moderation_model_ = std::move(model); }

  private:
    struct Shared;
    nlohmann::json call(const std::string& endpoint, const nlohmann::json& body,
                        const std::function<void(const nlohmann::json&)>& check);

    ProviderConfig cfg_;
    std::unique_ptr<Shared> shared_;
    std::string moderation_model_ = "omni-moderation-latest";
};

/// Builds a client backed by HTTP, optionally recording to cfg.replay_log.
std::shared_ptr<OpenAiClient> make_openai_client(const ProviderConfig& cfg, EventSink sink = {});

/// Builds a client that replays cfg.replay_log without network access.
std::shared_ptr<OpenAiClient> make_replay_client(const ProviderConfig& cfg, EventSink sink = {});

}  // namespace csrag::providers
