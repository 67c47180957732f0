#include <httplib.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <random>
#include <semaphore>
#include <thread>

#include "csrag/common/error.hpp"
#include "csrag/common/hash.hpp"
#include "csrag/common/http.hpp"
#include "csrag/common/io.hpp"
#include "csrag/providers/providers.hpp"

namespace csrag::providers {
namespace fs = std::filesystem;
using nlohmann::json;
using std::chrono::milliseconds;

void validate(const ProviderConfig& cfg) {
    if (cfg.base_url.empty()) throw ValidationError("provider: `base_url` is required");
    http::split_url(cfg.base_url);
    if (cfg.timeout.count() <= 0) throw ValidationError("provider: timeout must be > 0");
    if (cfg.max_retries < 0) throw ValidationError("provider: max_retries must be >= 0");
    if (cfg.initial_backoff.count() < 0) throw ValidationError("provider: backoff must be >= 0");
    if (!(cfg.requests_per_minute > 0)) throw ValidationError("provider: requests_per_minute must be > 0");
    if (cfg.max_in_flight < 1) throw ValidationError("provider: max_in_flight must be >= 1");
    if (cfg.embed_batch_size < 1) throw ValidationError("provider: embed_batch_size must be >= 1");
}

json to_json(const ProviderEvent& e) {
    json j = {{"event", e.type}, {"request_id", e.request_id}, {"endpoint", e.endpoint}, {"attempt", e.attempt}};
    if (e.status) j["status"] = e.status;
    if (e.backoff_ms) j["backoff_ms"] = e.backoff_ms;
    if (!e.detail.empty()) j["detail"] = e.detail;
    return j;
}

namespace {

class HttpTransport final : public Transport {
  public:
    explicit HttpTransport(const ProviderConfig& cfg) : timeout_(cfg.timeout) {
        const auto parts = http::split_url(cfg.base_url);
        origin_ = parts.origin;
        prefix_ = parts.path == "/" ? "" : parts.path;
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    TransportResult post(const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& headers) override {
        httplib::Client client(origin_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        const auto start = std::chrono::steady_clock::now();
        auto res = client.Post(prefix_ + path, h, body, "application/json");
        if (!res) {
            const auto elapsed = std::chrono::steady_clock::now() - start;
            const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                                   (res.error() == httplib::Error::Read && elapsed >= timeout_ * 9 / 10);
            return {0, {}, httplib::to_string(res.error()), timed_out};
        }
        return {res->status, res->body, {}, false};
    }

  private:
    std::string origin_;
    std::string prefix_;
    milliseconds timeout_;
};

class RecordingTransport final : public Transport {
  public:
    RecordingTransport(std::unique_ptr<Transport> inner, fs::path log) : inner_(std::move(inner)), log_(std::move(log)) {}

    TransportResult post(const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& headers) override {
        auto res = inner_->post(path, body, headers);
        json line = {{"path", path}, {"request", body}, {"status", res.status}, {"response", res.body}};
        if (!res.error.empty()) line["error"] = res.error;
        if (res.timed_out) line["timed_out"] = true;
        std::lock_guard lock(mu_);
        io::append_file(log_, io::to_jsonl_line(line));
        return res;
    }

  private:
    std::unique_ptr<Transport> inner_;
    fs::path log_;
    std::mutex mu_;
};

class ReplayTransport final : public Transport {
  public:
    explicit ReplayTransport(const fs::path& log) {
        for (const auto& line : io::read_jsonl(log)) {
            TransportResult r;
            r.status = line.value("status", 0);
            r.body = line.value("response", "");
            r.error = line.value("error", "");
            r.timed_out = line.value("timed_out", false);
            entries_[key(line.at("path").get<std::string>(), line.at("request").get<std::string>())].push_back(r);
        }
    }

    TransportResult post(const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>&) override {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key(path, body));
        if (it == entries_.end() || it->second.empty())
            throw ProviderError(ProviderErrorKind::Protocol, "", "replay log has no response for " + path);
        auto r = it->second.front();
        if (it->second.size() > 1) it->second.pop_front();  // the last response keeps serving repeats
        return r;
    }

  private:
    static std::string key(const std::string& path, const std::string& body) { return path + "\n" + body; }
    std::map<std::string, std::deque<TransportResult>> entries_;
    std::mutex mu_;
};

std::string make_request_id() {
    static const std::uint64_t session = std::random_device{}() ^ (std::uint64_t(std::random_device{}()) << 32);
    static std::atomic<std::uint64_t> counter{0};
    return "csrag-" + hex64(session).substr(0, 8) + "-" + std::to_string(++counter);
}

}  // namespace

std::unique_ptr<Transport> make_http_transport(const ProviderConfig& cfg) {
    return std::make_unique<HttpTransport>(cfg);
}

std::unique_ptr<Transport> make_recording_transport(std::unique_ptr<Transport> inner, const fs::path& log) {
    return std::make_unique<RecordingTransport>(std::move(inner), log);
}

std::unique_ptr<Transport> make_replay_transport(const fs::path& log) {
    return std::make_unique<ReplayTransport>(log);
}

struct OpenAiClient::Shared {
    std::unique_ptr<Transport> transport;
    EventSink sink;
    Sleeper sleep;
    std::counting_semaphore<1024> in_flight;
    std::mutex rate_mu;
    std::chrono::steady_clock::time_point next_slot{};
    std::chrono::nanoseconds interval;

    Shared(std::unique_ptr<Transport> t, EventSink s, Sleeper sl, std::size_t cap, double rpm)
        : transport(std::move(t)),
          sink(std::move(s)),
          sleep(std::move(sl)),
          in_flight(static_cast<std::ptrdiff_t>(std::min<std::size_t>(cap, 1024))),
          interval(static_cast<long long>(6e10 / rpm)) {}

    void emit(ProviderEvent e) const {
        if (sink) sink(e);
    }

    /// Reserves the next request slot; returns how long the caller must wait.
    milliseconds reserve_slot() {
        std::lock_guard lock(rate_mu);
        const auto now = std::chrono::steady_clock::now();
        const auto slot = std::max(next_slot, now);
        next_slot = slot + interval;
        return std::chrono::duration_cast<milliseconds>(slot - now);  // sub-millisecond waits are skipped
    }
};

OpenAiClient::OpenAiClient(ProviderConfig cfg, std::unique_ptr<Transport> transport, EventSink sink, Sleeper sleep)
    : cfg_(std::move(cfg)) {
    validate(cfg_);
    if (!transport) throw PreconditionError("OpenAiClient: null transport");
    if (!sleep) sleep = [](milliseconds d) { std::this_thread::sleep_for(d); };
    shared_ = std::make_unique<Shared>(std::move(transport), std::move(sink), std::move(sleep), cfg_.max_in_flight,
                                       cfg_.requests_per_minute);
}

OpenAiClient::~OpenAiClient() = default;

json OpenAiClient::call(const std::string& endpoint, const json& body, const std::function<void(const json&)>& check) {
    const auto request_id = make_request_id();
    std::map<std::string, std::string> headers = {{"X-Request-Id", request_id}};
    if (!cfg_.api_key_env.empty()) {
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        if (!key || !*key)
            throw ProviderError(ProviderErrorKind::Auth, request_id,
                                "API key environment variable `" + cfg_.api_key_env + "` is not set");
        headers["Authorization"] = std::string("Bearer ") + key;
    }
    const auto payload = body.dump();
    auto& s = *shared_;

    ProviderErrorKind last_kind = ProviderErrorKind::Http;
    std::string last_reason;
    const int attempts = cfg_.max_retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (const auto wait = s.reserve_slot(); wait.count() > 0) {
            s.emit({"throttle", request_id, endpoint, attempt, 0, wait.count(), {}});
            s.sleep(wait);
        }
        s.emit({"request", request_id, endpoint, attempt, 0, 0, {}});
        TransportResult res;
        {
            s.in_flight.acquire();
            try {
                res = s.transport->post(endpoint, payload, headers);
            } catch (...) {
                s.in_flight.release();
                throw;
            }
            s.in_flight.release();
        }

        if (res.status >= 200 && res.status < 300) {
            try {
                auto parsed = json::parse(res.body);
                check(parsed);
                s.emit({"success", request_id, endpoint, attempt, res.status, 0, {}});
                return parsed;
            } catch (const std::exception& e) {
                last_kind = ProviderErrorKind::Protocol;
                last_reason = std::string("malformed response: ") + e.what();
            }
        } else if (res.status == 401 || res.status == 403) {
            s.emit({"failure", request_id, endpoint, attempt, res.status, 0, "authentication rejected"});
            throw ProviderError(ProviderErrorKind::Auth, request_id,
                                endpoint + ": authentication rejected (HTTP " + std::to_string(res.status) +
                                    ", request " + request_id + ")");
        } else if (res.status == 0) {
            last_kind = res.timed_out ? ProviderErrorKind::Timeout : ProviderErrorKind::Http;
            last_reason = res.timed_out ? "timed out" : "transport error: " + res.error;
        } else if (res.status == 429 || res.status >= 500) {
            last_kind = ProviderErrorKind::Http;
            last_reason = "HTTP " + std::to_string(res.status);
        } else {
            s.emit({"failure", request_id, endpoint, attempt, res.status, 0, res.body.substr(0, 200)});
            throw ProviderError(ProviderErrorKind::Http, request_id,
                                endpoint + ": HTTP " + std::to_string(res.status) + " (request " + request_id + ")");
        }

        if (attempt < attempts) {
            const auto backoff = cfg_.initial_backoff * (1LL << std::min(attempt - 1, 20));
            s.emit({"retry", request_id, endpoint, attempt, res.status, 0, last_reason});
            s.emit({"backoff", request_id, endpoint, attempt, res.status, backoff.count(), {}});
            s.sleep(backoff);
        }
    }
    s.emit({"failure", request_id, endpoint, attempts, 0, 0, last_reason});
    throw ProviderError(last_kind, request_id,
                        endpoint + ": " + last_reason + " after " + std::to_string(attempts) + " attempt(s) (request " +
                            request_id + ")");
}

std::string OpenAiClient::complete(const ChatRequest& req) {
    if (req.prompt.empty()) throw PreconditionError("chat_complete: empty prompt");
    if (req.model_id.empty()) throw PreconditionError("chat_complete: empty model id");
    if (req.max_new_tokens < 1) throw PreconditionError("chat_complete: max_new_tokens must be >= 1");
    if (!(req.temperature >= 0)) throw PreconditionError("chat_complete: temperature must be >= 0");
    const json body = {{"model", req.model_id},
                       {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
                       {"max_tokens", req.max_new_tokens},
                       {"temperature", req.temperature}};
    const auto res = call("/chat/completions", body, [](const json& j) {
        const auto& choice = j.at("choices").at(0);
        if (choice.contains("message")) {
            if (!choice.at("message").at("content").is_string()) throw std::runtime_error("content is not a string");
        } else if (!choice.at("text").is_string()) {
            throw std::runtime_error("choice has no text");
        }
    });
    const auto& choice = res.at("choices").at(0);
    return choice.contains("message") ? choice.at("message").at("content").get<std::string>()
                                      : choice.at("text").get<std::string>();
}

std::vector<Vector> OpenAiClient::embed(const std::string& model_id, const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed: empty text list");
    if (model_id.empty()) throw PreconditionError("embed: empty model id");
    std::vector<Vector> out;
    out.reserve(texts.size());
    std::size_t dim = 0;
    for (std::size_t start = 0; start < texts.size(); start += cfg_.embed_batch_size) {
        const auto end = std::min(texts.size(), start + cfg_.embed_batch_size);
        const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                             texts.begin() + static_cast<std::ptrdiff_t>(end));
        const json body = {{"model", model_id}, {"input", batch}};
        const auto n = batch.size();
        // A response missing any vector fails the check, so the whole batch is retried.
        const auto res = call("/embeddings", body, [n](const json& j) {
            const auto& data = j.at("data");
            if (!data.is_array() || data.size() != n) throw std::runtime_error("embedding count mismatch");
            std::vector<bool> seen(n, false);
            std::size_t d = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto idx = data[i].contains("index") ? data[i].at("index").get<std::size_t>() : i;
                if (idx >= n || seen[idx]) throw std::runtime_error("bad embedding index");
                seen[idx] = true;
                const auto& e = data[i].at("embedding");
                if (!e.is_array() || e.empty()) throw std::runtime_error("empty embedding");
                if (d && e.size() != d) throw std::runtime_error("embedding dimension mismatch");
                d = e.size();
            }
        });
        std::vector<Vector> ordered(n);
        const auto& data = res.at("data");
        for (std::size_t i = 0; i < n; ++i) {
            const auto idx = data[i].contains("index") ? data[i].at("index").get<std::size_t>() : i;
            ordered[idx] = data[i].at("embedding").get<Vector>();
        }
        if (dim == 0) dim = ordered.front().size();
        if (ordered.front().size() != dim)
            throw ProviderError(ProviderErrorKind::Protocol, "", "embed: dimension changed between batches");
        for (auto& v : ordered) out.push_back(std::move(v));
    }
    return out;
}

ModerationScores OpenAiClient::moderate(const std::string& text) {
    if (text.empty()) throw PreconditionError("moderate: empty text");
    const json body = {{"model", moderation_model_}, {"input", text}};
    const auto res = call("/moderations", body, [](const json& j) {
        const auto& scores = j.at("results").at(0).at("category_scores");
        if (!scores.is_object() || scores.empty()) throw std::runtime_error("no category scores");
        for (const auto& [k, v] : scores.items()) {
            const double x = v.get<double>();
            if (!(x >= 0.0 && x <= 1.0)) throw std::runtime_error("score for `" + k + "` outside [0, 1]");
        }
    });
    ModerationScores out;
    for (const auto& [k, v] : res.at("results").at(0).at("category_scores").items()) out[k] = v.get<double>();
    return out;
}

std::shared_ptr<OpenAiClient> make_openai_client(const ProviderConfig& cfg, EventSink sink) {
    validate(cfg);
    auto transport = make_http_transport(cfg);
    if (!cfg.replay_log.empty()) transport = make_recording_transport(std::move(transport), cfg.replay_log);
    return std::make_shared<OpenAiClient>(cfg, std::move(transport), std::move(sink));
}

std::shared_ptr<OpenAiClient> make_replay_client(const ProviderConfig& cfg, EventSink sink) {
    if (cfg.replay_log.empty()) throw ValidationError("provider: replay requires `replay_log`");
    auto c = cfg;
    c.api_key_env.clear();  // replay never needs credentials
    if (c.base_url.empty()) c.base_url = "http://replay.invalid";
    return std::make_shared<OpenAiClient>(c, make_replay_transport(cfg.replay_log), std::move(sink),
                                          [](milliseconds) {});
}

}  // namespace csrag::providers
