#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "csrag/common/error.hpp"
#include "csrag/common/hash.hpp"
#include "csrag/common/text.hpp"
#include "csrag/index/index.hpp"
#include "csrag/providers/providers.hpp"

namespace csrag::providers {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

/// Text between `open` and the next occurrence of `close` (or the end).
std::string between(const std::string& s, std::string_view open, std::string_view close) {
    const auto a = s.find(open);
    if (a == std::string::npos) return {};
    const auto start = a + open.size();
    const auto b = close.empty() ? std::string::npos : s.find(close, start);
    return s.substr(start, b == std::string::npos ? std::string::npos : b - start);
}

const std::vector<std::string_view> kStop = {"the", "and", "that", "this", "with", "from", "they", "them", "their",
                                             "are", "for", "not", "all", "have", "has", "was", "were", "will",
                                             "into", "about", "should", "would", "there", "these", "those", "been"};

std::vector<std::string> content_words(const std::string& s, std::size_t limit) {
    std::vector<std::string> out;
    for (auto& t : text::tokenize(s)) {
        if (t.size() < 3 || std::find(kStop.begin(), kStop.end(), t) != kStop.end()) continue;
        if (std::find(out.begin(), out.end(), t) != out.end()) continue;
        out.push_back(std::move(t));
        if (out.size() == limit) break;
    }
    return out;
}

// Tokens carry no sentence punctuation, so each template below yields exactly
// two sentences once joined.
std::string phrase(const std::vector<std::string>& words, std::string_view fallback) {
    if (words.empty()) return std::string(fallback);
    return text::join(words, " ");
}

const std::vector<std::string_view> kOpeners = {
    "Blaming a whole group for", "It is unfair to single people out over", "Generalising about people ignores",
    "Hostility does not help anyone understand", "People deserve respect regardless of claims about"};
const std::vector<std::string_view> kClosers = {
    "Let us talk about facts and treat each other with dignity", "Everyone benefits when we listen before judging",
    "Respect and evidence make for a better conversation", "Diversity makes our communities stronger"};
const std::vector<std::string_view> kSummaryLead = {"This paragraph discusses", "The text addresses",
                                                    "The passage describes"};

const std::set<std::string> kFactMarkers = {"evidence", "data", "studies", "study", "research", "statistics",
                                            "percent", "report", "reports", "shows", "show"};

class StubChat final : public ChatProvider {
  public:
    explicit StubChat(std::uint64_t seed) : seed_(seed) {}

    std::string complete(const ChatRequest& req) override {
        if (req.prompt.empty()) throw PreconditionError("chat_complete: empty prompt");
        if (req.model_id.empty()) throw PreconditionError("chat_complete: empty model id");
        if (req.max_new_tokens < 1) throw PreconditionError("chat_complete: max_new_tokens must be >= 1");
        const std::uint64_t h = mix(mix(seed_, fnv1a64(req.model_id)), fnv1a64(req.prompt));
        const auto& p = req.prompt;

        if (p.find("Counter-speech A:") != std::string::npos && p.find("Counter-speech B:") != std::string::npos) {
            const auto a = text::trim(between(p, "Counter-speech A:", "\nCounter-speech B:"));
            const auto b = text::trim(between(p, "Counter-speech B:", "\n"));
            return "Both responses were assessed against the criteria.\nSCORES: " + std::to_string(judge_score(a)) +
                   " " + std::to_string(judge_score(b));
        }
        if (p.rfind("Summarize this paragraph ", 0) == 0) {
            const auto para = between(p, "Summarize this paragraph ", " into exactly 2 sentences");
            const auto words = content_words(para, 12);
            const std::size_t cut = std::min<std::size_t>(words.size(), 6);
            const std::vector<std::string> first(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(cut));
            const std::vector<std::string> rest(words.begin() + static_cast<std::ptrdiff_t>(cut), words.end());
            return std::string(kSummaryLead[h % kSummaryLead.size()]) + " " + phrase(first, "a general topic") +
                   ". It also notes " + phrase(rest, "related background") + ".";
        }
        const auto message = between(p, "Hateful message: ", "\n");
        const auto words = content_words(message.empty() ? p : message, 4);
        std::string out =
            std::string(kOpeners[h % kOpeners.size()]) + " " + phrase(words, "who they are") + " is wrong. ";
        const auto context = between(p, "(1) ", " (2)");
        if (!context.empty()) {
            out += "Evidence shows " + phrase(content_words(context, 8), "otherwise") + ".";
        } else {
            out += std::string(kClosers[(h >> 8) % kClosers.size()]) + ".";
        }
        return out;
    }

  private:
    // Depends on the text alone, so a pair and its swap receive mirrored
    // scores. Longer text scores higher, and factual markers add a point.
    static int judge_score(const std::string& t) {
        const auto toks = text::tokenize(t);
        const std::set<std::string> distinct(toks.begin(), toks.end());
        bool factual = false;
        for (const auto& w : distinct) {
            factual = factual || kFactMarkers.contains(w) ||
                      std::any_of(w.begin(), w.end(), [](char c) { return c >= '0' && c <= '9'; });
        }
        return std::min<int>(9, 1 + static_cast<int>(distinct.size() / 3)) + (factual ? 1 : 0);
    }
    std::uint64_t seed_;
};

class StubEmbed final : public EmbedProvider {
  public:
    explicit StubEmbed(std::uint64_t seed) : seed_(seed) {}

    std::vector<Vector> embed(const std::string& model_id, const std::vector<std::string>& texts) override {
        if (texts.empty()) throw PreconditionError("embed: empty text list");
        const std::uint64_t model_key = mix(seed_, fnv1a64(model_id));
        std::vector<Vector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            Vector v(kStubEmbeddingDim, 0.0);
            auto toks = text::tokenize(t);
            if (toks.empty()) toks.emplace_back("\x01empty");
            for (const auto& tok : toks) {
                std::uint64_t s = mix(model_key, fnv1a64(tok));
                for (auto& x : v) {
                    // Uniform in [-1, 1) from the top 53 bits.
                    x += static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-52 - 1.0;
                }
            }
            index::normalize_l2(v);
            out.push_back(std::move(v));
        }
        return out;
    }

  private:
    std::uint64_t seed_;
};

class StubModeration final : public ModerationProvider {
  public:
    explicit StubModeration(std::map<std::string, std::pair<std::string, double>> triggers) {
        for (auto& [tok, entry] : triggers) {
            if (!(entry.second >= 0.0 && entry.second <= 1.0))
                throw PreconditionError("stub moderator: trigger score outside [0, 1]");
            const auto norm = text::tokenize(tok);
            if (norm.size() != 1) throw PreconditionError("stub moderator: trigger must be a single token");
            triggers_[norm[0]] = entry;
        }
    }

    ModerationScores moderate(const std::string& t) override {
        if (t.empty()) throw PreconditionError("moderate: empty text");
        ModerationScores scores;
        for (const auto& c : kModerationCategories) scores[c] = 0.0;
        for (const auto& tok : text::tokenize(t)) {
            const auto it = triggers_.find(tok);
            if (it == triggers_.end()) continue;
            auto& s = scores[it->second.first];
            s = std::max(s, it->second.second);
        }
        return scores;
    }

  private:
    std::map<std::string, std::pair<std::string, double>> triggers_;
};

}  // namespace

std::map<std::string, std::pair<std::string, double>> default_stub_triggers() {
    return {{"vermin", {"hate", 0.9}},      {"subhuman", {"hate", 0.9}},   {"invaders", {"hate", 0.6}},
            {"kill", {"violence", 0.8}},    {"attack", {"violence", 0.4}}, {"idiots", {"harassment", 0.5}},
            {"disgusting", {"harassment", 0.4}}};
}

std::shared_ptr<ModerationProvider> make_stub_moderator(std::map<std::string, std::pair<std::string, double>> triggers) {
    return std::make_shared<StubModeration>(std::move(triggers));
}

ProviderSet make_stub_providers(std::uint64_t seed) {
    return {std::make_shared<StubChat>(seed), std::make_shared<StubEmbed>(seed),
            make_stub_moderator(default_stub_triggers())};
}

}  // namespace csrag::providers
