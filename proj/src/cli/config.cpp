#include <cstdlib>
#include <set>

#include "csrag/cli/cli.hpp"
#include "csrag/common/error.hpp"
#include "csrag/common/io.hpp"

namespace csrag::cli {

using nlohmann::json;

std::optional<std::string> getenv_lookup(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

std::string interpolate_env(std::string_view s, const EnvLookup& env) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '$' || i + 1 == s.size()) {
            out += s[i];
            continue;
        }
        if (s[i + 1] == '$') {
            out += '$';
            ++i;
            continue;
        }
        if (s[i + 1] != '{') {
            out += s[i];
            continue;
        }
        const auto close = s.find('}', i + 2);
        if (close == std::string_view::npos)
            throw ValidationError("unterminated ${ in config value \"" + std::string(s) + "\"");
        const std::string name(s.substr(i + 2, close - i - 2));
        if (name.empty()) throw ValidationError("empty ${} in config value");
        const auto value = env(name);
        if (!value) throw ValidationError("environment variable " + name + " referenced by config is not set");
        out += *value;
        i = close;
    }
    return out;
}

namespace {

json interpolate_tree(const json& j, const EnvLookup& env) {
    if (j.is_string()) return interpolate_env(j.get<std::string>(), env);
    if (j.is_array()) {
        json out = json::array();
        for (const auto& v : j) out.push_back(interpolate_tree(v, env));
        return out;
    }
    if (j.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : j.items()) out[k] = interpolate_tree(v, env);
        return out;
    }
    return j;
}

/// Reads known keys of one config section and rejects the rest.
class Section {
  public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError("config: " + where() + " must be an object");
    }

    template <class T>
    void get(const std::string& key, T& field) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        try {
            if constexpr (std::is_same_v<T, std::vector<std::string>>) {
                if (!it->is_array()) throw ValidationError("");
                std::vector<std::string> v;
                for (const auto& e : *it) v.push_back(e.get<std::string>());
                field = std::move(v);
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw ValidationError("");
                field = it->get<std::string>();
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ValidationError("");
                field = it->get<bool>();
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw ValidationError("");
                field = it->get<T>();
            } else {
                if (!it->is_number_integer()) throw ValidationError("");
                if constexpr (std::is_unsigned_v<T>)
                    if (it->get<long long>() < 0) throw ValidationError("");
                field = it->get<T>();
            }
        } catch (const std::exception&) {
            throw ValidationError("config: " + where(key) + " has the wrong type");
        }
    }

    Section sub(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        const auto it = j_.find(key);
        return {it == j_.end() || it->is_null() ? empty : *it, where(key)};
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ValidationError("config: unknown key " + where(k));
    }

  private:
    [[nodiscard]] std::string where(const std::string& key = {}) const {
        if (key.empty()) return path_.empty() ? "<root>" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

Config config_from_json(const json& raw, const EnvLookup& env, Config c) {
    const json j = interpolate_tree(raw, env);
    Section root(j, "");
    int version = 0;
    root.get("config_version", version);
    if (version != kConfigVersion)
        throw ValidationError("config: config_version must be " + std::to_string(kConfigVersion) + ", got " +
                              std::to_string(version));
    root.get("seed", c.seed);
    root.get("work_dir", c.work_dir);

    auto corpus = root.sub("corpus");
    corpus.get("input", c.corpus.input);
    corpus.get("crawl_spec", c.corpus.crawl_spec);
    corpus.get("year_min", c.corpus.year_min);
    corpus.get("year_max", c.corpus.year_max);
    corpus.get("min_tokens", c.corpus.min_tokens);
    corpus.get("max_tokens", c.corpus.max_tokens);
    corpus.finish();

    auto idx = root.sub("index");
    idx.get("retrievers", c.index.retrievers);
    idx.get("k1", c.index.k1);
    idx.get("b", c.index.b);
    idx.get("dense_a_model", c.index.dense_a_model);
    idx.get("dense_b_model", c.index.dense_b_model);
    idx.finish();

    auto p = root.sub("provider");
    p.get("stub", c.provider.stub);
    p.get("mode", c.provider.mode);
    p.get("base_url", c.provider.base_url);
    p.get("api_key_env", c.provider.api_key_env);
    p.get("timeout_ms", c.provider.timeout_ms);
    p.get("max_retries", c.provider.max_retries);
    p.get("initial_backoff_ms", c.provider.initial_backoff_ms);
    p.get("requests_per_minute", c.provider.requests_per_minute);
    p.get("max_in_flight", c.provider.max_in_flight);
    p.get("embed_batch_size", c.provider.embed_batch_size);
    p.get("replay_log", c.provider.replay_log);
    p.get("moderation_model", c.provider.moderation_model);
    p.finish();

    auto run = root.sub("run");
    run.get("hs", c.run.hs);
    run.get("retrievers", c.run.retrievers);
    run.get("models", c.run.models);
    run.get("k", c.run.k);
    run.get("hs_ids", c.run.hs_ids);
    run.get("max_new_tokens", c.run.max_new_tokens);
    run.get("temperature", c.run.temperature);
    run.get("on_summary_failure", c.run.on_summary_failure);
    run.get("max_parallel", c.run.max_parallel);
    run.get("keep_going", c.run.keep_going);
    run.finish();

    auto m = root.sub("metrics");
    m.get("bertscore_model", c.metrics.bertscore_model);
    m.get("bleu_epsilon", c.metrics.bleu_epsilon);
    m.get("rouge_beta", c.metrics.rouge_beta);
    m.get("meteor_alpha", c.metrics.meteor_alpha);
    m.get("meteor_beta", c.metrics.meteor_beta);
    m.get("meteor_gamma", c.metrics.meteor_gamma);
    m.get("safety", c.metrics.safety);
    m.finish();

    auto jd = root.sub("judge");
    jd.get("system_a", c.judge.system_a);
    jd.get("system_b", c.judge.system_b);
    jd.get("run_b", c.judge.run_b);
    jd.get("model", c.judge.model);
    jd.get("template", c.judge.template_id);
    jd.get("swap", c.judge.swap);
    jd.get("name", c.judge.name);
    jd.get("max_new_tokens", c.judge.max_new_tokens);
    jd.get("temperature", c.judge.temperature);
    jd.get("max_parallel", c.judge.max_parallel);
    jd.get("keep_going", c.judge.keep_going);
    jd.finish();

    auto st = root.sub("stats");
    st.get("annotations", c.stats.annotations);
    st.finish();

    root.finish();
    return c;
}

Config load_config(const std::filesystem::path& path, const EnvLookup& env) {
    if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, env);
}

json to_json(const Config& c) {
    return {
        {"config_version", c.config_version},
        {"seed", c.seed},
        {"work_dir", c.work_dir},
        {"corpus",
         {{"input", c.corpus.input},
          {"crawl_spec", c.corpus.crawl_spec},
          {"year_min", c.corpus.year_min},
          {"year_max", c.corpus.year_max},
          {"min_tokens", c.corpus.min_tokens},
          {"max_tokens", c.corpus.max_tokens}}},
        {"index",
         {{"retrievers", c.index.retrievers},
          {"k1", c.index.k1},
          {"b", c.index.b},
          {"dense_a_model", c.index.dense_a_model},
          {"dense_b_model", c.index.dense_b_model}}},
        {"provider",
         {{"stub", c.provider.stub},
          {"mode", c.provider.mode},
          {"base_url", c.provider.base_url},
          {"api_key_env", c.provider.api_key_env},
          {"timeout_ms", c.provider.timeout_ms},
          {"max_retries", c.provider.max_retries},
          {"initial_backoff_ms", c.provider.initial_backoff_ms},
          {"requests_per_minute", c.provider.requests_per_minute},
          {"max_in_flight", c.provider.max_in_flight},
          {"embed_batch_size", c.provider.embed_batch_size},
          {"replay_log", c.provider.replay_log},
          {"moderation_model", c.provider.moderation_model}}},
        {"run",
         {{"hs", c.run.hs},
          {"retrievers", c.run.retrievers},
          {"models", c.run.models},
          {"k", c.run.k},
          {"hs_ids", c.run.hs_ids},
          {"max_new_tokens", c.run.max_new_tokens},
          {"temperature", c.run.temperature},
          {"on_summary_failure", c.run.on_summary_failure},
          {"max_parallel", c.run.max_parallel},
          {"keep_going", c.run.keep_going}}},
        {"metrics",
         {{"bertscore_model", c.metrics.bertscore_model},
          {"bleu_epsilon", c.metrics.bleu_epsilon},
          {"rouge_beta", c.metrics.rouge_beta},
          {"meteor_alpha", c.metrics.meteor_alpha},
          {"meteor_beta", c.metrics.meteor_beta},
          {"meteor_gamma", c.metrics.meteor_gamma},
          {"safety", c.metrics.safety}}},
        {"judge",
         {{"system_a", c.judge.system_a},
          {"system_b", c.judge.system_b},
          {"run_b", c.judge.run_b},
          {"model", c.judge.model},
          {"template", c.judge.template_id},
          {"swap", c.judge.swap},
          {"name", c.judge.name},
          {"max_new_tokens", c.judge.max_new_tokens},
          {"temperature", c.judge.temperature},
          {"max_parallel", c.judge.max_parallel},
          {"keep_going", c.judge.keep_going}}},
        {"stats", {{"annotations", c.stats.annotations}}},
    };
}

void validate(const Config& c) {
    auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
    if (c.config_version != kConfigVersion) fail("unsupported config_version");
    if (c.work_dir.empty()) fail("work_dir is empty");
    if (c.corpus.year_min > c.corpus.year_max) fail("corpus.year_min exceeds corpus.year_max");
    if (c.corpus.min_tokens == 0 || c.corpus.max_tokens < c.corpus.min_tokens)
        fail("corpus token bounds need 0 < min_tokens <= max_tokens");
    for (const auto& r : c.index.retrievers) {
        const auto id = index::parse_retriever(r);
        if (!id || *id == index::RetrieverId::None) fail("index.retrievers: unknown retriever '" + r + "'");
    }
    if (c.index.k1 < 0 || c.index.b < 0 || c.index.b > 1) fail("index: need k1 >= 0 and 0 <= b <= 1");
    if (c.provider.mode != "live" && c.provider.mode != "replay") fail("provider.mode must be live or replay");
    if (c.provider.mode == "replay" && c.provider.replay_log.empty()) fail("provider.mode replay needs replay_log");
    for (const auto& r : c.run.retrievers)
        if (!index::parse_retriever(r)) fail("run.retrievers: unknown retriever '" + r + "'");
    if (!pipeline::parse_summary_failure_policy(c.run.on_summary_failure))
        fail("run.on_summary_failure must be abort or skip");
    if (c.run.k == 0) fail("run.k must be at least 1");
    if (c.run.max_new_tokens < 1 || c.judge.max_new_tokens < 1) fail("max_new_tokens must be at least 1");
    if (c.run.max_parallel == 0 || c.judge.max_parallel == 0) fail("max_parallel must be at least 1");
    if (c.metrics.bleu_epsilon < 0 || c.metrics.rouge_beta <= 0) fail("metrics: bad bleu_epsilon or rouge_beta");
}

std::filesystem::path kb_dir(const Config& c) { return std::filesystem::path(c.work_dir) / "kb"; }
std::filesystem::path index_dir(const Config& c) { return std::filesystem::path(c.work_dir) / "index"; }
std::filesystem::path run_dir(const Config& c) { return std::filesystem::path(c.work_dir) / "run"; }
std::filesystem::path eval_dir(const Config& c) { return std::filesystem::path(c.work_dir) / "eval"; }
std::filesystem::path judge_dir(const Config& c) { return std::filesystem::path(c.work_dir) / "judge"; }
std::filesystem::path stats_dir(const Config& c) { return std::filesystem::path(c.work_dir) / "stats"; }
std::filesystem::path report_dir(const Config& c) { return std::filesystem::path(c.work_dir) / "report"; }

}  // namespace csrag::cli
