#include "csrag/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <unordered_map>

#include "csrag/common/csv.hpp"
#include "csrag/common/error.hpp"
#include "csrag/common/io.hpp"
#include "csrag/common/text.hpp"

namespace csrag::metrics {
namespace {

using Tokens = std::vector<std::string>;

std::string ngram_key(const Tokens& t, std::size_t i, std::size_t n) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
        if (j) key.push_back('\x1f');
        key += t[i + j];
    }
    return key;
}

std::map<std::string, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
    std::map<std::string, std::size_t> out;
    if (t.size() < n) return out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[ngram_key(t, i, n)];
    return out;
}

double rouge_tokens(const Tokens& c, const Tokens& r, double beta) {
    if (c.empty() || r.empty()) return 0.0;
    const auto l = static_cast<double>(lcs_length(c, r));
    if (l == 0.0) return 0.0;
    const double p = l / static_cast<double>(c.size());
    const double rec = l / static_cast<double>(r.size());
    const double b2 = beta * beta;
    return (1.0 + b2) * p * rec / (rec + b2 * p);
}

double meteor_tokens(const Tokens& c, const Tokens& r, const MeteorParams& mp) {
    if (c.empty() || r.empty()) return 0.0;
    const auto align = meteor_align(c, r);
    if (align.empty()) return 0.0;
    const auto m = static_cast<double>(align.size());
    const double p = m / static_cast<double>(c.size());
    const double rec = m / static_cast<double>(r.size());
    const double fmean = p * rec / (mp.alpha * p + (1.0 - mp.alpha) * rec);
    const double frag = static_cast<double>(count_chunks(align)) / m;
    const double penalty = mp.gamma * std::pow(frag, mp.beta);
    return fmean * (1.0 - penalty);
}

double cosine(const index::Vector& a, const index::Vector& b) {
    if (a.size() != b.size()) throw PreconditionError("token embeddings differ in dimension");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<index::Vector> embed_checked(const TokenEmbedder& embed, const Tokens& t) {
    auto v = embed(t);
    if (v.size() != t.size()) throw PreconditionError("token embedder returned the wrong number of vectors");
    return v;
}

}  // namespace

// ------------------------------------------------------------------ BLEU

double bleu4(std::string_view candidate, const std::vector<std::string>& references, double epsilon) {
    const Tokens c = text::tokenize(candidate);
    std::vector<Tokens> refs;
    for (const auto& r : references) {
        auto t = text::tokenize(r);
        if (!t.empty()) refs.push_back(std::move(t));
    }
    if (c.empty() || refs.empty()) return 0.0;

    double log_sum = 0.0;
    int orders = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand = ngram_counts(c, n);
        if (cand.empty()) continue;
        std::map<std::string, std::size_t> max_ref;
        for (const auto& r : refs)
            for (const auto& [g, cnt] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
        std::size_t matched = 0;
        for (const auto& [g, cnt] : cand) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(cnt, it->second);
        }
        const double total = static_cast<double>(c.size() - n + 1);
        if (matched == 0) {
            if (n == 1) return 0.0;
            log_sum += std::log(epsilon / total);
        } else {
            log_sum += std::log(static_cast<double>(matched) / total);
        }
        ++orders;
    }

    std::size_t ref_len = refs.front().size();
    for (const auto& r : refs) {
        const auto d = [&](std::size_t len) { return len > c.size() ? len - c.size() : c.size() - len; };
        if (d(r.size()) < d(ref_len) || (d(r.size()) == d(ref_len) && r.size() < ref_len)) ref_len = r.size();
    }
    const double cl = static_cast<double>(c.size());
    const double bp = c.size() > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / cl);
    return bp * std::exp(log_sum / orders);
}

// --------------------------------------------------------------- ROUGE-L

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (const auto& x : a) {
        for (std::size_t j = 0; j < b.size(); ++j)
            cur[j + 1] = x == b[j] ? prev[j] + 1 : std::max(prev[j + 1], cur[j]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference, double beta) {
    return rouge_tokens(text::tokenize(candidate), text::tokenize(reference), beta);
}

double rouge_l(std::string_view candidate, const std::vector<std::string>& references, double beta) {
    const Tokens c = text::tokenize(candidate);
    double best = 0.0;
    for (const auto& r : references) best = std::max(best, rouge_tokens(c, text::tokenize(r), beta));
    return best;
}

// ---------------------------------------------------------------- METEOR

std::vector<Alignment> meteor_align(const Tokens& cand, const Tokens& ref) {
    std::vector<std::optional<std::size_t>> cand_to_ref(cand.size());
    std::vector<bool> ref_used(ref.size(), false);

    auto stage = [&](const Tokens& c, const Tokens& r) {
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (cand_to_ref[i]) continue;
            std::optional<std::size_t> pick;
            if (i > 0 && cand_to_ref[i - 1]) {
                const std::size_t next = *cand_to_ref[i - 1] + 1;
                if (next < r.size() && !ref_used[next] && r[next] == c[i]) pick = next;
            }
            if (!pick) {
                for (std::size_t j = 0; j < r.size(); ++j) {
                    if (!ref_used[j] && r[j] == c[i]) {
                        pick = j;
                        break;
                    }
                }
            }
            if (pick) {
                cand_to_ref[i] = pick;
                ref_used[*pick] = true;
            }
        }
    };

    stage(cand, ref);
    Tokens cs, rs;
    cs.reserve(cand.size());
    rs.reserve(ref.size());
    for (const auto& t : cand) cs.push_back(porter_stem(t));
    for (const auto& t : ref) rs.push_back(porter_stem(t));
    stage(cs, rs);

    std::vector<Alignment> out;
    for (std::size_t i = 0; i < cand.size(); ++i)
        if (cand_to_ref[i]) out.push_back({i, *cand_to_ref[i]});
    return out;
}

std::size_t count_chunks(std::vector<Alignment> a) {
    if (a.empty()) return 0;
    std::sort(a.begin(), a.end(), [](const Alignment& x, const Alignment& y) { return x.cand < y.cand; });
    std::size_t chunks = 1;
    for (std::size_t i = 1; i < a.size(); ++i)
        if (a[i].cand != a[i - 1].cand + 1 || a[i].ref != a[i - 1].ref + 1) ++chunks;
    return chunks;
}

double meteor(std::string_view candidate, std::string_view reference, const MeteorParams& params) {
    return meteor_tokens(text::tokenize(candidate), text::tokenize(reference), params);
}

double meteor(std::string_view candidate, const std::vector<std::string>& references, const MeteorParams& params) {
    const Tokens c = text::tokenize(candidate);
    double best = 0.0;
    for (const auto& r : references) best = std::max(best, meteor_tokens(c, text::tokenize(r), params));
    return best;
}

// ------------------------------------------------------------- BERTScore

TokenEmbedder make_token_embedder(std::shared_ptr<providers::EmbedProvider> provider, std::string model_id) {
    if (!provider) throw PreconditionError("token embedder needs an embedding provider");
    struct Cache {
        std::mutex mu;
        std::unordered_map<std::string, index::Vector> vectors;
    };
    auto cache = std::make_shared<Cache>();
    return [provider = std::move(provider), model_id = std::move(model_id), cache](const Tokens& tokens) {
        std::vector<std::string> missing;
        {
            std::lock_guard lock(cache->mu);
            std::set<std::string> seen;
            for (const auto& t : tokens)
                if (!cache->vectors.contains(t) && seen.insert(t).second) missing.push_back(t);
        }
        if (!missing.empty()) {
            auto vecs = provider->embed(model_id, missing);
            if (vecs.size() != missing.size()) throw PreconditionError("embedding provider returned wrong count");
            std::lock_guard lock(cache->mu);
            for (std::size_t i = 0; i < missing.size(); ++i) cache->vectors.emplace(missing[i], std::move(vecs[i]));
        }
        std::lock_guard lock(cache->mu);
        std::vector<index::Vector> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(cache->vectors.at(t));
        return out;
    };
}

BertScore bertscore(std::string_view candidate, std::string_view reference, const TokenEmbedder& embed) {
    const Tokens c = text::tokenize(candidate);
    const Tokens r = text::tokenize(reference);
    if (c.empty() || r.empty()) return {};
    const auto ce = embed_checked(embed, c);
    const auto re = embed_checked(embed, r);

    std::vector<double> best_c(c.size(), -1.0), best_r(r.size(), -1.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = 0; j < r.size(); ++j) {
            const double s = cosine(ce[i], re[j]);
            best_c[i] = std::max(best_c[i], s);
            best_r[j] = std::max(best_r[j], s);
        }
    }
    BertScore out;
    for (double s : best_c) out.precision += s;
    for (double s : best_r) out.recall += s;
    out.precision /= static_cast<double>(c.size());
    out.recall /= static_cast<double>(r.size());
    const double denom = out.precision + out.recall;
    out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
    return out;
}

double bertscore_f1(std::string_view candidate, std::string_view reference, const TokenEmbedder& embed) {
    return bertscore(candidate, reference, embed).f1;
}

double bertscore_f1(std::string_view candidate, const std::vector<std::string>& references,
                    const TokenEmbedder& embed) {
    double best = 0.0;
    for (const auto& r : references) best = std::max(best, bertscore_f1(candidate, r, embed));
    return best;
}

// -------------------------------------------------------- corpus-level

double distinct_n(const std::vector<std::string>& outputs, std::size_t n) {
    if (n == 0) throw PreconditionError("distinct-n needs n >= 1");
    std::set<std::string> unique;
    std::size_t total = 0;
    for (const auto& o : outputs) {
        const Tokens t = text::tokenize(o);
        for (std::size_t i = 0; i + n <= t.size(); ++i) {
            unique.insert(ngram_key(t, i, n));
            ++total;
        }
    }
    if (total == 0) throw PreconditionError("distinct-" + std::to_string(n) + ": no n-grams in any output");
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double repetition_rate(const std::vector<std::string>& outputs, std::size_t n_min, std::size_t n_max) {
    if (n_min == 0 || n_max < n_min) throw PreconditionError("repetition rate needs 1 <= n_min <= n_max");
    if (outputs.empty()) throw PreconditionError("repetition rate of no outputs");
    double sum = 0.0;
    for (const auto& o : outputs) {
        const Tokens t = text::tokenize(o);
        double per = 0.0;
        int orders = 0;
        for (std::size_t n = n_min; n <= n_max && n <= t.size(); ++n) {
            std::set<std::string> seen;
            std::size_t repeats = 0;
            const std::size_t positions = t.size() - n + 1;
            for (std::size_t i = 0; i < positions; ++i)
                if (!seen.insert(ngram_key(t, i, n)).second) ++repeats;
            per += static_cast<double>(repeats) / static_cast<double>(positions);
            ++orders;
        }
        if (orders > 0) sum += per / orders;
    }
    return sum / static_cast<double>(outputs.size());
}

double safety(const std::string& text_in, providers::ModerationProvider& moderation) {
    if (text::trim(text_in).empty()) throw PreconditionError("safety of empty text");
    const auto scores = moderation.moderate(text_in);
    if (scores.empty()) throw PreconditionError("moderation returned no categories");
    double worst = 0.0;
    for (const auto& [cat, s] : scores) worst = std::max(worst, s);
    return 1.0 - worst;
}

// ------------------------------------------------------------- reporting

std::optional<double> CellReport::mean(std::optional<double> OutputScores::*field) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& o : per_output) {
        if (const auto& v = o.*field) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

MetricReport evaluate(const std::vector<pipeline::CounterSpeech>& outputs,
                      const std::map<std::string, std::vector<std::string>>& references, const TokenEmbedder& embed,
                      providers::ModerationProvider* moderation, const MetricConfig& config) {
    MetricReport report;
    report.config = config;
    std::map<std::pair<index::RetrieverId, std::string>, std::size_t> cell_of;
    std::vector<std::vector<std::string>> texts;

    for (const auto& cs : outputs) {
        auto key = std::make_pair(cs.retriever, cs.model_id);
        auto [it, fresh] = cell_of.try_emplace(key, report.cells.size());
        if (fresh) {
            CellReport cell;
            cell.retriever = cs.retriever;
            cell.model_id = cs.model_id;
            report.cells.push_back(std::move(cell));
            texts.emplace_back();
        }
        CellReport& cell = report.cells[it->second];
        texts[it->second].push_back(cs.text);

        OutputScores s;
        s.hs_id = cs.hs_id;
        auto ref_it = references.find(cs.hs_id);
        std::vector<std::string> refs;
        if (ref_it != references.end())
            for (const auto& r : ref_it->second)
                if (!text::tokenize(r).empty()) refs.push_back(r);
        if (refs.empty()) {
            ++cell.missing_reference;
            s.note = "no reference counter-speech";
        } else {
            s.bleu4 = bleu4(cs.text, refs, config.bleu_epsilon);
            s.rouge_l = rouge_l(cs.text, refs, config.rouge_beta);
            s.meteor = meteor(cs.text, refs, config.meteor);
            s.bertscore_f1 = bertscore_f1(cs.text, refs, embed);
        }
        if (moderation) {
            try {
                s.safety = safety(cs.text, *moderation);
            } catch (const std::exception& e) {
                ++cell.safety_failures;
                if (!s.note.empty()) s.note += "; ";
                s.note += std::string("safety: ") + e.what();
            }
        }
        cell.per_output.push_back(std::move(s));
    }

    for (std::size_t i = 0; i < report.cells.size(); ++i) {
        auto& cell = report.cells[i];
        auto corpus_level = [&](auto fn) -> std::optional<double> {
            try {
                return fn();
            } catch (const PreconditionError&) {
                return std::nullopt;
            }
        };
        cell.distinct1 = corpus_level([&] { return distinct_n(texts[i], 1); });
        cell.distinct2 = corpus_level([&] { return distinct_n(texts[i], 2); });
        cell.repetition_rate = corpus_level([&] { return repetition_rate(texts[i], 1, config.repetition_n_max); });
    }
    return report;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

std::string cell_num(const std::optional<double>& v) { return v ? io::format_fixed(*v, 4) : std::string(); }

}  // namespace

nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& o : c.per_output) {
            nlohmann::json row = {{"hs_id", o.hs_id},         {"bleu4", opt(o.bleu4)},
                                  {"rouge_l", opt(o.rouge_l)}, {"meteor", opt(o.meteor)},
                                  {"bertscore_f1", opt(o.bertscore_f1)}, {"safety", opt(o.safety)}};
            if (!o.note.empty()) row["note"] = o.note;
            per.push_back(std::move(row));
        }
        cells.push_back({{"retriever", std::string(index::to_string(c.retriever))},
                         {"model", c.model_id},
                         {"n", c.per_output.size()},
                         {"mean",
                          {{"bleu4", opt(c.mean(&OutputScores::bleu4))},
                           {"rouge_l", opt(c.mean(&OutputScores::rouge_l))},
                           {"meteor", opt(c.mean(&OutputScores::meteor))},
                           {"bertscore_f1", opt(c.mean(&OutputScores::bertscore_f1))},
                           {"safety", opt(c.mean(&OutputScores::safety))}}},
                         {"distinct1", opt(c.distinct1)},
                         {"distinct2", opt(c.distinct2)},
                         {"repetition_rate", opt(c.repetition_rate)},
                         {"missing_reference", c.missing_reference},
                         {"safety_failures", c.safety_failures},
                         {"per_output", std::move(per)}});
    }
    return {{"format_version", 1},
            {"config",
             {{"bleu_epsilon", r.config.bleu_epsilon},
              {"rouge_beta", r.config.rouge_beta},
              {"meteor_alpha", r.config.meteor.alpha},
              {"meteor_beta", r.config.meteor.beta},
              {"meteor_gamma", r.config.meteor.gamma},
              {"bertscore_model", r.config.bertscore_model},
              {"repetition_n_max", r.config.repetition_n_max}}},
            {"cells", std::move(cells)}};
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
    if (j.value("format_version", 0) != 1)
        throw IncompatibleArtifactError("metric report: unsupported format_version");
    MetricReport r;
    const auto& cfg = j.at("config");
    r.config.bleu_epsilon = cfg.at("bleu_epsilon").get<double>();
    r.config.rouge_beta = cfg.at("rouge_beta").get<double>();
    r.config.meteor.alpha = cfg.at("meteor_alpha").get<double>();
    r.config.meteor.beta = cfg.at("meteor_beta").get<double>();
    r.config.meteor.gamma = cfg.at("meteor_gamma").get<double>();
    r.config.bertscore_model = cfg.at("bertscore_model").get<std::string>();
    r.config.repetition_n_max = cfg.at("repetition_n_max").get<std::size_t>();
    for (const auto& cj : j.at("cells")) {
        CellReport c;
        const auto ret = index::parse_retriever(cj.at("retriever").get<std::string>());
        if (!ret) throw IncompatibleArtifactError("metric report: unknown retriever");
        c.retriever = *ret;
        c.model_id = cj.at("model").get<std::string>();
        c.distinct1 = opt_from(cj, "distinct1");
        c.distinct2 = opt_from(cj, "distinct2");
        c.repetition_rate = opt_from(cj, "repetition_rate");
        c.missing_reference = cj.value("missing_reference", std::size_t{0});
        c.safety_failures = cj.value("safety_failures", std::size_t{0});
        for (const auto& oj : cj.at("per_output")) {
            OutputScores o;
            o.hs_id = oj.at("hs_id").get<std::string>();
            o.bleu4 = opt_from(oj, "bleu4");
            o.rouge_l = opt_from(oj, "rouge_l");
            o.meteor = opt_from(oj, "meteor");
            o.bertscore_f1 = opt_from(oj, "bertscore_f1");
            o.safety = opt_from(oj, "safety");
            o.note = oj.value("note", std::string());
            c.per_output.push_back(std::move(o));
        }
        r.cells.push_back(std::move(c));
    }
    return r;
}

std::string table2_csv(const MetricReport& r) {
    std::string out = csv::format_row({"retriever", "model", "n", "BLEU", "METEOR", "ROUGE-L", "BERTScore_F1",
                                       "Distinct-1", "Distinct-2", "Repetition Rate", "Safety"});
    for (const auto& c : r.cells) {
        out += csv::format_row({std::string(index::to_string(c.retriever)), c.model_id,
                                std::to_string(c.per_output.size()), cell_num(c.mean(&OutputScores::bleu4)),
                                cell_num(c.mean(&OutputScores::meteor)), cell_num(c.mean(&OutputScores::rouge_l)),
                                cell_num(c.mean(&OutputScores::bertscore_f1)), cell_num(c.distinct1),
                                cell_num(c.distinct2), cell_num(c.repetition_rate),
                                cell_num(c.mean(&OutputScores::safety))});
    }
    return out;
}

std::string per_sample_csv(const MetricReport& r) {
    std::string out =
        csv::format_row({"retriever", "model", "hs_id", "bleu4", "rouge_l", "meteor", "bertscore_f1", "safety"});
    auto full = [](const std::optional<double>& v) { return v ? io::format_fixed(*v, 10) : std::string(); };
    for (const auto& c : r.cells) {
        for (const auto& o : c.per_output) {
            out += csv::format_row({std::string(index::to_string(c.retriever)), c.model_id, o.hs_id, full(o.bleu4),
                                    full(o.rouge_l), full(o.meteor), full(o.bertscore_f1), full(o.safety)});
        }
    }
    return out;
}

}  // namespace csrag::metrics
