#include "csrag/judge/judge.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "csrag/common/csv.hpp"
#include "csrag/common/error.hpp"
#include "csrag/common/parallel.hpp"
#include "csrag/common/text.hpp"

namespace csrag::judge {
namespace {

using json = nlohmann::json;

std::string flatten(std::string_view s) {
    std::string out(text::trim(s));
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return out;
}

// Up to `want` numbers from the start of `s`, separated by spaces, commas or
// tabs. Stops at the first thing that is not a number.
std::vector<double> leading_numbers(std::string_view s, std::size_t want, std::string_view* rest = nullptr) {
    std::vector<double> out;
    std::size_t i = 0;
    while (out.size() < want) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
        double v = 0;
        const auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
        if (ec != std::errc()) break;
        out.push_back(v);
        i = static_cast<std::size_t>(ptr - s.data());
    }
    if (rest) *rest = s.substr(i);
    return out;
}

std::size_t find_ci(std::string_view hay, std::string_view needle) {
    const std::string h = text::to_lower_ascii(hay);
    return h.find(text::to_lower_ascii(needle));
}

std::vector<std::string_view> lines_of(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto nl = s.find('\n', start);
        const auto end = nl == std::string_view::npos ? s.size() : nl;
        out.push_back(s.substr(start, end - start));
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return out;
}

Winner from_scores(double a, double b) {
    if (a > b) return Winner::A;
    if (b > a) return Winner::B;
    return Winner::Tie;
}

}  // namespace

std::string_view to_string(TemplateId t) {
    return t == TemplateId::RagVsNoRag ? "rag_vs_norag" : "method_comparison";
}

std::optional<TemplateId> parse_template_id(std::string_view s) {
    const auto l = text::to_lower_ascii(s);
    if (l == "rag_vs_norag" || l == "judge_1" || l == "1") return TemplateId::RagVsNoRag;
    if (l == "method_comparison" || l == "judge_2" || l == "2") return TemplateId::MethodComparison;
    return std::nullopt;
}

std::string_view template_text(TemplateId t) {
    return t == TemplateId::RagVsNoRag ? kJudgeTemplate1 : kJudgeTemplate2;
}

std::string render_judge_prompt(TemplateId t, std::string_view hs_text, std::string_view cs_a,
                                std::string_view cs_b) {
    const std::string tmpl = std::string(template_text(t)) + std::string(kResponseBlock);
    return pipeline::render(tmpl, {{"hs", flatten(hs_text)}, {"cs_a", flatten(cs_a)}, {"cs_b", flatten(cs_b)}});
}

std::string_view to_string(SwapPolicy p) {
    switch (p) {
    case SwapPolicy::None: return "none";
    case SwapPolicy::Swapped: return "swapped";
    case SwapPolicy::Both: return "both";
    }
    return "both";
}

std::optional<SwapPolicy> parse_swap_policy(std::string_view s) {
    const auto l = text::to_lower_ascii(s);
    if (l == "none") return SwapPolicy::None;
    if (l == "swapped") return SwapPolicy::Swapped;
    if (l == "both") return SwapPolicy::Both;
    return std::nullopt;
}

std::vector<JudgePair> build_pairs(const std::vector<pipeline::CounterSpeech>& set_a,
                                   const std::vector<pipeline::CounterSpeech>& set_b, const std::string& system_a,
                                   const std::string& system_b,
                                   const std::map<std::string, corpus::HateSpeechInstance>& hs, TemplateId template_id,
                                   SwapPolicy swap) {
    if (system_a == system_b) throw ValidationError("build_pairs: the two systems need distinct labels");
    std::map<std::string, const pipeline::CounterSpeech*> by_hs_b;
    for (const auto& c : set_b)
        if (!by_hs_b.emplace(c.hs_id, &c).second)
            throw ValidationError("build_pairs: hs_id " + c.hs_id + " appears twice in " + system_b);
    std::set<std::string> seen_a;
    std::vector<JudgePair> out;
    for (const auto& a : set_a) {
        if (!seen_a.insert(a.hs_id).second)
            throw ValidationError("build_pairs: hs_id " + a.hs_id + " appears twice in " + system_a);
        const auto it = by_hs_b.find(a.hs_id);
        if (it == by_hs_b.end()) continue;
        const auto h = hs.find(a.hs_id);
        if (h == hs.end()) throw ValidationError("build_pairs: no hate-speech instance for " + a.hs_id);
        JudgePair p;
        p.hs = h->second;
        p.template_id = template_id;
        p.system_a = system_a;
        p.system_b = system_b;
        if (swap != SwapPolicy::Swapped) {
            p.pair_id = a.hs_id + ":ab";
            p.cs_a = a;
            p.cs_b = *it->second;
            p.order_swapped = false;
            out.push_back(p);
        }
        if (swap != SwapPolicy::None) {
            p.pair_id = a.hs_id + ":ba";
            p.cs_a = *it->second;
            p.cs_b = a;
            p.order_swapped = true;
            out.push_back(p);
        }
    }
    if (out.empty()) throw ValidationError("build_pairs: " + system_a + " and " + system_b + " share no hs_id");
    return out;
}

std::string_view to_string(Winner w) {
    switch (w) {
    case Winner::A: return "A";
    case Winner::B: return "B";
    case Winner::Tie: return "TIE";
    }
    return "TIE";
}

std::optional<Winner> parse_winner(std::string_view s) {
    const auto l = text::to_lower_ascii(text::trim(s));
    if (l == "a") return Winner::A;
    if (l == "b") return Winner::B;
    if (l == "tie") return Winner::Tie;
    return std::nullopt;
}

ParsedVerdict parse_verdict(std::string_view response) {
    const auto lines = lines_of(response);
    ParsedVerdict v;

    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        const auto pos = find_ci(*it, "SCORES:");
        if (pos == std::string::npos) continue;
        std::string_view rest = it->substr(pos + 7);
        while (!rest.empty() && (rest.front() == '*' || rest.front() == ' ')) rest.remove_prefix(1);
        const auto nums = leading_numbers(rest, 2);
        if (nums.size() == 2) {
            v.scores = std::make_pair(nums[0], nums[1]);
            v.winner = from_scores(nums[0], nums[1]);
            return v;
        }
    }
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        const auto pos = find_ci(*it, "WINNER:");
        if (pos == std::string::npos) continue;
        std::string_view rest = it->substr(pos + 7);
        while (!rest.empty() && (rest.front() == '*' || rest.front() == ' ')) rest.remove_prefix(1);
        std::string word;
        for (char c : rest) {
            if (c == ' ' || c == '.' || c == '*' || c == '\r') break;
            word.push_back(c);
        }
        if (const auto w = parse_winner(word)) {
            v.winner = *w;
            return v;
        }
    }
    for (const auto line : lines) {
        const auto t = text::trim(line);
        if (t.empty()) continue;
        std::string_view rest;
        const auto nums = leading_numbers(t, 2, &rest);
        if (nums.size() == 2 && text::trim(rest).empty()) {
            v.scores = std::make_pair(nums[0], nums[1]);
            v.winner = from_scores(nums[0], nums[1]);
            return v;
        }
        break;
    }
    v.parse_failed = true;
    return v;
}

Winner JudgeVerdict::system_winner() const {
    if (!order_swapped || winner == Winner::Tie) return winner;
    return winner == Winner::A ? Winner::B : Winner::A;
}

json to_json(const JudgeVerdict& v) {
    json j = {{"pair_id", v.pair_id},
              {"hs_id", v.hs_id},
              {"system_a", v.system_a},
              {"system_b", v.system_b},
              {"order_swapped", v.order_swapped},
              {"template", std::string(to_string(v.template_id))},
              {"winner", std::string(to_string(v.winner))},
              {"raw_scores", v.raw_scores ? json::array({v.raw_scores->first, v.raw_scores->second}) : json(nullptr)},
              {"raw_response", v.raw_response},
              {"parse_failed", v.parse_failed},
              {"failed", v.failed}};
    if (!v.error.empty()) j["error"] = v.error;
    return j;
}

JudgeVerdict verdict_from_json(const json& j) {
    JudgeVerdict v;
    v.pair_id = j.at("pair_id").get<std::string>();
    v.hs_id = j.at("hs_id").get<std::string>();
    v.system_a = j.at("system_a").get<std::string>();
    v.system_b = j.at("system_b").get<std::string>();
    v.order_swapped = j.at("order_swapped").get<bool>();
    const auto t = parse_template_id(j.at("template").get<std::string>());
    const auto w = parse_winner(j.at("winner").get<std::string>());
    if (!t || !w) throw ValidationError("verdict " + v.pair_id + ": bad template or winner");
    v.template_id = *t;
    v.winner = *w;
    if (const auto& s = j.at("raw_scores"); !s.is_null()) v.raw_scores = std::make_pair(s.at(0).get<double>(), s.at(1).get<double>());
    v.raw_response = j.at("raw_response").get<std::string>();
    v.parse_failed = j.at("parse_failed").get<bool>();
    v.failed = j.at("failed").get<bool>();
    v.error = j.value("error", std::string());
    return v;
}

JudgeVerdict judge_pair(const JudgePair& pair, providers::ChatProvider& chat, const std::string& judge_model,
                        const pipeline::GenerationParams& params) {
    if (pair.cs_a.hs_id != pair.hs.hs_id || pair.cs_b.hs_id != pair.hs.hs_id)
        throw PreconditionError("judge_pair " + pair.pair_id + ": responses answer different hate speech");
    JudgeVerdict v;
    v.pair_id = pair.pair_id;
    v.hs_id = pair.hs.hs_id;
    v.system_a = pair.system_a;
    v.system_b = pair.system_b;
    v.order_swapped = pair.order_swapped;
    v.template_id = pair.template_id;
    const auto prompt = render_judge_prompt(pair.template_id, pair.hs.text, pair.cs_a.text, pair.cs_b.text);
    try {
        v.raw_response = chat.complete({judge_model, prompt, params.max_new_tokens, params.temperature});
    } catch (const std::exception& e) {
        v.failed = true;
        v.error = e.what();
        return v;
    }
    const auto parsed = parse_verdict(v.raw_response);
    v.winner = parsed.winner;
    v.raw_scores = parsed.scores;
    v.parse_failed = parsed.parse_failed;
    return v;
}

std::vector<JudgeVerdict> judge_all(const std::vector<JudgePair>& pairs, providers::ChatProvider& chat,
                                    const std::string& judge_model, const pipeline::GenerationParams& params,
                                    std::size_t max_parallel) {
    std::vector<JudgeVerdict> out(pairs.size());
    parallel_for(pairs.size(), std::max<std::size_t>(max_parallel, 1),
                 [&](std::size_t i) { out[i] = judge_pair(pairs[i], chat, judge_model, params); });
    return out;
}

TallyTable tally(const std::vector<JudgeVerdict>& verdicts, const std::map<std::string, corpus::TargetGroup>& targets,
                 OrderFilter filter) {
    TallyTable t;
    // per system pair: ALL row plus one row per target group
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, std::map<int, TallyRow>> groups;
    constexpr int kAll = -1;

    for (const auto& v : verdicts) {
        if (filter == OrderFilter::Original && v.order_swapped) continue;
        if (filter == OrderFilter::Swapped && !v.order_swapped) continue;
        if (v.failed) {
            ++t.failed;
            continue;
        }
        if (v.parse_failed) ++t.parse_failures;
        const auto key = std::make_pair(v.system_a, v.system_b);
        auto [git, fresh] = groups.try_emplace(key);
        if (fresh) order.push_back(key);
        auto add = [&](int slot, std::string label) {
            auto& row = git->second[slot];
            row.system_a = v.system_a;
            row.system_b = v.system_b;
            row.target = std::move(label);
            ++row.total;
            switch (v.system_winner()) {
            case Winner::A: ++row.wins_a; break;
            case Winner::B: ++row.wins_b; break;
            case Winner::Tie: ++row.ties; break;
            }
        };
        add(kAll, std::string(kAllTargetsLabel));
        const auto target = targets.find(v.hs_id);
        if (target == targets.end()) {
            ++t.unknown_hs;
            continue;
        }
        add(static_cast<int>(target->second), std::string(corpus::to_string(target->second)));
    }
    for (const auto& key : order)
        for (const auto& [slot, row] : groups.at(key)) t.rows.push_back(row);
    return t;
}

std::string format_percent(std::size_t wins, std::size_t total) {
    if (total == 0) return "0.0";
    // tenths of a percent, rounded half up: floor((2000 w + t) / 2t)
    const auto tenths = (2000 * static_cast<unsigned long long>(wins) + total) / (2 * static_cast<unsigned long long>(total));
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

std::string tally_csv(const TallyTable& t) {
    std::string out = csv::format_row({"system_a", "system_b", "target", "total", "wins_a", "pct_a"});
    for (const auto& r : t.rows)
        out += csv::format_row({r.system_a, r.system_b, r.target, std::to_string(r.total), std::to_string(r.wins_a),
                                format_percent(r.wins_a, r.total)});
    return out;
}

json to_json(const TallyTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"system_a", r.system_a},
                        {"system_b", r.system_b},
                        {"target", r.target},
                        {"total", r.total},
                        {"wins_a", r.wins_a},
                        {"wins_b", r.wins_b},
                        {"ties", r.ties},
                        {"pct_a", format_percent(r.wins_a, r.total)},
                        {"pct_b", format_percent(r.wins_b, r.total)}});
    return {{"rows", rows}, {"failed", t.failed}, {"parse_failures", t.parse_failures}, {"unknown_hs", t.unknown_hs}};
}

}  // namespace csrag::judge
