#include <catch_amalgamated.hpp>

#include <random>

#include "csrag/common/csv.hpp"
#include "csrag/common/error.hpp"
#include "csrag/common/io.hpp"
#include "csrag/judge/judge.hpp"
#include "csrag/providers/providers.hpp"

using namespace csrag;
using namespace csrag::judge;
using corpus::TargetGroup;

namespace {

pipeline::CounterSpeech cs(const std::string& hs, const std::string& text) {
    pipeline::CounterSpeech c;
    c.hs_id = hs;
    c.text = text;
    c.raw_text = text;
    c.model_id = "m";
    return c;
}

std::map<std::string, corpus::HateSpeechInstance> hs_map(std::initializer_list<std::string> ids) {
    std::map<std::string, corpus::HateSpeechInstance> out;
    for (const auto& id : ids) out[id] = {id, "hateful text " + id, TargetGroup::Migrants, std::nullopt};
    return out;
}

struct ScriptedChat : providers::ChatProvider {
    std::string reply;
    bool fail = false;
    std::string last_prompt;
    std::string complete(const providers::ChatRequest& r) override {
        last_prompt = r.prompt;
        if (fail) throw ProviderError(ProviderErrorKind::Http, "req-9", "judge endpoint returned 500");
        return reply;
    }
};

JudgeVerdict verdict(const std::string& hs, Winner w, bool swapped = false) {
    JudgeVerdict v;
    v.pair_id = hs + (swapped ? ":ba" : ":ab");
    v.hs_id = hs;
    v.system_a = "rag";
    v.system_b = "norag";
    v.order_swapped = swapped;
    v.winner = w;
    return v;
}

// Tenths of a percent by long division: round up when the hundredths digit is 5 or more.
std::string percent_oracle(std::size_t w, std::size_t t) {
    if (t == 0) return "0.0";
    const unsigned long long hundredths = 10000ULL * w / t;
    unsigned long long tenths = hundredths / 10;
    if (hundredths % 10 >= 5) ++tenths;
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

}  // namespace

TEST_CASE("judge templates match the shipped assets") {
    CHECK(io::read_file(std::string(CSRAG_ASSETS_DIR) + "/prompts/judge_1.txt") == kJudgeTemplate1);
    CHECK(io::read_file(std::string(CSRAG_ASSETS_DIR) + "/prompts/judge_2.txt") == kJudgeTemplate2);
    CHECK(template_text(TemplateId::RagVsNoRag) == kJudgeTemplate1);
    CHECK(template_text(TemplateId::MethodComparison) == kJudgeTemplate2);
    CHECK(parse_template_id("judge_2") == TemplateId::MethodComparison);
    CHECK_FALSE(parse_template_id("judge_3").has_value());
}

TEST_CASE("judge prompt carries the hate speech and both responses") {
    const auto p = render_judge_prompt(TemplateId::RagVsNoRag, "they are bad", "First\nline.", "Second.");
    CHECK(p.rfind("Provide a brief counter-narrative in response to the following hate speech: they are bad.", 0) == 0);
    CHECK(p.find("\nCounter-speech A: First line.\nCounter-speech B: Second.\n") != std::string::npos);
    CHECK(p.find("SCORES: <score for A> <score for B>") != std::string::npos);
    const auto p2 = render_judge_prompt(TemplateId::MethodComparison, "x", "a", "b");
    CHECK(p2.find("a piece of hate speech x and two") != std::string::npos);
}

TEST_CASE("build_pairs intersects and swaps") {
    const auto hs = hs_map({"h1", "h2", "h3"});
    const std::vector a = {cs("h1", "a1"), cs("h2", "a2")};
    const std::vector b = {cs("h2", "b2"), cs("h3", "b3")};

    auto one = build_pairs(a, b, "rag", "norag", hs, TemplateId::RagVsNoRag, SwapPolicy::None);
    REQUIRE(one.size() == 1);
    CHECK(one[0].pair_id == "h2:ab");
    CHECK(one[0].cs_a.text == "a2");
    CHECK_FALSE(one[0].order_swapped);

    auto both = build_pairs(a, b, "rag", "norag", hs, TemplateId::RagVsNoRag);
    REQUIRE(both.size() == 2);
    CHECK(both[1].pair_id == "h2:ba");
    CHECK(both[1].cs_a.text == "b2");
    CHECK(both[1].order_swapped);
    CHECK(both[1].system_a == "rag");

    auto sw = build_pairs(a, b, "rag", "norag", hs, TemplateId::RagVsNoRag, SwapPolicy::Swapped);
    REQUIRE(sw.size() == 1);
    CHECK(sw[0].order_swapped);

    CHECK_THROWS_AS(build_pairs({cs("h1", "x")}, {cs("h3", "y")}, "a", "b", hs, TemplateId::RagVsNoRag),
                    ValidationError);
    CHECK_THROWS_AS(build_pairs({cs("h1", "x"), cs("h1", "z")}, {cs("h1", "y")}, "a", "b", hs,
                                TemplateId::RagVsNoRag),
                    ValidationError);
    CHECK_THROWS_AS(build_pairs({cs("h9", "x")}, {cs("h9", "y")}, "a", "b", hs, TemplateId::RagVsNoRag),
                    ValidationError);
}

TEST_CASE("build_pairs at corpus scale") {
    std::vector<pipeline::CounterSpeech> a, b;
    std::map<std::string, corpus::HateSpeechInstance> hs;
    for (int i = 0; i < 5003; ++i) {
        const auto id = "hs" + std::to_string(i);
        a.push_back(cs(id, "a"));
        b.push_back(cs(id, "b"));
        hs[id] = {id, "t", TargetGroup::Other, std::nullopt};
    }
    CHECK(build_pairs(a, b, "x", "y", hs, TemplateId::RagVsNoRag, SwapPolicy::None).size() == 5003);
    CHECK(build_pairs(a, b, "x", "y", hs, TemplateId::RagVsNoRag).size() == 10006);
}

TEST_CASE("verdict parsing") {
    auto p = parse_verdict("Reasoning here.\nSCORES: 8 6");
    CHECK(p.winner == Winner::A);
    REQUIRE(p.scores.has_value());
    CHECK(p.scores->first == 8.0);
    CHECK_FALSE(p.parse_failed);

    CHECK(parse_verdict("**Scores:** 3.5, 7").winner == Winner::B);
    CHECK(parse_verdict("SCORES: 5 5").winner == Winner::Tie);
    CHECK(parse_verdict("SCORES: 1 2\nthen revised\nSCORES: 9 2").winner == Winner::A);
    CHECK(parse_verdict("A is better.\nWINNER: B").winner == Winner::B);
    CHECK(parse_verdict("winner: tie.").winner == Winner::Tie);
    const auto native = parse_verdict("7 9\nAssistant 2 gives more facts.");
    CHECK(native.winner == Winner::B);
    CHECK(native.scores == std::make_pair(7.0, 9.0));

    for (const std::string junk : {"", "I cannot decide.", "SCORES: eight six", "7 9 10\nthree numbers"}) {
        const auto j = parse_verdict(junk);
        CHECK(j.winner == Winner::Tie);
        CHECK(j.parse_failed);
    }
}

TEST_CASE("verdict serialization round-trips") {
    ScriptedChat chat;
    const auto hs = hs_map({"h1"});
    const auto pairs = build_pairs({cs("h1", "x")}, {cs("h1", "y")}, "rag", "norag", hs, TemplateId::RagVsNoRag);
    for (const std::string reply : {"SCORES: 8 6", "WINNER: TIE", "4 9", "garbage", "Scores: 2.25 2.5\n"}) {
        chat.reply = reply;
        for (const auto& pair : pairs) {
            const auto v = judge_pair(pair, chat, "judge");
            const auto j = to_json(v);
            CHECK(to_json(verdict_from_json(j)) == j);
            const auto again = parse_verdict(verdict_from_json(j).raw_response);
            CHECK(again.winner == v.winner);
            CHECK(again.scores == v.raw_scores);
        }
    }
}

TEST_CASE("provider failure marks the verdict failed and tally counts it") {
    ScriptedChat chat;
    chat.fail = true;
    const auto hs = hs_map({"h1"});
    const auto pairs = build_pairs({cs("h1", "x")}, {cs("h1", "y")}, "rag", "norag", hs, TemplateId::RagVsNoRag);
    const auto verdicts = judge_all(pairs, chat, "judge");
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].failed);
    CHECK(verdicts[0].error.find("500") != std::string::npos);
    const auto t = tally(verdicts, {{"h1", TargetGroup::Migrants}});
    CHECK(t.failed == 2);
    CHECK(t.rows.empty());
}

TEST_CASE("stub judge prefers longer factual text and ignores presentation order") {
    auto chat = providers::make_stub_providers(4).chat;
    const auto hs = hs_map({"h1"});
    const std::string longer = "Research shows 70 percent of migrants work and pay taxes, and studies find crime "
                               "rates are no higher.";
    const std::string shorter = "That is unfair.";
    const auto pairs =
        build_pairs({cs("h1", longer)}, {cs("h1", shorter)}, "rag", "norag", hs, TemplateId::RagVsNoRag);
    const auto v = judge_all(pairs, *chat, "judge", {}, 2);
    REQUIRE(v.size() == 2);
    CHECK(v[0].winner == Winner::A);
    CHECK(v[1].winner == Winner::B);
    CHECK(v[0].system_winner() == Winner::A);
    CHECK(v[1].system_winner() == Winner::A);

    const auto same = build_pairs({cs("h1", longer)}, {cs("h1", longer)}, "rag", "norag", hs,
                                  TemplateId::MethodComparison);
    for (const auto& s : judge_all(same, *chat, "judge")) CHECK(s.winner == Winner::Tie);
}

TEST_CASE("stub judge swap consistency on random pairs") {
    std::mt19937_64 rng(31);
    auto chat = providers::make_stub_providers(8).chat;
    static const char* words[] = {"data", "people", "shows", "kind", "12", "respect", "neighbors", "facts", "work"};
    for (int trial = 0; trial < 100; ++trial) {
        auto sentence = [&] {
            std::string s;
            const auto n = 1 + rng() % 14;
            for (std::size_t i = 0; i < n; ++i) s += std::string(i ? " " : "") + words[rng() % 9];
            return s + ".";
        };
        const auto hs = hs_map({"h"});
        const auto pairs =
            build_pairs({cs("h", sentence())}, {cs("h", sentence())}, "x", "y", hs, TemplateId::RagVsNoRag);
        const auto v = judge_all(pairs, *chat, "judge");
        CHECK(v[0].system_winner() == v[1].system_winner());
    }
}

TEST_CASE("percent formatting rounds half up exactly") {
    CHECK(format_percent(114, 124) == "91.9");
    CHECK(format_percent(962, 1697) == "56.7");
    CHECK(format_percent(1, 16) == "6.3");
    CHECK(format_percent(1, 8) == "12.5");
    CHECK(format_percent(2, 3) == "66.7");
    CHECK(format_percent(0, 0) == "0.0");
    CHECK(format_percent(5, 5) == "100.0");
    CHECK(format_percent(1, 2000) == "0.1");
    CHECK(format_percent(1, 2001) == "0.0");
    std::mt19937_64 rng(2);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t t = 1 + rng() % 6000;
        const std::size_t w = rng() % (t + 1);
        INFO(w << "/" << t);
        CHECK(format_percent(w, t) == percent_oracle(w, t));
    }
}

TEST_CASE("tally fixtures") {
    std::vector<JudgeVerdict> v;
    for (int i = 0; i < 124; ++i) v.push_back(verdict("h" + std::to_string(i), i < 114 ? Winner::A : Winner::B));
    std::map<std::string, TargetGroup> targets;
    for (int i = 0; i < 124; ++i) targets["h" + std::to_string(i)] = TargetGroup::Jews;
    const auto t = tally(v, targets);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].target == "ALL");
    CHECK(t.rows[0].wins_a == 114);
    CHECK(t.rows[1].target == "JEWS");
    const auto table = csv::Table::parse(tally_csv(t));
    CHECK(table.header() == std::vector<std::string>{"system_a", "system_b", "target", "total", "wins_a", "pct_a"});
    CHECK(table.get(table.rows()[0], "pct_a") == "91.9");

    std::vector<JudgeVerdict> ties = {verdict("h1", Winner::Tie), verdict("h2", Winner::Tie)};
    const auto tt = tally(ties, {});
    REQUIRE(tt.rows.size() == 1);
    CHECK(tt.rows[0].wins_a == 0);
    CHECK(tt.rows[0].wins_b == 0);
    CHECK(tt.rows[0].ties == 2);
    CHECK(format_percent(tt.rows[0].wins_a, tt.rows[0].total) == "0.0");
    CHECK(tt.unknown_hs == 2);
}

TEST_CASE("tally maps swapped verdicts back to systems and filters halves") {
    const std::vector<JudgeVerdict> v = {verdict("h1", Winner::A), verdict("h1", Winner::B, true),
                                         verdict("h2", Winner::A, true)};
    const std::map<std::string, TargetGroup> targets = {{"h1", TargetGroup::Women}, {"h2", TargetGroup::Women}};
    const auto all = tally(v, targets);
    CHECK(all.rows[0].wins_a == 2);
    CHECK(all.rows[0].wins_b == 1);
    const auto orig = tally(v, targets, OrderFilter::Original);
    CHECK(orig.rows[0].total == 1);
    const auto sw = tally(v, targets, OrderFilter::Swapped);
    CHECK(sw.rows[0].total == 2);
    CHECK(sw.rows[0].wins_a == 1);
}

TEST_CASE("tally conservation on random verdicts") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<JudgeVerdict> v;
        std::map<std::string, TargetGroup> targets;
        const auto n = rng() % 300;
        for (std::size_t i = 0; i < n; ++i) {
            const auto id = "h" + std::to_string(rng() % 120);
            targets[id] = corpus::kAllTargets[rng() % 8];
            auto x = verdict(id, static_cast<Winner>(rng() % 3), rng() % 2);
            if (rng() % 2) {
                x.system_a = "dense";
                x.system_b = "bm25";
            }
            x.failed = rng() % 17 == 0;
            v.push_back(x);
        }
        const auto t = tally(v, targets);
        std::map<std::string, std::size_t> all_total, target_sum;
        for (const auto& r : t.rows) {
            CHECK(r.wins_a + r.wins_b + r.ties == r.total);
            (r.target == "ALL" ? all_total : target_sum)[r.system_a] += r.total;
        }
        CHECK(all_total == target_sum);
        std::size_t counted = 0;
        for (const auto& [k, n_all] : all_total) counted += n_all;
        CHECK(counted + t.failed == v.size());
    }
}
