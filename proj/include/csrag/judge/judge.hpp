#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/corpus/types.hpp"
#include "csrag/pipeline/pipeline.hpp"
#include "csrag/providers/providers.hpp"

namespace csrag::judge {

// The two judge templates, verbatim (assets/prompts/judge_1.txt, judge_2.txt).
inline constexpr std::string_view kJudgeTemplate1 =
    "Provide a brief counter-narrative in response to the following hate speech: {hs}. You are an impartial "
    "evaluator. You will be given a piece of hate speech and two counter-speech responses. Your task is to judge "
    "which counter-speech is better according to the following criteria, in order of importance:\n"
    "\n"
    "1) Factuality – Does the response contain accurate and verifiable information? A factually correct response is "
    "always preferred.\n"
    "2) Number of facts – Does the response provide multiple relevant facts, not just one? More well-chosen facts are "
    "better.\n"
    "3) Relevance – Does the response directly address the hate speech?\n"
    "4) Specificity – Is the response specific and non-generic?";

inline constexpr std::string_view kJudgeTemplate2 =
    "You are an impartial evaluator. You will be given a piece of hate speech {hs} and two counter-speech responses. "
    "Your task is to judge which response is better according to the following criteria:\n"
    "\n"
    "- The response must be easy to read, empathetic, and suitable as a short social media comment.\n"
    "- Friendly and colloquial language is preferred. Responses that sound like essays, lectures, or academic "
    "articles should be penalized.\n"
    "- Conciseness: The response should be maximum 2 sentences long. Very long responses should be penalized, even if "
    "factually rich.";

/// Appended to either template: the two responses and the answer format.
inline constexpr std::string_view kResponseBlock =
    "\n"
    "\n"
    "Counter-speech A: {cs_a}\n"
    "Counter-speech B: {cs_b}\n"
    "\n"
    "Rate each response on a scale of 1 to 10. End your answer with one line of the form\n"
    "SCORES: <score for A> <score for B>";

enum class TemplateId { RagVsNoRag, MethodComparison };
std::string_view to_string(TemplateId t);
std::optional<TemplateId> parse_template_id(std::string_view s);
std::string_view template_text(TemplateId t);

/// Newlines inside the inserted texts are flattened to spaces so the
/// response block keeps one line per response.
std::string render_judge_prompt(TemplateId t, std::string_view hs_text, std::string_view cs_a,
                                std::string_view cs_b);

enum class SwapPolicy { None, Swapped, Both };
std::string_view to_string(SwapPolicy p);
std::optional<SwapPolicy> parse_swap_policy(std::string_view s);

struct JudgePair {
    std::string pair_id;  ///< "<hs_id>:ab" or "<hs_id>:ba"
    corpus::HateSpeechInstance hs;
    pipeline::CounterSpeech cs_a;  ///< as presented to the judge
    pipeline::CounterSpeech cs_b;
    TemplateId template_id = TemplateId::RagVsNoRag;
    bool order_swapped = false;  ///< presented A comes from the second system
    std::string system_a;        ///< first system, regardless of presentation
    std::string system_b;
};

/// One pair per hs_id present in both sets, in `set_a` order; with
/// SwapPolicy::Both the swapped copy follows its original. Throws
/// ValidationError on an empty intersection, a duplicated hs_id within a set,
/// or a shared hs_id missing from `hs`.
std::vector<JudgePair> build_pairs(const std::vector<pipeline::CounterSpeech>& set_a,
                                   const std::vector<pipeline::CounterSpeech>& set_b, const std::string& system_a,
                                   const std::string& system_b,
                                   const std::map<std::string, corpus::HateSpeechInstance>& hs, TemplateId template_id,
                                   SwapPolicy swap = SwapPolicy::Both);

enum class Winner { A, B, Tie };
std::string_view to_string(Winner w);
std::optional<Winner> parse_winner(std::string_view s);

struct ParsedVerdict {
    Winner winner = Winner::Tie;
    std::optional<std::pair<double, double>> scores;
    bool parse_failed = false;
};

/// Reads, in order of preference: the last `SCORES: <a> <b>` line, a
/// `WINNER: A|B|TIE` line, or a first line holding exactly two numbers
/// (JudgeLM's native format). Anything else is a tie with parse_failed set.
ParsedVerdict parse_verdict(std::string_view response);

struct JudgeVerdict {
    std::string pair_id;
    std::string hs_id;
    std::string system_a;
    std::string system_b;
    bool order_swapped = false;
    TemplateId template_id = TemplateId::RagVsNoRag;
    Winner winner = Winner::Tie;  ///< in presentation order
    std::optional<std::pair<double, double>> raw_scores;
    std::string raw_response;
    bool parse_failed = false;
    bool failed = false;  ///< provider error; excluded from tallies
    std::string error;

    /// Winner in terms of system_a / system_b, undoing the presentation swap.
    [[nodiscard]] Winner system_winner() const;
};

nlohmann::json to_json(const JudgeVerdict& v);
JudgeVerdict verdict_from_json(const nlohmann::json& j);

/// Provider errors produce a verdict with `failed` set rather than throwing.
JudgeVerdict judge_pair(const JudgePair& pair, providers::ChatProvider& chat, const std::string& judge_model,
                        const pipeline::GenerationParams& params = {});

/// Judges every pair with up to `max_parallel` requests in flight; results
/// keep the order of `pairs`.
std::vector<JudgeVerdict> judge_all(const std::vector<JudgePair>& pairs, providers::ChatProvider& chat,
                                    const std::string& judge_model, const pipeline::GenerationParams& params = {},
                                    std::size_t max_parallel = 1);

inline constexpr std::string_view kAllTargetsLabel = "ALL";

struct TallyRow {
    std::string system_a;
    std::string system_b;
    std::string target;  ///< a target group name or "ALL"
    std::size_t total = 0;
    std::size_t wins_a = 0;
    std::size_t wins_b = 0;
    std::size_t ties = 0;
};

struct TallyTable {
    std::vector<TallyRow> rows;  ///< per system pair: the ALL row, then targets in enumeration order
    std::size_t failed = 0;
    std::size_t parse_failures = 0;
    std::size_t unknown_hs = 0;  ///< verdicts whose hs_id has no target; counted only in ALL
};

/// Which presentation orders to count.
enum class OrderFilter { All, Original, Swapped };

TallyTable tally(const std::vector<JudgeVerdict>& verdicts,
                 const std::map<std::string, corpus::TargetGroup>& targets, OrderFilter filter = OrderFilter::All);

/// 100 * wins / total to one decimal, rounded half up in exact integer
/// arithmetic; "0.0" when total is 0.
std::string format_percent(std::size_t wins, std::size_t total);

/// `system_a,system_b,target,total,wins_a,pct_a`.
std::string tally_csv(const TallyTable& t);
nlohmann::json to_json(const TallyTable& t);

}  // namespace csrag::judge
