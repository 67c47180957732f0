#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/corpus/types.hpp"
#include "csrag/index/index.hpp"
#include "csrag/providers/providers.hpp"

namespace csrag::pipeline {

// Prompt templates, verbatim. Placeholders are `{name}`.
inline constexpr std::string_view kSummarizeTemplate =
    "Summarize this paragraph {paragraph_text} into exactly 2 sentences, without truncating the last sentence:\n"
    "\n"
    "Summary:";

inline constexpr std::string_view kNoRagTemplate =
    "Hateful message: {hateful_message}\n"
    "Generate a counter-speech that is concise, respectful, persuasive, self-contained, and suitable for social "
    "media.\n"
    "Keep it short (maximum 2 sentences). Do NOT truncate the last sentence.\n"
    "\n"
    "Counter-speech:";

inline constexpr std::string_view kRagTemplate =
    "Here are three evidence summaries you MUST use to inform your response: {context}.\n"
    "\n"
    "Task: Respond to the hateful message below by writing a short counter-speech that is respectful, persuasive, "
    "self-contained, and suitable for social media (maximum 2 sentences). Ground your response in the evidence above "
    "and do NOT truncate the last sentence.\n"
    "\n"
    "Hateful message: {hateful_message}\n"
    "\n"
    "Counter-speech:";

/// Substitutes every `{name}` present in `vars`. Throws PreconditionError if
/// the template names a placeholder missing from `vars`. Substituted text is
/// not rescanned.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

std::string render_summarize_prompt(std::string_view paragraph);

/// "(1) s1 (2) s2 (3) s3", in the given order.
std::string render_context(const std::vector<std::string>& summaries);

/// No-RAG template when `summaries` is empty, RAG template otherwise.
std::string render_cs_prompt(std::string_view hateful_message, const std::vector<std::string>& summaries);

/// First two sentences of `text` (trimmed). Text with at most two sentences
/// is returned trimmed but otherwise unchanged.
std::string enforce_two_sentences(std::string_view text);

struct GenerationParams {
    int max_new_tokens = 150;
    double temperature = 0.5;
};

struct EvidenceSummary {
    std::string hs_id;
    index::RetrieverId retriever = index::RetrieverId::Bm25;
    std::string model_id;
    std::size_t rank = 0;  ///< 1-based retrieval rank
    std::string chunk_id;
    std::string doc_id;
    std::string summary;
    friend bool operator==(const EvidenceSummary&, const EvidenceSummary&) = default;
};

struct EvidenceRef {
    std::size_t rank = 0;
    std::string chunk_id;
    std::string doc_id;
    friend bool operator==(const EvidenceRef&, const EvidenceRef&) = default;
};

struct CounterSpeech {
    std::string hs_id;
    index::RetrieverId retriever = index::RetrieverId::None;
    std::string model_id;
    std::string text;      ///< after two-sentence enforcement
    std::string raw_text;  ///< completion as returned
    std::vector<EvidenceRef> evidence;
    std::string prompt_hash;  ///< sha256 of the exact rendered prompt
    friend bool operator==(const CounterSpeech&, const CounterSpeech&) = default;
};

nlohmann::json to_json(const CounterSpeech& cs);
CounterSpeech counter_speech_from_json(const nlohmann::json& j);

/// Summarizes one paragraph with `model_id`. The completion is stored as
/// returned (outer whitespace trimmed). Throws PreconditionError on an empty
/// paragraph; provider errors propagate.
std::string summarize_evidence(providers::ChatProvider& chat, const std::string& model_id,
                               const corpus::Chunk& paragraph, const GenerationParams& params = {});

/// Generates a counter-speech. `summaries` must hold 0 (no-RAG) or exactly
/// `k` items, unless `allow_partial` permits 1..k; they are used in rank order.
CounterSpeech generate_cs(providers::ChatProvider& chat, const std::string& model_id,
                          const corpus::HateSpeechInstance& hs, std::vector<EvidenceSummary> summaries,
                          const GenerationParams& params = {}, std::size_t k = index::kDefaultTopK,
                          bool allow_partial = false);

/// What to do with a RAG cell when one of its summaries fails.
enum class SummaryFailurePolicy { Abort, Skip };
std::string_view to_string(SummaryFailurePolicy p);
std::optional<SummaryFailurePolicy> parse_summary_failure_policy(std::string_view s);

struct RunSpec {
    std::vector<index::RetrieverId> retrievers;
    std::vector<std::string> models;
    std::size_t k = index::kDefaultTopK;
    std::vector<std::string> hs_ids;  ///< empty selects every instance
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    GenerationParams generation;
    SummaryFailurePolicy on_summary_failure = SummaryFailurePolicy::Abort;
    std::size_t max_parallel = 1;
};

/// Throws ValidationError for an empty or duplicated grid axis, or k == 0.
void validate(const RunSpec& spec);

/// The chunk store plus whichever indexes the run needs.
struct KnowledgeBase {
    std::map<std::string, corpus::Chunk, std::less<>> chunks;
    std::optional<index::Bm25Index> bm25;
    std::optional<index::VectorIndex> dense_a;
    std::optional<index::VectorIndex> dense_b;
    index::EmbedFn embed_a;  ///< query embedder matching dense_a
    index::EmbedFn embed_b;
};

std::vector<index::RetrievalResult> retrieve(const KnowledgeBase& kb, index::RetrieverId r, std::string_view query,
                                             std::size_t k);

enum class CellStatus { Done, Failed };

struct CellRecord {
    std::string hs_id;
    index::RetrieverId retriever = index::RetrieverId::None;
    std::string model_id;
    CellStatus status = CellStatus::Failed;
    std::string error;
    std::string prompt_hash;
    std::vector<std::string> summary_prompt_hashes;
    bool degraded = false;  ///< generated with fewer than k summaries (skip policy)
    std::string started_at;
    double elapsed_ms = 0.0;
};

struct RunManifest {
    int format_version = 1;
    nlohmann::json run = nlohmann::json::object();  ///< grid configuration and run timestamps
    std::vector<CellRecord> cells;

    [[nodiscard]] std::size_t failed() const;
    [[nodiscard]] std::size_t done() const;
};

nlohmann::json to_json(const RunManifest& m);
/// Throws IncompatibleArtifactError on an unknown format version.
RunManifest manifest_from_json(const nlohmann::json& j);

inline constexpr std::string_view kSummariesFile = "summaries.csv";
inline constexpr std::string_view kCounterSpeechFile = "cs.jsonl";
inline constexpr std::string_view kManifestFile = "run_manifest.json";

/// Wall-clock source for manifest timestamps (ISO-8601 UTC).
using Clock = std::function<std::string()>;
std::string utc_now();

/// Runs every (hs, retriever, model) cell not already completed in
/// `spec.out_dir`. Output files are canonically ordered at the end, so a
/// resumed run produces the same bytes as an uninterrupted one.
/// `stop_after_hs` (for tests) ends the run after that many HS instances.
RunManifest run_grid(const RunSpec& spec, const std::vector<corpus::HateSpeechInstance>& hs,
                     const KnowledgeBase& kb, providers::ChatProvider& chat, const Clock& clock = utc_now,
                     std::optional<std::size_t> stop_after_hs = std::nullopt);

std::vector<CounterSpeech> read_counter_speech(const std::filesystem::path& path);
std::vector<EvidenceSummary> read_summaries(const std::filesystem::path& path);
std::string summaries_header();
std::string summary_row(const EvidenceSummary& s);

}  // namespace csrag::pipeline
