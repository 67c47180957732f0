#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/corpus/types.hpp"

namespace csrag::corpus {

/// A record that failed validation, kept for the rejects report.
struct Reject {
    std::string file;
    std::size_t record = 0;  ///< 1-based line or array index within `file`
    std::string reason;
};

struct YearRange {
    int min = 2000;
    int max = 2025;
};

struct LoadResult {
    std::vector<Document> documents;
    std::vector<Reject> rejects;
};

/// Loads KB JSON records from a `.json` file (object or array), a `.jsonl`
/// file, or a directory of such files (searched recursively, sorted by path).
/// A directory holding `manifest.csv` also loads plain-text documents named
/// by its `fname` column. Invalid records land in `rejects`; an unreadable
/// file throws IoError.
LoadResult load_corpus(const std::filesystem::path& path, YearRange years = {});

/// Validates one KB record; throws ValidationError describing the first problem.
Document document_from_json(const nlohmann::json& record, YearRange years = {});

nlohmann::json to_json(const Document& doc);

/// One KB record per line, in input order.
std::string serialize_documents(const std::vector<Document>& docs);

nlohmann::json to_json(const Reject& r);

struct ChunkPolicy {
    std::size_t min_tokens = 30;
    std::size_t max_tokens = 300;
};

/// Paragraph chunking. Paragraphs below `min_tokens` are merged forward;
/// oversized text is packed by sentence and hard-split at `max_tokens` when a
/// single sentence is too long. A short remainder at the end of a document is
/// appended to the previous chunk when that keeps it within `max_tokens`.
/// Text is never dropped, so a document shorter than `min_tokens` still yields
/// one chunk; text without any token yields none.
std::vector<Chunk> chunk_document(const Document& doc, const ChunkPolicy& policy = {});

nlohmann::json to_json(const Chunk& c);
Chunk chunk_from_json(const nlohmann::json& j);

/// Per (source, target) document counts and word totals.
struct CorpusStats {
    struct Cell {
        std::size_t documents = 0;
        std::size_t words = 0;
        [[nodiscard]] double mean_words() const {
            return documents ? static_cast<double>(words) / static_cast<double>(documents) : 0.0;
        }
    };
    std::map<std::string, std::map<std::string, Cell>> by_source_target;
    Cell total;
};

CorpusStats compute_stats(const std::vector<Document>& docs);
nlohmann::json to_json(const CorpusStats& s);

struct HsLoadResult {
    std::vector<HateSpeechInstance> instances;
    std::vector<Reject> rejects;
    std::size_t unknown_target_warnings = 0;
};

/// Loads the hate-speech dataset from CSV (`hs_id,text,target,reference_cs`,
/// also accepting the MT-CONAN column names) or JSON/JSONL. Unknown target
/// labels map to OTHER and are counted.
HsLoadResult load_hs_dataset(const std::filesystem::path& path);

}  // namespace csrag::corpus
