#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/corpus/types.hpp"

namespace csrag::index {

enum class RetrieverId { Bm25, DenseA, DenseB, None };

std::string_view to_string(RetrieverId r);
/// Accepts "bm25", "dense_a", "dense_b", "none" (case-insensitive).
std::optional<RetrieverId> parse_retriever(std::string_view s);

struct RetrievalResult {
    std::string chunk_id;
    std::string doc_id;
    double score = 0.0;
    std::size_t rank = 0;  ///< 1-based
    RetrieverId retriever = RetrieverId::Bm25;
};

inline constexpr int kSnapshotFormatVersion = 1;
inline constexpr std::size_t kDefaultTopK = 3;

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::uint32_t chunk = 0;  ///< position in chunk_ids()
    std::uint32_t tf = 0;
};

/// Okapi BM25 over chunk texts. Chunks are stored sorted by chunk_id so that
/// the internal position doubles as the tie-break order.
class Bm25Index {
  public:
    /// Throws PreconditionError on an empty chunk list or invalid params.
    static Bm25Index build(std::span<const corpus::Chunk> chunks, Bm25Params params = {});

    [[nodiscard]] std::size_t size() const noexcept { return chunk_ids_.size(); }
    [[nodiscard]] double avg_doc_len() const noexcept { return avg_len_; }
    [[nodiscard]] const Bm25Params& params() const noexcept { return params_; }
    [[nodiscard]] const std::vector<std::string>& chunk_ids() const noexcept { return chunk_ids_; }
    [[nodiscard]] const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    [[nodiscard]] const std::vector<std::uint32_t>& doc_lengths() const noexcept { return lengths_; }
    [[nodiscard]] const std::map<std::string, std::vector<Posting>, std::less<>>& postings() const noexcept {
        return postings_;
    }
    [[nodiscard]] std::size_t document_frequency(std::string_view term) const;
    [[nodiscard]] std::optional<std::size_t> position(std::string_view chunk_id) const;

    /// ln((N - df + 0.5) / (df + 0.5) + 1); zero for unseen terms.
    [[nodiscard]] double idf(std::string_view term) const;

    /// Sum over query tokens (duplicates included) of each token's BM25
    /// contribution. Throws PreconditionError for an unknown chunk id.
    [[nodiscard]] double score(std::span<const std::string> query_tokens, std::string_view chunk_id) const;

    [[nodiscard]] nlohmann::json to_snapshot() const;
    static Bm25Index from_snapshot(const nlohmann::json& j);

  private:
    [[nodiscard]] double term_weight(double idf, std::uint32_t tf, std::uint32_t len) const;

    Bm25Params params_;
    std::vector<std::string> chunk_ids_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> lengths_;
    double avg_len_ = 0.0;
    std::map<std::string, std::vector<Posting>, std::less<>> postings_;

    friend std::vector<RetrievalResult> retrieve_topk(const Bm25Index&, std::string_view, std::size_t);
};

using Vector = std::vector<double>;

/// Maps a batch of texts to one vector each, in order.
using EmbedFn = std::function<std::vector<Vector>(const std::vector<std::string>&)>;

/// Scales `v` to unit L2 norm. Throws PreconditionError for a zero vector.
void normalize_l2(Vector& v);

/// Exact-scan dense index of unit vectors.
class VectorIndex {
  public:
    /// Embeds every chunk text, L2-normalizes and stores it. Throws
    /// PreconditionError when dimensions disagree or a vector is zero.
    static VectorIndex build(std::span<const corpus::Chunk> chunks, const EmbedFn& embed, std::string model_id,
                             RetrieverId retriever = RetrieverId::DenseA);

    [[nodiscard]] std::size_t size() const noexcept { return chunk_ids_.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] const std::string& model_id() const noexcept { return model_id_; }
    [[nodiscard]] RetrieverId retriever() const noexcept { return retriever_; }
    [[nodiscard]] const std::vector<std::string>& chunk_ids() const noexcept { return chunk_ids_; }
    [[nodiscard]] const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    [[nodiscard]] std::span<const double> vector(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }

    [[nodiscard]] nlohmann::json to_snapshot() const;
    static VectorIndex from_snapshot(const nlohmann::json& j);

  private:
    RetrieverId retriever_ = RetrieverId::DenseA;
    std::string model_id_;
    std::size_t dim_ = 0;
    std::vector<std::string> chunk_ids_;
    std::vector<std::string> doc_ids_;
    std::vector<double> data_;  ///< row-major, size() x dim()
};

/// Exactly min(k, size) results, scores non-increasing, ties by ascending
/// chunk_id. Throws PreconditionError when k == 0 or the query has no tokens.
std::vector<RetrievalResult> retrieve_topk(const Bm25Index& index, std::string_view query_text,
                                           std::size_t k = kDefaultTopK);

/// Cosine scoring against an already-embedded query (normalized here).
std::vector<RetrievalResult> retrieve_topk(const VectorIndex& index, Vector query, std::size_t k = kDefaultTopK);

/// Embeds the raw query text with `embed` and scores it.
std::vector<RetrievalResult> retrieve_topk(const VectorIndex& index, const EmbedFn& embed,
                                           std::string_view query_text, std::size_t k = kDefaultTopK);

void save_snapshot(const std::filesystem::path& path, const nlohmann::json& snapshot);

/// Reads a snapshot and checks its header. Throws IncompatibleArtifactError
/// when the format version or retriever family does not match.
nlohmann::json load_snapshot(const std::filesystem::path& path, std::optional<RetrieverId> expected = std::nullopt);

Bm25Index load_bm25(const std::filesystem::path& path);
VectorIndex load_dense(const std::filesystem::path& path, RetrieverId expected);

}  // namespace csrag::index
