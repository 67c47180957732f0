#include "csrag/index/index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "csrag/common/error.hpp"
#include "csrag/common/io.hpp"
#include "csrag/common/text.hpp"

namespace csrag::index {
using nlohmann::json;

std::string_view to_string(RetrieverId r) {
    switch (r) {
        case RetrieverId::Bm25: return "bm25";
        case RetrieverId::DenseA: return "dense_a";
        case RetrieverId::DenseB: return "dense_b";
        case RetrieverId::None: return "none";
    }
    return "none";
}

std::optional<RetrieverId> parse_retriever(std::string_view s) {
    const auto key = text::to_lower_ascii(text::trim(s));
    for (auto r : {RetrieverId::Bm25, RetrieverId::DenseA, RetrieverId::DenseB, RetrieverId::None})
        if (key == to_string(r)) return r;
    return std::nullopt;
}

namespace {

/// Sorted positions of the k best scores; ties resolve to the lower position.
std::vector<std::size_t> best_positions(const std::vector<double>& scores, std::size_t k) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    order.resize(n);
    return order;
}

std::vector<std::size_t> sorted_chunk_order(std::span<const corpus::Chunk> chunks) {
    std::vector<std::size_t> order(chunks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return chunks[a].chunk_id < chunks[b].chunk_id; });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (chunks[order[i]].chunk_id == chunks[order[i - 1]].chunk_id)
            throw PreconditionError("duplicate chunk id `" + chunks[order[i]].chunk_id + "`");
    return order;
}

json header(RetrieverId r, std::size_t count) {
    return {{"format_version", kSnapshotFormatVersion}, {"retriever_id", std::string(to_string(r))},
            {"chunk_count", count}};
}

}  // namespace

Bm25Index Bm25Index::build(std::span<const corpus::Chunk> chunks, Bm25Params params) {
    if (chunks.empty()) throw PreconditionError("build_bm25: empty chunk list");
    if (!(params.k1 > 0.0) || params.b < 0.0 || params.b > 1.0)
        throw PreconditionError("build_bm25: require k1 > 0 and b in [0, 1]");

    Bm25Index idx;
    idx.params_ = params;
    const auto order = sorted_chunk_order(chunks);
    std::uint64_t total = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const auto& c = chunks[order[pos]];
        idx.chunk_ids_.push_back(c.chunk_id);
        idx.doc_ids_.push_back(c.doc_id);
        const auto tokens = text::tokenize(c.text);
        idx.lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += tokens.size();
        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) {
            auto it = idx.postings_.find(term);
            if (it == idx.postings_.end()) it = idx.postings_.emplace(std::string(term), std::vector<Posting>{}).first;
            it->second.push_back({static_cast<std::uint32_t>(pos), count});
        }
    }
    idx.avg_len_ = static_cast<double>(total) / static_cast<double>(idx.chunk_ids_.size());
    return idx;
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

std::optional<std::size_t> Bm25Index::position(std::string_view chunk_id) const {
    const auto it = std::lower_bound(chunk_ids_.begin(), chunk_ids_.end(), chunk_id,
                                     [](const std::string& a, std::string_view b) { return a < b; });
    if (it == chunk_ids_.end() || *it != chunk_id) return std::nullopt;
    return static_cast<std::size_t>(it - chunk_ids_.begin());
}

double Bm25Index::idf(std::string_view term) const {
    const double df = static_cast<double>(document_frequency(term));
    if (df == 0.0) return 0.0;
    const double n = static_cast<double>(size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double Bm25Index::term_weight(double idf, std::uint32_t tf, std::uint32_t len) const {
    const double f = tf;
    const double norm = avg_len_ > 0.0 ? static_cast<double>(len) / avg_len_ : 1.0;
    return idf * f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * norm));
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::string_view chunk_id) const {
    const auto pos = position(chunk_id);
    if (!pos) throw PreconditionError("bm25_score: unknown chunk id `" + std::string(chunk_id) + "`");
    double total = 0.0;
    for (const auto& term : query_tokens) {
        const auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto& list = it->second;
        const auto p = std::lower_bound(list.begin(), list.end(), *pos,
                                        [](const Posting& a, std::size_t b) { return a.chunk < b; });
        if (p == list.end() || p->chunk != *pos) continue;
        total += term_weight(idf(term), p->tf, lengths_[*pos]);
    }
    return total;
}

json Bm25Index::to_snapshot() const {
    json h = header(RetrieverId::Bm25, size());
    h["params"] = {{"k1", params_.k1}, {"b", params_.b}};
    json postings = json::object();
    for (const auto& [term, list] : postings_) {
        json arr = json::array();
        for (const auto& p : list) arr.push_back({p.chunk, p.tf});
        postings[term] = std::move(arr);
    }
    return {{"header", h},
            {"chunk_ids", chunk_ids_},
            {"doc_ids", doc_ids_},
            {"doc_lengths", lengths_},
            {"postings", std::move(postings)}};
}

Bm25Index Bm25Index::from_snapshot(const json& j) {
    Bm25Index idx;
    try {
        const auto& h = j.at("header");
        idx.params_.k1 = h.at("params").at("k1").get<double>();
        idx.params_.b = h.at("params").at("b").get<double>();
        idx.chunk_ids_ = j.at("chunk_ids").get<std::vector<std::string>>();
        idx.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
        idx.lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
        for (const auto& [term, arr] : j.at("postings").items()) {
            auto& list = idx.postings_[term];
            for (const auto& p : arr) list.push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
        }
        if (h.at("chunk_count").get<std::size_t>() != idx.chunk_ids_.size() ||
            idx.doc_ids_.size() != idx.chunk_ids_.size() || idx.lengths_.size() != idx.chunk_ids_.size())
            throw IncompatibleArtifactError("bm25 snapshot: inconsistent chunk counts");
    } catch (const json::exception& e) {
        throw IncompatibleArtifactError(std::string("bm25 snapshot: malformed: ") + e.what());
    }
    if (idx.chunk_ids_.empty()) throw IncompatibleArtifactError("bm25 snapshot: empty index");
    std::uint64_t total = 0;
    for (const auto l : idx.lengths_) total += l;
    idx.avg_len_ = static_cast<double>(total) / static_cast<double>(idx.chunk_ids_.size());
    return idx;
}

std::vector<RetrievalResult> retrieve_topk(const Bm25Index& index, std::string_view query_text, std::size_t k) {
    if (k == 0) throw PreconditionError("retrieve_topk: k must be >= 1");
    const auto query = text::tokenize(query_text);
    if (query.empty()) throw PreconditionError("retrieve_topk: query has no tokens after normalization");

    std::vector<double> scores(index.size(), 0.0);
    for (const auto& term : query) {
        const auto it = index.postings_.find(term);
        if (it == index.postings_.end()) continue;
        const double idf = index.idf(term);
        for (const auto& p : it->second) scores[p.chunk] += index.term_weight(idf, p.tf, index.lengths_[p.chunk]);
    }
    std::vector<RetrievalResult> out;
    for (const auto pos : best_positions(scores, k))
        out.push_back({index.chunk_ids_[pos], index.doc_ids_[pos], scores[pos], out.size() + 1, RetrieverId::Bm25});
    return out;
}

void normalize_l2(Vector& v) {
    double sq = 0.0;
    for (const double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw PreconditionError("cannot normalize a zero or non-finite vector");
    for (double& x : v) x /= norm;
}

VectorIndex VectorIndex::build(std::span<const corpus::Chunk> chunks, const EmbedFn& embed, std::string model_id,
                               RetrieverId retriever) {
    if (chunks.empty()) throw PreconditionError("build_vector_index: empty chunk list");
    if (retriever != RetrieverId::DenseA && retriever != RetrieverId::DenseB)
        throw PreconditionError("build_vector_index: retriever must be dense_a or dense_b");
    const auto order = sorted_chunk_order(chunks);
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto i : order) texts.push_back(chunks[i].text);
    auto vectors = embed(texts);
    if (vectors.size() != texts.size())
        throw PreconditionError("build_vector_index: embedder returned " + std::to_string(vectors.size()) +
                                " vectors for " + std::to_string(texts.size()) + " texts");

    VectorIndex idx;
    idx.retriever_ = retriever;
    idx.model_id_ = std::move(model_id);
    idx.dim_ = vectors.front().size();
    if (idx.dim_ == 0) throw PreconditionError("build_vector_index: zero-dimensional embedding");
    idx.data_.reserve(idx.dim_ * vectors.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        auto& v = vectors[pos];
        if (v.size() != idx.dim_)
            throw PreconditionError("build_vector_index: dimension mismatch (" + std::to_string(v.size()) + " vs " +
                                    std::to_string(idx.dim_) + ")");
        normalize_l2(v);
        idx.data_.insert(idx.data_.end(), v.begin(), v.end());
        idx.chunk_ids_.push_back(chunks[order[pos]].chunk_id);
        idx.doc_ids_.push_back(chunks[order[pos]].doc_id);
    }
    return idx;
}

json VectorIndex::to_snapshot() const {
    json h = header(retriever_, size());
    h["model_id"] = model_id_;
    h["dim"] = dim_;
    json vectors = json::array();
    for (std::size_t i = 0; i < size(); ++i) {
        const auto v = vector(i);
        vectors.push_back(std::vector<double>(v.begin(), v.end()));
    }
    return {{"header", h}, {"chunk_ids", chunk_ids_}, {"doc_ids", doc_ids_}, {"vectors", std::move(vectors)}};
}

VectorIndex VectorIndex::from_snapshot(const json& j) {
    VectorIndex idx;
    try {
        const auto& h = j.at("header");
        idx.retriever_ = parse_retriever(h.at("retriever_id").get<std::string>()).value_or(RetrieverId::None);
        idx.model_id_ = h.at("model_id").get<std::string>();
        idx.dim_ = h.at("dim").get<std::size_t>();
        idx.chunk_ids_ = j.at("chunk_ids").get<std::vector<std::string>>();
        idx.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
        for (const auto& v : j.at("vectors")) {
            if (v.size() != idx.dim_) throw IncompatibleArtifactError("dense snapshot: vector dimension mismatch");
            for (const auto& x : v) idx.data_.push_back(x.get<double>());
        }
        if (h.at("chunk_count").get<std::size_t>() != idx.chunk_ids_.size() ||
            idx.doc_ids_.size() != idx.chunk_ids_.size() || idx.data_.size() != idx.dim_ * idx.chunk_ids_.size())
            throw IncompatibleArtifactError("dense snapshot: inconsistent counts");
    } catch (const json::exception& e) {
        throw IncompatibleArtifactError(std::string("dense snapshot: malformed: ") + e.what());
    }
    if (idx.chunk_ids_.empty()) throw IncompatibleArtifactError("dense snapshot: empty index");
    return idx;
}

std::vector<RetrievalResult> retrieve_topk(const VectorIndex& index, Vector query, std::size_t k) {
    if (k == 0) throw PreconditionError("retrieve_topk: k must be >= 1");
    if (query.size() != index.dim())
        throw PreconditionError("retrieve_topk: query dimension " + std::to_string(query.size()) + " != index " +
                                std::to_string(index.dim()));
    normalize_l2(query);
    std::vector<double> scores(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto v = index.vector(i);
        double dot = 0.0;
        for (std::size_t d = 0; d < v.size(); ++d) dot += v[d] * query[d];
        scores[i] = std::clamp(dot, -1.0, 1.0);
    }
    std::vector<RetrievalResult> out;
    for (const auto pos : best_positions(scores, k))
        out.push_back({index.chunk_ids()[pos], index.doc_ids()[pos], scores[pos], out.size() + 1, index.retriever()});
    return out;
}

std::vector<RetrievalResult> retrieve_topk(const VectorIndex& index, const EmbedFn& embed,
                                           std::string_view query_text, std::size_t k) {
    auto vecs = embed({std::string(query_text)});
    if (vecs.size() != 1) throw PreconditionError("retrieve_topk: embedder returned no query vector");
    return retrieve_topk(index, std::move(vecs.front()), k);
}

void save_snapshot(const std::filesystem::path& path, const json& snapshot) {
    io::write_file_atomic(path, snapshot.dump() + "\n");
}

json load_snapshot(const std::filesystem::path& path, std::optional<RetrieverId> expected) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw IncompatibleArtifactError(path.string() + ": not a snapshot: " + e.what());
    }
    const auto h = j.find("header");
    if (h == j.end() || !h->is_object() || !h->contains("format_version"))
        throw IncompatibleArtifactError(path.string() + ": snapshot header missing");
    const auto& version = (*h)["format_version"];
    if (!version.is_number_integer() || version.get<int>() != kSnapshotFormatVersion)
        throw IncompatibleArtifactError(path.string() + ": snapshot format_version " + version.dump() +
                                        " is not supported (expected " + std::to_string(kSnapshotFormatVersion) + ")");
    if (expected) {
        const auto id = h->value("retriever_id", std::string{});
        if (id != to_string(*expected))
            throw IncompatibleArtifactError(path.string() + ": snapshot is for retriever `" + id + "`, expected `" +
                                            std::string(to_string(*expected)) + "`");
    }
    return j;
}

Bm25Index load_bm25(const std::filesystem::path& path) {
    return Bm25Index::from_snapshot(load_snapshot(path, RetrieverId::Bm25));
}

VectorIndex load_dense(const std::filesystem::path& path, RetrieverId expected) {
    return VectorIndex::from_snapshot(load_snapshot(path, expected));
}

}  // namespace csrag::index
