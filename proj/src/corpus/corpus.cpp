#include "csrag/corpus/corpus.hpp"

#include <algorithm>
#include <set>

#include "csrag/common/csv.hpp"
#include "csrag/common/error.hpp"
#include "csrag/common/io.hpp"
#include "csrag/common/text.hpp"

namespace csrag::corpus {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string& require_string(const json& rec, const char* key) {
    const auto it = rec.find(key);
    if (it == rec.end()) throw ValidationError(std::string("missing field `") + key + "`");
    if (!it->is_string()) throw ValidationError(std::string("field `") + key + "` must be a string");
    return it->get_ref<const std::string&>();
}

DocumentMeta meta_from_fields(const std::string& id, const std::string& fname, const std::string& target,
                              const std::string& type, int year, const std::string& url,
                              const std::string& source, YearRange years) {
    DocumentMeta m;
    if (text::trim(id).empty()) throw ValidationError("empty `id`");
    m.id = id;
    m.fname = fname;
    const auto t = parse_target(target);
    if (!t) throw ValidationError("unknown target `" + target + "`");
    m.target = *t;
    m.doc_type = type;
    if (year < years.min || year > years.max)
        throw ValidationError("year " + std::to_string(year) + " outside [" + std::to_string(years.min) + ", " +
                              std::to_string(years.max) + "]");
    m.year = year;
    m.url = url;
    const auto s = parse_source(source);
    if (!s) throw ValidationError("unknown source `" + source + "`");
    m.source = *s;
    return m;
}

struct Loader {
    YearRange years;
    LoadResult result;
    std::set<std::string> seen_ids;

    void accept(Document doc, const std::string& file, std::size_t record) {
        if (!seen_ids.insert(doc.meta.id).second) {
            result.rejects.push_back({file, record, "duplicate id `" + doc.meta.id + "`"});
            return;
        }
        result.documents.push_back(std::move(doc));
    }

    void record(const json& rec, const std::string& file, std::size_t index) {
        try {
            accept(document_from_json(rec, years), file, index);
        } catch (const ValidationError& e) {
            result.rejects.push_back({file, index, e.what()});
        }
    }

    void load_json_file(const fs::path& p) {
        const std::string data = io::read_file(p);
        json parsed;
        try {
            parsed = json::parse(data);
        } catch (const json::parse_error& e) {
            throw ValidationError(p.string() + ": not valid JSON: " + e.what());
        }
        if (parsed.is_array()) {
            for (std::size_t i = 0; i < parsed.size(); ++i) record(parsed[i], p.string(), i + 1);
        } else {
            record(parsed, p.string(), 1);
        }
    }

    void load_jsonl_file(const fs::path& p) {
        const std::string data = io::read_file(p);
        std::size_t lineno = 0;
        std::size_t pos = 0;
        while (pos < data.size()) {
            auto nl = data.find('\n', pos);
            if (nl == std::string::npos) nl = data.size();
            const std::string line = data.substr(pos, nl - pos);
            pos = nl + 1;
            ++lineno;
            if (text::trim(line).empty()) continue;
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::parse_error& e) {
                result.rejects.push_back({p.string(), lineno, std::string("invalid JSON: ") + e.what()});
                continue;
            }
            record(rec, p.string(), lineno);
        }
    }

    void load_manifest_dir(const fs::path& dir) {
        const fs::path manifest = dir / "manifest.csv";
        const auto table = csv::Table::parse(io::read_file(manifest));
        for (const char* col : {"id", "fname", "target", "type", "year", "url", "source"}) {
            if (!table.has_column(col))
                throw ValidationError(manifest.string() + ": missing column `" + std::string(col) + "`");
        }
        std::size_t index = 0;
        for (const auto& row : table.rows()) {
            ++index;
            try {
                int year = 0;
                const std::string year_s = text::trim(table.get(row, "year"));
                try {
                    std::size_t used = 0;
                    year = std::stoi(year_s, &used);
                    if (used != year_s.size()) throw std::invalid_argument("trailing");
                } catch (const std::exception&) {
                    throw ValidationError("invalid `year` `" + year_s + "`");
                }
                Document doc;
                doc.meta = meta_from_fields(table.get(row, "id"), table.get(row, "fname"), table.get(row, "target"),
                                            table.get(row, "type"), year, table.get(row, "url"),
                                            table.get(row, "source"), years);
                const fs::path text_path = dir / doc.meta.fname;
                if (doc.meta.fname.empty() || !fs::is_regular_file(text_path))
                    throw ValidationError("text file `" + doc.meta.fname + "` not found");
                doc.text = text::normalize(io::read_file(text_path));
                if (doc.text.empty()) throw ValidationError("empty text after normalization");
                accept(std::move(doc), manifest.string(), index);
            } catch (const ValidationError& e) {
                result.rejects.push_back({manifest.string(), index, e.what()});
            }
        }
    }
};

std::vector<std::string> pack_pieces(const std::string& text, std::size_t max_tokens) {
    if (text::count_tokens(text) <= max_tokens) return {text};

    std::vector<std::string> pieces;
    std::string current;
    std::size_t current_tokens = 0;
    auto flush = [&] {
        if (!current.empty()) pieces.push_back(std::move(current));
        current.clear();
        current_tokens = 0;
    };
    for (const auto& sentence : text::split_sentences(text)) {
        const auto spans = text::tokenize_spans(sentence);
        if (spans.size() > max_tokens) {
            flush();
            for (std::size_t i = 0; i < spans.size(); i += max_tokens) {
                const std::size_t begin = i == 0 ? 0 : spans[i].begin;
                const std::size_t end = i + max_tokens >= spans.size() ? sentence.size() : spans[i + max_tokens].begin;
                pieces.push_back(text::trim(std::string_view(sentence).substr(begin, end - begin)));
            }
            continue;
        }
        if (current_tokens + spans.size() > max_tokens) flush();
        if (!current.empty()) current.push_back(' ');
        current += sentence;
        current_tokens += spans.size();
    }
    flush();

    // A token-free fragment (a lone "..." sentence) rides along with its neighbour.
    std::vector<std::string> merged;
    std::string carry;
    for (auto& p : pieces) {
        if (text::count_tokens(p) == 0) {
            if (!merged.empty()) {
                merged.back() += " " + p;
            } else {
                carry += carry.empty() ? p : " " + p;
            }
            continue;
        }
        if (!carry.empty()) {
            p = carry + " " + p;
            carry.clear();
        }
        merged.push_back(std::move(p));
    }
    return merged;
}

}  // namespace

Document document_from_json(const json& rec, YearRange years) {
    if (!rec.is_object()) throw ValidationError("record is not a JSON object");
    const auto year_it = rec.find("year");
    if (year_it == rec.end()) throw ValidationError("missing field `year`");
    if (!year_it->is_number_integer()) throw ValidationError("field `year` must be an integer");
    Document doc;
    doc.meta = meta_from_fields(require_string(rec, "id"), require_string(rec, "fname"),
                                require_string(rec, "target"), require_string(rec, "type"),
                                year_it->get<int>(), require_string(rec, "url"), require_string(rec, "source"),
                                years);
    doc.text = text::normalize(require_string(rec, "text"));
    if (doc.text.empty()) throw ValidationError("empty `text` after normalization");
    return doc;
}

json to_json(const Document& doc) {
    // Field order follows the KB record layout.
    json j = json::object();
    j["id"] = doc.meta.id;
    j["fname"] = doc.meta.fname;
    j["target"] = to_string(doc.meta.target);
    j["type"] = doc.meta.doc_type;
    j["year"] = doc.meta.year;
    j["url"] = doc.meta.url;
    j["source"] = to_string(doc.meta.source);
    j["text"] = doc.text;
    return j;
}

std::string serialize_documents(const std::vector<Document>& docs) {
    std::string out;
    for (const auto& d : docs) out += io::to_jsonl_line(to_json(d));
    return out;
}

json to_json(const Reject& r) { return {{"file", r.file}, {"record", r.record}, {"reason", r.reason}}; }

LoadResult load_corpus(const fs::path& path, YearRange years) {
    Loader loader{years, {}, {}};
    std::error_code ec;
    if (fs::is_directory(path, ec)) {
        std::vector<fs::path> files;
        std::vector<fs::path> manifest_dirs;
        for (const auto& entry : fs::recursive_directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            const auto& p = entry.path();
            if (p.filename() == "manifest.csv") {
                manifest_dirs.push_back(p.parent_path());
            } else if (p.extension() == ".json" || p.extension() == ".jsonl") {
                files.push_back(p);
            }
        }
        std::sort(files.begin(), files.end());
        std::sort(manifest_dirs.begin(), manifest_dirs.end());
        for (const auto& f : files) {
            if (f.extension() == ".jsonl") {
                loader.load_jsonl_file(f);
            } else {
                loader.load_json_file(f);
            }
        }
        for (const auto& d : manifest_dirs) loader.load_manifest_dir(d);
    } else if (fs::is_regular_file(path, ec)) {
        if (path.extension() == ".jsonl") {
            loader.load_jsonl_file(path);
        } else {
            loader.load_json_file(path);
        }
    } else {
        throw IoError("corpus path not found: " + path.string());
    }
    return std::move(loader.result);
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkPolicy& policy) {
    if (policy.min_tokens < 1 || policy.max_tokens < policy.min_tokens)
        throw PreconditionError("chunk policy requires 1 <= min_tokens <= max_tokens");

    struct Piece {
        std::string text;
        std::size_t tokens;
    };
    std::vector<Piece> pieces;
    auto emit = [&](const std::string& t) {
        for (auto& p : pack_pieces(t, policy.max_tokens)) {
            const auto n = text::count_tokens(p);
            pieces.push_back({std::move(p), n});
        }
    };

    std::string pending;
    std::size_t pending_tokens = 0;
    for (const auto& paragraph : text::split_paragraphs(text::normalize(doc.text))) {
        if (!pending.empty()) pending.push_back('\n');
        pending += paragraph;
        pending_tokens += text::count_tokens(paragraph);
        if (pending_tokens < policy.min_tokens) continue;
        emit(pending);
        pending.clear();
        pending_tokens = 0;
    }
    if (!pending.empty()) {
        if (!pieces.empty() && pieces.back().tokens + pending_tokens <= policy.max_tokens) {
            pieces.back().text += "\n" + pending;
            pieces.back().tokens += pending_tokens;
        } else if (pending_tokens > 0) {
            emit(pending);
        }
    }

    std::vector<Chunk> chunks;
    chunks.reserve(pieces.size());
    for (auto& p : pieces) {
        const std::size_t ordinal = chunks.size();
        chunks.push_back({make_chunk_id(doc.meta.id, ordinal), doc.meta.id, ordinal, std::move(p.text), p.tokens});
    }
    return chunks;
}

json to_json(const Chunk& c) {
    json j = json::object();
    j["chunk_id"] = c.chunk_id;
    j["doc_id"] = c.doc_id;
    j["ordinal"] = c.ordinal;
    j["text"] = c.text;
    j["token_count"] = c.token_count;
    return j;
}

Chunk chunk_from_json(const json& j) {
    try {
        return {j.at("chunk_id").get<std::string>(), j.at("doc_id").get<std::string>(),
                j.at("ordinal").get<std::size_t>(), j.at("text").get<std::string>(),
                j.at("token_count").get<std::size_t>()};
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid chunk record: ") + e.what());
    }
}

CorpusStats compute_stats(const std::vector<Document>& docs) {
    CorpusStats s;
    for (const auto& d : docs) {
        const auto words = text::count_tokens(d.text);
        auto& cell = s.by_source_target[std::string(to_string(d.meta.source))][std::string(to_string(d.meta.target))];
        ++cell.documents;
        cell.words += words;
        ++s.total.documents;
        s.total.words += words;
    }
    return s;
}

json to_json(const CorpusStats& s) {
    auto cell_json = [](const CorpusStats::Cell& c) {
        return json{{"documents", c.documents}, {"total_words", c.words}, {"mean_words", c.mean_words()}};
    };
    json by = json::object();
    for (const auto& [source, targets] : s.by_source_target)
        for (const auto& [target, cell] : targets) by[source][target] = cell_json(cell);
    return {{"by_source_target", by}, {"total", cell_json(s.total)}};
}

namespace {

std::string first_field(const json& rec, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        const auto it = rec.find(k);
        if (it != rec.end() && it->is_string()) return it->get<std::string>();
    }
    return {};
}

std::string first_column(const csv::Table& t, const csv::Row& row, std::initializer_list<const char*> keys) {
    for (const char* k : keys)
        if (t.has_column(k)) return t.get(row, k);
    return {};
}

constexpr auto kIdKeys = {"hs_id", "id", "ID"};
constexpr auto kTextKeys = {"text", "hs", "HATE_SPEECH", "hate_speech"};
constexpr auto kTargetKeys = {"target", "TARGET"};
constexpr auto kReferenceKeys = {"reference_cs", "cs", "COUNTER_NARRATIVE", "counter_narrative"};

}  // namespace

HsLoadResult load_hs_dataset(const fs::path& path) {
    struct Raw {
        std::string id, text, target, reference;
    };
    std::vector<Raw> raws;
    const std::string data = io::read_file(path);
    if (path.extension() == ".json" || path.extension() == ".jsonl") {
        std::vector<json> records;
        if (path.extension() == ".jsonl") {
            records = io::read_jsonl(path);
        } else {
            json parsed;
            try {
                parsed = json::parse(data);
            } catch (const json::parse_error& e) {
                throw ValidationError(path.string() + ": not valid JSON: " + e.what());
            }
            if (parsed.is_array()) {
                records.assign(parsed.begin(), parsed.end());
            } else {
                records.push_back(parsed);
            }
        }
        for (const auto& r : records) {
            if (!r.is_object()) {
                raws.push_back({});
                continue;
            }
            raws.push_back({first_field(r, kIdKeys), first_field(r, kTextKeys), first_field(r, kTargetKeys),
                            first_field(r, kReferenceKeys)});
        }
    } else {
        const auto table = csv::Table::parse(data);
        for (const auto& row : table.rows())
            raws.push_back({first_column(table, row, kIdKeys), first_column(table, row, kTextKeys),
                            first_column(table, row, kTargetKeys), first_column(table, row, kReferenceKeys)});
    }

    HsLoadResult out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < raws.size(); ++i) {
        auto& r = raws[i];
        const std::size_t record = i + 1;
        HateSpeechInstance hs;
        hs.hs_id = text::trim(r.id).empty() ? "hs-" + std::to_string(record) : text::trim(r.id);
        hs.text = text::trim(r.text);
        if (hs.text.empty()) {
            out.rejects.push_back({path.string(), record, "missing hate-speech text"});
            continue;
        }
        if (!seen.insert(hs.hs_id).second) {
            out.rejects.push_back({path.string(), record, "duplicate hs_id `" + hs.hs_id + "`"});
            continue;
        }
        const auto t = parse_target(r.target);
        if (t) {
            hs.target = *t;
        } else {
            hs.target = TargetGroup::Other;
            ++out.unknown_target_warnings;
        }
        if (!text::trim(r.reference).empty()) hs.reference_cs = text::trim(r.reference);
        out.instances.push_back(std::move(hs));
    }
    return out;
}

}  // namespace csrag::corpus
