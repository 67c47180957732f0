#include "csrag/pipeline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <mutex>
#include <set>
#include <thread>

#include "csrag/common/csv.hpp"
#include "csrag/common/error.hpp"
#include "csrag/common/hash.hpp"
#include "csrag/common/io.hpp"
#include "csrag/common/parallel.hpp"
#include "csrag/common/text.hpp"

namespace csrag::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;
using index::RetrieverId;

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const auto open = tmpl.find('{', i);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find('}', open + 1);
        if (close == std::string_view::npos) break;
        const auto name = tmpl.substr(open + 1, close - open - 1);
        const bool placeholder = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
            return (c >= 'a' && c <= 'z') || c == '_';
        });
        out.append(tmpl.substr(i, open - i));
        if (!placeholder) {
            out.push_back('{');
            i = open + 1;
            continue;
        }
        const auto it = vars.find(std::string(name));
        if (it == vars.end()) throw PreconditionError("render: no value for placeholder {" + std::string(name) + "}");
        out += it->second;
        i = close + 1;
    }
    out.append(tmpl.substr(i));
    return out;
}

std::string render_summarize_prompt(std::string_view paragraph) {
    return render(kSummarizeTemplate, {{"paragraph_text", std::string(paragraph)}});
}

std::string render_context(const std::vector<std::string>& summaries) {
    std::string out;
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        if (i) out.push_back(' ');
        out += "(" + std::to_string(i + 1) + ") " + summaries[i];
    }
    return out;
}

std::string render_cs_prompt(std::string_view hateful_message, const std::vector<std::string>& summaries) {
    if (summaries.empty()) return render(kNoRagTemplate, {{"hateful_message", std::string(hateful_message)}});
    return render(kRagTemplate,
                  {{"context", render_context(summaries)}, {"hateful_message", std::string(hateful_message)}});
}

std::string enforce_two_sentences(std::string_view text) {
    const auto sentences = text::split_sentences(text);
    if (sentences.size() <= 2) return text::trim(text);
    // Sentences are trimmed substrings of `text`; cut right after the second.
    const auto first = text.find(sentences[0]);
    const auto second = text.find(sentences[1], first + sentences[0].size());
    return text::trim(text.substr(0, second + sentences[1].size()));
}

json to_json(const CounterSpeech& cs) {
    json ev = json::array();
    for (const auto& e : cs.evidence) ev.push_back({{"rank", e.rank}, {"chunk_id", e.chunk_id}, {"doc_id", e.doc_id}});
    return {{"hs_id", cs.hs_id},       {"retriever", index::to_string(cs.retriever)},
            {"model", cs.model_id},    {"text", cs.text},
            {"raw_text", cs.raw_text}, {"evidence", ev},
            {"prompt_hash", cs.prompt_hash}};
}

CounterSpeech counter_speech_from_json(const json& j) {
    try {
        CounterSpeech cs;
        cs.hs_id = j.at("hs_id").get<std::string>();
        const auto r = index::parse_retriever(j.at("retriever").get<std::string>());
        if (!r) throw ValidationError("unknown retriever `" + j.at("retriever").get<std::string>() + "`");
        cs.retriever = *r;
        cs.model_id = j.at("model").get<std::string>();
        cs.text = j.at("text").get<std::string>();
        cs.raw_text = j.value("raw_text", cs.text);
        for (const auto& e : j.value("evidence", json::array()))
            cs.evidence.push_back({e.at("rank").get<std::size_t>(), e.at("chunk_id").get<std::string>(),
                                   e.at("doc_id").get<std::string>()});
        cs.prompt_hash = j.value("prompt_hash", "");
        return cs;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid counter-speech record: ") + e.what());
    }
}

std::string summarize_evidence(providers::ChatProvider& chat, const std::string& model_id,
                               const corpus::Chunk& paragraph, const GenerationParams& params) {
    if (text::trim(paragraph.text).empty()) throw PreconditionError("summarize_evidence: empty paragraph");
    return text::trim(chat.complete(
        {model_id, render_summarize_prompt(paragraph.text), params.max_new_tokens, params.temperature}));
}

CounterSpeech generate_cs(providers::ChatProvider& chat, const std::string& model_id,
                          const corpus::HateSpeechInstance& hs, std::vector<EvidenceSummary> summaries,
                          const GenerationParams& params, std::size_t k, bool allow_partial) {
    const auto n = summaries.size();
    if (!(n == 0 || n == k || (allow_partial && n < k)))
        throw PreconditionError("generate_cs: expected 0 or " + std::to_string(k) + " summaries, got " +
                                std::to_string(n));
    std::stable_sort(summaries.begin(), summaries.end(),
                     [](const EvidenceSummary& a, const EvidenceSummary& b) { return a.rank < b.rank; });
    std::vector<std::string> texts;
    CounterSpeech cs;
    cs.hs_id = hs.hs_id;
    cs.model_id = model_id;
    cs.retriever = n ? summaries.front().retriever : RetrieverId::None;
    for (const auto& s : summaries) {
        texts.push_back(s.summary);
        cs.evidence.push_back({s.rank, s.chunk_id, s.doc_id});
    }
    const auto prompt = render_cs_prompt(hs.text, texts);
    cs.prompt_hash = sha256_hex(prompt);
    cs.raw_text = chat.complete({model_id, prompt, params.max_new_tokens, params.temperature});
    cs.text = enforce_two_sentences(cs.raw_text);
    return cs;
}

std::string_view to_string(SummaryFailurePolicy p) { return p == SummaryFailurePolicy::Abort ? "abort" : "skip"; }

std::optional<SummaryFailurePolicy> parse_summary_failure_policy(std::string_view s) {
    if (s == "abort") return SummaryFailurePolicy::Abort;
    if (s == "skip") return SummaryFailurePolicy::Skip;
    return std::nullopt;
}

void validate(const RunSpec& spec) {
    if (spec.retrievers.empty()) throw ValidationError("run: at least one retriever is required");
    if (spec.models.empty()) throw ValidationError("run: at least one model is required");
    if (spec.k == 0) throw ValidationError("run: k must be >= 1");
    if (std::set<RetrieverId>(spec.retrievers.begin(), spec.retrievers.end()).size() != spec.retrievers.size())
        throw ValidationError("run: duplicate retriever");
    if (std::set<std::string>(spec.models.begin(), spec.models.end()).size() != spec.models.size())
        throw ValidationError("run: duplicate model");
    for (const auto& m : spec.models)
        if (m.empty()) throw ValidationError("run: empty model id");
    if (spec.generation.max_new_tokens < 1 || !(spec.generation.temperature >= 0))
        throw ValidationError("run: invalid generation parameters");
    if (spec.out_dir.empty()) throw ValidationError("run: output directory is required");
}

std::vector<index::RetrievalResult> retrieve(const KnowledgeBase& kb, RetrieverId r, std::string_view query,
                                             std::size_t k) {
    switch (r) {
        case RetrieverId::Bm25:
            if (!kb.bm25) throw PreconditionError("retrieve: no BM25 index loaded");
            return index::retrieve_topk(*kb.bm25, query, k);
        case RetrieverId::DenseA:
            if (!kb.dense_a || !kb.embed_a) throw PreconditionError("retrieve: no dense_a index loaded");
            return index::retrieve_topk(*kb.dense_a, kb.embed_a, query, k);
        case RetrieverId::DenseB:
            if (!kb.dense_b || !kb.embed_b) throw PreconditionError("retrieve: no dense_b index loaded");
            return index::retrieve_topk(*kb.dense_b, kb.embed_b, query, k);
        case RetrieverId::None: break;
    }
    throw PreconditionError("retrieve: the none retriever has no index");
}

std::size_t RunManifest::failed() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const CellRecord& c) { return c.status == CellStatus::Failed; }));
}

std::size_t RunManifest::done() const { return cells.size() - failed(); }

json to_json(const RunManifest& m) {
    json cells = json::array();
    for (const auto& c : m.cells) {
        json j = {{"hs_id", c.hs_id},
                  {"retriever", index::to_string(c.retriever)},
                  {"model", c.model_id},
                  {"status", c.status == CellStatus::Done ? "done" : "failed"},
                  {"prompt_hash", c.prompt_hash},
                  {"summary_prompt_hashes", c.summary_prompt_hashes},
                  {"started_at", c.started_at},
                  {"elapsed_ms", c.elapsed_ms}};
        if (!c.error.empty()) j["error"] = c.error;
        if (c.degraded) j["degraded"] = true;
        cells.push_back(std::move(j));
    }
    return {{"format_version", m.format_version},
            {"run", m.run},
            {"totals", {{"cells", m.cells.size()}, {"done", m.done()}, {"failed", m.failed()}}},
            {"cells", cells}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
    } catch (const json::exception&) {
        throw IncompatibleArtifactError("run manifest: missing format_version");
    }
    if (m.format_version != 1)
        throw IncompatibleArtifactError("run manifest: format_version " + std::to_string(m.format_version) +
                                        " is not supported");
    try {
        m.run = j.value("run", json::object());
        for (const auto& c : j.at("cells")) {
            CellRecord r;
            r.hs_id = c.at("hs_id").get<std::string>();
            const auto ret = index::parse_retriever(c.at("retriever").get<std::string>());
            if (!ret) throw IncompatibleArtifactError("run manifest: unknown retriever");
            r.retriever = *ret;
            r.model_id = c.at("model").get<std::string>();
            r.status = c.at("status").get<std::string>() == "done" ? CellStatus::Done : CellStatus::Failed;
            r.error = c.value("error", "");
            r.prompt_hash = c.value("prompt_hash", "");
            r.summary_prompt_hashes = c.value("summary_prompt_hashes", std::vector<std::string>{});
            r.degraded = c.value("degraded", false);
            r.started_at = c.value("started_at", "");
            r.elapsed_ms = c.value("elapsed_ms", 0.0);
            m.cells.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw IncompatibleArtifactError(std::string("run manifest: malformed: ") + e.what());
    }
    return m;
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string summaries_header() { return "hs_id,retriever,model,rank,chunk_id,doc_id,summary\n"; }

std::string summary_row(const EvidenceSummary& s) {
    return csv::format_row({s.hs_id, std::string(index::to_string(s.retriever)), s.model_id, std::to_string(s.rank),
                            s.chunk_id, s.doc_id, s.summary});
}

std::vector<EvidenceSummary> read_summaries(const fs::path& path) {
    const auto table = csv::Table::parse(io::read_file(path));
    for (const auto* col : {"hs_id", "retriever", "model", "rank", "chunk_id", "doc_id", "summary"})
        if (!table.has_column(col)) throw ValidationError(path.string() + ": missing column `" + col + "`");
    std::vector<EvidenceSummary> out;
    for (const auto& row : table.rows()) {
        EvidenceSummary s;
        s.hs_id = table.get(row, "hs_id");
        const auto r = index::parse_retriever(table.get(row, "retriever"));
        if (!r) throw ValidationError(path.string() + ": unknown retriever `" + table.get(row, "retriever") + "`");
        s.retriever = *r;
        s.model_id = table.get(row, "model");
        try {
            s.rank = std::stoul(table.get(row, "rank"));
        } catch (const std::exception&) {
            throw ValidationError(path.string() + ": invalid rank `" + table.get(row, "rank") + "`");
        }
        s.chunk_id = table.get(row, "chunk_id");
        s.doc_id = table.get(row, "doc_id");
        s.summary = table.get(row, "summary");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<CounterSpeech> read_counter_speech(const fs::path& path) {
    std::vector<CounterSpeech> out;
    for (const auto& j : io::read_jsonl(path)) out.push_back(counter_speech_from_json(j));
    return out;
}

namespace {

using CellKey = std::tuple<std::string, RetrieverId, std::string>;

struct CellResult {
    CellRecord record;
    std::vector<EvidenceSummary> summaries;
    std::optional<CounterSpeech> cs;
};

/// Per-run cache so a chunk summarized by a model under one retriever is not
/// re-requested under another.
class SummaryCache {
  public:
    std::optional<std::string> get(const std::string& model, const std::string& chunk) {
        std::lock_guard lock(mu_);
        const auto it = map_.find({model, chunk});
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }
    void put(const std::string& model, const std::string& chunk, const std::string& summary) {
        std::lock_guard lock(mu_);
        map_[{model, chunk}] = summary;
    }

  private:
    std::mutex mu_;
    std::map<std::pair<std::string, std::string>, std::string> map_;
};

struct RetrievalOutcome {
    std::vector<index::RetrievalResult> results;
    std::string error;
};

CellResult run_cell(const RunSpec& spec, const corpus::HateSpeechInstance& hs, RetrieverId r, const std::string& model,
                    const RetrievalOutcome* retrieval, const KnowledgeBase& kb, providers::ChatProvider& chat,
                    SummaryCache& cache, const Clock& clock) {
    CellResult out;
    auto& rec = out.record;
    rec.hs_id = hs.hs_id;
    rec.retriever = r;
    rec.model_id = model;
    rec.started_at = clock();
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (r == RetrieverId::None) {
            out.cs = generate_cs(chat, model, hs, {}, spec.generation, spec.k);
        } else {
            if (!retrieval->error.empty()) throw Error("retrieval failed: " + retrieval->error);
            const bool skip = spec.on_summary_failure == SummaryFailurePolicy::Skip;
            if (retrieval->results.size() < spec.k && !skip)
                throw Error("insufficient evidence: retrieved " + std::to_string(retrieval->results.size()) + " of " +
                            std::to_string(spec.k) + " paragraphs");
            std::vector<std::string> failures;
            for (const auto& res : retrieval->results) {
                const auto chunk = kb.chunks.find(res.chunk_id);
                if (chunk == kb.chunks.end())
                    throw Error("retrieved chunk `" + res.chunk_id + "` is missing from the knowledge base");
                rec.summary_prompt_hashes.push_back(sha256_hex(render_summarize_prompt(chunk->second.text)));
                EvidenceSummary s{hs.hs_id, r, model, res.rank, res.chunk_id, res.doc_id, {}};
                if (auto cached = cache.get(model, res.chunk_id)) {
                    s.summary = *cached;
                } else {
                    try {
                        s.summary = summarize_evidence(chat, model, chunk->second, spec.generation);
                        cache.put(model, res.chunk_id, s.summary);
                    } catch (const Error& e) {
                        if (!skip) throw Error("summary of `" + res.chunk_id + "` failed: " + e.what());
                        failures.push_back(res.chunk_id);
                        continue;
                    }
                }
                out.summaries.push_back(std::move(s));
            }
            if (out.summaries.empty()) throw Error("no evidence summary available");
            rec.degraded = out.summaries.size() < spec.k;
            if (!failures.empty()) rec.error = "skipped summaries: " + text::join(failures, ", ");
            out.cs = generate_cs(chat, model, hs, out.summaries, spec.generation, spec.k, skip);
        }
        rec.status = CellStatus::Done;
        rec.prompt_hash = out.cs->prompt_hash;
    } catch (const std::exception& e) {
        rec.status = CellStatus::Failed;
        rec.error = e.what();
        out.summaries.clear();
        out.cs.reset();
    }
    rec.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

json run_config(const RunSpec& spec) {
    json retrievers = json::array();
    for (const auto r : spec.retrievers) retrievers.push_back(index::to_string(r));
    return {{"retrievers", retrievers},
            {"models", spec.models},
            {"k", spec.k},
            {"seed", spec.seed},
            {"max_new_tokens", spec.generation.max_new_tokens},
            {"temperature", spec.generation.temperature},
            {"summary_failure_policy", to_string(spec.on_summary_failure)}};
}

}  // namespace

RunManifest run_grid(const RunSpec& spec, const std::vector<corpus::HateSpeechInstance>& hs_all,
                     const KnowledgeBase& kb, providers::ChatProvider& chat, const Clock& clock,
                     std::optional<std::size_t> stop_after_hs) {
    validate(spec);
    for (const auto r : spec.retrievers) {
        if (r == RetrieverId::Bm25 && !kb.bm25) throw PreconditionError("run: bm25 requested but no index loaded");
        if (r == RetrieverId::DenseA && (!kb.dense_a || !kb.embed_a))
            throw PreconditionError("run: dense_a requested but no index loaded");
        if (r == RetrieverId::DenseB && (!kb.dense_b || !kb.embed_b))
            throw PreconditionError("run: dense_b requested but no index loaded");
    }

    std::vector<const corpus::HateSpeechInstance*> selected;
    if (spec.hs_ids.empty()) {
        for (const auto& h : hs_all) selected.push_back(&h);
    } else {
        std::map<std::string, const corpus::HateSpeechInstance*> by_id;
        for (const auto& h : hs_all) by_id[h.hs_id] = &h;
        for (const auto& id : spec.hs_ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) throw ValidationError("run: unknown hs_id `" + id + "`");
            selected.push_back(it->second);
        }
    }

    fs::create_directories(spec.out_dir);
    const auto manifest_path = spec.out_dir / kManifestFile;
    const auto summaries_path = spec.out_dir / kSummariesFile;
    const auto cs_path = spec.out_dir / kCounterSpeechFile;

    RunManifest manifest;
    std::map<CellKey, CellRecord> cells;
    std::vector<EvidenceSummary> summaries;
    std::vector<CounterSpeech> outputs;
    const auto config = run_config(spec);
    if (fs::exists(manifest_path)) {
        json j;
        try {
            j = json::parse(io::read_file(manifest_path));
        } catch (const json::parse_error& e) {
            throw IncompatibleArtifactError(manifest_path.string() + ": not JSON: " + e.what());
        }
        manifest = manifest_from_json(j);
        if (manifest.run.value("k", spec.k) != spec.k)
            throw IncompatibleArtifactError("run: existing outputs were produced with k=" +
                                            manifest.run["k"].dump() + "; use a fresh output directory");
        for (auto& c : manifest.cells) cells[{c.hs_id, c.retriever, c.model_id}] = std::move(c);
        // Rows written for cells the manifest never recorded as done are
        // leftovers of an interrupted write; drop them.
        auto done = [&](const std::string& h, RetrieverId r, const std::string& m) {
            const auto it = cells.find({h, r, m});
            return it != cells.end() && it->second.status == CellStatus::Done;
        };
        if (fs::exists(summaries_path))
            for (auto& s : read_summaries(summaries_path))
                if (done(s.hs_id, s.retriever, s.model_id)) summaries.push_back(std::move(s));
        if (fs::exists(cs_path))
            for (auto& c : read_counter_speech(cs_path))
                if (done(c.hs_id, c.retriever, c.model_id)) outputs.push_back(std::move(c));
    }
    const auto started = manifest.run.value("started_at", clock());
    manifest.run = config;
    manifest.run["started_at"] = started;

    // Canonical order: dataset order of HS, then grid order of retriever and model.
    std::map<std::string, std::size_t> hs_pos;
    for (std::size_t i = 0; i < hs_all.size(); ++i) hs_pos.emplace(hs_all[i].hs_id, i);
    auto pos_of = [](const auto& list, const auto& v) {
        return static_cast<std::size_t>(std::find(list.begin(), list.end(), v) - list.begin());
    };
    auto key = [&](const std::string& h, RetrieverId r, const std::string& m) {
        const auto it = hs_pos.find(h);
        return std::make_tuple(it == hs_pos.end() ? hs_all.size() : it->second, h, pos_of(spec.retrievers, r),
                               pos_of(spec.models, m), m);
    };

    auto write_outputs = [&] {
        std::string s = summaries_header();
        for (const auto& e : summaries) s += summary_row(e);
        io::write_file_atomic(summaries_path, s);
        std::string c;
        for (const auto& o : outputs) c += io::to_jsonl_line(to_json(o));
        io::write_file_atomic(cs_path, c);
    };
    auto write_manifest = [&] {
        manifest.cells.clear();
        for (const auto& [_, c] : cells) manifest.cells.push_back(c);
        std::stable_sort(manifest.cells.begin(), manifest.cells.end(), [&](const CellRecord& a, const CellRecord& b) {
            return key(a.hs_id, a.retriever, a.model_id) < key(b.hs_id, b.retriever, b.model_id);
        });
        io::write_file_atomic(manifest_path, to_json(manifest).dump(2) + "\n");
    };
    write_outputs();

    SummaryCache cache;
    std::size_t processed = 0;
    for (const auto* hs : selected) {
        if (stop_after_hs && processed >= *stop_after_hs) break;
        std::vector<std::pair<RetrieverId, std::string>> pending;
        for (const auto r : spec.retrievers)
            for (const auto& m : spec.models) {
                const auto it = cells.find({hs->hs_id, r, m});
                if (it == cells.end() || it->second.status != CellStatus::Done) pending.emplace_back(r, m);
            }
        if (pending.empty()) continue;
        ++processed;

        std::map<RetrieverId, RetrievalOutcome> retrieval;
        for (const auto& [r, _] : pending) {
            if (r == RetrieverId::None || retrieval.count(r)) continue;
            auto& outcome = retrieval[r];
            try {
                outcome.results = retrieve(kb, r, hs->text, spec.k);
            } catch (const Error& e) {
                outcome.error = e.what();
            }
        }

        std::vector<CellResult> results(pending.size());
        parallel_for(pending.size(), std::max<std::size_t>(spec.max_parallel, 1), [&](std::size_t i) {
            const auto& [r, m] = pending[i];
            const auto it = retrieval.find(r);
            results[i] = run_cell(spec, *hs, r, m, it == retrieval.end() ? nullptr : &it->second, kb, chat, cache,
                                  clock);
        });

        std::string summary_rows;
        std::string cs_lines;
        for (auto& res : results) {
            for (auto& s : res.summaries) {
                summary_rows += summary_row(s);
                summaries.push_back(std::move(s));
            }
            if (res.cs) {
                cs_lines += io::to_jsonl_line(to_json(*res.cs));
                outputs.push_back(std::move(*res.cs));
            }
            auto& rec = res.record;
            cells[{rec.hs_id, rec.retriever, rec.model_id}] = std::move(rec);
        }
        // Outputs first, then the manifest that marks the cells done.
        io::append_file(summaries_path, summary_rows);
        io::append_file(cs_path, cs_lines);
        write_manifest();
    }

    std::stable_sort(summaries.begin(), summaries.end(), [&](const EvidenceSummary& a, const EvidenceSummary& b) {
        return std::make_pair(key(a.hs_id, a.retriever, a.model_id), a.rank) <
               std::make_pair(key(b.hs_id, b.retriever, b.model_id), b.rank);
    });
    std::stable_sort(outputs.begin(), outputs.end(), [&](const CounterSpeech& a, const CounterSpeech& b) {
        return key(a.hs_id, a.retriever, a.model_id) < key(b.hs_id, b.retriever, b.model_id);
    });
    write_outputs();
    manifest.run["finished_at"] = clock();
    write_manifest();
    return manifest;
}

}  // namespace csrag::pipeline
