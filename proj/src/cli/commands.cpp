#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <ostream>
#include <set>

#include "csrag/common/csv.hpp"
#include "csrag/common/http.hpp"
#include "csrag/common/io.hpp"
#include "csrag/corpus/crawler.hpp"
#include "csrag/judge/judge.hpp"

namespace csrag::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::pair<index::RetrieverId, std::string> parse_system(std::string_view label) {
    const auto colon = label.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == label.size())
        throw ValidationError("system label must look like <retriever>:<model>, got '" + std::string(label) + "'");
    const auto r = index::parse_retriever(label.substr(0, colon));
    if (!r) throw ValidationError("unknown retriever '" + std::string(label.substr(0, colon)) + "'");
    return {*r, std::string(label.substr(colon + 1))};
}

std::string format_p(double p, double log10_p) {
    char buf[64];
    if (p > 0 && std::isfinite(p)) {
        std::snprintf(buf, sizeof buf, "%.3e", p);
        return buf;
    }
    if (!std::isfinite(log10_p)) return "0";
    int e = static_cast<int>(std::floor(log10_p));
    double mant = std::pow(10.0, log10_p - e);
    if (mant >= 9.9995) {
        mant /= 10;
        ++e;
    }
    std::snprintf(buf, sizeof buf, "%.3fe%c%d", mant, e < 0 ? '-' : '+', std::abs(e));
    return buf;
}

std::string significance_csv(const std::vector<stats::MetricTest>& tests) {
    std::vector<std::string> pairs;
    for (const auto& t : tests)
        for (const auto& pw : t.pairwise) {
            auto name = pw.system_a + "_vs_" + pw.system_b;
            if (std::find(pairs.begin(), pairs.end(), name) == pairs.end()) pairs.push_back(std::move(name));
        }
    csv::Row header = {"model", "metric", "n", "friedman_chi2", "friedman_p"};
    for (const auto& p : pairs) header.push_back("p_" + p);
    std::string out = csv::format_row(header);
    for (const auto& t : tests) {
        csv::Row row = {t.model, t.metric, std::to_string(t.n_samples)};
        if (t.friedman) {
            row.push_back(io::format_fixed(t.friedman->statistic, 4));
            row.push_back(format_p(t.friedman->p_value, t.friedman->log10_p));
        } else {
            row.insert(row.end(), {"", ""});
        }
        for (const auto& name : pairs) {
            const auto it = std::find_if(t.pairwise.begin(), t.pairwise.end(), [&](const stats::PairwiseTest& pw) {
                return pw.system_a + "_vs_" + pw.system_b == name;
            });
            if (it == t.pairwise.end()) {
                row.emplace_back();
                continue;
            }
            const double m = static_cast<double>(t.pairwise.size());
            const double log10_adj = std::min(0.0, it->wilcoxon.log10_p + std::log10(m));
            row.push_back(format_p(it->p_adjusted, log10_adj));
        }
        out += csv::format_row(row);
    }
    return out;
}

namespace detail {
namespace {

void require(const fs::path& p) {
    if (!fs::exists(p)) throw MissingArtifactError(p);
}

void write_out(const fs::path& p, std::string_view content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    io::write_file_atomic(p, content);
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

/// Builds the providers for a command. Remote clients log structured events
/// under <work>/logs.
providers::ProviderSet make_providers(const Config& c) {
    if (c.provider.stub) return providers::make_stub_providers(c.seed);
    providers::ProviderConfig pc;
    pc.base_url = c.provider.base_url;
    pc.api_key_env = c.provider.api_key_env;
    pc.timeout = std::chrono::milliseconds(c.provider.timeout_ms);
    pc.max_retries = c.provider.max_retries;
    pc.initial_backoff = std::chrono::milliseconds(c.provider.initial_backoff_ms);
    pc.requests_per_minute = c.provider.requests_per_minute;
    pc.max_in_flight = c.provider.max_in_flight;
    pc.embed_batch_size = c.provider.embed_batch_size;
    pc.replay_log = c.provider.replay_log;

    const fs::path log = fs::path(c.work_dir) / "logs" / "provider_events.jsonl";
    fs::create_directories(log.parent_path());
    auto mu = std::make_shared<std::mutex>();
    providers::EventSink sink = [log, mu](const providers::ProviderEvent& e) {
        std::lock_guard lock(*mu);
        io::append_file(log, io::to_jsonl_line(providers::to_json(e)));
    };
    auto client = c.provider.mode == "replay" ? providers::make_replay_client(pc, sink)
                                              : providers::make_openai_client(pc, sink);
    client->set_moderation_model(c.provider.moderation_model);
    return {client, client, client};
}

std::vector<corpus::Chunk> read_chunks(const fs::path& p) {
    require(p);
    std::vector<corpus::Chunk> out;
    for (const auto& j : io::read_jsonl(p)) out.push_back(corpus::chunk_from_json(j));
    return out;
}

corpus::HsLoadResult read_hs(const Config& c, std::ostream& err) {
    if (c.run.hs.empty()) throw ValidationError("run.hs (--hs) is not set");
    require(c.run.hs);
    auto hs = corpus::load_hs_dataset(c.run.hs);
    for (const auto& r : hs.rejects) err << "hs reject: " << r.file << ":" << r.record << ": " << r.reason << "\n";
    if (hs.unknown_target_warnings)
        err << "warning: " << hs.unknown_target_warnings << " hs rows had an unknown target, mapped to OTHER\n";
    return hs;
}

index::EmbedFn embed_with(std::shared_ptr<providers::EmbedProvider> p, std::string model) {
    return [p = std::move(p), model = std::move(model)](const std::vector<std::string>& texts) {
        return p->embed(model, texts);
    };
}

std::string sanitize(std::string_view s) {
    std::string out;
    for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.' ? ch : '_';
    return out;
}

std::string csv_to_markdown(std::string_view csv_text) {
    const auto rows = csv::parse(csv_text);
    if (rows.empty()) return "(empty)\n";
    auto cell = [](const std::string& s) {
        std::string o;
        for (char ch : s) {
            if (ch == '|') o += '\\';
            o += ch == '\n' ? ' ' : ch;
        }
        return o;
    };
    std::string out = "|";
    for (const auto& h : rows[0]) out += " " + cell(h) + " |";
    out += "\n|";
    for (std::size_t i = 0; i < rows[0].size(); ++i) out += " --- |";
    out += "\n";
    for (std::size_t r = 1; r < rows.size(); ++r) {
        out += "|";
        for (const auto& f : rows[r]) out += " " + cell(f) + " |";
        out += "\n";
    }
    return out;
}

}  // namespace

int cmd_ingest(const Config& c, std::ostream& out, std::ostream& err) {
    if (c.corpus.input.empty() && c.corpus.crawl_spec.empty())
        throw ValidationError("ingest needs corpus.input (--input) or corpus.crawl_spec (--crawl)");
    const corpus::YearRange years{c.corpus.year_min, c.corpus.year_max};
    std::vector<corpus::Document> docs;
    std::vector<corpus::Reject> rejects;
    std::size_t fetch_errors = 0;

    auto absorb = [&](corpus::LoadResult r) {
        std::set<std::string> ids;
        for (const auto& d : docs) ids.insert(d.meta.id);
        for (auto& d : r.documents) {
            if (!ids.insert(d.meta.id).second) {
                rejects.push_back({d.meta.fname, 0, "duplicate document id " + d.meta.id});
                continue;
            }
            docs.push_back(std::move(d));
        }
        rejects.insert(rejects.end(), r.rejects.begin(), r.rejects.end());
    };

    if (!c.corpus.crawl_spec.empty()) {
        require(c.corpus.crawl_spec);
        json spec_json;
        try {
            spec_json = json::parse(io::read_file(c.corpus.crawl_spec));
        } catch (const json::parse_error& e) {
            throw ValidationError("crawl spec " + c.corpus.crawl_spec + ": " + e.what());
        }
        const auto spec = corpus::parse_crawl_spec(spec_json);
        const fs::path raw = fs::path(c.work_dir) / "raw";
        auto getter = http::make_getter(spec.timeout);
        const auto report = corpus::fetch_documents(spec, raw, *getter);
        fetch_errors = report.errors.size();
        out << "crawl: " << report.new_documents << " new documents, " << report.manifest.size()
            << " in manifest, " << fetch_errors << " fetch errors\n";
        for (const auto& e : report.errors)
            err << "fetch error: " << e.url << " after " << e.attempts << " attempts: " << e.reason << "\n";
        absorb(corpus::load_corpus(raw, years));
    }
    if (!c.corpus.input.empty()) {
        require(c.corpus.input);
        absorb(corpus::load_corpus(c.corpus.input, years));
    }

    const corpus::ChunkPolicy policy{c.corpus.min_tokens, c.corpus.max_tokens};
    std::string chunks_text;
    std::string manifest = corpus::manifest_header();
    std::size_t n_chunks = 0;
    for (const auto& d : docs) {
        for (const auto& ch : corpus::chunk_document(d, policy)) {
            chunks_text += io::to_jsonl_line(corpus::to_json(ch));
            ++n_chunks;
        }
        manifest += corpus::manifest_row(d.meta);
    }
    std::string rejects_text;
    for (const auto& r : rejects) rejects_text += io::to_jsonl_line(corpus::to_json(r));

    const fs::path dir = kb_dir(c);
    write_out(dir / "documents.jsonl", corpus::serialize_documents(docs));
    write_out(dir / "chunks.jsonl", chunks_text);
    write_out(dir / "manifest.csv", manifest);
    write_out(dir / "rejects.jsonl", rejects_text);
    write_out(dir / "stats.json", pretty(corpus::to_json(corpus::compute_stats(docs))));

    out << "ingest: " << docs.size() << " documents, " << n_chunks << " chunks, " << rejects.size()
        << " rejected -> " << dir.string() << "\n";
    for (const auto& r : rejects) err << "reject: " << r.file << ":" << r.record << ": " << r.reason << "\n";
    return rejects.empty() && fetch_errors == 0 ? kExitOk : kExitPartial;
}

int cmd_index(const Config& c, std::ostream& out, std::ostream&) {
    const auto chunks = read_chunks(kb_dir(c) / "chunks.jsonl");
    std::optional<providers::ProviderSet> prov;
    for (const auto& name : c.index.retrievers) {
        const auto id = index::parse_retriever(name);
        if (!id || *id == index::RetrieverId::None) throw ValidationError("unknown retriever '" + name + "'");
        const fs::path path = index_dir(c) / (std::string(index::to_string(*id)) + ".json");
        if (*id == index::RetrieverId::Bm25) {
            const auto idx = index::Bm25Index::build(chunks, {c.index.k1, c.index.b});
            fs::create_directories(path.parent_path());
            index::save_snapshot(path, idx.to_snapshot());
            out << "index: bm25 over " << idx.size() << " chunks -> " << path.string() << "\n";
            continue;
        }
        const bool is_a = *id == index::RetrieverId::DenseA;
        const std::string& model = is_a ? c.index.dense_a_model : c.index.dense_b_model;
        if (model.empty())
            throw ValidationError(std::string("missing embedder config for ") + name + ": set index." + name +
                                  "_model");
        if (!prov) prov = make_providers(c);
        const auto idx = index::VectorIndex::build(chunks, embed_with(prov->embed, model), model, *id);
        fs::create_directories(path.parent_path());
        index::save_snapshot(path, idx.to_snapshot());
        out << "index: " << name << " (" << model << ", dim " << idx.dim() << ") over " << idx.size()
            << " chunks -> " << path.string() << "\n";
    }
    return kExitOk;
}

int cmd_run(const Config& c, std::ostream& out, std::ostream& err) {
    pipeline::RunSpec spec;
    for (const auto& name : c.run.retrievers) {
        const auto id = index::parse_retriever(name);
        if (!id) throw ValidationError("unknown retriever '" + name + "'");
        spec.retrievers.push_back(*id);
    }
    spec.models = c.run.models;
    spec.k = c.run.k;
    spec.hs_ids = c.run.hs_ids;
    spec.out_dir = run_dir(c);
    spec.seed = c.seed;
    spec.generation = {c.run.max_new_tokens, c.run.temperature};
    spec.on_summary_failure = *pipeline::parse_summary_failure_policy(c.run.on_summary_failure);
    spec.max_parallel = c.run.max_parallel;
    pipeline::validate(spec);

    const auto hs = read_hs(c, err);
    auto prov = make_providers(c);

    pipeline::KnowledgeBase kb;
    const bool needs_kb = std::any_of(spec.retrievers.begin(), spec.retrievers.end(),
                                      [](auto r) { return r != index::RetrieverId::None; });
    if (needs_kb) {
        for (auto& ch : read_chunks(kb_dir(c) / "chunks.jsonl")) {
            auto id = ch.chunk_id;
            kb.chunks.emplace(std::move(id), std::move(ch));
        }
    }
    for (auto r : spec.retrievers) {
        if (r == index::RetrieverId::None) continue;
        const fs::path path = index_dir(c) / (std::string(index::to_string(r)) + ".json");
        require(path);
        if (r == index::RetrieverId::Bm25) {
            kb.bm25 = index::load_bm25(path);
        } else if (r == index::RetrieverId::DenseA) {
            kb.dense_a = index::load_dense(path, r);
            kb.embed_a = embed_with(prov.embed, kb.dense_a->model_id());
        } else {
            kb.dense_b = index::load_dense(path, r);
            kb.embed_b = embed_with(prov.embed, kb.dense_b->model_id());
        }
    }

    const auto manifest = pipeline::run_grid(spec, hs.instances, kb, *prov.chat);
    out << "run: " << manifest.done() << " cells done, " << manifest.failed() << " failed -> "
        << spec.out_dir.string() << "\n";
    for (const auto& cell : manifest.cells)
        if (cell.status == pipeline::CellStatus::Failed)
            err << "failed cell " << cell.hs_id << "/" << index::to_string(cell.retriever) << "/" << cell.model_id
                << ": " << cell.error << "\n";
    return manifest.failed() > 0 && !c.run.keep_going ? kExitPartial : kExitOk;
}

int cmd_evaluate(const Config& c, std::ostream& out, std::ostream& err) {
    const fs::path cs_path = run_dir(c) / pipeline::kCounterSpeechFile;
    require(cs_path);
    const auto outputs = pipeline::read_counter_speech(cs_path);
    const auto hs = read_hs(c, err);
    std::map<std::string, std::vector<std::string>> refs;
    for (const auto& h : hs.instances)
        if (h.reference_cs && !h.reference_cs->empty()) refs[h.hs_id].push_back(*h.reference_cs);

    auto prov = make_providers(c);
    metrics::MetricConfig mc;
    mc.bleu_epsilon = c.metrics.bleu_epsilon;
    mc.rouge_beta = c.metrics.rouge_beta;
    mc.meteor = {c.metrics.meteor_alpha, c.metrics.meteor_beta, c.metrics.meteor_gamma};
    mc.bertscore_model = c.metrics.bertscore_model;
    const auto embedder = metrics::make_token_embedder(prov.embed, c.metrics.bertscore_model);
    const auto report =
        metrics::evaluate(outputs, refs, embedder, c.metrics.safety ? prov.moderation.get() : nullptr, mc);

    const fs::path dir = eval_dir(c);
    write_out(dir / "metrics.json", pretty(metrics::to_json(report)));
    write_out(dir / "table2.csv", metrics::table2_csv(report));
    write_out(dir / "per_sample.csv", metrics::per_sample_csv(report));

    std::size_t safety_failures = 0, missing = 0;
    for (const auto& cell : report.cells) {
        safety_failures += cell.safety_failures;
        missing += cell.missing_reference;
    }
    out << "evaluate: " << outputs.size() << " outputs in " << report.cells.size() << " cells -> " << dir.string()
        << "\n";
    if (missing) err << "warning: " << missing << " outputs have no reference; reference metrics left empty\n";
    if (safety_failures) err << safety_failures << " moderation calls failed\n";
    return safety_failures ? kExitPartial : kExitOk;
}

int cmd_judge(const Config& c, std::ostream& out, std::ostream& err) {
    if (c.judge.system_a.empty() || c.judge.system_b.empty())
        throw ValidationError("judge needs judge.system_a and judge.system_b (--a, --b)");
    const auto [ra, ma] = parse_system(c.judge.system_a);
    const auto [rb, mb] = parse_system(c.judge.system_b);
    const auto tmpl = judge::parse_template_id(c.judge.template_id);
    if (!tmpl) throw ValidationError("unknown judge template '" + c.judge.template_id + "'");
    const auto swap = judge::parse_swap_policy(c.judge.swap);
    if (!swap) throw ValidationError("unknown swap policy '" + c.judge.swap + "'");

    auto select = [](const fs::path& file, index::RetrieverId r, const std::string& model,
                     const std::string& label) {
        require(file);
        std::vector<pipeline::CounterSpeech> set;
        for (auto& cs : pipeline::read_counter_speech(file))
            if (cs.retriever == r && cs.model_id == model) set.push_back(std::move(cs));
        if (set.empty()) throw ValidationError("no outputs for " + label + " in " + file.string());
        return set;
    };
    const fs::path file_a = run_dir(c) / pipeline::kCounterSpeechFile;
    const fs::path file_b =
        c.judge.run_b.empty() ? file_a : fs::path(c.judge.run_b) / pipeline::kCounterSpeechFile;
    const auto set_a = select(file_a, ra, ma, c.judge.system_a);
    const auto set_b = select(file_b, rb, mb, c.judge.system_b);

    const auto hs = read_hs(c, err);
    std::map<std::string, corpus::HateSpeechInstance> hs_map;
    std::map<std::string, corpus::TargetGroup> targets;
    for (const auto& h : hs.instances) {
        hs_map.emplace(h.hs_id, h);
        targets.emplace(h.hs_id, h.target);
    }

    const auto pairs = judge::build_pairs(set_a, set_b, c.judge.system_a, c.judge.system_b, hs_map, *tmpl, *swap);
    auto prov = make_providers(c);
    const auto verdicts = judge::judge_all(pairs, *prov.chat, c.judge.model,
                                           {c.judge.max_new_tokens, c.judge.temperature}, c.judge.max_parallel);

    const std::string name =
        c.judge.name.empty() ? sanitize(c.judge.system_a) + "__vs__" + sanitize(c.judge.system_b) : c.judge.name;
    const fs::path dir = judge_dir(c) / name;
    std::string lines;
    for (const auto& v : verdicts) lines += io::to_jsonl_line(judge::to_json(v));
    const auto all = judge::tally(verdicts, targets);
    write_out(dir / "verdicts.jsonl", lines);
    write_out(dir / "tally.csv", judge::tally_csv(all));
    write_out(dir / "tally.json", pretty(judge::to_json(all)));
    write_out(dir / "tally_original.csv", judge::tally_csv(judge::tally(verdicts, targets, judge::OrderFilter::Original)));
    write_out(dir / "tally_swapped.csv", judge::tally_csv(judge::tally(verdicts, targets, judge::OrderFilter::Swapped)));

    out << "judge: " << verdicts.size() << " verdicts, " << all.failed << " failed, " << all.parse_failures
        << " unparsed -> " << dir.string() << "\n";
    if (!all.rows.empty())
        out << "  " << c.judge.system_a << " wins " << all.rows.front().wins_a << "/" << all.rows.front().total
            << " (" << judge::format_percent(all.rows.front().wins_a, all.rows.front().total) << "%)\n";
    return all.failed > 0 && !c.judge.keep_going ? kExitPartial : kExitOk;
}

int cmd_stats(const Config& c, std::ostream& out, std::ostream& err) {
    const fs::path metrics_path = eval_dir(c) / "metrics.json";
    require(metrics_path);
    json mj;
    try {
        mj = json::parse(io::read_file(metrics_path));
    } catch (const json::parse_error& e) {
        throw IncompatibleArtifactError(metrics_path.string() + ": " + e.what());
    }
    const auto report = metrics::metric_report_from_json(mj);
    const auto tests = stats::significance_tests(report);
    const fs::path dir = stats_dir(c);
    write_out(dir / "significance.json", pretty(stats::to_json(tests)));
    write_out(dir / "significance.csv", significance_csv(tests));
    out << "stats: " << tests.size() << " (model, metric) tests -> " << dir.string() << "\n";

    if (c.stats.annotations.empty()) return kExitOk;
    require(c.stats.annotations);
    std::vector<stats::Rejection> parse_rejects;
    const auto records = stats::read_annotations(io::read_file(c.stats.annotations), parse_rejects);
    auto summary = stats::aggregate_annotations(records);
    summary.rejected.insert(summary.rejected.begin(), parse_rejects.begin(), parse_rejects.end());
    write_out(dir / "annotations.json", pretty(stats::to_json(summary)));
    write_out(dir / "table5.csv", stats::annotation_table_csv(summary));
    out << "stats: " << summary.evaluations << " evaluations, " << summary.effective << " effective ("
        << stats::format_percent0(summary.effective, std::max<std::size_t>(summary.evaluations, 1)) << "%)\n";
    for (const auto& r : summary.rejected)
        err << "annotation reject line " << r.line << " (" << r.annotator_id << "," << r.hs_id << "," << r.method
            << "): " << r.reason << "\n";
    return summary.rejected.empty() ? kExitOk : kExitPartial;
}

int cmd_report(const Config& c, std::ostream& out, std::ostream&) {
    const fs::path table2 = eval_dir(c) / "table2.csv";
    require(table2);
    const fs::path dir = report_dir(c);
    std::string md = "# Counter-speech experiment report\n\n## Automatic evaluation\n\n";
    const auto t2 = io::read_file(table2);
    md += csv_to_markdown(t2);
    write_out(dir / "table2.csv", t2);

    std::vector<fs::path> judged;
    if (fs::is_directory(judge_dir(c)))
        for (const auto& e : fs::directory_iterator(judge_dir(c)))
            if (fs::exists(e.path() / "tally.csv")) judged.push_back(e.path());
    std::sort(judged.begin(), judged.end());
    for (const auto& jd : judged) {
        const auto name = jd.filename().string();
        const auto t = io::read_file(jd / "tally.csv");
        md += "\n## Pairwise judging: " + name + "\n\n" + csv_to_markdown(t);
        write_out(dir / ("judge_" + name + ".csv"), t);
    }
    if (const auto sig = stats_dir(c) / "significance.csv"; fs::exists(sig)) {
        const auto t = io::read_file(sig);
        md += "\n## Significance (Friedman, Bonferroni-adjusted Wilcoxon)\n\n" + csv_to_markdown(t);
        write_out(dir / "significance.csv", t);
    }
    if (const auto t5 = stats_dir(c) / "table5.csv"; fs::exists(t5)) {
        const auto t = io::read_file(t5);
        md += "\n## Human evaluation\n\n" + csv_to_markdown(t);
        write_out(dir / "table5.csv", t);
    }
    write_out(dir / "report.md", md);
    out << "report: " << (dir / "report.md").string() << "\n";
    return kExitOk;
}

}  // namespace detail
}  // namespace csrag::cli
