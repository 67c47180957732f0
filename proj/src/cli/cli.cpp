#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "csrag/common/error.hpp"

namespace csrag::cli {

namespace {

/// The config file must be read before the flags are bound so that flags
/// override it and --help shows the effective values.
std::optional<std::string> scan_config_path(const std::vector<std::string>& args) {
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if ((a == "-c" || a == "--config") && i + 1 < args.size())
            path = args[++i];
        else if (a.rfind("--config=", 0) == 0)
            path = a.substr(9);
    }
    return path;
}

int report_error(std::ostream& err, int code, const std::string& what) {
    err << "error: " << what << "\n";
    return code;
}

int guarded(const std::function<int()>& f, std::ostream& err) {
    try {
        return f();
    } catch (const IncompatibleArtifactError& e) {
        return report_error(err, kExitIncompatible, e.what());
    } catch (const ValidationError& e) {
        return report_error(err, kExitInvalid, e.what());
    } catch (const PreconditionError& e) {
        return report_error(err, kExitInvalid, e.what());
    } catch (const IoError& e) {
        return report_error(err, kExitInvalid, e.what());
    } catch (const ProviderError& e) {
        return report_error(err, e.kind() == ProviderErrorKind::Auth ? kExitInvalid : kExitPartial, e.what());
    } catch (const nlohmann::json::exception& e) {
        return report_error(err, kExitIncompatible, std::string("malformed artifact: ") + e.what());
    } catch (const std::exception& e) {
        return report_error(err, kExitPartial, e.what());
    }
}

void add_provider_options(CLI::App& app, Config& c) {
    app.add_flag("--stub", c.provider.stub, "Use the deterministic offline providers");
    app.add_option("--provider-mode", c.provider.mode, "live or replay")->check(CLI::IsMember({"live", "replay"}));
    app.add_option("--base-url", c.provider.base_url, "OpenAI-compatible endpoint, e.g. https://api.openai.com/v1");
    app.add_option("--api-key-env", c.provider.api_key_env, "Environment variable holding the API key");
    app.add_option("--replay-log", c.provider.replay_log, "Record (live) or replay (replay) exchanges here");
    app.add_option("--timeout-ms", c.provider.timeout_ms, "Per-request timeout");
    app.add_option("--max-retries", c.provider.max_retries, "Retries on 429, 5xx and timeouts");
    app.add_option("--requests-per-minute", c.provider.requests_per_minute, "Client-side rate limit");
    app.add_option("--max-in-flight", c.provider.max_in_flight, "Concurrent requests per client");
}

/// CLI11 prints nothing for empty defaults or for flags; spell them out so
/// every option's default is visible in --help.
void show_all_defaults(CLI::App& app) {
    for (auto* opt : app.get_options()) {
        if (opt->get_name() == "--help" || opt->get_name() == "--help-all") continue;
        if (opt->get_expected_max() == 0) {
            if (opt->get_description().find("[default") == std::string::npos)
                opt->description(opt->get_description() + " [default: off]");
        } else if (opt->get_default_str().empty() || opt->get_default_str() == "{}") {
            opt->default_str(opt->get_expected_max() > 1 ? "[]" : "\"\"");
        }
    }
    for (auto* sub : app.get_subcommands({})) show_all_defaults(*sub);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    Config cfg;
    if (const auto path = scan_config_path(args)) {
        const int rc = guarded([&] {
            cfg = load_config(*path, env);
            return kExitOk;
        }, err);
        if (rc != kExitOk) return rc;
    }

    CLI::App app{"Retrieval-augmented counter-speech generation and evaluation.", "csrag"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Help for every command");
    std::string config_path;
    app.add_option("-c,--config", config_path, "JSON config file (config_version 1); flags override its values");
    app.add_option("--work-dir", cfg.work_dir, "Directory holding every artifact");
    app.add_option("--seed", cfg.seed, "Seed for every random choice, stubs included");
    add_provider_options(app, cfg);

    auto* ingest = app.add_subcommand("ingest", "Load and chunk the corpus into <work>/kb");
    ingest->add_option("--input", cfg.corpus.input, "KB .json/.jsonl file or directory");
    ingest->add_option("--crawl", cfg.corpus.crawl_spec, "Crawl spec JSON; documents land in <work>/raw");
    ingest->add_option("--year-min", cfg.corpus.year_min, "Earliest document year kept");
    ingest->add_option("--year-max", cfg.corpus.year_max, "Latest document year kept");
    ingest->add_option("--min-tokens", cfg.corpus.min_tokens, "Chunks shorter than this merge forward");
    ingest->add_option("--max-tokens", cfg.corpus.max_tokens, "Upper bound on chunk length");

    auto* idx = app.add_subcommand("index", "Build retriever snapshots in <work>/index");
    idx->add_option("--retrievers", cfg.index.retrievers, "Any of bm25, dense_a, dense_b")->delimiter(',');
    idx->add_option("--k1", cfg.index.k1, "BM25 term saturation");
    idx->add_option("--b", cfg.index.b, "BM25 length normalization");
    idx->add_option("--dense-a-model", cfg.index.dense_a_model, "Embedding model for dense_a");
    idx->add_option("--dense-b-model", cfg.index.dense_b_model, "Embedding model for dense_b");

    auto* run = app.add_subcommand("run", "Generate counter-speech for the (hs, retriever, model) grid");
    run->add_option("--hs", cfg.run.hs, "Hate-speech dataset (CSV, JSON or JSONL)");
    run->add_option("--retrievers", cfg.run.retrievers, "Any of none, bm25, dense_a, dense_b")->delimiter(',');
    run->add_option("--models", cfg.run.models, "Generation model ids")->delimiter(',');
    run->add_option("--k", cfg.run.k, "Evidence paragraphs per RAG cell");
    run->add_option("--hs-ids", cfg.run.hs_ids, "Restrict to these hs ids (empty: all)")->delimiter(',');
    run->add_option("--max-new-tokens", cfg.run.max_new_tokens, "Completion budget");
    run->add_option("--temperature", cfg.run.temperature, "Sampling temperature");
    run->add_option("--on-summary-failure", cfg.run.on_summary_failure, "abort or skip")
        ->check(CLI::IsMember({"abort", "skip"}));
    run->add_option("--max-parallel", cfg.run.max_parallel, "Cells processed concurrently");
    run->add_flag("--keep-going", cfg.run.keep_going, "Exit 0 even when some cells failed");

    auto* evaluate = app.add_subcommand("evaluate", "Score <work>/run outputs into <work>/eval");
    evaluate->add_option("--hs", cfg.run.hs, "Hate-speech dataset with reference counter-speech");
    evaluate->add_option("--bertscore-model", cfg.metrics.bertscore_model, "Token embedding model for BERTScore");
    evaluate->add_option("--moderation-model", cfg.provider.moderation_model, "Moderation model for safety");
    evaluate->add_option("--safety", cfg.metrics.safety, "Score safety with the moderation provider");

    auto* judge = app.add_subcommand("judge", "Pairwise LLM-as-judge comparison into <work>/judge/<name>");
    judge->add_option("--a", cfg.judge.system_a, "System A as <retriever>:<model>");
    judge->add_option("--b", cfg.judge.system_b, "System B as <retriever>:<model>");
    judge->add_option("--run-b", cfg.judge.run_b, "Run directory holding system B (empty: <work>/run)");
    judge->add_option("--hs", cfg.run.hs, "Hate-speech dataset (texts and targets)");
    judge->add_option("--judge-model", cfg.judge.model, "Judge model id");
    judge->add_option("--template", cfg.judge.template_id, "rag_vs_norag or method_comparison");
    judge->add_option("--swap", cfg.judge.swap, "none, swapped or both presentation orders");
    judge->add_option("--name", cfg.judge.name, "Output subdirectory (empty: derived from the systems)");
    judge->add_option("--max-new-tokens", cfg.judge.max_new_tokens, "Judge completion budget");
    judge->add_option("--temperature", cfg.judge.temperature, "Judge sampling temperature");
    judge->add_option("--max-parallel", cfg.judge.max_parallel, "Judge requests in flight");
    judge->add_flag("--keep-going", cfg.judge.keep_going, "Exit 0 even when some verdicts failed");

    auto* st = app.add_subcommand("stats", "Significance tests and human-study tables into <work>/stats");
    st->add_option("--annotations", cfg.stats.annotations, "Human-study annotation CSV (optional)");

    auto* report = app.add_subcommand("report", "Markdown and CSV tables from existing artifacts");

    show_all_defaults(app);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitInvalid;
    }

    return guarded([&] {
        validate(cfg);
        if (ingest->parsed()) return detail::cmd_ingest(cfg, out, err);
        if (idx->parsed()) return detail::cmd_index(cfg, out, err);
        if (run->parsed()) return detail::cmd_run(cfg, out, err);
        if (evaluate->parsed()) return detail::cmd_evaluate(cfg, out, err);
        if (judge->parsed()) return detail::cmd_judge(cfg, out, err);
        if (st->parsed()) return detail::cmd_stats(cfg, out, err);
        if (report->parsed()) return detail::cmd_report(cfg, out, err);
        return static_cast<int>(kExitInvalid);
    }, err);
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace csrag::cli
