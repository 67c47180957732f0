#include <catch_amalgamated.hpp>

#include <mutex>
#include <random>
#include <set>

#include "csrag/common/error.hpp"
#include "csrag/common/hash.hpp"
#include "csrag/common/io.hpp"
#include "csrag/common/text.hpp"
#include "csrag/pipeline/pipeline.hpp"
#include "../support/temp_dir.hpp"

using namespace csrag;
using namespace csrag::pipeline;
using index::RetrieverId;
using nlohmann::json;

namespace {

/// Returns scripted completions and remembers every prompt.
class ScriptedChat : public providers::ChatProvider {
  public:
    std::function<std::string(const providers::ChatRequest&)> reply = [](const providers::ChatRequest&) {
        return std::string("Fine. Reply.");
    };
    std::vector<providers::ChatRequest> requests;
    std::mutex mu;

    std::string complete(const providers::ChatRequest& req) override {
        {
            std::lock_guard lock(mu);
            requests.push_back(req);
        }
        return reply(req);
    }
};

corpus::HateSpeechInstance hs(const std::string& id, const std::string& text) {
    return {id, text, corpus::TargetGroup::Migrants, std::nullopt};
}

std::vector<corpus::Chunk> kb_chunks() {
    const std::vector<std::string> texts = {
        "Migrants contribute to the economy through taxes and labour.",
        "Refugees are protected under international law and the 1951 convention.",
        "Women face discrimination in employment and pay across the union.",
        "Hate crimes against Muslims increased according to agency surveys.",
        "Antisemitism remains a concern reported by Jewish communities.",
        "People with disabilities have the right to accessible services.",
        "Racial profiling by police violates equal treatment principles.",
        "Same-sex couples gained legal recognition in many member states."};
    std::vector<corpus::Chunk> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        corpus::Chunk c;
        c.doc_id = "doc" + std::to_string(i / 2);
        c.ordinal = i % 2;
        c.chunk_id = corpus::make_chunk_id(c.doc_id, c.ordinal);
        c.text = texts[i];
        c.token_count = text::count_tokens(c.text);
        out.push_back(c);
    }
    return out;
}

KnowledgeBase make_kb(const providers::ProviderSet& stubs, const std::vector<corpus::Chunk>& chunks) {
    KnowledgeBase kb;
    for (const auto& c : chunks) kb.chunks.emplace(c.chunk_id, c);
    kb.bm25 = index::Bm25Index::build(chunks);
    auto embed_with = [&stubs](std::string model) -> index::EmbedFn {
        return [e = stubs.embed, model](const std::vector<std::string>& t) { return e->embed(model, t); };
    };
    kb.embed_a = embed_with("sbert");
    kb.embed_b = embed_with("bge-m3");
    kb.dense_a = index::VectorIndex::build(chunks, kb.embed_a, "sbert", RetrieverId::DenseA);
    kb.dense_b = index::VectorIndex::build(chunks, kb.embed_b, "bge-m3", RetrieverId::DenseB);
    return kb;
}

std::vector<corpus::HateSpeechInstance> hs_set() {
    return {hs("h1", "Migrants are stealing our jobs and living off taxes."),
            hs("h2", "Women should stay out of the workplace."), hs("h3", "Muslims are all dangerous."),
            hs("h4", "Disabled people are a burden on society.")};
}

RunSpec grid(const std::filesystem::path& out) {
    RunSpec spec;
    spec.retrievers = {RetrieverId::Bm25, RetrieverId::DenseA, RetrieverId::DenseB};
    spec.models = {"gpt-4o-mini", "llama-3.3-70b", "mistral-7b", "command-r"};
    spec.out_dir = out;
    return spec;
}

const Clock fixed_clock = [] { return std::string("2025-01-01T00:00:00Z"); };

}  // namespace

TEST_CASE("prompt templates match the shipped asset files", "[pipeline][prompts]") {
    const std::filesystem::path dir = CSRAG_ASSETS_DIR;
    CHECK(io::read_file(dir / "prompts/summarize.txt") == kSummarizeTemplate);
    CHECK(io::read_file(dir / "prompts/cs_no_rag.txt") == kNoRagTemplate);
    CHECK(io::read_file(dir / "prompts/cs_rag.txt") == kRagTemplate);
}

TEST_CASE("prompt rendering", "[pipeline][prompts]") {
    CHECK(render_summarize_prompt("P.") ==
          "Summarize this paragraph P. into exactly 2 sentences, without truncating the last sentence:\n\nSummary:");
    CHECK(render_context({"x", "y", "z"}) == "(1) x (2) y (3) z");
    const auto rag = render_cs_prompt("H", {"a", "b", "c"});
    CHECK(rag.rfind("Here are three evidence summaries you MUST use to inform your response: (1) a (2) b (3) c.\n", 0) ==
          0);
    CHECK(rag.find("Hateful message: H\n\nCounter-speech:") != std::string::npos);
    CHECK(render_cs_prompt("H", {}).rfind("Hateful message: H\nGenerate", 0) == 0);
    // Substituted values are not rescanned for placeholders.
    CHECK(render_cs_prompt("{context}", {}).find("Hateful message: {context}") != std::string::npos);
    CHECK(render("{json: 1} {x}", {{"x", "v"}}) == "{json: 1} v");
    CHECK_THROWS_AS(render("{missing}", {}), PreconditionError);
}

TEST_CASE("enforce_two_sentences", "[pipeline][enforce]") {
    CHECK(enforce_two_sentences("A. B. C.") == "A. B.");
    CHECK(enforce_two_sentences("Only one sentence.") == "Only one sentence.");
    CHECK(enforce_two_sentences("No terminal punctuation") == "No terminal punctuation");
    CHECK(enforce_two_sentences("  padded.  ") == "padded.");
    CHECK(enforce_two_sentences("") == "");
    CHECK(enforce_two_sentences("First one. Second, as e.g. Dr. Who said! Third? Fourth. Fifth.") ==
          "First one. Second, as e.g. Dr. Who said!");
    CHECK(enforce_two_sentences("One.\nTwo!\nThree") == "One.\nTwo!");
}

TEST_CASE("enforce_two_sentences yields a prefix of at most two sentences (property)", "[pipeline][property]") {
    std::mt19937_64 rng(31);
    const std::vector<std::string> parts = {"word", "U.S.", "Dr.", "e.g.", "end.", "why?", "wow!", "3.5", "\"q.\"",
                                            "x", "A.", "(note.)", "...", "\n"};
    for (int i = 0; i < 300; ++i) {
        std::string s;
        const int n = static_cast<int>(rng() % 20);
        for (int j = 0; j < n; ++j) s += parts[rng() % parts.size()] + (rng() % 4 ? " " : "");
        const auto out = enforce_two_sentences(s);
        REQUIRE(text::count_sentences(out) <= 2);
        REQUIRE(text::trim(s).rfind(out, 0) == 0);
        if (text::count_sentences(s) <= 2) REQUIRE(out == text::trim(s));
        if (text::count_sentences(s) > 2) {
            REQUIRE(text::count_sentences(out) == 2);
        }
    }
}

TEST_CASE("summarize_evidence uses the summarization template", "[pipeline]") {
    ScriptedChat chat;
    chat.reply = [](const auto&) { return std::string("  S one. S two.  "); };
    corpus::Chunk c;
    c.chunk_id = "d#0";
    c.text = "Paragraph body.";
    CHECK(summarize_evidence(chat, "m", c) == "S one. S two.");
    REQUIRE(chat.requests.size() == 1);
    CHECK(chat.requests[0].prompt == render_summarize_prompt("Paragraph body."));
    CHECK(chat.requests[0].max_new_tokens == 150);
    CHECK(chat.requests[0].temperature == 0.5);
    c.text = "  ";
    CHECK_THROWS_AS(summarize_evidence(chat, "m", c), PreconditionError);

    const auto stubs = providers::make_stub_providers(3);
    c.text = "The council adopted a resolution on equal treatment of migrants in employment.";
    const auto s = summarize_evidence(*stubs.chat, "llama", c);
    CHECK(text::count_sentences(s) == 2);
    CHECK(s == summarize_evidence(*stubs.chat, "llama", c));
}

TEST_CASE("generate_cs selects the template and enforces length", "[pipeline]") {
    ScriptedChat chat;
    chat.reply = [](const auto&) { return std::string("One. Two. Three. Four. Five."); };
    const auto h = hs("h1", "Hateful text");
    std::vector<EvidenceSummary> sums = {
        {"h1", RetrieverId::Bm25, "m", 3, "c3", "d3", "third summary"},
        {"h1", RetrieverId::Bm25, "m", 1, "c1", "d1", "first summary"},
        {"h1", RetrieverId::Bm25, "m", 2, "c2", "d2", "second summary"},
    };
    const auto cs = generate_cs(chat, "m", h, sums);
    CHECK(cs.text == "One. Two.");
    CHECK(cs.raw_text == "One. Two. Three. Four. Five.");
    CHECK(cs.retriever == RetrieverId::Bm25);
    REQUIRE(cs.evidence.size() == 3);
    CHECK(cs.evidence[0].chunk_id == "c1");
    const auto& prompt = chat.requests.back().prompt;
    const auto p1 = prompt.find("first summary");
    const auto p2 = prompt.find("second summary");
    const auto p3 = prompt.find("third summary");
    CHECK(p1 < p2);
    CHECK(p2 < p3);
    CHECK(p3 != std::string::npos);
    CHECK(cs.prompt_hash == sha256_hex(prompt));

    const auto none = generate_cs(chat, "m", h, {});
    CHECK(none.retriever == RetrieverId::None);
    CHECK(none.evidence.empty());
    CHECK(chat.requests.back().prompt == render_cs_prompt("Hateful text", {}));

    sums.pop_back();
    CHECK_THROWS_AS(generate_cs(chat, "m", h, sums), PreconditionError);
    CHECK_NOTHROW(generate_cs(chat, "m", h, sums, {}, 3, true));
}

TEST_CASE("run_grid: 3 retrievers x 4 models yields 12 outputs per HS", "[pipeline][grid]") {
    testing::TempDir dir;
    const auto stubs = providers::make_stub_providers(11);
    const auto kb = make_kb(stubs, kb_chunks());
    const auto instances = hs_set();
    auto spec = grid(dir.path());
    spec.hs_ids = {"h1"};
    const auto manifest = run_grid(spec, instances, kb, *stubs.chat, fixed_clock);
    CHECK(manifest.failed() == 0);
    const auto cs = read_counter_speech(dir / "cs.jsonl");
    CHECK(cs.size() == 12);
    const auto sums = read_summaries(dir / "summaries.csv");
    CHECK(sums.size() == 36);

    // Traceability: three summaries per output, chunks from the KB, matching retriever.
    for (const auto& c : cs) {
        REQUIRE(c.evidence.size() == 3);
        CHECK(text::count_sentences(c.text) <= 2);
        std::vector<std::string> texts;
        for (const auto& e : c.evidence) {
            CHECK(kb.chunks.count(e.chunk_id) == 1);
            const auto it = std::find_if(sums.begin(), sums.end(), [&](const EvidenceSummary& s) {
                return s.hs_id == c.hs_id && s.retriever == c.retriever && s.model_id == c.model_id &&
                       s.rank == e.rank && s.chunk_id == e.chunk_id && s.doc_id == e.doc_id;
            });
            REQUIRE(it != sums.end());
            texts.push_back(it->summary);
        }
        // Prompt reproducibility from stored inputs.
        CHECK(sha256_hex(render_cs_prompt(instances[0].text, texts)) == c.prompt_hash);
    }
}

TEST_CASE("run_grid with no HS writes empty outputs", "[pipeline][grid]") {
    testing::TempDir dir;
    const auto stubs = providers::make_stub_providers(1);
    const auto kb = make_kb(stubs, kb_chunks());
    RunSpec spec;
    spec.retrievers = {RetrieverId::Bm25};
    spec.models = {"m"};
    spec.out_dir = dir.path();
    const auto manifest = run_grid(spec, {}, kb, *stubs.chat, fixed_clock);
    CHECK(manifest.cells.empty());
    CHECK(io::read_file(dir / "cs.jsonl").empty());
    CHECK(io::read_file(dir / "summaries.csv") == summaries_header());
}

TEST_CASE("run_grid is byte-identical across runs and after resume", "[pipeline][grid][resume]") {
    const auto stubs = providers::make_stub_providers(5);
    const auto kb = make_kb(stubs, kb_chunks());
    const auto instances = hs_set();
    testing::TempDir a, b, c;
    auto spec = grid(a.path());
    spec.retrievers.push_back(RetrieverId::None);
    run_grid(spec, instances, kb, *stubs.chat, fixed_clock);
    spec.out_dir = b.path();
    spec.max_parallel = 4;
    run_grid(spec, instances, kb, *stubs.chat, utc_now);
    for (const auto* f : {"cs.jsonl", "summaries.csv"}) CHECK(io::read_file(a / f) == io::read_file(b / f));

    // Interrupt after two HS, leave a torn write behind, then resume.
    spec.out_dir = c.path();
    spec.max_parallel = 1;
    const auto partial = run_grid(spec, instances, kb, *stubs.chat, fixed_clock, 2);
    CHECK(partial.cells.size() == 2 * 16);
    io::append_file(c / "cs.jsonl",
                    io::to_jsonl_line(to_json(CounterSpeech{"h4", RetrieverId::Bm25, "command-r", "orphan", "orphan",
                                                            {}, "x"})));
    io::append_file(c / "summaries.csv", summary_row({"h4", RetrieverId::Bm25, "command-r", 1, "c", "d", "orphan"}));
    const auto resumed = run_grid(spec, instances, kb, *stubs.chat, fixed_clock);
    CHECK(resumed.cells.size() == 4 * 16);
    CHECK(resumed.failed() == 0);
    for (const auto* f : {"cs.jsonl", "summaries.csv"}) CHECK(io::read_file(a / f) == io::read_file(c / f));

    // A completed run resumes as a no-op without calling the provider.
    ScriptedChat never;
    never.reply = [](const auto&) -> std::string { throw Error("should not be called"); };
    run_grid(spec, instances, kb, never, fixed_clock);
    CHECK(never.requests.empty());
    CHECK(io::read_file(a / "cs.jsonl") == io::read_file(c / "cs.jsonl"));
}

TEST_CASE("grid completeness for random grids (property)", "[pipeline][grid][property]") {
    const auto stubs = providers::make_stub_providers(8);
    const auto kb = make_kb(stubs, kb_chunks());
    const auto instances = hs_set();
    std::mt19937_64 rng(4);
    const std::vector<RetrieverId> all_r = {RetrieverId::Bm25, RetrieverId::DenseA, RetrieverId::DenseB,
                                            RetrieverId::None};
    for (int trial = 0; trial < 8; ++trial) {
        testing::TempDir dir;
        RunSpec spec;
        spec.out_dir = dir.path();
        for (const auto r : all_r)
            if (rng() % 2) spec.retrievers.push_back(r);
        if (spec.retrievers.empty()) spec.retrievers.push_back(RetrieverId::None);
        const std::size_t models = 1 + rng() % 3;
        for (std::size_t m = 0; m < models; ++m) spec.models.push_back("model" + std::to_string(m));
        const auto manifest = run_grid(spec, instances, kb, *stubs.chat, fixed_clock);
        CHECK(manifest.failed() == 0);
        const auto cs = read_counter_speech(dir / "cs.jsonl");
        const bool has_none = std::count(spec.retrievers.begin(), spec.retrievers.end(), RetrieverId::None) > 0;
        const std::size_t rag = spec.retrievers.size() - (has_none ? 1 : 0);
        const std::size_t per_hs = rag * models + (has_none ? models : 0);
        CHECK(cs.size() == per_hs * instances.size());
        for (const auto& c : cs) CHECK(c.evidence.size() == (c.retriever == RetrieverId::None ? 0u : 3u));
    }
}

TEST_CASE("summary failures abort the cell by default and can be skipped", "[pipeline][grid]") {
    const auto stubs = providers::make_stub_providers(2);
    const auto kb = make_kb(stubs, kb_chunks());
    ScriptedChat chat;
    chat.reply = [&](const providers::ChatRequest& r) -> std::string {
        if (r.prompt.rfind("Summarize", 0) == 0 && r.prompt.find("international law") != std::string::npos)
            throw ProviderError(ProviderErrorKind::Timeout, "req-1", "timed out");
        return stubs.chat->complete(r);
    };
    const std::vector<corpus::HateSpeechInstance> one = {hs("h1", "Refugees break international law")};
    testing::TempDir dir;
    RunSpec spec;
    spec.retrievers = {RetrieverId::Bm25, RetrieverId::None};
    spec.models = {"m"};
    spec.out_dir = dir.path();
    const auto aborted = run_grid(spec, one, kb, chat, fixed_clock);
    CHECK(aborted.failed() == 1);
    const auto failed = std::find_if(aborted.cells.begin(), aborted.cells.end(),
                                     [](const CellRecord& c) { return c.status == CellStatus::Failed; });
    CHECK(failed->retriever == RetrieverId::Bm25);
    CHECK(failed->error.find("timed out") != std::string::npos);
    CHECK(read_counter_speech(dir / "cs.jsonl").size() == 1);
    CHECK(read_summaries(dir / "summaries.csv").empty());

    testing::TempDir dir2;
    spec.out_dir = dir2.path();
    spec.on_summary_failure = SummaryFailurePolicy::Skip;
    const auto skipped = run_grid(spec, one, kb, chat, fixed_clock);
    CHECK(skipped.failed() == 0);
    const auto cs = read_counter_speech(dir2 / "cs.jsonl");
    REQUIRE(cs.size() == 2);
    CHECK(cs[0].evidence.size() == 2);
    CHECK(skipped.cells[0].degraded);

    // Failed cells are retried on resume.
    testing::TempDir dir3;
    spec.out_dir = dir3.path();
    spec.on_summary_failure = SummaryFailurePolicy::Abort;
    run_grid(spec, one, kb, chat, fixed_clock);
    const auto retried = run_grid(spec, one, kb, *stubs.chat, fixed_clock);
    CHECK(retried.failed() == 0);
    CHECK(read_counter_speech(dir3 / "cs.jsonl").size() == 2);
}

TEST_CASE("a knowledge base smaller than k fails RAG cells", "[pipeline][grid]") {
    const auto stubs = providers::make_stub_providers(2);
    auto chunks = kb_chunks();
    chunks.resize(2);
    const auto kb = make_kb(stubs, chunks);
    testing::TempDir dir;
    RunSpec spec;
    spec.retrievers = {RetrieverId::Bm25};
    spec.models = {"m"};
    spec.out_dir = dir.path();
    const auto m = run_grid(spec, {hs("h1", "migrants")}, kb, *stubs.chat, fixed_clock);
    REQUIRE(m.cells.size() == 1);
    CHECK(m.cells[0].status == CellStatus::Failed);
    CHECK(m.cells[0].error.find("insufficient evidence") != std::string::npos);
}

TEST_CASE("run_grid validates its inputs", "[pipeline][grid]") {
    const auto stubs = providers::make_stub_providers(2);
    KnowledgeBase empty;
    testing::TempDir dir;
    RunSpec spec;
    spec.out_dir = dir.path();
    spec.models = {"m"};
    CHECK_THROWS_AS(run_grid(spec, {}, empty, *stubs.chat), ValidationError);
    spec.retrievers = {RetrieverId::Bm25};
    CHECK_THROWS_AS(run_grid(spec, {}, empty, *stubs.chat), PreconditionError);
    spec.retrievers = {RetrieverId::None};
    spec.hs_ids = {"missing"};
    CHECK_THROWS_AS(run_grid(spec, {hs("h1", "x")}, empty, *stubs.chat), ValidationError);

    spec.hs_ids.clear();
    io::write_file_atomic(dir / "run_manifest.json", R"({"format_version": 99, "cells": []})");
    CHECK_THROWS_AS(run_grid(spec, {hs("h1", "x")}, empty, *stubs.chat), IncompatibleArtifactError);
}
