#include <catch_amalgamated.hpp>

#include <random>

#include "csrag/common/error.hpp"
#include "csrag/common/io.hpp"
#include "csrag/common/text.hpp"
#include "csrag/corpus/corpus.hpp"
#include "../support/temp_dir.hpp"

using namespace csrag;
using namespace csrag::corpus;
using nlohmann::json;

namespace {

Document make_doc(std::string id, std::string text) {
    Document d;
    d.meta.id = std::move(id);
    d.meta.fname = d.meta.id + ".txt";
    d.meta.target = TargetGroup::Women;
    d.meta.doc_type = "report";
    d.meta.year = 2010;
    d.meta.url = "https://example.org/" + d.meta.id;
    d.meta.source = Source::Un;
    d.text = std::move(text);
    return d;
}

std::string words(std::size_t n, const std::string& stem = "w") {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out.push_back(' ');
        out += stem + std::to_string(i);
    }
    return out;
}

json record(const std::string& id) {
    return {{"id", id}, {"fname", id + ".pdf"}, {"target", "JEWS"}, {"type", "resolution"}, {"year", 2012},
            {"url", "https://digitallibrary.un.org/" + id}, {"source", "UN"}, {"text", "Some text about " + id}};
}

}  // namespace

TEST_CASE("chunk_document keeps in-bound paragraphs one per chunk", "[corpus][chunk]") {
    const auto doc = make_doc("d1", words(5, "a") + "\n\n" + words(6, "b") + "\n\n" + words(7, "c"));
    const auto chunks = chunk_document(doc, {3, 10});
    REQUIRE(chunks.size() == 3);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(chunks[i].ordinal == i);
        CHECK(chunks[i].chunk_id == "d1#" + std::to_string(i));
        CHECK(chunks[i].doc_id == "d1");
    }
    CHECK(chunks[1].text == words(6, "b"));
    CHECK(chunks[2].token_count == 7);
}

TEST_CASE("an oversized paragraph is split into max-sized pieces", "[corpus][chunk]") {
    const std::size_t max = 10;
    SECTION("no sentence boundaries: hard split") {
        const std::string para = words(2 * max);
        const auto chunks = chunk_document(make_doc("d", para), {2, max});
        REQUIRE(chunks.size() == 2);
        CHECK(chunks[0].token_count == max);
        CHECK(chunks[1].token_count == max);
        CHECK(text::strip_whitespace(chunks[0].text + chunks[1].text) == text::strip_whitespace(para));
    }
    SECTION("sentence boundaries: packed by sentence") {
        const std::string para = "One two three four five. Six seven eight nine ten. Eleven twelve thirteen fourteen "
                                 "fifteen. Sixteen seventeen eighteen nineteen twenty.";
        const auto chunks = chunk_document(make_doc("d", para), {2, max});
        REQUIRE(chunks.size() == 2);
        CHECK(chunks[0].text == "One two three four five. Six seven eight nine ten.");
        CHECK(chunks[1].text == "Eleven twelve thirteen fourteen fifteen. Sixteen seventeen eighteen nineteen twenty.");
    }
}

TEST_CASE("degenerate documents", "[corpus][chunk]") {
    CHECK(chunk_document(make_doc("d", "\n\n   \n\t\n"), {}).empty());
    CHECK(chunk_document(make_doc("d", "--- ... ---"), {}).empty());
    const auto tiny = chunk_document(make_doc("d", "only three words"), {30, 300});
    REQUIRE(tiny.size() == 1);
    CHECK(tiny[0].token_count == 3);
    CHECK_THROWS_AS(chunk_document(make_doc("d", "x"), {5, 4}), PreconditionError);
}

TEST_CASE("short paragraphs merge forward until min_tokens", "[corpus][chunk]") {
    const auto doc = make_doc("d", "Heading\n\n" + words(4, "a") + "\n\n" + words(6, "b"));
    const auto chunks = chunk_document(doc, {5, 20});
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].token_count == 5);
    CHECK(chunks[0].text == "Heading\n" + words(4, "a"));
    CHECK(chunks[1].token_count == 6);
}

TEST_CASE("a short tail joins the previous chunk when it fits", "[corpus][chunk]") {
    const auto doc = make_doc("d", words(6, "a") + "\n\nPage 3");
    const auto chunks = chunk_document(doc, {5, 20});
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].token_count == 8);
}

TEST_CASE("chunking is lossless and ordinals are contiguous (property)", "[corpus][chunk][property]") {
    std::mt19937_64 rng(20251015);
    const std::vector<std::string> vocab = {"rights", "law", "U.S.", "e.g.", "report", "council", "...", "--",
                                            "women", "2019", "equality", "(art.", "12)", "Dr.", "state"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string body;
        const int paragraphs = static_cast<int>(rng() % 8);
        for (int p = 0; p < paragraphs; ++p) {
            const int n = static_cast<int>(rng() % 60);
            for (int w = 0; w < n; ++w) {
                body += vocab[rng() % vocab.size()];
                const auto r = rng() % 10;
                body += r == 0 ? ". " : r == 1 ? "! " : r == 2 ? "\n" : " ";
            }
            body += rng() % 2 ? "\n\n" : "\n \n\n";
        }
        const ChunkPolicy policy{1 + rng() % 10, 10 + rng() % 30};
        const auto doc = make_doc("doc" + std::to_string(trial), body);
        const auto chunks = chunk_document(doc, policy);

        std::string joined;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            REQUIRE(chunks[i].ordinal == i);
            REQUIRE(chunks[i].token_count == text::count_tokens(chunks[i].text));
            REQUIRE(chunks[i].token_count > 0);
            REQUIRE(chunks[i].token_count <= policy.max_tokens);
            joined += chunks[i].text;
        }
        const auto normalized = text::normalize(body);
        if (text::count_tokens(normalized) > 0) {
            REQUIRE(text::strip_whitespace(joined) == text::strip_whitespace(normalized));
        } else {
            REQUIRE(chunks.empty());
        }
    }
}

TEST_CASE("load_corpus handles empty directories and record rejects", "[corpus][load]") {
    testing::TempDir dir;
    CHECK(load_corpus(dir.path()).documents.empty());

    json arr = json::array();
    for (int i = 0; i < 5; ++i) arr.push_back(record("doc" + std::to_string(i)));
    arr[2].erase("year");
    io::write_file_atomic(dir / "batch.json", arr.dump());
    const auto loaded = load_corpus(dir.path());
    CHECK(loaded.documents.size() == 4);
    REQUIRE(loaded.rejects.size() == 1);
    CHECK(loaded.rejects[0].record == 3);
    CHECK(loaded.rejects[0].reason.find("year") != std::string::npos);
}

TEST_CASE("load_corpus validates every schema field", "[corpus][load]") {
    auto reject_reason = [](json rec) {
        try {
            document_from_json(rec);
        } catch (const ValidationError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK_FALSE(reject_reason(record("ok")).size());
    json r = record("x");
    r["target"] = "ALIENS";
    CHECK_THAT(reject_reason(r), Catch::Matchers::ContainsSubstring("target"));
    r = record("x");
    r["year"] = 1999;
    CHECK_THAT(reject_reason(r), Catch::Matchers::ContainsSubstring("year"));
    r = record("x");
    r["year"] = "2010";
    CHECK_THAT(reject_reason(r), Catch::Matchers::ContainsSubstring("integer"));
    r = record("x");
    r["text"] = " \n\x01 ";
    CHECK_THAT(reject_reason(r), Catch::Matchers::ContainsSubstring("text"));
    r = record("x");
    r["source"] = "WIKIPEDIA";
    CHECK_THAT(reject_reason(r), Catch::Matchers::ContainsSubstring("source"));
    r = record("x");
    r["source"] = "EUR-Lex";
    r["target"] = "LGBT+";
    CHECK(reject_reason(r).empty());
}

TEST_CASE("load_corpus rejects duplicate ids and bad JSONL lines", "[corpus][load]") {
    testing::TempDir dir;
    io::write_file_atomic(dir / "a.jsonl",
                          record("a").dump() + "\n{not json\n\n" + record("b").dump() + "\n" + record("a").dump() + "\n");
    const auto loaded = load_corpus(dir / "a.jsonl");
    CHECK(loaded.documents.size() == 2);
    REQUIRE(loaded.rejects.size() == 2);
    CHECK(loaded.rejects[0].record == 2);
    CHECK(loaded.rejects[1].reason.find("duplicate") != std::string::npos);
    CHECK_THROWS_AS(load_corpus(dir / "missing.json"), IoError);
}

TEST_CASE("load_corpus reads plain text through a manifest", "[corpus][load]") {
    testing::TempDir dir;
    io::write_file_atomic(dir / "manifest.csv",
                          "id,fname,target,type,year,url,source\n"
                          "fra-1,fra1.txt,MIGRANTS,report,2016,https://fra.europa.eu/1,FRA\n"
                          "fra-2,missing.txt,MIGRANTS,report,2016,https://fra.europa.eu/2,FRA\n");
    io::write_file_atomic(dir / "fra1.txt", "Paragraph one.\r\n\r\nParagraph two.\r\n");
    const auto loaded = load_corpus(dir.path());
    REQUIRE(loaded.documents.size() == 1);
    CHECK(loaded.documents[0].text == "Paragraph one.\n\nParagraph two.");
    CHECK(loaded.documents[0].meta.source == Source::Fra);
    REQUIRE(loaded.rejects.size() == 1);
}

TEST_CASE("serialize/load_corpus round trip is stable (property)", "[corpus][load][property]") {
    std::mt19937_64 rng(7);
    testing::TempDir dir;
    for (int trial = 0; trial < 25; ++trial) {
        json arr = json::array();
        const int n = 1 + static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) {
            json r = record("t" + std::to_string(trial) + "-" + std::to_string(i));
            r["year"] = 2000 + static_cast<int>(rng() % 26);
            r["target"] = std::string(to_string(kAllTargets[rng() % kAllTargets.size()]));
            r["text"] = "Line \"quoted\", with\ttab\r\n\r\n" + words(rng() % 20) + "\n\xC3\xA9t\xC3\xA9";
            arr.push_back(r);
        }
        io::write_file_atomic(dir / "in.json", arr.dump());
        const auto first = load_corpus(dir / "in.json");
        io::write_file_atomic(dir / "out.jsonl", serialize_documents(first.documents));
        const auto second = load_corpus(dir / "out.jsonl");
        REQUIRE(second.rejects.empty());
        REQUIRE(second.documents == first.documents);
    }
}

TEST_CASE("corpus statistics report document and word totals", "[corpus]") {
    std::vector<Document> docs = {make_doc("a", "one two three"), make_doc("b", "four five")};
    docs[1].meta.source = Source::Fra;
    const auto stats = compute_stats(docs);
    CHECK(stats.total.documents == 2);
    CHECK(stats.total.words == 5);
    CHECK(stats.total.mean_words() == Catch::Approx(2.5));
    CHECK(stats.by_source_target.at("FRA").at("WOMEN").words == 2);
}

TEST_CASE("load_hs_dataset maps targets and counts unknown labels", "[corpus][hs]") {
    testing::TempDir dir;
    io::write_file_atomic(dir / "one.csv", "hs_id,text,target,reference_cs\nh1,Some hateful text,JEWS,A reply.\n");
    const auto one = load_hs_dataset(dir / "one.csv");
    REQUIRE(one.instances.size() == 1);
    CHECK(one.instances[0].target == TargetGroup::Jews);
    CHECK(one.instances[0].reference_cs == "A reply.");
    CHECK(one.unknown_target_warnings == 0);

    io::write_file_atomic(dir / "unk.csv", "hs_id,text,target,reference_cs\nh1,Text,unknown-group,R\n");
    const auto unk = load_hs_dataset(dir / "unk.csv");
    REQUIRE(unk.instances.size() == 1);
    CHECK(unk.instances[0].target == TargetGroup::Other);
    CHECK(unk.unknown_target_warnings == 1);

    io::write_file_atomic(dir / "bad.csv", "hs_id,text,target,reference_cs\nh1,,JEWS,R\nh2,ok,LGBT+,R\n");
    const auto bad = load_hs_dataset(dir / "bad.csv");
    CHECK(bad.instances.size() == 1);
    CHECK(bad.rejects.size() == 1);
    CHECK(bad.instances[0].target == TargetGroup::Lgbt);
}

TEST_CASE("load_hs_dataset accepts MT-CONAN column names and JSON", "[corpus][hs]") {
    testing::TempDir dir;
    io::write_file_atomic(dir / "mtconan.csv",
                          "INDEX,HATE_SPEECH,COUNTER_NARRATIVE,TARGET,VERSION\n"
                          "0,\"Text, with comma\",\"Reply \"\"quoted\"\"\",MIGRANTS,v1\n"
                          "1,Other text,Reply,other,v1\n");
    const auto m = load_hs_dataset(dir / "mtconan.csv");
    REQUIRE(m.instances.size() == 2);
    CHECK(m.instances[0].hs_id == "hs-1");
    CHECK(m.instances[0].text == "Text, with comma");
    CHECK(m.instances[0].reference_cs == "Reply \"quoted\"");
    CHECK(m.instances[1].target == TargetGroup::Other);

    io::write_file_atomic(dir / "hs.json",
                          json::array({{{"hs_id", "x"}, {"text", "t"}, {"target", "WOMEN"}}}).dump());
    const auto j = load_hs_dataset(dir / "hs.json");
    REQUIRE(j.instances.size() == 1);
    CHECK_FALSE(j.instances[0].reference_cs.has_value());
}
