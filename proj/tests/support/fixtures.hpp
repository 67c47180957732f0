#pragma once
// Small synthetic KB and hate-speech files for end-to-end runs.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/common/csv.hpp"
#include "csrag/common/io.hpp"
#include "csrag/corpus/types.hpp"

namespace csrag::testing {

inline const std::vector<std::string>& fixture_topics() {
    static const std::vector<std::string> t = {"women",   "people of colour", "persons with disabilities", "migrants",
                                               "muslims", "jews",             "lgbt persons",              "minorities"};
    return t;
}

inline std::string fixture_paragraph(std::mt19937_64& rng, const std::string& topic) {
    static const std::vector<std::string> subjects = {"The agency report", "A survey of member states",
                                                      "The resolution", "Recent statistics", "The committee"};
    static const std::vector<std::string> verbs = {"documents", "shows", "confirms", "highlights", "records"};
    static const std::vector<std::string> objects = {
        "persistent discrimination in employment and housing", "an increase in reported hate crimes",
        "barriers to equal access to public services", "the positive contribution to local economies",
        "the need for stronger legal protection", "progress in education and political participation"};
    std::string p;
    const int sentences = 3 + static_cast<int>(rng() % 3);
    for (int s = 0; s < sentences; ++s) {
        p += subjects[rng() % subjects.size()] + " " + verbs[rng() % verbs.size()] + " " +
             objects[rng() % objects.size()] + " affecting " + topic + " in " + std::to_string(2005 + rng() % 20) +
             ". ";
    }
    return p;
}

/// `n_docs` KB records spread over the eight target groups, as one JSONL file.
inline void write_fixture_kb(const std::filesystem::path& file, std::size_t n_docs, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::string out;
    for (std::size_t i = 0; i < n_docs; ++i) {
        const auto target = corpus::kAllTargets[i % corpus::kAllTargets.size()];
        const auto& topic = fixture_topics()[i % fixture_topics().size()];
        std::string text;
        const int paras = 2 + static_cast<int>(rng() % 3);
        for (int p = 0; p < paras; ++p) text += fixture_paragraph(rng, topic) + "\n\n";
        nlohmann::json j = {{"id", "doc" + std::to_string(i)},
                            {"fname", "doc" + std::to_string(i) + ".txt"},
                            {"target", std::string(corpus::to_string(target))},
                            {"type", "report"},
                            {"year", 2010 + static_cast<int>(i % 15)},
                            {"url", "https://example.org/doc" + std::to_string(i)},
                            {"source", "FRA"},
                            {"text", text}};
        out += io::to_jsonl_line(j);
    }
    std::filesystem::create_directories(file.parent_path());
    io::write_file_atomic(file, out);
}

/// `n` hate-speech rows with references, as CSV (hs_id,text,target,reference_cs).
inline void write_fixture_hs(const std::filesystem::path& file, std::size_t n) {
    std::string out = csv::format_row({"hs_id", "text", "target", "reference_cs"});
    for (std::size_t i = 0; i < n; ++i) {
        const auto target = corpus::kAllTargets[i % corpus::kAllTargets.size()];
        const auto& topic = fixture_topics()[i % fixture_topics().size()];
        out += csv::format_row({"hs" + std::to_string(i), "All " + topic + " are a burden and should leave, case " +
                                                              std::to_string(i) + ".",
                                std::string(corpus::to_string(target)),
                                "Evidence shows " + topic + " contribute to society and deserve equal respect."});
    }
    std::filesystem::create_directories(file.parent_path());
    io::write_file_atomic(file, out);
}

}  // namespace csrag::testing
