#include "csrag/corpus/types.hpp"

#include <cctype>
#include <utility>

namespace csrag::corpus {
namespace {

std::string squash(std::string_view s) {
    std::string out;
    for (const char c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
    }
    return out;
}

}  // namespace

std::string_view to_string(TargetGroup t) {
    switch (t) {
        case TargetGroup::Women: return "WOMEN";
        case TargetGroup::Poc: return "POC";
        case TargetGroup::Disabled: return "DISABLED";
        case TargetGroup::Migrants: return "MIGRANTS";
        case TargetGroup::Muslims: return "MUSLIMS";
        case TargetGroup::Jews: return "JEWS";
        case TargetGroup::Lgbt: return "LGBT";
        case TargetGroup::Other: return "OTHER";
    }
    return "OTHER";
}

std::optional<TargetGroup> parse_target(std::string_view s) {
    static const std::pair<std::string_view, TargetGroup> kAliases[] = {
        {"women", TargetGroup::Women},
        {"woman", TargetGroup::Women},
        {"poc", TargetGroup::Poc},
        {"peopleofcolor", TargetGroup::Poc},
        {"peopleofcolour", TargetGroup::Poc},
        {"disabled", TargetGroup::Disabled},
        {"disability", TargetGroup::Disabled},
        {"disabilities", TargetGroup::Disabled},
        {"personswithdisabilities", TargetGroup::Disabled},
        {"peoplewithdisabilities", TargetGroup::Disabled},
        {"migrants", TargetGroup::Migrants},
        {"migrant", TargetGroup::Migrants},
        {"immigrants", TargetGroup::Migrants},
        {"immigrant", TargetGroup::Migrants},
        {"muslims", TargetGroup::Muslims},
        {"muslim", TargetGroup::Muslims},
        {"jews", TargetGroup::Jews},
        {"jew", TargetGroup::Jews},
        {"jewish", TargetGroup::Jews},
        {"lgbt", TargetGroup::Lgbt},
        {"lgbtq", TargetGroup::Lgbt},
        {"lgbti", TargetGroup::Lgbt},
        {"lgbtqi", TargetGroup::Lgbt},
        {"lgbtqia", TargetGroup::Lgbt},
        {"other", TargetGroup::Other},
        {"others", TargetGroup::Other},
    };
    const std::string key = squash(s);
    for (const auto& [alias, target] : kAliases)
        if (key == alias) return target;
    return std::nullopt;
}

std::string_view to_string(Source s) {
    switch (s) {
        case Source::Un: return "UN";
        case Source::EurLex: return "EURLEX";
        case Source::Fra: return "FRA";
        case Source::Custom: return "CUSTOM";
    }
    return "CUSTOM";
}

std::optional<Source> parse_source(std::string_view s) {
    const std::string key = squash(s);
    if (key == "un") return Source::Un;
    if (key == "eurlex") return Source::EurLex;
    if (key == "fra") return Source::Fra;
    if (key == "custom") return Source::Custom;
    return std::nullopt;
}

std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal) {
    return std::string(doc_id) + "#" + std::to_string(ordinal);
}

}  // namespace csrag::corpus
