#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace csrag::corpus {

/// The eight hate-speech target groups. Closed enumeration.
enum class TargetGroup { Women, Poc, Disabled, Migrants, Muslims, Jews, Lgbt, Other };

inline constexpr std::array<TargetGroup, 8> kAllTargets = {
    TargetGroup::Women, TargetGroup::Poc,  TargetGroup::Disabled, TargetGroup::Migrants,
    TargetGroup::Muslims, TargetGroup::Jews, TargetGroup::Lgbt,   TargetGroup::Other};

/// Canonical upper-case name ("WOMEN", "POC", ...).
std::string_view to_string(TargetGroup t);

/// Case-insensitive; accepts canonical names and common aliases
/// ("LGBT+", "people of colour", "muslim", "disabilities", ...).
std::optional<TargetGroup> parse_target(std::string_view s);

enum class Source { Un, EurLex, Fra, Custom };

std::string_view to_string(Source s);
std::optional<Source> parse_source(std::string_view s);

struct DocumentMeta {
    std::string id;
    std::string fname;
    TargetGroup target = TargetGroup::Other;
    std::string doc_type;
    int year = 0;
    std::string url;
    Source source = Source::Custom;

    friend bool operator==(const DocumentMeta&, const DocumentMeta&) = default;
};

struct Document {
    DocumentMeta meta;
    std::string text;  ///< normalized, newline-delimited paragraphs

    friend bool operator==(const Document&, const Document&) = default;
};

struct Chunk {
    std::string chunk_id;  ///< "<doc_id>#<ordinal>"
    std::string doc_id;
    std::size_t ordinal = 0;
    std::string text;
    std::size_t token_count = 0;

    friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct HateSpeechInstance {
    std::string hs_id;
    std::string text;
    TargetGroup target = TargetGroup::Other;
    std::optional<std::string> reference_cs;

    friend bool operator==(const HateSpeechInstance&, const HateSpeechInstance&) = default;
};

std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal);

}  // namespace csrag::corpus
