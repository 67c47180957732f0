#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace csrag::text {

/// A token and the byte range of its surface form in the source string.
struct TokenSpan {
    std::string token;  ///< lower-cased form
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Splits on Unicode whitespace and punctuation, lower-cases ASCII and
/// Latin-1 letters. This is the one tokenizer shared by chunking, BM25 and
/// every metric.
std::vector<TokenSpan> tokenize_spans(std::string_view text);

std::vector<std::string> tokenize(std::string_view text);

std::size_t count_tokens(std::string_view text);

/// CRLF/CR to LF, tabs and other control characters to spaces (newlines
/// kept), trailing whitespace stripped from every line, leading/trailing
/// blank lines removed.
std::string normalize(std::string_view raw);

/// Paragraphs are separated by one or more blank lines. Lines inside a
/// paragraph are trimmed and joined with a single space.
std::vector<std::string> split_paragraphs(std::string_view normalized);

/// Sentence segmentation: a sentence ends at a run of `.`, `!` or `?`
/// (optionally followed by closing quotes or brackets) that is followed by
/// whitespace or the end of the text, unless the word ending at that period
/// is on the abbreviation allowlist. Returned sentences are trimmed; the last
/// one may lack terminal punctuation.
std::vector<std::string> split_sentences(std::string_view text);

std::size_t count_sentences(std::string_view text);

/// True when `word` (including its trailing period) is a known abbreviation.
bool is_abbreviation(std::string_view word);

std::string trim(std::string_view s);

/// Removes every whitespace byte; used to compare texts modulo whitespace.
std::string strip_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string to_lower_ascii(std::string_view s);

}  // namespace csrag::text
