#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace csrag::csv {

using Row = std::vector<std::string>;

/// RFC 4180 parsing: quoted fields may contain commas, doubled quotes and newlines.
std::vector<Row> parse(std::string_view data);

/// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

std::string format_row(const Row& row);

/// A parsed file with a header row; lookups are by column name.
class Table {
  public:
    static Table parse(std::string_view data);

    [[nodiscard]] const std::vector<std::string>& header() const noexcept { return header_; }
    [[nodiscard]] const std::vector<Row>& rows() const noexcept { return rows_; }
    [[nodiscard]] std::optional<std::size_t> column(std::string_view name) const;
    [[nodiscard]] bool has_column(std::string_view name) const { return column(name).has_value(); }

    /// Field of `row` under `name`; empty when the column is absent or the row is short.
    [[nodiscard]] std::string get(const Row& row, std::string_view name) const;

  private:
    std::vector<std::string> header_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::vector<Row> rows_;
};

}  // namespace csrag::csv
