#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace flusurv::csv {

// Every CSV this project writes starts with this line; readers skip any line
// beginning with '#'.
inline constexpr std::string_view kSchemaLine = "# schema_version: 1";

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based physical line number
};

// Minimal RFC 4180 reader: comma separated, double-quote escaping, no
// embedded newlines. Blank lines and '#' comment lines are skipped.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::optional<Row> next();

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

// Splits one record; throws ParseError on an unterminated quote.
std::vector<std::string> split(std::string_view line, std::size_t line_no);

// Maps required column names to positions in a header row. Throws
// SchemaError for unknown, duplicate or missing columns.
class Header {
 public:
  Header(const Row& header, const std::vector<std::string_view>& required,
         const std::vector<std::string_view>& optional = {});

  std::size_t operator[](std::string_view name) const;
  bool has(std::string_view name) const;
  std::size_t width() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
};

std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest round-trippable-enough text form used in every output table.
std::string format_number(double value);

}  // namespace flusurv::csv
