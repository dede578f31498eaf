#include "flusurv/csv.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "flusurv/errors.hpp"

namespace flusurv::csv {

std::optional<Row> Reader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    return Row{split(line, line_), line_};
  }
  return std::nullopt;
}

std::vector<std::string> split(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  fields.push_back(std::move(field));
  return fields;
}

Header::Header(const Row& header, const std::vector<std::string_view>& required,
               const std::vector<std::string_view>& optional)
    : names_(header.fields) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& name = names_[i];
    const bool known =
        std::find(required.begin(), required.end(), name) != required.end() ||
        std::find(optional.begin(), optional.end(), name) != optional.end();
    if (!known) throw SchemaError("unknown column '" + name + "'");
    if (std::find(names_.begin(), names_.begin() + static_cast<long>(i),
                  name) != names_.begin() + static_cast<long>(i)) {
      throw SchemaError("duplicate column '" + name + "'");
    }
  }
  for (auto name : required) {
    if (!has(name)) throw SchemaError("missing column '" + std::string(name) + "'");
  }
}

bool Header::has(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t Header::operator[](std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw SchemaError("missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  if (value == 0.0) return "0";
  return fmt::format("{:.12g}", value);
}

}  // namespace flusurv::csv
