#include "zgen/csv.h"

#include <iterator>

#include "zgen/error.h"

namespace zgen {

std::vector<CsvRecord> ReadCsvRecords(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) pos = 3;

  std::vector<CsvRecord> records;
  CsvRecord record;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    // A bare trailing newline must not produce a phantom one-field record.
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
  };

  while (pos < text.size()) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
          continue;
        }
        in_quotes = false;
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      ++pos;
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) {
          throw Error("csv: stray quote on line " + std::to_string(line));
        }
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        if (field_was_quoted) {
          throw Error("csv: characters after closing quote on line " +
                      std::to_string(line));
        }
        field.push_back(c);
    }
    ++pos;
  }
  if (in_quotes) throw Error("csv: unterminated quoted field");
  if (!field.empty() || field_was_quoted || !record.empty()) end_record();
  return records;
}

std::string EscapeCsvField(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
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

void WriteCsvRecord(std::ostream& out, const CsvRecord& record) {
  for (std::size_t i = 0; i < record.size(); ++i) {
    if (i > 0) out << ',';
    out << EscapeCsvField(record[i]);
  }
  out << '\n';
}

}  // namespace zgen
