#ifndef ZGEN_CSV_H_
#define ZGEN_CSV_H_

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace zgen {

using CsvRecord = std::vector<std::string>;

// RFC-4180 reader: quoted fields, doubled quotes, embedded separators and
// line breaks, CRLF or LF endings. A UTF-8 byte-order mark is skipped.
std::vector<CsvRecord> ReadCsvRecords(std::istream& in);

// Writes one record, quoting only fields that need it.
void WriteCsvRecord(std::ostream& out, const CsvRecord& record);

std::string EscapeCsvField(std::string_view field);

}  // namespace zgen

#endif  // ZGEN_CSV_H_
