#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qs::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields, doubled quotes, embedded newlines, CRLF or LF.
// A trailing newline does not produce an empty row. Throws qs::Error(EncodingError)
// on an unterminated quoted field.
std::vector<Row> parse(std::string_view text);

std::string escape_field(std::string_view field);
std::string format_row(std::span<const std::string> fields);

// "\xEF\xBB\xBF" prefix removed, then validated as UTF-8.
std::string_view strip_bom(std::string_view text);
bool is_valid_utf8(std::string_view text);

}  // namespace qs::csv
