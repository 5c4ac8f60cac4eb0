// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace debias::csv {

struct Row {
    std::size_t line = 0;  // 1-based line where the record starts
    std::vector<std::string> fields;
};

/// RFC-4180 reader: quoted fields may hold commas, doubled quotes and line
/// breaks; CRLF and LF are both accepted. Blank lines are skipped.
std::vector<Row> parse(std::string_view text);

std::string format_row(std::span<const std::string> fields);
/// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

}  // namespace debias::csv

namespace debias {

/// Shortest of %.15g/%.16g/%.17g that reads back as the identical double.
std::string format_double(double value);
/// Always 17 significant digits.
std::string format_double17(double value);
/// False unless the whole string parses as a number.
bool parse_double(std::string_view text, double& out);

}  // namespace debias
