#pragma once

#include <string>
#include <vector>

namespace pdfuse {

// Plain comma splitting; fields in the formats here never contain commas or
// quotes. Strips a trailing CR.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

} // namespace pdfuse
