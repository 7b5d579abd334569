#pragma once

#include <string>
#include <vector>

namespace cellspan {

// Shortest round-trip decimal representation of a double. Both the CLI's
// evaluate and predict paths format numbers through this, which is what
// makes their outputs comparable byte for byte.
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

void write_csv(const CsvTable& table, const std::string& path);

// Minimal reader for the tables this tool writes: comma-separated, no
// quoting or embedded separators.
CsvTable read_csv(const std::string& path);

} // namespace cellspan
