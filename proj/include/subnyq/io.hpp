#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace subnyq {

// Shortest decimal form that round-trips a double exactly (printf %.17g
// semantics; tests rely on byte-stable output).
std::string fmt17(double v);

// Write `content` to `path` atomically: write to a sibling temp file, fsync,
// rename over the target. A failed run never leaves a partial artifact.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

// Minimal CSV accumulation: '#'-prefixed comment lines (config/seed
// provenance), one header row, data rows formatted with fmt17 for doubles.
class CsvWriter {
  public:
    void comment(const std::string& line);
    void header(const std::vector<std::string>& cols);
    void row(const std::vector<std::string>& cells);
    const std::string& content() const { return buf_; }
    // Atomic write of everything accumulated so far.
    void save(const std::filesystem::path& path) const;

  private:
    std::string buf_;
    std::size_t n_cols_ = 0;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // raw cells
};

// Parse a CSV produced by CsvWriter (or hand-written in the same dialect):
// '#' comments and blank lines skipped, first remaining line is the header.
// Throws parse_error with line context on malformed rows.
CsvTable read_csv(const std::filesystem::path& path);

double parse_double(const std::string& cell, const std::string& context);
long parse_long(const std::string& cell, const std::string& context);

}  // namespace subnyq
