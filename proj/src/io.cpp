#include "subnyq/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "subnyq/errors.hpp"

namespace subnyq {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw io_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw io_error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw io_error("rename to " + path.string() + " failed: " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string() + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void CsvWriter::comment(const std::string& line) {
    buf_ += "# ";
    buf_ += line;
    buf_ += '\n';
}

void CsvWriter::header(const std::vector<std::string>& cols) {
    n_cols_ = cols.size();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += cols[i];
    }
    buf_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (n_cols_ != 0 && cells.size() != n_cols_)
        throw invalid_shape("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(n_cols_));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += cells[i];
    }
    buf_ += '\n';
}

void CsvWriter::save(const std::filesystem::path& path) const { atomic_write_file(path, buf_); }

static std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string() + " for reading");
    CsvTable table;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_cells(line);
        if (table.columns.empty()) {
            table.columns = std::move(cells);
        } else {
            if (cells.size() != table.columns.size())
                throw parse_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(table.columns.size()) + " cells, got " +
                                  std::to_string(cells.size()));
            table.rows.push_back(std::move(cells));
        }
    }
    return table;
}

double parse_double(const std::string& cell, const std::string& context) {
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0' || errno == ERANGE)
        throw parse_error(context + ": not a number: '" + cell + "'");
    return v;
}

long parse_long(const std::string& cell, const std::string& context) {
    errno = 0;
    char* end = nullptr;
    long v = std::strtol(cell.c_str(), &end, 10);
    if (end == cell.c_str() || *end != '\0' || errno == ERANGE)
        throw parse_error(context + ": not an integer: '" + cell + "'");
    return v;
}

}  // namespace subnyq
