#ifndef NATLAB_CSV_HPP
#define NATLAB_CSV_HPP

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace natlab {

// CSV conventions used everywhere in this repo: header row, fixed column
// order, '.' decimal separator, LF line endings. Lines starting with '#'
// are provenance comments and are preserved on parse.
struct CsvTable {
    std::vector<std::string> comments;  // without the leading "# "
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// shortest round-trip representation, locale-independent
inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v       = 0.0;
    const char* b  = s.data();
    auto res       = std::from_chars(b, b + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != b + s.size())
        throw std::runtime_error("csv: bad number '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s) {
    long v        = 0;
    const char* b = s.data();
    auto res      = std::from_chars(b, b + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != b + s.size())
        throw std::runtime_error("csv: bad integer '" + s + "'");
    return v;
}

inline std::string emit_csv(const CsvTable& t) {
    std::string out;
    for (const auto& c : t.comments) out += "# " + c + "\n";
    auto emit_row = [&out](const std::vector<std::string>& row) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            out += row[i];
        }
        out += "\n";
    };
    emit_row(t.header);
    for (const auto& r : t.rows) emit_row(r);
    return out;
}

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            size_t start = line.size() > 1 && line[1] == ' ' ? 2 : 1;
            t.comments.push_back(line.substr(start));
            continue;
        }
        std::vector<std::string> fields;
        size_t pos = 0;
        while (true) {
            size_t comma = line.find(',', pos);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(pos));
                break;
            }
            fields.push_back(line.substr(pos, comma - pos));
            pos = comma + 1;
        }
        if (!have_header) {
            t.header    = std::move(fields);
            have_header = true;
        } else {
            if (fields.size() != t.header.size())
                throw std::runtime_error("csv: row width " + std::to_string(fields.size()) + " != header width " +
                                         std::to_string(t.header.size()));
            t.rows.push_back(std::move(fields));
        }
    }
    if (!have_header) throw std::runtime_error("csv: missing header row");
    return t;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write(text.data(), std::streamsize(text.size()));
    if (!out) throw std::runtime_error("short write: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace natlab

#endif  // NATLAB_CSV_HPP
