#pragma once

// Feature archives: one record per sample (id, label, float64 features).
//
// Binary layout (little-endian):
//   "PBNFEAT\0" | u32 version | u32 note length | note bytes | u64 count
//   | u32 ndims | u32 dims[ndims]
//   then per record: u32 id length | id bytes | i32 label | f64 values[prod(dims)]
//
// Text layout: CSV header "id,label,f0,f1,...", one row per record, values
// printed with 17 significant digits so a text round trip is exact.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pbn/dataset.hpp"
#include "pbn/error.hpp"

namespace pbn {

inline constexpr char kFeatureMagic[8] = {'P', 'B', 'N', 'F', 'E', 'A', 'T', '\0'};
inline constexpr std::uint32_t kFeatureVersion = 1;

enum class ArchiveFormat { binary, csv };

namespace detail {
template <typename T>
void put_raw(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get_raw(std::istream& in, const std::string& what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated " + what);
    return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw FormatError("");
        return v;
    } catch (const std::exception&) {
        if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw FormatError("cannot parse '" + s + "' as a number in " + what);
    }
}

/// Writes `text` as '#' comment lines.
inline void write_comment(std::ostream& out, const std::string& text) {
    if (text.empty()) return;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) out << "# " << line << '\n';
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace detail

/// `note` is free text stored in the header (provenance).
inline void save_features_binary(const std::string& path, const Dataset& d, const std::string& note = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + path);
    const std::size_t dim = d.empty() ? 0 : std::size_t(d.samples.front().size());
    std::vector<int> dims = d.shape.empty() ? std::vector<int>{int(dim)} : d.shape;
    out.write(kFeatureMagic, 8);
    detail::put_raw<std::uint32_t>(out, kFeatureVersion);
    detail::put_raw<std::uint32_t>(out, std::uint32_t(note.size()));
    out.write(note.data(), std::streamsize(note.size()));
    detail::put_raw<std::uint64_t>(out, d.size());
    detail::put_raw<std::uint32_t>(out, std::uint32_t(dims.size()));
    for (int v : dims) detail::put_raw<std::uint32_t>(out, std::uint32_t(v));
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (std::size_t(d.samples[i].size()) != dim) throw ContractViolation("archive records differ in length");
        detail::put_raw<std::uint32_t>(out, std::uint32_t(d.ids[i].size()));
        out.write(d.ids[i].data(), std::streamsize(d.ids[i].size()));
        detail::put_raw<std::int32_t>(out, d.labels[i]);
        out.write(reinterpret_cast<const char*>(d.samples[i].data()), std::streamsize(dim * sizeof(double)));
    }
}

inline void save_features_csv(const std::string& path, const Dataset& d, const std::string& header_comment = {}) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write " + path);
    detail::write_comment(out, header_comment);
    const Eigen::Index dim = d.empty() ? 0 : d.samples.front().size();
    out << "id,label";
    for (Eigen::Index j = 0; j < dim; ++j) out << ",f" << j;
    out << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        out << d.ids[i] << ',' << d.labels[i];
        for (Eigen::Index j = 0; j < dim; ++j) out << ',' << detail::format_double(d.samples[i][j]);
        out << '\n';
    }
}

/// The CSV form carries the note as a leading '#' comment line.
inline void save_features(const std::string& path, const Dataset& d, ArchiveFormat f = ArchiveFormat::binary,
                          const std::string& note = {}) {
    if (f == ArchiveFormat::binary)
        save_features_binary(path, d, note);
    else
        save_features_csv(path, d, note);
}

inline Dataset load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open feature archive " + path);
    char magic[8] = {};
    in.read(magic, 8);
    Dataset d;
    if (in.gcount() == 8 && std::memcmp(magic, kFeatureMagic, 8) == 0) {
        const auto version = detail::get_raw<std::uint32_t>(in, "archive header");
        if (version != kFeatureVersion) throw FormatError(path + ": unsupported archive version " + std::to_string(version));
        const auto note_len = detail::get_raw<std::uint32_t>(in, "archive header");
        std::string note(note_len, '\0');
        if (!in.read(note.data(), note_len)) throw FormatError(path + ": truncated archive header");
        const auto count = detail::get_raw<std::uint64_t>(in, "archive header");
        const auto ndims = detail::get_raw<std::uint32_t>(in, "archive header");
        std::size_t dim = 1;
        for (std::uint32_t k = 0; k < ndims; ++k) {
            const auto v = detail::get_raw<std::uint32_t>(in, "archive header");
            d.shape.push_back(int(v));
            dim *= v;
        }
        if (d.shape.size() == 1) d.shape.clear();
        for (std::uint64_t i = 0; i < count; ++i) {
            const auto len = detail::get_raw<std::uint32_t>(in, "record");
            std::string id(len, '\0');
            if (!in.read(id.data(), len)) throw FormatError(path + ": truncated record id");
            const int label = detail::get_raw<std::int32_t>(in, "record");
            Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
            if (!in.read(reinterpret_cast<char*>(x.data()), std::streamsize(dim * sizeof(double))))
                throw FormatError(path + ": truncated record values");
            d.push_back(std::move(id), std::move(x), label);
        }
        return d;
    }
    in.clear();
    in.seekg(0);
    std::string line;
    bool header = false;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto cells = detail::split_csv(line);
        if (!header) {
            if (cells.size() < 2 || cells[0] != "id" || cells[1] != "label")
                throw FormatError(path + ": expected CSV header starting with id,label");
            dim = cells.size() - 2;
            header = true;
            continue;
        }
        if (cells.size() != dim + 2) throw FormatError(path + ": row for '" + cells[0] + "' has wrong column count");
        Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
        for (std::size_t j = 0; j < dim; ++j) x[Eigen::Index(j)] = detail::parse_double(cells[j + 2], path);
        d.push_back(cells[0], std::move(x), int(detail::parse_double(cells[1], path)));
    }
    if (!header) throw FormatError(path + ": empty feature archive");
    return d;
}

}  // namespace pbn
