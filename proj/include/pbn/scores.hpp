#pragma once

// Per-sample score tables and the generative/discriminative score sweep.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pbn/archive.hpp"
#include "pbn/error.hpp"

namespace pbn {

struct ScoreRow {
    std::string id;
    int label = 0;
    std::vector<double> log_lf;  // one per class hypothesis
    double recon_stat = std::numeric_limits<double>::quiet_NaN();
    double external = std::numeric_limits<double>::quiet_NaN();
};

struct ScoreTable {
    std::vector<ScoreRow> rows;

    std::size_t size() const { return rows.size(); }
    bool has_external() const {
        return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const ScoreRow& r) { return !std::isnan(r.external); });
    }
};

inline void save_scores(const std::string& path, const ScoreTable& t, const std::string& header_comment = {}) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write " + path);
    detail::write_comment(out, header_comment);
    const std::size_t nc = t.rows.empty() ? 0 : t.rows.front().log_lf.size();
    const bool ext = t.has_external();
    out << "id,label";
    for (std::size_t c = 0; c < nc; ++c) out << ",loglf_" << c;
    out << ",recon_stat";
    if (ext) out << ",external";
    out << '\n';
    for (const auto& r : t.rows) {
        out << r.id << ',' << r.label;
        for (double v : r.log_lf) out << ',' << detail::format_double(v);
        out << ',' << detail::format_double(r.recon_stat);
        if (ext) out << ',' << detail::format_double(r.external);
        out << '\n';
    }
}

inline ScoreTable load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open score table " + path);
    ScoreTable t;
    std::string line;
    std::vector<std::string> head;
    std::map<std::string, bool> seen;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = detail::split_csv(line);
        if (head.empty()) {
            head = cells;
            if (head.size() < 3 || head[0] != "id" || head[1] != "label")
                throw FormatError(path + ": expected header id,label,...");
            continue;
        }
        if (cells.size() != head.size()) throw FormatError(path + ": row '" + cells[0] + "' has wrong column count");
        ScoreRow r;
        r.id = cells[0];
        if (seen[r.id]) throw FormatError(path + ": duplicate id '" + r.id + "'");
        seen[r.id] = true;
        r.label = int(detail::parse_double(cells[1], path));
        for (std::size_t c = 2; c < head.size(); ++c) {
            const double v = detail::parse_double(cells[c], path);
            if (head[c].rfind("loglf_", 0) == 0)
                r.log_lf.push_back(v);
            else if (head[c] == "recon_stat")
                r.recon_stat = v;
            else if (head[c] == "external")
                r.external = v;
            else
                throw FormatError(path + ": unknown column '" + head[c] + "'");
        }
        t.rows.push_back(std::move(r));
    }
    return t;
}

/// External classifier scores: CSV "id,score_0,score_1" (extra classes ignored).
inline std::map<std::string, double> load_external_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open external scores " + path);
    std::map<std::string, double> out;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = detail::split_csv(line);
        if (!header) {
            if (cells.size() < 3 || cells[0] != "id") throw FormatError(path + ": expected header id,score_0,score_1");
            header = true;
            continue;
        }
        if (cells.size() < 3) throw FormatError(path + ": short row");
        if (out.count(cells[0])) throw FormatError(path + ": duplicate id '" + cells[0] + "'");
        out[cells[0]] = detail::parse_double(cells[1], path) - detail::parse_double(cells[2], path);
    }
    return out;
}

/// Attaches external score differences; every id must match.
inline void join_external(ScoreTable& t, const std::map<std::string, double>& ext) {
    if (ext.size() != t.size())
        throw FormatError("join: score table has " + std::to_string(t.size()) + " rows, external has " +
                          std::to_string(ext.size()));
    for (auto& r : t.rows) {
        auto it = ext.find(r.id);
        if (it == ext.end()) throw FormatError("join: id '" + r.id + "' has no external score");
        r.external = it->second;
    }
}

/// Class-0-minus-class-1 log-LF difference; positive favours class 0.
inline double generative_statistic(const ScoreRow& r) {
    if (r.log_lf.size() < 2) throw ContractViolation("generative statistic needs two log-LF columns");
    return r.log_lf[0] - r.log_lf[1];
}

struct Standardizer {
    double mean = 0.0;
    double scale = 1.0;
    double operator()(double v) const { return (v - mean) / scale; }
};

/// Zero-mean unit-variance map fitted on finite values; unit scale if flat.
inline Standardizer fit_standardizer(const std::vector<double>& v) {
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            s += x;
            ++n;
        }
    if (n == 0) return {};
    const double mean = s / double(n);
    for (double x : v)
        if (std::isfinite(x)) s2 += (x - mean) * (x - mean);
    const double sd = std::sqrt(s2 / double(n));
    return {mean, sd > 0.0 ? sd : 1.0};
}

struct SweepRow {
    double weight = 0.0;
    double accuracy = 0.0;
};

/// Combined statistic s(w) = (1-w) s_gen + w s_ext over n+1 uniform weights,
/// both standardized on `fit` (the validation table). Decides class 0 when
/// s >= 0.
inline std::vector<SweepRow> combination_sweep(const ScoreTable& test, const ScoreTable& fit, int n) {
    if (n < 1) throw ContractViolation("sweep needs at least one interval");
    if (!test.has_external() || !fit.has_external()) throw ContractViolation("sweep needs external scores on every row");
    std::vector<double> g, e;
    for (const auto& r : fit.rows) {
        g.push_back(generative_statistic(r));
        e.push_back(r.external);
    }
    const Standardizer sg = fit_standardizer(g), se = fit_standardizer(e);
    std::vector<SweepRow> out;
    for (int k = 0; k <= n; ++k) {
        const double w = double(k) / n;
        std::size_t correct = 0;
        for (const auto& r : test.rows) {
            const double s = (1.0 - w) * sg(generative_statistic(r)) + w * se(r.external);
            const int decision = s >= 0.0 ? 0 : 1;
            correct += decision == r.label;
        }
        out.push_back({w, test.size() ? double(correct) / double(test.size()) : 0.0});
    }
    return out;
}

/// Two-model inter-pair decision: 0 if model A reconstructs at least as well.
inline int outofset_decision(double stat_a, double stat_b) {
    const double a = std::isnan(stat_a) ? -std::numeric_limits<double>::infinity() : stat_a;
    const double b = std::isnan(stat_b) ? -std::numeric_limits<double>::infinity() : stat_b;
    return a >= b ? 0 : 1;
}

}  // namespace pbn
