#pragma once

// 8-bit binary PGM (P5) dumps with per-image min-max normalization.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pbn/error.hpp"

namespace pbn {

/// Grid layout of a feature vector for display: a {frames, bands} shape is
/// drawn with bands as rows (highest band on top) and frames as columns;
/// anything else is a single row.
struct ImageLayout {
    int rows = 1;
    int cols = 1;
    bool spectrogram = false;
};

inline ImageLayout image_layout(const std::vector<int>& shape, Eigen::Index n) {
    if (shape.size() == 2 && Eigen::Index(shape[0]) * shape[1] == n) return {shape[1], shape[0], true};
    return {1, int(n), false};
}

inline std::vector<unsigned char> to_gray(const Eigen::VectorXd& v, const ImageLayout& lay) {
    const double lo = v.minCoeff(), hi = v.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    std::vector<unsigned char> px(std::size_t(lay.rows) * lay.cols);
    for (int r = 0; r < lay.rows; ++r)
        for (int c = 0; c < lay.cols; ++c) {
            const Eigen::Index src = lay.spectrogram ? Eigen::Index(c) * lay.rows + (lay.rows - 1 - r) : c;
            const double u = (v[src] - lo) / span;
            px[std::size_t(r) * lay.cols + c] = static_cast<unsigned char>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0));
        }
    return px;
}

inline void write_pgm(const std::string& path, const Eigen::VectorXd& v, const ImageLayout& lay,
                      const std::string& comment = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + path);
    out << "P5\n";
    if (!comment.empty()) out << "# " << comment << "\n";
    out << lay.cols << ' ' << lay.rows << "\n255\n";
    const auto px = to_gray(v, lay);
    out.write(reinterpret_cast<const char*>(px.data()), std::streamsize(px.size()));
}

}  // namespace pbn
