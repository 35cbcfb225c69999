#pragma once

// Dimension-reducing linear maps z = A x (A is M x N, M <= N) with forward,
// adjoint, materialization, and weighted Gram factorization.
//
// Convention: A is the transpose of the N x M weight matrix W, so
// forward(x) = W'x and adjoint(h) = W h.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pbn/error.hpp"

namespace pbn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class MapKind { dense, conv };

inline const char* to_string(MapKind k) { return k == MapKind::dense ? "dense" : "conv"; }

/// Strided 2-D convolution with zero "same" padding. Output pixel (i, j)
/// is centred on input pixel (i*stride_rows, j*stride_cols); the output grid
/// is floor(in/stride) in each direction.
struct ConvGeometry {
    int in_channels = 1;
    int in_rows = 0;
    int in_cols = 0;
    int out_channels = 1;
    int kernel_rows = 1;
    int kernel_cols = 1;
    int stride_rows = 1;
    int stride_cols = 1;

    int out_rows() const { return in_rows / stride_rows; }
    int out_cols() const { return in_cols / stride_cols; }
    int pad_rows() const { return kernel_rows / 2; }
    int pad_cols() const { return kernel_cols / 2; }
    Index in_dim() const { return Index(in_channels) * in_rows * in_cols; }
    Index out_dim() const { return Index(out_channels) * out_rows() * out_cols(); }
    Index parameter_count() const { return Index(out_channels) * in_channels * kernel_rows * kernel_cols; }

    bool operator==(const ConvGeometry&) const = default;
};

class LinearMap {
public:
    LinearMap() = default;

    /// `a` is the M x N operator matrix.
    static LinearMap dense(MatrixXd a) {
        if (a.rows() > a.cols())
            throw ContractViolation("dense map would expand dimension (" + std::to_string(a.rows()) + " > " +
                                    std::to_string(a.cols()) + ")");
        LinearMap m;
        m.kind_ = MapKind::dense;
        m.rows_ = a.rows();
        m.cols_ = a.cols();
        m.params_.resize(a.size());
        for (Index r = 0; r < a.rows(); ++r)
            for (Index c = 0; c < a.cols(); ++c) m.params_[r * a.cols() + c] = a(r, c);
        m.matrix_ = std::move(a);
        return m;
    }

    /// Zero dense map of the given shape.
    static LinearMap dense(Index out_dim, Index in_dim) { return dense(MatrixXd::Zero(out_dim, in_dim)); }

    /// Kernels are laid out [out_channel][in_channel][row][col], row-major.
    static LinearMap conv(const ConvGeometry& g, VectorXd kernels) {
        if (g.in_channels <= 0 || g.in_rows <= 0 || g.in_cols <= 0 || g.out_channels <= 0 || g.kernel_rows <= 0 ||
            g.kernel_cols <= 0 || g.stride_rows <= 0 || g.stride_cols <= 0)
            throw ContractViolation("conv geometry has non-positive extent");
        if (g.out_rows() == 0 || g.out_cols() == 0) throw ContractViolation("conv stride larger than input");
        if (kernels.size() != g.parameter_count())
            throw ContractViolation("conv kernel stack has " + std::to_string(kernels.size()) + " values, expected " +
                                    std::to_string(g.parameter_count()));
        if (g.out_dim() > g.in_dim()) throw ContractViolation("conv map would expand dimension");
        LinearMap m;
        m.kind_ = MapKind::conv;
        m.geom_ = g;
        m.rows_ = g.out_dim();
        m.cols_ = g.in_dim();
        m.params_ = std::move(kernels);
        m.matrix_ = m.build_conv_matrix();
        return m;
    }

    static LinearMap conv(const ConvGeometry& g) { return conv(g, VectorXd::Zero(g.parameter_count())); }

    MapKind kind() const { return kind_; }
    Index out_dim() const { return rows_; }
    Index in_dim() const { return cols_; }
    const ConvGeometry& geometry() const { return geom_; }

    std::vector<Index> in_shape() const {
        if (kind_ == MapKind::conv) return {geom_.in_channels, geom_.in_rows, geom_.in_cols};
        return {cols_};
    }
    std::vector<Index> out_shape() const {
        if (kind_ == MapKind::conv) return {geom_.out_channels, geom_.out_rows(), geom_.out_cols()};
        return {rows_};
    }

    /// Flat parameters: dense entries row-major, or the kernel stack.
    const VectorXd& parameters() const { return params_; }

    LinearMap with_parameters(VectorXd p) const {
        if (p.size() != params_.size()) throw ContractViolation("parameter vector has wrong length");
        if (kind_ == MapKind::conv) return conv(geom_, std::move(p));
        MatrixXd a(rows_, cols_);
        for (Index r = 0; r < rows_; ++r)
            for (Index c = 0; c < cols_; ++c) a(r, c) = p[r * cols_ + c];
        return dense(std::move(a));
    }

    /// The M x N operator matrix.
    const MatrixXd& materialize() const { return matrix_; }

    VectorXd forward(const VectorXd& x) const {
        if (x.size() != cols_)
            throw ContractViolation("forward: input length " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(cols_));
        if (kind_ == MapKind::dense) return matrix_ * x;
        VectorXd z = VectorXd::Zero(rows_);
        for_each_tap([&](Index row, Index col, Index k) { z[row] += params_[k] * x[col]; });
        return z;
    }

    VectorXd adjoint(const VectorXd& h) const {
        if (h.size() != rows_)
            throw ContractViolation("adjoint: input length " + std::to_string(h.size()) + ", expected " +
                                    std::to_string(rows_));
        if (kind_ == MapKind::dense) return matrix_.transpose() * h;
        VectorXd x = VectorXd::Zero(cols_);
        for_each_tap([&](Index row, Index col, Index k) { x[col] += params_[k] * h[row]; });
        return x;
    }

    /// Maps a gradient with respect to the operator matrix onto the
    /// parameter vector.
    VectorXd pullback(const MatrixXd& d_matrix) const {
        if (d_matrix.rows() != rows_ || d_matrix.cols() != cols_)
            throw ContractViolation("pullback: gradient has wrong shape");
        VectorXd g = VectorXd::Zero(params_.size());
        if (kind_ == MapKind::dense) {
            for (Index r = 0; r < rows_; ++r)
                for (Index c = 0; c < cols_; ++c) g[r * cols_ + c] = d_matrix(r, c);
            return g;
        }
        for_each_tap([&](Index row, Index col, Index k) { g[k] += d_matrix(row, col); });
        return g;
    }

    /// Visits every in-bounds (output row, input column, kernel index) triple.
    template <typename F>
    void for_each_tap(F&& f) const {
        const auto& g = geom_;
        const int orows = g.out_rows(), ocols = g.out_cols();
        for (int oc = 0; oc < g.out_channels; ++oc)
            for (int i = 0; i < orows; ++i)
                for (int j = 0; j < ocols; ++j) {
                    const Index row = (Index(oc) * orows + i) * ocols + j;
                    for (int ic = 0; ic < g.in_channels; ++ic)
                        for (int u = 0; u < g.kernel_rows; ++u) {
                            const int r = i * g.stride_rows + u - g.pad_rows();
                            if (r < 0 || r >= g.in_rows) continue;
                            for (int v = 0; v < g.kernel_cols; ++v) {
                                const int c = j * g.stride_cols + v - g.pad_cols();
                                if (c < 0 || c >= g.in_cols) continue;
                                const Index col = (Index(ic) * g.in_rows + r) * g.in_cols + c;
                                const Index k = ((Index(oc) * g.in_channels + ic) * g.kernel_rows + u) * g.kernel_cols + v;
                                f(row, col, k);
                            }
                        }
                }
    }

private:
    MatrixXd build_conv_matrix() const {
        MatrixXd a = MatrixXd::Zero(rows_, cols_);
        for_each_tap([&](Index row, Index col, Index k) { a(row, col) += params_[k]; });
        return a;
    }

    MapKind kind_ = MapKind::dense;
    ConvGeometry geom_{};
    Index rows_ = 0;
    Index cols_ = 0;
    VectorXd params_;
    MatrixXd matrix_;
};

/// Cholesky factor of S = A diag(w) A' (M x M, symmetric positive definite).
class GramFactor {
public:
    GramFactor() = default;
    explicit GramFactor(MatrixXd gram) : gram_(std::move(gram)) {
        const Index m = gram_.rows();
        if (m == 0) {
            logdet_ = 0.0;
            return;
        }
        llt_.compute(gram_);
        const double trace = gram_.trace();
        if (llt_.info() != Eigen::Success || !std::isfinite(trace) || trace <= 0.0)
            throw SingularityError("Gram matrix is not positive definite");
        const MatrixXd& l = llt_.matrixLLT();
        const double floor = 1e-12 * trace / double(m);
        double ld = 0.0;
        for (Index i = 0; i < m; ++i) {
            const double pivot = l(i, i) * l(i, i);
            if (!(pivot >= floor))
                throw SingularityError("Gram pivot " + std::to_string(pivot) + " below 1e-12*trace/M");
            ld += std::log(l(i, i));
        }
        logdet_ = 2.0 * ld;
    }

    Index dim() const { return gram_.rows(); }
    double logdet() const { return logdet_; }
    const MatrixXd& matrix() const { return gram_; }

    VectorXd solve(const VectorXd& r) const {
        if (r.size() != dim()) throw ContractViolation("gram solve: right-hand side has wrong length");
        if (dim() == 0) return r;
        return llt_.solve(r);
    }

    MatrixXd solve_matrix(const MatrixXd& r) const {
        if (r.rows() != dim()) throw ContractViolation("gram solve: right-hand side has wrong rows");
        if (dim() == 0) return r;
        return llt_.solve(r);
    }

private:
    MatrixXd gram_;
    Eigen::LLT<MatrixXd> llt_;
    double logdet_ = 0.0;
};

/// Factorizes A diag(weights) A'. Weights must be positive and finite.
inline GramFactor gram_factorize(const LinearMap& map, const VectorXd& weights) {
    if (weights.size() != map.in_dim()) throw ContractViolation("gram_factorize: weights have wrong length");
    for (Index i = 0; i < weights.size(); ++i)
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
            throw DomainError("gram_factorize: weight " + std::to_string(i) + " is not positive and finite");
    const MatrixXd& a = map.materialize();
    MatrixXd scaled = a * weights.cwiseSqrt().asDiagonal();
    MatrixXd gram = MatrixXd::Zero(a.rows(), a.rows());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(scaled);
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    return GramFactor(std::move(gram));
}

}  // namespace pbn
