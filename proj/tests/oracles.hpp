#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numerical routines except to read
// network parameters.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pbn/network.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Truncated-Gaussian activation a + N(a)/Phi(a) in extended precision.
inline long double tg_activation_ld(long double a) {
    const long double pi = 3.141592653589793238462643383279502884L;
    const long double n = std::exp(-a * a / 2.0L) / std::sqrt(2.0L * pi);
    const long double phi = 0.5L * std::erfc(-a / std::sqrt(2.0L));
    return a + n / phi;
}

/// Extended-precision cumulant k(a) = a^2/2 + log(2 Phi(a)).
inline long double tg_cgf_ld(long double a) {
    return a * a / 2.0L + std::log(std::erfc(-a / std::sqrt(2.0L)));
}

// ---------------------------------------------------------------------------
// Density of z = sum_i w_i x_i with x_i iid half-normal or uniform(0,1),
// by exact cell masses convolved on a uniform grid.

struct MassGrid {
    double lo = 0.0;  // left edge of cell 0 after all convolutions
    double h = 1.0;
    int factors = 0;
    std::vector<double> mass;

    /// Density averaged over 2r+1 cells around z (cells are left-anchored,
    /// so every convolution shifts centres by h/2).
    double density(double z, int r = 2) const {
        const double pos = (z - lo) / h - 0.5 * factors;
        const long i = std::lround(pos);
        double s = 0.0;
        for (long d = -r; d <= r; ++d)
            if (i + d >= 0 && i + d < long(mass.size())) s += mass[std::size_t(i + d)];
        return s / (double(2 * r + 1) * h);
    }

    double quantile(double q) const {
        double c = 0.0;
        for (std::size_t i = 0; i < mass.size(); ++i) {
            c += mass[i];
            if (c >= q) return lo + (double(i) + 0.5 * factors) * h;
        }
        return lo + double(mass.size()) * h;
    }
};

inline double base_cdf(bool uniform, double x) {
    if (uniform) return std::clamp(x, 0.0, 1.0);
    return x <= 0.0 ? 0.0 : std::erf(x / std::sqrt(2.0));
}

inline MassGrid scaled_masses(bool uniform, double w, double h) {
    const double top = uniform ? 1.0 : 9.0;
    const double a = std::min(0.0, w * top), b = std::max(0.0, w * top);
    const long n0 = long(std::floor(a / h)), n1 = long(std::ceil(b / h));
    MassGrid g;
    g.lo = double(n0) * h;
    g.h = h;
    g.factors = 1;
    g.mass.assign(std::size_t(n1 - n0), 0.0);
    for (long i = n0; i < n1; ++i) {
        const double u0 = double(i) * h, u1 = double(i + 1) * h;
        g.mass[std::size_t(i - n0)] =
            w > 0 ? base_cdf(uniform, u1 / w) - base_cdf(uniform, u0 / w) : base_cdf(uniform, u0 / w) - base_cdf(uniform, u1 / w);
    }
    return g;
}

inline MassGrid convolve(const MassGrid& a, const MassGrid& b) {
    MassGrid g;
    g.lo = a.lo + b.lo;
    g.h = a.h;
    g.factors = a.factors + b.factors;
    g.mass.assign(a.mass.size() + b.mass.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.mass.size(); ++i) {
        if (a.mass[i] == 0.0) continue;
        for (std::size_t j = 0; j < b.mass.size(); ++j) g.mass[i + j] += a.mass[i] * b.mass[j];
    }
    return g;
}

inline MassGrid weighted_sum_density(bool uniform, const std::vector<double>& w, double h = 2e-3) {
    MassGrid g = scaled_masses(uniform, w[0], h);
    for (std::size_t i = 1; i < w.size(); ++i) g = convolve(g, scaled_masses(uniform, w[i], h));
    return g;
}

// ---------------------------------------------------------------------------
// All-linear Gaussian chain: the projected density is Gaussian. Backing up
// one layer, z ~ N(mu, S) gives x = A+ (z - b) + (I - P) e with e ~ N(0, I).

struct Gaussian {
    VectorXd mean;
    MatrixXd cov;

    double log_density(const VectorXd& x) const {
        Eigen::LLT<MatrixXd> llt(cov);
        const VectorXd d = x - mean;
        const VectorXd s = llt.matrixL().solve(d);
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        return -0.5 * s.squaredNorm() - 0.5 * logdet - 0.5 * double(x.size()) * std::log(2.0 * M_PI);
    }
};

/// Requires every activation linear and the final one output_linear (plain
/// N(0, I) on the last pre-activation).
inline Gaussian linear_chain_density(const pbn::Network& net) {
    Gaussian g;
    const auto& last = net.layers.back();
    g.mean = VectorXd::Zero(last.map.out_dim());
    g.cov = MatrixXd::Identity(last.map.out_dim(), last.map.out_dim());
    for (int l = net.depth() - 1; l >= 0; --l) {
        const auto& ly = net.layers[std::size_t(l)];
        const MatrixXd& a = ly.map.materialize();
        const MatrixXd pinv = a.transpose() * (a * a.transpose()).inverse();
        const MatrixXd proj = pinv * a;
        Gaussian up;
        up.mean = pinv * (g.mean - ly.bias);
        up.cov = pinv * g.cov * pinv.transpose() + (MatrixXd::Identity(a.cols(), a.cols()) - proj);
        g = up;
    }
    if (!net.standardization.empty()) {
        const auto& s = net.standardization;
        g.mean = g.mean.cwiseProduct(s.scale) + s.mean;
        g.cov = s.scale.asDiagonal() * g.cov * s.scale.asDiagonal();
    }
    return g;
}

// ---------------------------------------------------------------------------
// Finite differences over every parameter of a network.

/// Visits each scalar parameter with a setter, in layer order: weights then bias.
inline void for_each_parameter(pbn::Network& net, const std::function<void(int, bool, pbn::Index)>& f) {
    for (int l = 0; l < net.depth(); ++l) {
        const auto& ly = net.layers[std::size_t(l)];
        for (pbn::Index i = 0; i < ly.map.parameters().size(); ++i) f(l, false, i);
        for (pbn::Index i = 0; i < ly.bias.size(); ++i) f(l, true, i);
    }
}

inline double get_param(const pbn::Network& net, int l, bool bias, pbn::Index i) {
    const auto& ly = net.layers[std::size_t(l)];
    return bias ? ly.bias[i] : ly.map.parameters()[i];
}

inline void set_param(pbn::Network& net, int l, bool bias, pbn::Index i, double v) {
    auto& ly = net.layers[std::size_t(l)];
    if (bias) {
        ly.bias[i] = v;
        return;
    }
    VectorXd p = ly.map.parameters();
    p[i] = v;
    ly.map = ly.map.with_parameters(std::move(p));
}

/// Central difference (two points) or five-point stencil.
inline double derivative(pbn::Network net, int l, bool bias, pbn::Index i, double h,
                         const std::function<double(const pbn::Network&)>& f, bool five_point = false) {
    const double p0 = get_param(net, l, bias, i);
    auto at = [&](double d) {
        set_param(net, l, bias, i, p0 + d);
        return f(net);
    };
    if (!five_point) return (at(h) - at(-h)) / (2.0 * h);
    return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0 * h);
}

/// Relative error with a floor so near-zero entries compare absolutely.
inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ---------------------------------------------------------------------------
// MEL band placement, rederived from the textbook formula.

inline int mel_band_containing(double f, int bands, double f_max) {
    auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
    const double step = mel(f_max) / (bands + 1);
    // band b peaks at centre edge b+1; the band "containing" f is the one whose peak is closest
    int best = 0;
    double best_d = 1e300;
    for (int b = 0; b < bands; ++b) {
        const double d = std::abs(mel(f) - step * (b + 1));
        if (d < best_d) {
            best_d = d;
            best = b;
        }
    }
    return best;
}

}  // namespace oracle
