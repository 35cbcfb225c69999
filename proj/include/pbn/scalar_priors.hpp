#pragma once

// Maximum-entropy scalar priors and their cumulant generating functions.
//
//   Gaussian            p0(x) = N(x)            k(a) = a^2/2
//   TruncatedGaussian   p0(x) = 2 N(x), x > 0   k(a) = a^2/2 + log(2 Phi(a))
//   Uniform             p0(x) = 1, 0 < x < 1    k(a) = log((e^a - 1)/a)
//
// The activation is k', its slope k'' and k''' feed the likelihood gradient.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

#include "pbn/error.hpp"

namespace pbn {

enum class PriorKind { gaussian, truncated_gaussian, uniform };

inline const char* to_string(PriorKind k) {
    switch (k) {
        case PriorKind::gaussian: return "gaussian";
        case PriorKind::truncated_gaussian: return "truncated_gaussian";
        case PriorKind::uniform: return "uniform";
    }
    return "?";
}

inline PriorKind parse_prior_kind(std::string_view s) {
    if (s == "gaussian" || s == "linear") return PriorKind::gaussian;
    if (s == "truncated_gaussian" || s == "tg") return PriorKind::truncated_gaussian;
    if (s == "uniform" || s == "ted") return PriorKind::uniform;
    throw FormatError("unknown prior kind '" + std::string(s) + "'");
}

/// k and its first three derivatives at one point.
struct Cumulants {
    double k = 0.0;
    double k1 = 0.0;  // activation
    double k2 = 0.0;  // activation slope
    double k3 = 0.0;
};

namespace detail {

inline constexpr double log_sqrt_2pi = 0.91893853320467274178;
inline constexpr double log2 = std::numbers::ln2;

// Tail values G_k = k / (t + G_{k+1}) of the Laplace continued fraction for
// the upper-tail Mills ratio, R(t) = 1 / (t + G_1). Depth 64 is exact to
// double precision for t >= 5.
struct MillsTail {
    double g1, g2, g3, g4;
};

inline MillsTail mills_tail(double t) {
    double g = 0.0;
    MillsTail m{};
    for (int k = 64; k >= 1; --k) {
        g = k / (t + g);
        if (k == 4) m.g4 = g;
        if (k == 3) m.g3 = g;
        if (k == 2) m.g2 = g;
    }
    m.g1 = g;
    return m;
}

inline Cumulants gaussian_cumulants(double a) { return {0.5 * a * a, a, 1.0, 0.0}; }

inline Cumulants truncated_gaussian_cumulants(double a) {
    Cumulants c;
    if (a < -5.0) {
        // Direct Phi underflows near a = -38; the tail form is cancellation-free.
        const double t = -a;
        const auto [g1, g2, g3, g4] = mills_tail(t);
        c.k = log2 - log_sqrt_2pi - std::log(t + g1);
        c.k1 = g1;
        c.k2 = g1 * (t + 2.0 * g2 - g3) / ((t + g3) * (t + g2));
        const double g3_minus_g2 = (t + 3.0 * g3 - 2.0 * g4) / ((t + g4) * (t + g3));
        c.k3 = (t + g1) * g1 * g1 * g2 * g3_minus_g2;
        return c;
    }
    const double upper = 0.5 * std::erfc(a / std::numbers::sqrt2);  // 1 - Phi(a)
    const double phi = a > 0.0 ? 1.0 - upper : 0.5 * std::erfc(-a / std::numbers::sqrt2);
    const double log_phi = a > 0.0 ? std::log1p(-upper) : std::log(phi);
    const double density = std::exp(-0.5 * a * a - log_sqrt_2pi);
    const double r = density / phi;
    const double m = a + r;
    c.k = 0.5 * a * a + log2 + log_phi;
    c.k1 = m;
    c.k2 = 1.0 - r * m;
    c.k3 = r * (m * m - c.k2);
    return c;
}

inline Cumulants uniform_cumulants(double a) {
    Cumulants c;
    const double s = std::abs(a);
    if (s < 0.1) {
        const double a2 = a * a;
        c.k = a / 2 + a2 * (1.0 / 24 + a2 * (-1.0 / 2880 + a2 * (1.0 / 181440 + a2 * (-1.0 / 9676800))));
        c.k1 = 0.5 + a * (1.0 / 12 + a2 * (-1.0 / 720 + a2 * (1.0 / 30240 + a2 * (-1.0 / 1209600 + a2 / 47900160))));
        c.k2 = 1.0 / 12 + a2 * (-1.0 / 240 + a2 * (1.0 / 6048 + a2 * (-1.0 / 172800 + a2 / 5322240)));
        c.k3 = a * (-1.0 / 120 + a2 * (1.0 / 1512 + a2 * (-1.0 / 28800 + a2 * (1.0 / 665280 - a2 * 691.0 / 11887948800.0))));
        return c;
    }
    const double e = std::exp(-s);
    const double one_minus_e = -std::expm1(-s);
    const double log_core = std::log(one_minus_e) - std::log(s);  // log((1 - e^-s)/s)
    c.k = a > 0.0 ? s + log_core : log_core;
    const double upper = 1.0 / one_minus_e - 1.0 / s;  // k1(s), s > 0
    c.k1 = a > 0.0 ? upper : 1.0 / s - 1.0 / std::expm1(s);
    c.k2 = 1.0 / (s * s) - e / (one_minus_e * one_minus_e);
    const double k3_pos = -2.0 / (s * s * s) + e * (1.0 + e) / (one_minus_e * one_minus_e * one_minus_e);
    c.k3 = a > 0.0 ? k3_pos : -k3_pos;
    return c;
}

}  // namespace detail

inline Cumulants cumulants(PriorKind kind, double a) {
    switch (kind) {
        case PriorKind::gaussian: return detail::gaussian_cumulants(a);
        case PriorKind::truncated_gaussian: return detail::truncated_gaussian_cumulants(a);
        case PriorKind::uniform: return detail::uniform_cumulants(a);
    }
    return {};
}

inline double cgf(PriorKind kind, double a) { return cumulants(kind, a).k; }
inline double activation(PriorKind kind, double a) { return cumulants(kind, a).k1; }
inline double activation_deriv(PriorKind kind, double a) { return cumulants(kind, a).k2; }
inline double activation_deriv2(PriorKind kind, double a) { return cumulants(kind, a).k3; }

/// Open support of the prior, which is also the range of its activation.
inline bool in_support(PriorKind kind, double x) {
    switch (kind) {
        case PriorKind::gaussian: return std::isfinite(x);
        case PriorKind::truncated_gaussian: return x > 0.0 && std::isfinite(x);
        case PriorKind::uniform: return x > 0.0 && x < 1.0;
    }
    return false;
}

/// Inverse of the activation by bracketed Newton iteration.
inline double activation_inverse(PriorKind kind, double y) {
    if (!in_support(kind, y))
        throw DomainError(std::string("activation_inverse: ") + std::to_string(y) + " outside the open range of the " +
                          to_string(kind) + " activation");
    if (kind == PriorKind::gaussian) return y;

    // Brackets from k1(-1/y) < y (Mills-ratio bound) and k1(y) > y for TG,
    // and the reflection symmetry k1(-a) = 1 - k1(a) for the uniform prior.
    double lo, hi, a;
    if (kind == PriorKind::truncated_gaussian) {
        lo = -1.0 / y;
        hi = y;
        a = y >= 1.0 ? y - 1.0 / y : -(1.0 / y - 2.0 * y);  // asymptotic guesses
    } else {
        lo = -1.0 / y;
        hi = 1.0 / (1.0 - y);
        a = y < 0.5 ? -(1.0 / y) + 2.0 : 1.0 / (1.0 - y) - 2.0;
    }
    if (!(a > lo && a < hi)) a = 0.5 * (lo + hi);

    for (int it = 0; it < 400; ++it) {
        const Cumulants c = cumulants(kind, a);
        const double f = c.k1 - y;
        if (f == 0.0 || std::abs(f) <= 1e-15 * std::abs(y)) return a;
        if (f < 0.0)
            lo = a;
        else
            hi = a;
        double next = a - f / c.k2;
        if (!(c.k2 > 0.0) || !std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
        if (next == a || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi)))
            return next;
        a = next;
    }
    return a;
}

/// Log-density of one coordinate; -infinity outside the open support.
inline double log_density(PriorKind kind, double x) {
    if (!in_support(kind, x)) return -std::numeric_limits<double>::infinity();
    switch (kind) {
        case PriorKind::gaussian: return -0.5 * x * x - detail::log_sqrt_2pi;
        case PriorKind::truncated_gaussian: return detail::log2 - 0.5 * x * x - detail::log_sqrt_2pi;
        case PriorKind::uniform: return 0.0;
    }
    return 0.0;
}

/// Sum of coordinate log-densities; -infinity if any coordinate is outside the support.
inline double log_density(PriorKind kind, const Eigen::VectorXd& x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = log_density(kind, x[i]);
        if (v == -std::numeric_limits<double>::infinity()) return v;
        s += v;
    }
    return s;
}

/// d/dx of the coordinate log-density inside the support.
inline double log_density_deriv(PriorKind kind, double x) { return kind == PriorKind::uniform ? 0.0 : -x; }

}  // namespace pbn
