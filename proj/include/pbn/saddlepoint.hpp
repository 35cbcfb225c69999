#pragma once

// Saddle-point machinery of one layer: solve W' lambda(W h) = z for h, the
// density of z = W'x under the layer prior, and the conditional mean of x.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pbn/linops.hpp"
#include "pbn/scalar_priors.hpp"

namespace pbn {

struct SaddleOptions {
    double tolerance = 1e-9;  // residual <= tolerance * (1 + |z|_inf)
    int max_iterations = 200;
    int max_halvings = 60;
    int polish_steps = 2;
    bool record_objective = false;
};

struct SaddleSolution {
    VectorXd h_hat;
    VectorXd x_hat;       // lambda(W h_hat), the conditional mean
    VectorXd weights;     // k''(W h_hat)
    double residual = 0;  // |W' lambda(W h) - z|_inf
    double objective = 0; // K(h) - h'z at h_hat
    GramFactor curvature; // W' diag(k'') W
    int iterations = 0;
    std::vector<double> objective_trace;  // accepted objective values, if recorded
};

namespace detail {

struct SaddleState {
    VectorXd h;
    VectorXd x;        // lambda(W h)
    VectorXd weights;  // k''(W h)
    VectorXd k3;       // k'''(W h)
    double objective = 0;
    double residual = 0;
};

inline SaddleState evaluate_saddle(const LinearMap& map, PriorKind prior, const VectorXd& z, VectorXd h) {
    SaddleState s;
    const VectorXd a = map.adjoint(h);
    s.x.resize(a.size());
    s.weights.resize(a.size());
    s.k3.resize(a.size());
    double k = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
        const Cumulants c = cumulants(prior, a[i]);
        k += c.k;
        s.x[i] = c.k1;
        s.weights[i] = c.k2;
        s.k3[i] = c.k3;
    }
    s.objective = k - h.dot(z);
    s.residual = (map.forward(s.x) - z).lpNorm<Eigen::Infinity>();
    s.h = std::move(h);
    return s;
}

inline bool usable_weights(const VectorXd& w) {
    for (Index i = 0; i < w.size(); ++i)
        if (!(w[i] > 0.0) || !std::isfinite(w[i])) return false;
    return true;
}

}  // namespace detail

/// Damped Newton on the strictly convex objective K(h) - h'z, started from
/// the least-squares solution. Throws ReconstructionFailure when z is not
/// reachable and SingularityError when W'W is singular.
inline SaddleSolution solve_saddle(const LinearMap& map, PriorKind prior, const VectorXd& z_tilde,
                                   const SaddleOptions& opt = {}) {
    if (z_tilde.size() != map.out_dim()) throw ContractViolation("solve_saddle: z has wrong length");
    if (!z_tilde.allFinite()) throw DomainError("solve_saddle: z is not finite");

    const GramFactor plain = gram_factorize(map, VectorXd::Ones(map.in_dim()));
    detail::SaddleState cur = detail::evaluate_saddle(map, prior, z_tilde, plain.solve(z_tilde));
    const double tol = opt.tolerance * (1.0 + z_tilde.lpNorm<Eigen::Infinity>());

    SaddleSolution sol;
    if (opt.record_objective) sol.objective_trace.push_back(cur.objective);

    auto newton_direction = [&](const detail::SaddleState& s) -> std::optional<VectorXd> {
        if (!detail::usable_weights(s.weights)) return std::nullopt;
        const GramFactor h = gram_factorize(map, s.weights);
        return h.solve(z_tilde - map.forward(s.x));
    };

    int it = 0;
    bool converged = std::isfinite(cur.objective) && cur.residual <= tol;
    while (!converged) {
        if (it >= opt.max_iterations)
            throw ReconstructionFailure("saddle-point iteration did not converge in " +
                                        std::to_string(opt.max_iterations) + " steps (residual " +
                                        std::to_string(cur.residual) + ")");
        auto dir = newton_direction(cur);
        if (!dir) throw ReconstructionFailure("saddle-point curvature vanished; target is not reachable");
        double step = 1.0;
        bool accepted = false;
        for (int k = 0; k <= opt.max_halvings; ++k, step *= 0.5) {
            detail::SaddleState trial = detail::evaluate_saddle(map, prior, z_tilde, cur.h + step * *dir);
            if (!std::isfinite(trial.objective) || !std::isfinite(trial.residual)) continue;
            const double slack = 1e-14 * (1.0 + std::abs(cur.objective));
            if (trial.objective < cur.objective ||
                (trial.objective <= cur.objective + slack && trial.residual < cur.residual)) {
                cur = std::move(trial);
                accepted = true;
                break;
            }
        }
        if (!accepted) throw ReconstructionFailure("saddle-point line search stalled");
        ++it;
        if (opt.record_objective) sol.objective_trace.push_back(cur.objective);
        converged = cur.residual <= tol;
    }

    // A converged Newton iterate is one step from full precision.
    for (int p = 0; p < opt.polish_steps && cur.residual > 0.0; ++p) {
        auto dir = newton_direction(cur);
        if (!dir) break;
        detail::SaddleState trial = detail::evaluate_saddle(map, prior, z_tilde, cur.h + *dir);
        if (!std::isfinite(trial.objective) || !(trial.residual < cur.residual)) break;
        cur = std::move(trial);
        if (opt.record_objective) sol.objective_trace.push_back(cur.objective);
    }

    if (!detail::usable_weights(cur.weights))
        throw ReconstructionFailure("saddle-point curvature vanished at the solution");
    sol.curvature = gram_factorize(map, cur.weights);
    sol.h_hat = std::move(cur.h);
    sol.x_hat = std::move(cur.x);
    sol.weights = std::move(cur.weights);
    sol.residual = cur.residual;
    sol.objective = cur.objective;
    sol.iterations = it;
    return sol;
}

/// Log-density of z~ = W'x for x drawn from the layer prior together with the
/// saddle point it was computed from. Exact for the Gaussian prior, saddle-point
/// approximation otherwise (the two formulas coincide for the Gaussian).
struct FeatureDensity {
    double log_density = 0.0;
    SaddleSolution saddle;
};

inline FeatureDensity feature_density(const LinearMap& map, PriorKind prior, const VectorXd& z_tilde,
                                      const SaddleOptions& opt = {}) {
    FeatureDensity out;
    const double m = double(map.out_dim());
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    if (prior == PriorKind::gaussian) {
        SaddleSolution s;
        s.curvature = gram_factorize(map, VectorXd::Ones(map.in_dim()));
        s.h_hat = s.curvature.solve(z_tilde);
        s.x_hat = map.adjoint(s.h_hat);
        s.weights = VectorXd::Ones(map.in_dim());
        s.residual = (map.forward(s.x_hat) - z_tilde).lpNorm<Eigen::Infinity>();
        s.objective = -0.5 * z_tilde.dot(s.h_hat);
        out.log_density = s.objective - 0.5 * s.curvature.logdet() - m * half_log_2pi;
        out.saddle = std::move(s);
        return out;
    }
    out.saddle = solve_saddle(map, prior, z_tilde, opt);
    out.log_density = out.saddle.objective - 0.5 * out.saddle.curvature.logdet() - m * half_log_2pi;
    return out;
}

inline double log_feature_density(const LinearMap& map, PriorKind prior, const VectorXd& z_tilde,
                                  const SaddleOptions& opt = {}) {
    return feature_density(map, prior, z_tilde, opt).log_density;
}

/// Saddle-point formula evaluated literally, for any prior.
inline double saddlepoint_log_density(const LinearMap& map, PriorKind prior, const VectorXd& z_tilde,
                                      const SaddleOptions& opt = {}) {
    const SaddleSolution s = solve_saddle(map, prior, z_tilde, opt);
    return s.objective - 0.5 * s.curvature.logdet() - 0.5 * double(map.out_dim()) * std::log(2.0 * std::numbers::pi);
}

/// E(x | W'x = z~) under the layer prior, lambda(W h_hat).
inline VectorXd conditional_mean(const LinearMap& map, PriorKind prior, const VectorXd& z_tilde,
                                 const SaddleOptions& opt = {}) {
    if (prior == PriorKind::gaussian) {
        if (z_tilde.size() != map.out_dim()) throw ContractViolation("conditional_mean: z has wrong length");
        const GramFactor g = gram_factorize(map, VectorXd::Ones(map.in_dim()));
        return map.adjoint(g.solve(z_tilde));
    }
    return solve_saddle(map, prior, z_tilde, opt).x_hat;
}

}  // namespace pbn
