#pragma once

// Deterministic backprojection through the network: each layer is undone by
// inverting its activation and taking the conditional mean of its input.

#include <algorithm>
#include <cmath>
#include <random>

#include "pbn/network.hpp"

namespace pbn {

/// Input of layer `layer` (zero-based) given its pre-activation output z.
inline VectorXd backstep_from_pre_activation(const Network& net, int layer, const VectorXd& z,
                                             const SaddleOptions& opt = {}) {
    if (layer < 0 || layer >= net.depth()) throw ContractViolation("backstep: layer index out of range");
    const LayerSpec& ly = net.layers[layer];
    if (z.size() != ly.map.out_dim()) throw ContractViolation("backstep: z has wrong length");
    try {
        return conditional_mean(ly.map, ly.input_prior, z - ly.bias, opt);
    } catch (const ReconstructionFailure& e) {
        throw ReconstructionFailure(e.reason(), layer);
    } catch (const SingularityError& e) {
        throw SingularityError(e.reason(), layer);
    }
}

/// Input of an interior layer given its post-activation output.
inline VectorXd backstep(const Network& net, int layer, const VectorXd& x_next, const SaddleOptions& opt = {}) {
    if (layer < 0 || layer >= net.depth()) throw ContractViolation("backstep: layer index out of range");
    const LayerSpec& ly = net.layers[layer];
    if (ly.activation == Activation::output_shift)
        throw ContractViolation("backstep: the output shift needs a label; invert it with invert_output_shift");
    VectorXd z(x_next.size());
    if (ly.activation == Activation::output_linear) {
        z = x_next;
    } else {
        const PriorKind p = activation_prior(ly.activation);
        for (Index i = 0; i < x_next.size(); ++i) z[i] = activation_inverse(p, x_next[i]);
    }
    return backstep_from_pre_activation(net, layer, z, opt);
}

/// Backs up from the pre-activation output of `layer` to raw input units.
inline VectorXd reconstruct_from_layer(const Network& net, int layer, const VectorXd& z_layer,
                                       const SaddleOptions& opt = {}) {
    VectorXd x = backstep_from_pre_activation(net, layer, z_layer, opt);
    for (int l = layer - 1; l >= 0; --l) x = backstep(net, l, x, opt);
    return net.standardization.invert(x);
}

/// Inverse of the output shift for one coordinate with label element l.
inline double invert_output_shift(double x_out, double l, const OutputPriorConfig& cfg) {
    // lambda(z) - z lies in l-offset +- C/2, so z is bracketed within C/2 of x + offset.
    const double offset = l * (cfg.L + 0.5 * cfg.C) / cfg.L;
    const double centre = x_out + offset;
    double lo = centre - 0.5 * cfg.C - 1.0;
    double hi = centre + 0.5 * cfg.C + 1.0;
    double z = centre;
    for (int it = 0; it < 200; ++it) {
        const double f = output_shift_scalar(z, l, cfg) - x_out;
        if (f == 0.0) return z;
        if (f < 0.0)
            lo = z;
        else
            hi = z;
        double next = z - f / output_shift_slope(z, cfg);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - z) <= 1e-15 * std::max(1.0, std::abs(z))) return next;
        z = next;
    }
    return z;
}

inline VectorXd invert_output_shift(const VectorXd& x_out, int label, const OutputPriorConfig& cfg) {
    const VectorXd l = label_signal(label, cfg);
    VectorXd z(x_out.size());
    for (Index i = 0; i < x_out.size(); ++i) z[i] = invert_output_shift(x_out[i], l[i], cfg);
    return z;
}

/// Output-prior draw u mapped back to the final pre-activation z_L.
inline VectorXd synthesis_seed_output(const Network& net, std::uint64_t seed, int label) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    VectorXd u(net.n_classes());
    for (Index i = 0; i < u.size(); ++i) u[i] = normal(rng);
    if (net.layers.back().activation == Activation::output_linear) return u;
    return invert_output_shift(u, label, net.output_prior);
}

/// Random sample: u ~ N(0, I) at the output, then the deterministic chain.
inline VectorXd synthesize(const Network& net, std::uint64_t seed, int label, const SaddleOptions& opt = {}) {
    const VectorXd z_last = synthesis_seed_output(net, seed, label);
    return reconstruct_from_layer(net, net.depth() - 1, z_last, opt);
}

inline constexpr double kReconstructionMseFloor = 1e-12;

/// -log of the per-element mean squared error, with the MSE floored at 1e-12.
inline double reconstruction_score(const VectorXd& x, const VectorXd& x_hat) {
    if (x.size() != x_hat.size() || x.size() == 0) throw ContractViolation("reconstruction_score: length mismatch");
    const double mse = (x - x_hat).squaredNorm() / double(x.size());
    return -std::log(std::max(mse, kReconstructionMseFloor));
}

/// Reconstruction statistic of a raw sample from the output of `layer`
/// (zero-based, interior layers only).
inline double reconstruction_statistic(const Network& net, const VectorXd& x_raw, int layer,
                                       const SaddleOptions& opt = {}) {
    if (layer < 0 || layer >= net.depth() - 1)
        throw ContractViolation("reconstruction_statistic: layer must be an interior layer");
    const ForwardTrace t = forward(net, x_raw);
    return reconstruction_score(x_raw, reconstruct_from_layer(net, layer, t.z[layer], opt));
}

}  // namespace pbn
