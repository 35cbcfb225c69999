#pragma once

// Network assembly and seeded initialization.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pbn/network.hpp"

namespace pbn {

/// One layer of an architecture description.
struct LayerShape {
    MapKind kind = MapKind::dense;
    Index out_dim = 0;     // dense
    ConvGeometry conv{};   // conv (input extents are filled in by the builder)
};

inline LayerShape dense_layer(Index out_dim) { return {MapKind::dense, out_dim, {}}; }

inline LayerShape conv_layer(int out_channels, int kernel_rows, int kernel_cols, int stride_rows, int stride_cols) {
    LayerShape s;
    s.kind = MapKind::conv;
    s.conv.out_channels = out_channels;
    s.conv.kernel_rows = kernel_rows;
    s.conv.kernel_cols = kernel_cols;
    s.conv.stride_rows = stride_rows;
    s.conv.stride_cols = stride_cols;
    return s;
}

/// Assembles a zero-initialized network. `input_shape` is {channels, rows,
/// cols} (or {dim} for a dense-only network); `activations` lists the
/// interior activations, one per layer except the last.
inline Network build_network(std::vector<Index> input_shape, const std::vector<LayerShape>& shapes,
                             const std::vector<Activation>& activations, OutputPriorConfig output,
                             Activation final_activation = Activation::output_shift) {
    if (shapes.empty()) throw ContractViolation("build_network: no layers");
    if (activations.size() + 1 != shapes.size())
        throw ContractViolation("build_network: need one interior activation per layer except the last");
    Network net;
    net.output_prior = output;
    std::vector<Index> shape = std::move(input_shape);
    PriorKind prior = PriorKind::gaussian;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        Index in_dim = 1;
        for (Index s : shape) in_dim *= s;
        LayerSpec ly;
        if (shapes[l].kind == MapKind::conv) {
            ConvGeometry g = shapes[l].conv;
            if (shape.size() == 3) {
                g.in_channels = int(shape[0]);
                g.in_rows = int(shape[1]);
                g.in_cols = int(shape[2]);
            } else if (shape.size() == 2) {
                g.in_channels = 1;
                g.in_rows = int(shape[0]);
                g.in_cols = int(shape[1]);
            } else {
                throw ContractViolation("build_network: conv layer needs a 2-D or 3-D input shape");
            }
            ly.map = LinearMap::conv(g);
            shape = {g.out_channels, g.out_rows(), g.out_cols()};
        } else {
            ly.map = LinearMap::dense(shapes[l].out_dim, in_dim);
            shape = {shapes[l].out_dim};
        }
        ly.bias = VectorXd::Zero(ly.map.out_dim());
        ly.input_prior = prior;
        ly.activation = l + 1 < shapes.size() ? activations[l] : final_activation;
        prior = activation_prior(ly.activation);
        net.layers.push_back(std::move(ly));
    }
    net.output_prior.n_classes = int(net.layers.back().map.out_dim());
    net.validate();
    return net;
}

/// The spectrogram network: 45x20 input, conv 9@21x17 stride 5x4 (-> 405),
/// conv 24@5x3 on a 3x2 grid (-> 144), dense 64, dense 24, dense 2, with
/// activations linear, linear, TG, TG and the output shift.
inline Network paper_network(double C = 200.0, double L = 1.0) {
    return build_network({1, 45, 20},
                         {conv_layer(9, 21, 17, 5, 4), conv_layer(24, 5, 3, 3, 2), dense_layer(64), dense_layer(24),
                          dense_layer(2)},
                         {Activation::linear, Activation::linear, Activation::truncated_gaussian,
                          Activation::truncated_gaussian},
                         {C, L, 2});
}

inline Index fan_in(const LinearMap& m) {
    if (m.kind() == MapKind::conv) {
        const auto& g = m.geometry();
        return Index(g.in_channels) * g.kernel_rows * g.kernel_cols;
    }
    return m.in_dim();
}

/// Scaled-uniform fan-in initialization, U(-sqrt(3/fan_in), sqrt(3/fan_in)),
/// zero biases. The output layer is scaled down by `output_scale` so an
/// untrained classifier starts near chance. Deterministic in `seed`.
inline void initialize_weights(Network& net, std::uint64_t seed, double output_scale = 0.1) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& ly = net.layers[l];
        double limit = std::sqrt(3.0 / double(fan_in(ly.map)));
        if (l + 1 == net.layers.size()) limit *= output_scale;
        std::uniform_real_distribution<double> dist(-limit, limit);
        VectorXd p(ly.map.parameters().size());
        for (Index i = 0; i < p.size(); ++i) p[i] = dist(rng);
        ly.map = ly.map.with_parameters(std::move(p));
        ly.bias.setZero();
    }
}

/// Per-feature mean and standard deviation of a sample set (unit scale for
/// constant features).
inline Standardization fit_standardization(const std::vector<VectorXd>& samples) {
    if (samples.empty()) throw ContractViolation("fit_standardization: no samples");
    const Index d = samples.front().size();
    Standardization s;
    s.mean = VectorXd::Zero(d);
    for (const auto& x : samples) s.mean += x;
    s.mean /= double(samples.size());
    VectorXd var = VectorXd::Zero(d);
    for (const auto& x : samples) var += (x - s.mean).cwiseAbs2();
    var /= double(samples.size());
    s.scale = var.cwiseSqrt();
    for (Index i = 0; i < d; ++i)
        if (!(s.scale[i] > 1e-12)) s.scale[i] = 1.0;
    return s;
}

}  // namespace pbn
