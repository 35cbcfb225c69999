#pragma once

// Feed-forward network viewed as a projected belief network: each layer is
// z = W'x + b followed by an activation that is the derivative of the next
// layer's prior CGF. The last layer feeds a label-dependent level shift and a
// standard normal output prior.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "pbn/linops.hpp"
#include "pbn/saddlepoint.hpp"
#include "pbn/scalar_priors.hpp"

namespace pbn {

enum class Activation {
    linear,              // k' of the Gaussian prior
    truncated_gaussian,  // k' of the truncated Gaussian prior (softplus-like)
    ted,                 // k' of the uniform prior (sigmoid-like)
    output_shift,        // label-dependent shift into the output prior
    output_linear,       // identity into the output prior
};

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::truncated_gaussian: return "tg";
        case Activation::ted: return "ted";
        case Activation::output_shift: return "output_shift";
        case Activation::output_linear: return "output_linear";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "linear") return Activation::linear;
    if (s == "tg" || s == "truncated_gaussian") return Activation::truncated_gaussian;
    if (s == "ted" || s == "uniform") return Activation::ted;
    if (s == "output_shift" || s == "shift") return Activation::output_shift;
    if (s == "output_linear") return Activation::output_linear;
    throw FormatError("unknown activation '" + std::string(s) + "'");
}

inline bool is_output_activation(Activation a) {
    return a == Activation::output_shift || a == Activation::output_linear;
}

/// The prior whose CGF derivative is this activation.
inline PriorKind activation_prior(Activation a) {
    switch (a) {
        case Activation::truncated_gaussian: return PriorKind::truncated_gaussian;
        case Activation::ted: return PriorKind::uniform;
        default: return PriorKind::gaussian;
    }
}

inline Activation activation_for(PriorKind p) {
    switch (p) {
        case PriorKind::truncated_gaussian: return Activation::truncated_gaussian;
        case PriorKind::uniform: return Activation::ted;
        default: return Activation::linear;
    }
}

struct LayerSpec {
    LinearMap map;
    VectorXd bias;
    PriorKind input_prior = PriorKind::gaussian;
    Activation activation = Activation::linear;
};

struct OutputPriorConfig {
    double C = 200.0;  // penalty scale of the sigmoid shift
    double L = 1.0;    // label level
    int n_classes = 2;
};

/// Per-feature affine standardization applied before the first layer.
struct Standardization {
    VectorXd mean;
    VectorXd scale;

    bool empty() const { return mean.size() == 0; }
    VectorXd apply(const VectorXd& x) const {
        if (empty()) return x;
        return (x - mean).cwiseQuotient(scale);
    }
    VectorXd invert(const VectorXd& x) const {
        if (empty()) return x;
        return x.cwiseProduct(scale) + mean;
    }
    /// log |d standardized / d raw|.
    double log_jacobian() const {
        if (empty()) return 0.0;
        return -scale.array().log().sum();
    }
};

struct Network {
    std::vector<LayerSpec> layers;
    OutputPriorConfig output_prior;
    Standardization standardization;

    Index input_dim() const { return layers.empty() ? 0 : layers.front().map.in_dim(); }
    int n_classes() const { return output_prior.n_classes; }
    int depth() const { return int(layers.size()); }

    void validate() const {
        if (layers.empty()) throw ContractViolation("network has no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& ly = layers[l];
            const std::string where = " (layer " + std::to_string(l + 1) + ")";
            if (ly.map.out_dim() > ly.map.in_dim()) throw ContractViolation("layer expands dimension" + where);
            if (ly.bias.size() != ly.map.out_dim()) throw ContractViolation("bias length mismatch" + where);
            const bool last = l + 1 == layers.size();
            if (last != is_output_activation(ly.activation))
                throw ContractViolation(last ? "last layer needs an output activation" + where
                                             : "output activation on an interior layer" + where);
            if (!last) {
                if (layers[l + 1].map.in_dim() != ly.map.out_dim())
                    throw ContractViolation("adjacent layer shapes differ" + where);
                if (layers[l + 1].input_prior != activation_prior(ly.activation))
                    throw ContractViolation("input prior of the next layer does not match this activation" + where);
            }
        }
        if (layers.front().input_prior != PriorKind::gaussian)
            throw ContractViolation("first layer must assume a Gaussian prior on standardized input");
        if (layers.back().map.out_dim() != output_prior.n_classes)
            throw ContractViolation("final layer width differs from the number of classes");
        if (!(output_prior.C >= 0.0) || !(output_prior.L > 0.0)) throw ContractViolation("output prior needs C >= 0, L > 0");
        if (!standardization.empty() &&
            (standardization.mean.size() != input_dim() || standardization.scale.size() != input_dim()))
            throw ContractViolation("standardization has wrong length");
    }
};

/// Shifted one-hot label signal: +L at the label, -L elsewhere.
inline VectorXd label_signal(int label, const OutputPriorConfig& cfg) {
    if (label < 0 || label >= cfg.n_classes) throw ContractViolation("label out of range");
    VectorXd l = VectorXd::Constant(cfg.n_classes, -cfg.L);
    l[label] = cfg.L;
    return l;
}

namespace detail {
inline double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}
}  // namespace detail

/// lambda(z) = z + C[sigma(3z) - 1/2] - l (L + C/2)/L for one coordinate.
inline double output_shift_scalar(double z, double l, const OutputPriorConfig& cfg) {
    return z + cfg.C * (detail::sigmoid(3.0 * z) - 0.5) - l * (cfg.L + 0.5 * cfg.C) / cfg.L;
}

/// d lambda / dz = 1 + 3 C sigma'(3z) >= 1.
inline double output_shift_slope(double z, const OutputPriorConfig& cfg) {
    const double s = detail::sigmoid(3.0 * z);
    return 1.0 + 3.0 * cfg.C * s * (1.0 - s);
}

struct ShiftedOutput {
    VectorXd x;
    double log_jacobian = 0.0;
};

inline ShiftedOutput output_shift(const VectorXd& z, int label, const OutputPriorConfig& cfg) {
    if (z.size() != cfg.n_classes) throw ContractViolation("output_shift: z has wrong length");
    const VectorXd l = label_signal(label, cfg);
    ShiftedOutput out;
    out.x.resize(z.size());
    for (Index i = 0; i < z.size(); ++i) {
        out.x[i] = output_shift_scalar(z[i], l[i], cfg);
        out.log_jacobian += std::log(output_shift_slope(z[i], cfg));
    }
    return out;
}

/// Standard normal output prior g.
inline double output_log_prior(const VectorXd& x) {
    return -0.5 * x.squaredNorm() - 0.5 * double(x.size()) * std::log(2.0 * std::numbers::pi);
}

/// Label-independent part of a forward pass.
struct ForwardTrace {
    VectorXd input_standardized;
    std::vector<VectorXd> x;  // x[l]: input of layer l
    std::vector<VectorXd> z;  // z[l] = W_l' x[l] + b_l
    const VectorXd& z_final() const { return z.back(); }
};

inline VectorXd apply_activation(Activation a, const VectorXd& z) {
    if (is_output_activation(a)) return z;
    const PriorKind p = activation_prior(a);
    VectorXd x(z.size());
    for (Index i = 0; i < z.size(); ++i) x[i] = activation(p, z[i]);
    return x;
}

inline ForwardTrace forward(const Network& net, const VectorXd& x_raw) {
    if (x_raw.size() != net.input_dim()) throw ContractViolation("forward: input has wrong length");
    if (!x_raw.allFinite()) throw DomainError("forward: input is not finite");
    ForwardTrace t;
    t.input_standardized = net.standardization.apply(x_raw);
    VectorXd x = t.input_standardized;
    for (int l = 0; l < net.depth(); ++l) {
        const LayerSpec& ly = net.layers[l];
        for (Index i = 0; i < x.size(); ++i)
            if (!in_support(ly.input_prior, x[i]))
                throw DomainError("forward: input element " + std::to_string(i) + " outside the " +
                                  to_string(ly.input_prior) + " support (layer " + std::to_string(l + 1) + ")");
        VectorXd z = ly.map.forward(x) + ly.bias;
        t.x.push_back(std::move(x));
        x = apply_activation(ly.activation, z);
        t.z.push_back(std::move(z));
    }
    return t;
}

struct LayerTerms {
    double log_prior = 0.0;            // log p_l(x_l)
    double log_feature_density = 0.0;  // log p_l(z_l - b_l)
    double log_jacobian = 0.0;         // log |dx_{l+1}/dz_l|
};

/// Every additive term of the projected log-likelihood.
struct LikelihoodBreakdown {
    double input_log_jacobian = 0.0;  // standardization
    std::vector<LayerTerms> layers;
    double output_log_prior = 0.0;
    VectorXd output;  // x_{L+1}

    double total() const {
        double s = input_log_jacobian;
        for (const auto& t : layers) s += t.log_prior - t.log_feature_density + t.log_jacobian;
        return s + output_log_prior;
    }
};

/// Label-independent interior terms plus the saddle points they came from.
struct InteriorTerms {
    ForwardTrace trace;
    std::vector<LayerTerms> layers;  // last entry has log_jacobian unset
    std::vector<SaddleSolution> saddles;
};

inline double interior_log_jacobian(Activation a, const VectorXd& z) {
    const PriorKind p = activation_prior(a);
    double s = 0.0;
    for (Index i = 0; i < z.size(); ++i) s += std::log(activation_deriv(p, z[i]));
    return s;
}

inline InteriorTerms interior_terms(const Network& net, const VectorXd& x_raw, const SaddleOptions& opt = {}) {
    InteriorTerms out;
    out.trace = forward(net, x_raw);
    for (int l = 0; l < net.depth(); ++l) {
        const LayerSpec& ly = net.layers[l];
        LayerTerms t;
        t.log_prior = log_density(ly.input_prior, out.trace.x[l]);
        const VectorXd z_tilde = out.trace.z[l] - ly.bias;
        try {
            FeatureDensity fd = feature_density(ly.map, ly.input_prior, z_tilde, opt);
            t.log_feature_density = fd.log_density;
            out.saddles.push_back(std::move(fd.saddle));
        } catch (const ReconstructionFailure& e) {
            throw LikelihoodUndefined(e.reason(), l);
        } catch (const SingularityError& e) {
            throw SingularityError(e.reason(), l);
        }
        if (!is_output_activation(ly.activation)) t.log_jacobian = interior_log_jacobian(ly.activation, out.trace.z[l]);
        out.layers.push_back(t);
    }
    return out;
}

/// Completes the breakdown for one label hypothesis.
inline LikelihoodBreakdown finish_breakdown(const Network& net, const InteriorTerms& in, int label) {
    LikelihoodBreakdown b;
    b.input_log_jacobian = net.standardization.log_jacobian();
    b.layers = in.layers;
    const LayerSpec& last = net.layers.back();
    if (last.activation == Activation::output_shift) {
        ShiftedOutput s = output_shift(in.trace.z_final(), label, net.output_prior);
        b.layers.back().log_jacobian = s.log_jacobian;
        b.output = std::move(s.x);
    } else {
        b.layers.back().log_jacobian = 0.0;
        b.output = in.trace.z_final();
    }
    b.output_log_prior = output_log_prior(b.output);
    return b;
}

inline LikelihoodBreakdown log_likelihood_terms(const Network& net, const VectorXd& x_raw, int label,
                                                const SaddleOptions& opt = {}) {
    return finish_breakdown(net, interior_terms(net, x_raw, opt), label);
}

/// Projected log-likelihood of a raw sample under a label hypothesis, with
/// the sampling efficiency taken as 1.
inline double log_likelihood(const Network& net, const VectorXd& x_raw, int label, const SaddleOptions& opt = {}) {
    return log_likelihood_terms(net, x_raw, label, opt).total();
}

struct Classification {
    int label = 0;
    std::vector<double> log_likelihoods;  // per class hypothesis
};

/// Arg-max of the log-likelihood over label hypotheses; ties go to the lowest index.
inline Classification classify(const Network& net, const VectorXd& x_raw, const SaddleOptions& opt = {}) {
    InteriorTerms in;
    try {
        in = interior_terms(net, x_raw, opt);
    } catch (const LikelihoodUndefined& e) {
        throw Unclassifiable(std::string("no label hypothesis has a defined likelihood: ") + e.what());
    }
    Classification c;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < net.n_classes(); ++k) {
        const double ll = finish_breakdown(net, in, k).total();
        c.log_likelihoods.push_back(ll);
        if (ll > best) {
            best = ll;
            c.label = k;
        }
    }
    if (!std::isfinite(best)) throw Unclassifiable("no label hypothesis has a finite likelihood");
    return c;
}

}  // namespace pbn
