#pragma once

// Exact gradient of the projected log-likelihood with respect to every layer
// operator and bias. The saddle point h(W, z) is differentiated implicitly:
// its objective part needs no correction (envelope theorem) and the
// log-determinant part is corrected with one adjoint solve against the
// already-factorized curvature.

#include <vector>

#include "pbn/network.hpp"

namespace pbn {

/// Parameter-shaped gradient (or update) of a whole network.
struct NetworkGradient {
    std::vector<VectorXd> params;
    std::vector<VectorXd> bias;

    static NetworkGradient zeros_like(const Network& net) {
        NetworkGradient g;
        for (const auto& ly : net.layers) {
            g.params.push_back(VectorXd::Zero(ly.map.parameters().size()));
            g.bias.push_back(VectorXd::Zero(ly.bias.size()));
        }
        return g;
    }

    NetworkGradient& operator+=(const NetworkGradient& o) {
        for (std::size_t l = 0; l < params.size(); ++l) {
            params[l] += o.params[l];
            bias[l] += o.bias[l];
        }
        return *this;
    }

    NetworkGradient& operator*=(double s) {
        for (std::size_t l = 0; l < params.size(); ++l) {
            params[l] *= s;
            bias[l] *= s;
        }
        return *this;
    }

    double norm() const {
        double s = 0.0;
        for (std::size_t l = 0; l < params.size(); ++l) s += params[l].squaredNorm() + bias[l].squaredNorm();
        return std::sqrt(s);
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < params.size(); ++l)
            if (!params[l].allFinite() || !bias[l].allFinite()) return false;
        return true;
    }
};

struct SampleGradient {
    double log_likelihood = 0.0;
    LikelihoodBreakdown terms;
    NetworkGradient gradient;
};

/// Log-likelihood of one sample under `label` and its gradient.
inline SampleGradient log_likelihood_gradient(const Network& net, const VectorXd& x_raw, int label,
                                              const SaddleOptions& opt = {}) {
    const InteriorTerms in = interior_terms(net, x_raw, opt);
    SampleGradient out;
    out.terms = finish_breakdown(net, in, label);
    out.log_likelihood = out.terms.total();
    out.gradient = NetworkGradient::zeros_like(net);

    const int depth = net.depth();
    const auto& cfg = net.output_prior;

    // d(later terms)/dz of the last layer: shift Jacobian and output prior.
    const VectorXd& z_last = in.trace.z.back();
    VectorXd g_z(z_last.size());
    if (net.layers.back().activation == Activation::output_shift) {
        for (Index i = 0; i < z_last.size(); ++i) {
            const double s = detail::sigmoid(3.0 * z_last[i]);
            const double s1 = s * (1.0 - s);
            const double s2 = s1 * (1.0 - 2.0 * s);
            const double slope = 1.0 + 3.0 * cfg.C * s1;
            g_z[i] = 9.0 * cfg.C * s2 / slope - out.terms.output[i] * slope;
        }
    } else {
        g_z = -z_last;
    }

    VectorXd g_x;  // d(terms of layers > l)/dx_{l+1}
    for (int l = depth - 1; l >= 0; --l) {
        const LayerSpec& ly = net.layers[l];
        const VectorXd& z = in.trace.z[l];
        const VectorXd& x = in.trace.x[l];
        if (l < depth - 1) {
            const PriorKind p = activation_prior(ly.activation);
            g_z.resize(z.size());
            for (Index i = 0; i < z.size(); ++i) {
                const Cumulants c = cumulants(p, z[i]);
                g_z[i] = g_x[i] * c.k2 + c.k3 / c.k2;
            }
        }
        out.gradient.bias[l] = g_z;

        const SaddleSolution& sad = in.saddles[l];
        const MatrixXd& a = ly.map.materialize();
        const VectorXd& h = sad.h_hat;
        const VectorXd& x_hat = sad.x_hat;
        const VectorXd& d = sad.weights;

        const MatrixXd b = sad.curvature.solve_matrix(a);  // H^-1 A
        VectorXd u = VectorXd::Zero(x.size());
        VectorXd v = VectorXd::Zero(z.size());
        if (ly.input_prior != PriorKind::gaussian) {
            const VectorXd act = a.transpose() * h;
            const VectorXd p_diag = a.cwiseProduct(b).colwise().sum().transpose();  // diag(A' H^-1 A)
            for (Index i = 0; i < u.size(); ++i) u[i] = -0.5 * cumulants(ly.input_prior, act[i]).k3 * p_diag[i];
            v = b * u;  // H^-1 A u
        }

        // d/dz~ of the negated log feature density is h - v.
        const VectorXd g_zt = g_z + h - v;
        MatrixXd d_a = g_zt * x.transpose();
        d_a.noalias() += (v - h) * x_hat.transpose();
        d_a.noalias() += b * d.asDiagonal();
        const VectorXd w = d.cwiseProduct(a.transpose() * v) - u;
        d_a.noalias() += h * w.transpose();
        out.gradient.params[l] = ly.map.pullback(d_a);

        g_x = a.transpose() * g_zt;
        for (Index i = 0; i < x.size(); ++i) g_x[i] += log_density_deriv(ly.input_prior, x[i]);
    }
    return out;
}

}  // namespace pbn
