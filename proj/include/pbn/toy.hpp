#pragma once

// Synthetic two-class data for smoke runs and acceptance checks: 2-D Gaussian
// blobs embedded linearly into a higher-dimensional observation space.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "pbn/dataset.hpp"

namespace pbn {

struct BlobSpec {
    int dim = 16;                    // observation dimension
    double separation = 3.0;         // class means at (+-separation, 0)
    double spread = 1.0;             // latent standard deviation
    double noise = 0.3;              // isotropic observation noise
    double embed_scale = 2.0;        // length of each embedding column
    std::uint64_t embed_seed = 1;    // picks the embedding subspace
};

/// Orthonormal-column embedding shared by every draw with the same seed.
inline Eigen::MatrixXd blob_embedding(const BlobSpec& spec) {
    std::mt19937_64 rng(spec.embed_seed);
    std::normal_distribution<double> n;
    Eigen::MatrixXd g(spec.dim, 2);
    for (int i = 0; i < spec.dim; ++i)
        for (int j = 0; j < 2; ++j) g(i, j) = n(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(spec.dim, 2);
    return spec.embed_scale * q;
}

/// n_per_class samples of classes 0 and 1, interleaved. Ids are prefixed
/// with `prefix`.
inline Dataset make_blobs(const BlobSpec& spec, int n_per_class, std::uint64_t sample_seed,
                          const std::string& prefix = "blob") {
    const Eigen::MatrixXd e = blob_embedding(spec);
    std::mt19937_64 rng(sample_seed);
    std::normal_distribution<double> n;
    Dataset d;
    for (int i = 0; i < n_per_class; ++i)
        for (int c = 0; c < 2; ++c) {
            Eigen::Vector2d latent((c == 0 ? 1.0 : -1.0) * spec.separation + spec.spread * n(rng), spec.spread * n(rng));
            Eigen::VectorXd x = e * latent;
            for (int k = 0; k < spec.dim; ++k) x[k] += spec.noise * n(rng);
            d.push_back(prefix + "_" + std::to_string(2 * i + c), std::move(x), c);
        }
    return d;
}

/// A deliberately weak external classifier: the latent class coordinate
/// buried in N(0, noise^2). Positive scores favour class 0.
inline std::vector<double> weak_external_scores(const BlobSpec& spec, const Dataset& d, std::mt19937_64& rng,
                                                double noise) {
    const Eigen::MatrixXd e = blob_embedding(spec);
    const Eigen::VectorXd axis = e.col(0) / e.col(0).squaredNorm();
    std::normal_distribution<double> n(0.0, noise);
    std::vector<double> out;
    for (const auto& x : d.samples) out.push_back((axis.dot(x) / spec.separation + n(rng)) / 2.0);
    return out;
}

}  // namespace pbn
