#pragma once

// Stochastic gradient training: discriminative pretraining (softmax +
// cross-entropy) and projected-likelihood training of the same network.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pbn/dataset.hpp"
#include "pbn/gradient.hpp"
#include "pbn/parallel.hpp"

namespace pbn {

enum class TrainMode { pretrain_discriminative, pbn };
enum class OptimizerKind { sgd, adam };

inline const char* to_string(OptimizerKind o) { return o == OptimizerKind::sgd ? "sgd" : "adam"; }
inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam" || s == "adaptive-moment") return OptimizerKind::adam;
    throw FormatError("unknown optimizer '" + s + "'");
}

struct TrainConfig {
    TrainMode mode = TrainMode::pbn;
    int batch_size = 32;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double l2_weight = 0.0;
    int epochs = 10;
    std::uint64_t seed = 0;
    double dropout = 0.0;  // pretraining only
    double max_grad_norm = 1000.0;  // rescale larger batch gradients; 0 disables
    int threads = 1;
    SaddleOptions saddle{};

    /// Defaults for each phase: Adam at 1e-3 for pretraining, SGD at 1e-4 for
    /// likelihood training.
    static TrainConfig pretrain_defaults() {
        TrainConfig c;
        c.mode = TrainMode::pretrain_discriminative;
        c.learning_rate = 1e-3;
        c.optimizer = OptimizerKind::adam;
        return c;
    }
    static TrainConfig pbn_defaults() { return TrainConfig{}; }
};

struct HistoryRow {
    int epoch = 0;
    double objective = 0.0;
    double val_accuracy = 0.0;
    double efficiency = 1.0;
};

struct TrainResult {
    Network best;
    int best_epoch = 0;
    std::vector<HistoryRow> history;
    bool diverged = false;
};

inline double l2_penalty(const Network& net) {
    double s = 0.0;
    for (const auto& ly : net.layers) s += ly.map.parameters().squaredNorm();
    return s;
}

// ---------------------------------------------------------------------------
// Projected-likelihood objective

struct ObjectiveValue {
    double value = 0.0;  // mean log-likelihood minus the L2 penalty
    double mean_log_likelihood = 0.0;
    std::size_t attempts = 0;
    std::size_t successes = 0;
    double efficiency() const { return attempts ? double(successes) / double(attempts) : 1.0; }
};

struct ObjectiveGradient {
    ObjectiveValue objective;
    NetworkGradient gradient;
};

/// Mean log-likelihood over a batch minus l2 * sum |W|^2. Samples whose
/// likelihood is undefined are excluded and counted.
inline ObjectiveGradient objective_and_gradient(const Network& net, const std::vector<VectorXd>& batch,
                                                const std::vector<int>& labels, const TrainConfig& cfg,
                                                bool with_gradient = true) {
    if (batch.empty() || batch.size() != labels.size()) throw ContractViolation("objective: empty or misaligned batch");
    struct Slot {
        bool ok = false;
        double ll = 0.0;
        std::optional<NetworkGradient> g;
    };
    std::vector<Slot> slots(batch.size());
    parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
        try {
            if (with_gradient) {
                SampleGradient sg = log_likelihood_gradient(net, batch[i], labels[i], cfg.saddle);
                if (!std::isfinite(sg.log_likelihood) || !sg.gradient.all_finite()) return;
                slots[i].ll = sg.log_likelihood;
                slots[i].g = std::move(sg.gradient);
            } else {
                slots[i].ll = log_likelihood(net, batch[i], labels[i], cfg.saddle);
                if (!std::isfinite(slots[i].ll)) return;
            }
            slots[i].ok = true;
        } catch (const LikelihoodUndefined&) {
        } catch (const SingularityError&) {
        }
    });

    ObjectiveGradient out;
    out.objective.attempts = batch.size();
    if (with_gradient) out.gradient = NetworkGradient::zeros_like(net);
    double sum = 0.0;
    for (auto& s : slots) {  // fixed-order reduction
        if (!s.ok) continue;
        ++out.objective.successes;
        sum += s.ll;
        if (with_gradient) out.gradient += *s.g;
    }
    if (out.objective.successes == 0) throw Error("training step: likelihood undefined for every sample in the batch");
    const double n = double(out.objective.successes);
    out.objective.mean_log_likelihood = sum / n;
    out.objective.value = out.objective.mean_log_likelihood - cfg.l2_weight * l2_penalty(net);
    if (with_gradient) {
        out.gradient *= 1.0 / n;
        for (std::size_t l = 0; l < net.layers.size(); ++l)
            out.gradient.params[l] -= 2.0 * cfg.l2_weight * net.layers[l].map.parameters();
    }
    return out;
}

inline ObjectiveValue objective(const Network& net, const std::vector<VectorXd>& batch, const std::vector<int>& labels,
                                const TrainConfig& cfg) {
    return objective_and_gradient(net, batch, labels, cfg, false).objective;
}

// ---------------------------------------------------------------------------
// Discriminative pretraining

inline VectorXd softmax(const VectorXd& z) {
    const double m = z.maxCoeff();
    VectorXd e = (z.array() - m).exp();
    return e / e.sum();
}

/// Logits z_L of the plain feed-forward pass (no saddle solves).
inline VectorXd logits(const Network& net, const VectorXd& x_raw) {
    VectorXd x = net.standardization.apply(x_raw);
    for (const auto& ly : net.layers) {
        VectorXd z = ly.map.forward(x) + ly.bias;
        x = apply_activation(ly.activation, z);
    }
    return x;
}

inline int discriminative_label(const Network& net, const VectorXd& x_raw) {
    const VectorXd z = logits(net, x_raw);
    Index best = 0;
    z.maxCoeff(&best);
    return int(best);
}

struct CrossEntropyGradient {
    double loss = 0.0;
    NetworkGradient gradient;
};

/// Cross-entropy of softmax(z_L) and its gradient. With dropout > 0, inputs
/// of dense hidden layers are masked (inverted dropout) using `rng`.
inline CrossEntropyGradient cross_entropy_gradient(const Network& net, const VectorXd& x_raw, int label,
                                                   double dropout = 0.0, std::mt19937_64* rng = nullptr) {
    const int depth = net.depth();
    std::vector<VectorXd> xs, zs, masks(depth);
    VectorXd x = net.standardization.apply(x_raw);
    for (int l = 0; l < depth; ++l) {
        const auto& ly = net.layers[l];
        if (dropout > 0.0 && rng && l > 0 && ly.map.kind() == MapKind::dense) {
            std::bernoulli_distribution keep(1.0 - dropout);
            masks[l] = VectorXd(x.size());
            for (Index i = 0; i < x.size(); ++i) masks[l][i] = keep(*rng) ? 1.0 / (1.0 - dropout) : 0.0;
            x = x.cwiseProduct(masks[l]);
        }
        VectorXd z = ly.map.forward(x) + ly.bias;
        xs.push_back(x);
        x = apply_activation(ly.activation, z);
        zs.push_back(std::move(z));
    }
    CrossEntropyGradient out;
    const VectorXd p = softmax(zs.back());
    out.loss = -std::log(std::max(p[label], std::numeric_limits<double>::min()));
    out.gradient = NetworkGradient::zeros_like(net);
    VectorXd g_z = p;
    g_z[label] -= 1.0;  // d loss / d z_L
    for (int l = depth - 1; l >= 0; --l) {
        const auto& ly = net.layers[l];
        out.gradient.bias[l] = g_z;
        out.gradient.params[l] = ly.map.pullback(g_z * xs[l].transpose());
        if (l == 0) break;
        VectorXd g_x = ly.map.adjoint(g_z);
        if (masks[l].size()) g_x = g_x.cwiseProduct(masks[l]);
        const PriorKind prev = activation_prior(net.layers[l - 1].activation);
        g_z.resize(zs[l - 1].size());
        for (Index i = 0; i < g_z.size(); ++i) g_z[i] = g_x[i] * activation_deriv(prev, zs[l - 1][i]);
    }
    return out;
}

inline double mean_cross_entropy(const Network& net, const Dataset& data) {
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const VectorXd p = softmax(logits(net, data.samples[i]));
        s -= std::log(std::max(p[data.labels[i]], std::numeric_limits<double>::min()));
    }
    return s / double(data.size());
}

// ---------------------------------------------------------------------------
// Optimizers and the epoch loop

class Optimizer {
public:
    Optimizer(const Network& net, OptimizerKind kind, double lr)
        : kind_(kind), lr_(lr), m_(NetworkGradient::zeros_like(net)), v_(NetworkGradient::zeros_like(net)) {}

    /// Ascent step along `g` (a gradient of a quantity to maximize).
    void step(Network& net, const NetworkGradient& g) {
        ++t_;
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            auto& ly = net.layers[l];
            VectorXd p = ly.map.parameters();
            update(p, g.params[l], m_.params[l], v_.params[l]);
            ly.map = ly.map.with_parameters(std::move(p));
            update(ly.bias, g.bias[l], m_.bias[l], v_.bias[l]);
        }
    }

private:
    void update(VectorXd& p, const VectorXd& g, VectorXd& m, VectorXd& v) const {
        if (kind_ == OptimizerKind::sgd) {
            p += lr_ * g;
            return;
        }
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1, double(t_)), c2 = 1.0 - std::pow(b2, double(t_));
        p.array() += lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }

    OptimizerKind kind_;
    double lr_;
    long t_ = 0;
    NetworkGradient m_, v_;
};

/// Fraction of samples classified correctly: likelihood arg-max in PBN mode,
/// logit arg-max in pretraining mode. Unclassifiable samples count as wrong.
inline double accuracy(const Network& net, const Dataset& data, TrainMode mode, int threads = 1,
                       const SaddleOptions& opt = {}) {
    if (data.empty()) return 0.0;
    std::vector<int> correct(data.size(), 0);
    parallel_for(data.size(), threads, [&](std::size_t i) {
        try {
            const int y = mode == TrainMode::pbn ? classify(net, data.samples[i], opt).label
                                                 : discriminative_label(net, data.samples[i]);
            correct[i] = y == data.labels[i];
        } catch (const Unclassifiable&) {
        } catch (const SingularityError&) {
        }
    });
    std::size_t n = 0;
    for (int c : correct) n += std::size_t(c);
    return double(n) / double(data.size());
}

namespace detail {
inline void seeded_shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = std::size_t(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}
}  // namespace detail

/// Runs cfg.epochs epochs of mini-batch ascent. Returns the checkpoint with
/// the best validation accuracy (latest on ties) and the per-epoch history;
/// a non-finite objective stops training early.
inline TrainResult train(Network net, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw ContractViolation("train: empty training set");
    if (cfg.batch_size <= 0 || !(cfg.learning_rate > 0.0) || cfg.l2_weight < 0.0 || cfg.epochs < 0)
        throw ContractViolation("train: invalid configuration");
    std::mt19937_64 rng(cfg.seed);
    Optimizer opt(net, cfg.optimizer, cfg.learning_rate);
    TrainResult result;
    result.best = net;
    double best_acc = -1.0;
    const Dataset& val = val_set.empty() ? train_set : val_set;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        detail::seeded_shuffle(order, rng);
        std::size_t attempts = 0, successes = 0;
        bool diverged = false;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
            std::vector<VectorXd> batch;
            std::vector<int> labels;
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(train_set.samples[order[k]]);
                labels.push_back(train_set.labels[order[k]]);
            }
            NetworkGradient g;
            if (cfg.mode == TrainMode::pbn) {
                ObjectiveGradient og;
                try {
                    og = objective_and_gradient(net, batch, labels, cfg);
                } catch (const Error&) {
                    attempts += batch.size();
                    continue;
                }
                attempts += og.objective.attempts;
                successes += og.objective.successes;
                g = std::move(og.gradient);
            } else {
                g = NetworkGradient::zeros_like(net);
                for (std::size_t k = 0; k < batch.size(); ++k)
                    g += cross_entropy_gradient(net, batch[k], labels[k], cfg.dropout, &rng).gradient;
                g *= -1.0 / double(batch.size());
                for (std::size_t l = 0; l < net.layers.size(); ++l)
                    g.params[l] -= 2.0 * cfg.l2_weight * net.layers[l].map.parameters();
                attempts += batch.size();
                successes += batch.size();
            }
            if (!g.all_finite()) {
                diverged = true;
                break;
            }
            if (cfg.max_grad_norm > 0.0) {
                const double n = g.norm();
                if (n > cfg.max_grad_norm) g *= cfg.max_grad_norm / n;
            }
            opt.step(net, g);
        }

        HistoryRow row;
        row.epoch = epoch;
        row.efficiency = attempts ? double(successes) / double(attempts) : 0.0;
        if (!diverged) {
            if (cfg.mode == TrainMode::pbn) {
                try {
                    row.objective = objective(net, train_set.samples, train_set.labels, cfg).value;
                } catch (const Error&) {
                    row.objective = std::numeric_limits<double>::quiet_NaN();
                }
            } else {
                row.objective = -mean_cross_entropy(net, train_set) - cfg.l2_weight * l2_penalty(net);
            }
        }
        if (diverged || !std::isfinite(row.objective)) {
            row.objective = std::numeric_limits<double>::quiet_NaN();
            result.history.push_back(row);
            result.diverged = true;
            break;
        }
        row.val_accuracy = accuracy(net, val, cfg.mode, cfg.threads, cfg.saddle);
        result.history.push_back(row);
        if (row.val_accuracy >= best_acc) {
            best_acc = row.val_accuracy;
            result.best = net;
            result.best_epoch = epoch;
        }
    }
    if (cfg.epochs == 0) result.best = net;
    return result;
}

/// Discriminative phase on the same network.
inline Network pretrain_discriminative(const Network& net, const Dataset& train_set, const Dataset& val_set,
                                       TrainConfig cfg) {
    cfg.mode = TrainMode::pretrain_discriminative;
    return train(net, train_set, val_set, cfg).best;
}

}  // namespace pbn
