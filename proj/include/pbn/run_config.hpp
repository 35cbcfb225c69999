#pragma once

// Flat key=value run configuration for the command-line tool, plus the
// provenance line stamped on every output file.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pbn/builders.hpp"
#include "pbn/error.hpp"
#include "pbn/training.hpp"

namespace pbn {

inline constexpr const char* kToolVersion = "0.1.0";

using KeyValues = std::map<std::string, std::string>;

namespace detail {
inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}
}  // namespace detail

/// Parses "key = value" lines; '#' starts a comment. Duplicate keys and
/// lines without '=' are errors.
inline KeyValues parse_key_values(std::istream& in, const std::string& what = "config") {
    KeyValues kv;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(what + ":" + std::to_string(n) + ": expected key=value");
        const std::string k = detail::trim(line.substr(0, eq)), v = detail::trim(line.substr(eq + 1));
        if (k.empty()) throw FormatError(what + ":" + std::to_string(n) + ": empty key");
        if (kv.count(k)) throw FormatError(what + ":" + std::to_string(n) + ": duplicate key '" + k + "'");
        kv[k] = v;
    }
    return kv;
}

inline KeyValues load_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open config " + path);
    return parse_key_values(in, path);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Hash of the canonical "key=value\n" listing (keys sorted).
inline std::string config_hash(const KeyValues& kv) {
    std::string canon;
    for (const auto& [k, v] : kv) canon += k + "=" + v + "\n";
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
    return buf;
}

inline std::string provenance_line(std::uint64_t seed, const KeyValues& kv) {
    return std::string("pbn ") + kToolVersion + " seed=" + std::to_string(seed) + " config=" + config_hash(kv);
}

// ---------------------------------------------------------------------------
// Training configuration

/// Every key the train command accepts, with its default.
inline const KeyValues& train_defaults() {
    static const KeyValues d = {
        {"preset", "auto"},  // auto | paper | dense
        {"hidden", "12,8,6,4"},
        {"activations", "linear,linear,tg,tg"},
        {"C", "200"},
        {"L", "1"},
        {"seed", "0"},
        {"init_output_scale", "0.1"},
        {"standardize", "true"},
        {"epochs", "10"},
        {"batch_size", "32"},
        {"learning_rate", "1e-4"},
        {"optimizer", "sgd"},
        {"l2_weight", "0"},
        {"max_grad_norm", "1000"},
        {"pretrain_epochs", "10"},
        {"pretrain_batch_size", "32"},
        {"pretrain_learning_rate", "1e-3"},
        {"pretrain_optimizer", "adam"},
        {"pretrain_l2_weight", "0"},
        {"pretrain_dropout", "0"},
    };
    return d;
}

/// Overlays `user` on the defaults; unknown keys are rejected.
inline KeyValues resolve_train_config(const KeyValues& user) {
    KeyValues out = train_defaults();
    for (const auto& [k, v] : user) {
        if (!out.count(k)) throw FormatError("unknown config key '" + k + "'");
        out[k] = v;
    }
    return out;
}

namespace detail {
inline double to_double(const KeyValues& kv, const std::string& k) {
    const std::string& v = kv.at(k);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw FormatError("config key '" + k + "': '" + v + "' is not a number");
}
inline long long to_int(const KeyValues& kv, const std::string& k) {
    const std::string& v = kv.at(k);
    try {
        std::size_t used = 0;
        const long long d = std::stoll(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw FormatError("config key '" + k + "': '" + v + "' is not an integer");
}
inline bool to_bool(const KeyValues& kv, const std::string& k) {
    const std::string& v = kv.at(k);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw FormatError("config key '" + k + "': '" + v + "' is not a boolean");
}
inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}
}  // namespace detail

struct TrainPlan {
    std::string preset;
    std::vector<Index> hidden;
    std::vector<Activation> activations;
    OutputPriorConfig output;
    std::uint64_t seed = 0;
    double init_output_scale = 0.1;
    bool standardize = true;
    TrainConfig pbn;
    TrainConfig pretrain;
};

inline TrainPlan make_train_plan(const KeyValues& resolved) {
    TrainPlan p;
    p.preset = resolved.at("preset");
    if (p.preset != "auto" && p.preset != "paper" && p.preset != "dense")
        throw FormatError("config key 'preset': expected auto, paper or dense");
    for (const auto& s : detail::split_list(resolved.at("hidden"))) {
        const long long v = detail::to_int({{"hidden", s}}, "hidden");
        if (v <= 0) throw FormatError("config key 'hidden': widths must be positive");
        p.hidden.push_back(Index(v));
    }
    for (const auto& s : detail::split_list(resolved.at("activations"))) p.activations.push_back(parse_activation(s));
    if (p.activations.size() != p.hidden.size())
        throw FormatError("config: 'activations' needs one entry per 'hidden' width");
    p.output.C = detail::to_double(resolved, "C");
    p.output.L = detail::to_double(resolved, "L");
    if (!(p.output.C >= 0.0) || !(p.output.L > 0.0)) throw FormatError("config: need C >= 0 and L > 0");
    p.seed = std::uint64_t(detail::to_int(resolved, "seed"));
    p.init_output_scale = detail::to_double(resolved, "init_output_scale");
    p.standardize = detail::to_bool(resolved, "standardize");

    p.pbn = TrainConfig::pbn_defaults();
    p.pbn.epochs = int(detail::to_int(resolved, "epochs"));
    p.pbn.batch_size = int(detail::to_int(resolved, "batch_size"));
    p.pbn.learning_rate = detail::to_double(resolved, "learning_rate");
    p.pbn.optimizer = parse_optimizer(resolved.at("optimizer"));
    p.pbn.l2_weight = detail::to_double(resolved, "l2_weight");
    p.pbn.max_grad_norm = detail::to_double(resolved, "max_grad_norm");
    p.pbn.seed = p.seed + 2;

    p.pretrain = TrainConfig::pretrain_defaults();
    p.pretrain.epochs = int(detail::to_int(resolved, "pretrain_epochs"));
    p.pretrain.batch_size = int(detail::to_int(resolved, "pretrain_batch_size"));
    p.pretrain.learning_rate = detail::to_double(resolved, "pretrain_learning_rate");
    p.pretrain.optimizer = parse_optimizer(resolved.at("pretrain_optimizer"));
    p.pretrain.l2_weight = detail::to_double(resolved, "pretrain_l2_weight");
    p.pretrain.dropout = detail::to_double(resolved, "pretrain_dropout");
    p.pretrain.max_grad_norm = p.pbn.max_grad_norm;
    p.pretrain.seed = p.seed + 1;
    for (const TrainConfig* c : {&p.pbn, &p.pretrain})
        if (c->epochs < 0 || c->batch_size <= 0 || !(c->learning_rate > 0.0) || c->l2_weight < 0.0 ||
            c->dropout < 0.0 || c->dropout >= 1.0)
            throw FormatError("config: invalid training hyper-parameters");
    return p;
}

/// Untrained network for a plan: the spectrogram architecture for 45x20
/// inputs (or preset=paper), otherwise a dense stack of the hidden widths.
inline Network build_from_plan(const TrainPlan& p, Index input_dim, const std::vector<int>& shape, int n_classes) {
    const bool spectrogram = shape.size() == 2 && shape[0] == 45 && shape[1] == 20;
    Network net;
    if (p.preset == "paper" || (p.preset == "auto" && spectrogram)) {
        if (input_dim != 900) throw ContractViolation("preset=paper needs 45x20 inputs");
        if (n_classes != 2) throw ContractViolation("preset=paper is a two-class network");
        net = paper_network(p.output.C, p.output.L);
    } else {
        std::vector<LayerShape> shapes;
        for (Index w : p.hidden) shapes.push_back(dense_layer(w));
        shapes.push_back(dense_layer(n_classes));
        net = build_network({input_dim}, shapes, p.activations, {p.output.C, p.output.L, n_classes});
    }
    initialize_weights(net, p.seed, p.init_output_scale);
    return net;
}

}  // namespace pbn
