// pbn: command-line front end for projected belief networks.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pbn/pbn.hpp"

namespace fs = std::filesystem;
using namespace pbn;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) { return detail::format_double(v); }

void ensure_dir(const std::string& d) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IngestionError("cannot create directory " + d + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IngestionError("cannot write " + path);
    return f;
}

/// Interior layer index (zero-based) from a 1-based flag value.
int interior_layer(const Network& net, int one_based) {
    if (one_based < 1 || one_based > net.depth() - 1)
        throw UsageError("--layer must be between 1 and " + std::to_string(net.depth() - 1));
    return one_based - 1;
}

std::uint64_t model_seed(const ModelFile& m) {
    if (m.extra.contains("provenance") && m.extra["provenance"].contains("seed"))
        return m.extra["provenance"]["seed"].get<std::uint64_t>();
    return 0;
}

/// Identifies a model in provenance lines by its training config, not its path.
std::string model_tag(const ModelFile& m) {
    if (m.extra.contains("provenance") && m.extra["provenance"].contains("config_hash"))
        return m.extra["provenance"]["config_hash"].get<std::string>();
    return "untagged";
}

// ---------------------------------------------------------------------------
// toy

struct ToyArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::uint64_t embed_seed = 1;
    int dim = 16;
    double separation = 3.0;
    int n_train = 100, n_val = 100, n_test = 100;
    double external_noise = 1.5;
    std::string prefix = "toy";
};

int run_toy(const ToyArgs& a) {
    ensure_dir(a.out);
    BlobSpec spec;
    spec.dim = a.dim;
    spec.embed_seed = a.embed_seed;
    spec.separation = a.separation;
    KeyValues kv = {{"cmd", "toy"},
                    {"separation", fmt(a.separation)},
                    {"dim", std::to_string(a.dim)},
                    {"embed_seed", std::to_string(a.embed_seed)},
                    {"n_train", std::to_string(a.n_train)},
                    {"n_val", std::to_string(a.n_val)},
                    {"n_test", std::to_string(a.n_test)},
                    {"external_noise", fmt(a.external_noise)}};
    const std::string note = provenance_line(a.seed, kv);
    std::mt19937_64 seeds(a.seed);
    const std::uint64_t s_train = seeds(), s_val = seeds(), s_test = seeds(), s_ext = seeds();
    const Dataset train = make_blobs(spec, a.n_train, s_train, a.prefix + "_train");
    const Dataset val = make_blobs(spec, a.n_val, s_val, a.prefix + "_val");
    const Dataset test = make_blobs(spec, a.n_test, s_test, a.prefix + "_test");
    save_features_binary(a.out + "/train.feat", train, note);
    save_features_binary(a.out + "/val.feat", val, note);
    save_features_binary(a.out + "/test.feat", test, note);

    std::mt19937_64 rng(s_ext);
    for (const auto& [name, d] : {std::pair<std::string, const Dataset*>{"val", &val}, {"test", &test}}) {
        const std::vector<double> ext = weak_external_scores(spec, *d, rng, a.external_noise);
        auto f = open_out(a.out + "/external_" + name + ".csv");
        f << "# " << note << "\nid,score_0,score_1\n";
        for (std::size_t i = 0; i < d->size(); ++i) f << d->ids[i] << ',' << fmt(ext[i]) << ',' << fmt(-ext[i]) << '\n';
    }
    std::cout << "wrote " << train.size() << "/" << val.size() << "/" << test.size() << " samples to " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
    std::string wav_dir, out;
    std::uint64_t seed = 0;
    std::vector<std::string> pairs;
    int n_train = 500, n_val = 150;
    std::string format = "binary";
    int threads = 1;
};

Dataset extract_features(const std::vector<ManifestEntry>& items, const std::string& wav_dir, int threads) {
    std::vector<Eigen::VectorXd> feats(items.size());
    parallel_for(items.size(), threads, [&](std::size_t i) {
        const Waveform w = read_wav(wav_dir + "/" + items[i].id);
        feats[i] = logmel(w);
    });
    Dataset d;
    d.shape = {45, 20};
    for (std::size_t i = 0; i < items.size(); ++i) d.push_back(items[i].id, std::move(feats[i]), items[i].label);
    return d;
}

int run_extract(const ExtractArgs& a) {
    if (!fs::is_directory(a.wav_dir)) throw UsageError("--wav-dir '" + a.wav_dir + "' is not a directory");
    const ArchiveFormat format = a.format == "csv" ? ArchiveFormat::csv : ArchiveFormat::binary;
    if (a.format != "csv" && a.format != "binary") throw UsageError("--format must be binary or csv");

    std::vector<std::vector<std::string>> groups;
    if (a.pairs.empty()) {
        std::vector<std::string> all;
        for (const auto& e : fs::directory_iterator(a.wav_dir))
            if (e.is_directory()) all.push_back(e.path().filename().string());
        std::sort(all.begin(), all.end());
        if (all.size() < 2) throw UsageError("--wav-dir needs at least two class subdirectories");
        groups.push_back(all);
    } else {
        for (const auto& p : a.pairs) {
            auto names = detail::split_list(p);
            if (names.size() < 2) throw UsageError("--pair expects two comma-separated words, got '" + p + "'");
            groups.push_back(names);
        }
    }

    for (const auto& names : groups) {
        std::vector<ManifestEntry> manifest;
        for (std::size_t c = 0; c < names.size(); ++c) {
            const fs::path dir = fs::path(a.wav_dir) / names[c];
            if (!fs::is_directory(dir)) throw UsageError("class directory '" + dir.string() + "' not found");
            std::vector<std::string> files;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path().filename().string());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) manifest.push_back({names[c] + "/" + f, int(c)});
        }
        const Split split = split_dataset(manifest, a.seed, a.n_train, a.n_val);
        std::string sub = a.out;
        if (!a.pairs.empty()) {
            sub += "/";
            for (std::size_t c = 0; c < names.size(); ++c) sub += (c ? "_" : "") + names[c];
        }
        ensure_dir(sub);
        KeyValues kv = {{"cmd", "extract"},
                        {"classes", [&] {
                             std::string s;
                             for (const auto& n : names) s += (s.empty() ? "" : ",") + n;
                             return s;
                         }()},
                        {"n_train", std::to_string(a.n_train)},
                        {"n_val", std::to_string(a.n_val)}};
        const std::string note = provenance_line(a.seed, kv);
        auto mf = open_out(sub + "/split.csv");
        mf << "# " << note << "\nid,label,split\n";
        for (const auto& [name, part] :
             {std::pair<std::string, const std::vector<ManifestEntry>*>{"train", &split.train},
              {"val", &split.val},
              {"test", &split.test}}) {
            for (const auto& e : *part) mf << e.id << ',' << e.label << ',' << name << '\n';
            const Dataset d = extract_features(*part, a.wav_dir, a.threads);
            save_features(sub + "/" + name + ".feat", d, format, note);
        }
        std::cout << sub << ": " << split.train.size() << " train, " << split.val.size() << " val, "
                  << split.test.size() << " test\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string features, val, config, out_model, history;
    std::vector<std::string> set;
    bool pretrain = false;
    int threads = 1;
    std::int64_t seed = -1;
};

void write_history(std::ostream& f, const std::string& phase, const std::vector<HistoryRow>& rows) {
    for (const auto& h : rows)
        f << phase << ',' << h.epoch << ',' << fmt(h.objective) << ',' << fmt(h.val_accuracy) << ','
          << fmt(h.efficiency) << '\n';
}

int run_train(const TrainArgs& a) {
    KeyValues user = a.config.empty() ? KeyValues{} : load_key_values(a.config);
    for (const auto& s : a.set) {
        std::istringstream in(s);
        for (const auto& [k, v] : parse_key_values(in, "--set")) user[k] = v;
    }
    if (a.seed >= 0) user["seed"] = std::to_string(a.seed);
    const KeyValues cfg = resolve_train_config(user);
    TrainPlan plan = make_train_plan(cfg);
    plan.pbn.threads = plan.pretrain.threads = a.threads;

    const Dataset train_set = load_features(a.features);
    if (train_set.empty()) throw IngestionError(a.features + ": no samples");
    const Dataset val = a.val.empty() ? Dataset{} : load_features(a.val);
    int n_classes = 0;
    for (int l : train_set.labels) n_classes = std::max(n_classes, l + 1);
    Network net = build_from_plan(plan, train_set.samples.front().size(), train_set.shape, std::max(n_classes, 2));
    if (plan.standardize) net.standardization = fit_standardization(train_set.samples);

    std::ostringstream hist;
    if (a.pretrain) {
        std::cout << "pretraining: initial cross-entropy " << mean_cross_entropy(net, train_set) << "\n";
        const TrainResult pr = pbn::train(net, train_set, val, plan.pretrain);
        write_history(hist, "pretrain", pr.history);
        net = pr.best;
        std::cout << "pretraining: best epoch " << pr.best_epoch << ", validation accuracy "
                  << (pr.best_epoch ? pr.history[std::size_t(pr.best_epoch - 1)].val_accuracy : 0.0) << "\n";
    }
    const TrainResult r = pbn::train(net, train_set, val, plan.pbn);
    write_history(hist, "pbn", r.history);
    if (r.diverged) std::cerr << "warning: objective became non-finite; keeping the last good checkpoint\n";
    std::cout << "pbn: best epoch " << r.best_epoch << ", validation accuracy "
              << (r.best_epoch ? r.history[std::size_t(r.best_epoch - 1)].val_accuracy : 0.0) << "\n";

    KeyValues echo = cfg;
    echo["pretrain_phase"] = a.pretrain ? "true" : "false";
    const std::string prov = provenance_line(plan.seed, echo);
    ModelFile m{r.best, nlohmann::json::object()};
    m.extra["config"] = echo;
    m.extra["provenance"] = {{"tool", std::string("pbn ") + kToolVersion},
                             {"seed", plan.seed},
                             {"config_hash", config_hash(echo)}};
    save_model(a.out_model, m);
    if (!a.history.empty()) {
        auto f = open_out(a.history);
        f << "# " << prov << "\nphase,epoch,objective,val_acc,efficiency\n" << hist.str();
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string model, features, out_scores, external;
    int layer = 0;
    int threads = 1;
};

int run_eval(const EvalArgs& a) {
    const ModelFile m = load_model(a.model);
    const Network& net = m.net;
    const Dataset d = load_features(a.features);
    const int layer = interior_layer(net, a.layer == 0 ? net.depth() - 1 : a.layer);
    ScoreTable t;
    t.rows.resize(d.size());
    std::vector<int> decided(d.size(), -1);
    parallel_for(d.size(), a.threads, [&](std::size_t i) {
        ScoreRow& r = t.rows[i];
        r.id = d.ids[i];
        r.label = d.labels[i];
        r.log_lf.assign(std::size_t(net.n_classes()), -std::numeric_limits<double>::infinity());
        try {
            const Classification c = classify(net, d.samples[i]);
            r.log_lf = c.log_likelihoods;
            decided[i] = c.label;
        } catch (const Error&) {
        }
        try {
            r.recon_stat = reconstruction_statistic(net, d.samples[i], layer);
        } catch (const Error&) {
            r.recon_stat = -std::numeric_limits<double>::infinity();
        }
    });
    if (!a.external.empty()) join_external(t, load_external_scores(a.external));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i) correct += decided[i] == d.labels[i];
    KeyValues kv = {{"cmd", "eval"}, {"layer", std::to_string(layer + 1)}, {"model", model_tag(m)}};
    save_scores(a.out_scores, t, provenance_line(model_seed(m), kv));
    std::cout << "accuracy " << correct << "/" << d.size() << " = " << std::setprecision(6)
              << (d.size() ? double(correct) / double(d.size()) : 0.0) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconArgs {
    std::string model, features, out_images;
    int layer = 1;
    int limit = -1;
    int threads = 1;
};

int run_reconstruct(const ReconArgs& a) {
    const ModelFile m = load_model(a.model);
    const Network& net = m.net;
    const Dataset d = load_features(a.features);
    const int layer = interior_layer(net, a.layer);
    ensure_dir(a.out_images);
    const std::size_t n = a.limit < 0 ? d.size() : std::min(d.size(), std::size_t(a.limit));
    std::vector<Eigen::VectorXd> rec(n);
    std::vector<std::string> failure(n);
    parallel_for(n, a.threads, [&](std::size_t i) {
        try {
            const ForwardTrace tr = forward(net, d.samples[i]);
            rec[i] = reconstruct_from_layer(net, layer, tr.z[std::size_t(layer)]);
        } catch (const Error& e) {
            failure[i] = e.what();
        }
    });
    KeyValues kv = {{"cmd", "reconstruct"}, {"layer", std::to_string(a.layer)}, {"model", model_tag(m)}};
    const std::string prov = provenance_line(model_seed(m), kv);
    const ImageLayout lay = image_layout(d.shape, d.empty() ? 0 : d.samples.front().size());
    auto raw = open_out(a.out_images + "/reconstructions.csv");
    auto mse = open_out(a.out_images + "/mse.csv");
    raw << "# " << prov << "\nid,kind";
    for (Index j = 0; j < (d.empty() ? 0 : d.samples.front().size()); ++j) raw << ",f" << j;
    raw << '\n';
    mse << "# " << prov << "\nid,label,layer,hidden_dim,mse,recon_stat\n";
    std::size_t failures = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& x = d.samples[i];
        std::string safe = d.ids[i];
        std::replace(safe.begin(), safe.end(), '/', '_');
        write_pgm(a.out_images + "/" + safe + "_original.pgm", x, lay, prov);
        raw << d.ids[i] << ",original";
        for (Index j = 0; j < x.size(); ++j) raw << ',' << fmt(x[j]);
        raw << '\n';
        if (!failure[i].empty()) {
            ++failures;
            mse << d.ids[i] << ',' << d.labels[i] << ',' << a.layer << ',' << net.layers[std::size_t(layer)].map.out_dim()
                << ",nan,-inf\n";
            std::cerr << d.ids[i] << ": " << failure[i] << "\n";
            continue;
        }
        write_pgm(a.out_images + "/" + safe + "_layer" + std::to_string(a.layer) + ".pgm", rec[i], lay, prov);
        raw << d.ids[i] << ",layer" << a.layer;
        for (Index j = 0; j < rec[i].size(); ++j) raw << ',' << fmt(rec[i][j]);
        raw << '\n';
        const double e = (x - rec[i]).squaredNorm() / double(x.size());
        total += e;
        mse << d.ids[i] << ',' << d.labels[i] << ',' << a.layer << ',' << net.layers[std::size_t(layer)].map.out_dim()
            << ',' << fmt(e) << ',' << fmt(reconstruction_score(x, rec[i])) << '\n';
    }
    std::cout << "layer " << a.layer << " (hidden dim " << net.layers[std::size_t(layer)].map.out_dim() << "): mean MSE "
              << (n > failures ? total / double(n - failures) : 0.0) << ", " << failures << " failures of " << n
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// synthesize

struct SynthArgs {
    std::string model, out_images;
    int label = 0;
    int count = 1;
    std::uint64_t seed = 0;
};

int run_synthesize(const SynthArgs& a) {
    const ModelFile m = load_model(a.model);
    const Network& net = m.net;
    if (a.label < 0 || a.label >= net.n_classes()) throw UsageError("--label out of range");
    ensure_dir(a.out_images);
    KeyValues kv = {{"cmd", "synthesize"}, {"label", std::to_string(a.label)}, {"count", std::to_string(a.count)},
                    {"model", model_tag(m)}};
    const std::string prov = provenance_line(a.seed, kv);
    std::vector<int> shape;
    if (net.layers.front().map.kind() == MapKind::conv) {
        const auto& g = net.layers.front().map.geometry();
        shape = {g.in_rows, g.in_cols};
    }
    const ImageLayout lay = image_layout(shape, net.input_dim());
    auto f = open_out(a.out_images + "/synthesized.csv");
    f << "# " << prov << "\nindex,label,recovery_error";
    for (Index j = 0; j < net.input_dim(); ++j) f << ",f" << j;
    f << '\n';
    int failures = 0;
    for (int i = 0; i < a.count; ++i) {
        const std::uint64_t s = a.seed + std::uint64_t(i);
        try {
            const Eigen::VectorXd z_last = synthesis_seed_output(net, s, a.label);
            const Eigen::VectorXd x = reconstruct_from_layer(net, net.depth() - 1, z_last);
            const Eigen::VectorXd z_again = forward(net, x).z_final();
            const double err = (z_again - z_last).norm() / std::max(1e-300, z_last.norm());
            write_pgm(a.out_images + "/synth_" + std::to_string(a.label) + "_" + std::to_string(i) + ".pgm", x, lay,
                      prov);
            f << i << ',' << a.label << ',' << fmt(err);
            for (Index j = 0; j < x.size(); ++j) f << ',' << fmt(x[j]);
            f << '\n';
        } catch (const Error& e) {
            ++failures;
            std::cerr << "sample " << i << ": " << e.what() << "\n";
        }
    }
    std::cout << "synthesized " << a.count - failures << " of " << a.count << " samples\n";
    return 0;
}

// ---------------------------------------------------------------------------
// outofset

struct OutOfSetArgs {
    std::string model_a, model_b, features_a, features_b, out;
    int layer = 0;
    int threads = 1;
};

int run_outofset(const OutOfSetArgs& a) {
    const ModelFile ma = load_model(a.model_a), mb = load_model(a.model_b);
    const int la = interior_layer(ma.net, a.layer == 0 ? ma.net.depth() - 1 : a.layer);
    const int lb = interior_layer(mb.net, a.layer == 0 ? mb.net.depth() - 1 : a.layer);
    struct Item {
        std::string id;
        int truth;
        Eigen::VectorXd x;
    };
    std::vector<Item> items;
    for (const auto& [path, truth] : {std::pair<std::string, int>{a.features_a, 0}, {a.features_b, 1}}) {
        const Dataset d = load_features(path);
        for (std::size_t i = 0; i < d.size(); ++i) items.push_back({d.ids[i], truth, d.samples[i]});
    }
    std::vector<double> sa(items.size()), sb(items.size());
    const double ninf = -std::numeric_limits<double>::infinity();
    parallel_for(items.size(), a.threads, [&](std::size_t i) {
        try {
            sa[i] = reconstruction_statistic(ma.net, items[i].x, la);
        } catch (const Error&) {
            sa[i] = ninf;
        }
        try {
            sb[i] = reconstruction_statistic(mb.net, items[i].x, lb);
        } catch (const Error&) {
            sb[i] = ninf;
        }
    });
    KeyValues kv = {{"cmd", "outofset"}, {"layer", std::to_string(a.layer)}, {"model_a", model_tag(ma)},
                    {"model_b", model_tag(mb)}};
    auto f = open_out(a.out);
    f << "# " << provenance_line(0, kv) << "\nid,true_model,stat_a,stat_b,decision\n";
    std::size_t correct = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const int dec = outofset_decision(sa[i], sb[i]);
        correct += dec == items[i].truth;
        f << items[i].id << ',' << (items[i].truth ? 'b' : 'a') << ',' << fmt(sa[i]) << ',' << fmt(sb[i]) << ','
          << (dec ? 'b' : 'a') << '\n';
    }
    std::cout << "inter-pair accuracy " << correct << "/" << items.size() << " = "
              << (items.empty() ? 0.0 : double(correct) / double(items.size())) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// combine

struct CombineArgs {
    std::string scores, external, val_scores, val_external, out;
    int sweep = 10;
};

int run_combine(const CombineArgs& a) {
    ScoreTable test = load_scores(a.scores);
    if (!a.external.empty()) join_external(test, load_external_scores(a.external));
    ScoreTable fit = test;
    if (!a.val_scores.empty()) {
        fit = load_scores(a.val_scores);
        if (!a.val_external.empty()) join_external(fit, load_external_scores(a.val_external));
    }
    const auto rows = combination_sweep(test, fit, a.sweep);
    KeyValues kv = {{"cmd", "combine"}, {"sweep", std::to_string(a.sweep)}, {"scores", a.scores}};
    auto f = open_out(a.out);
    f << "# " << provenance_line(0, kv) << "\nweight,accuracy\n";
    for (const auto& r : rows) {
        f << fmt(r.weight) << ',' << fmt(r.accuracy) << '\n';
        std::cout << std::fixed << std::setprecision(3) << "w=" << r.weight << "  accuracy " << r.accuracy << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Projected belief network tool"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    ToyArgs toy;
    auto* c_toy = app.add_subcommand("toy", "Write two-class blob archives and weak external scores");
    c_toy->add_option("--out", toy.out, "Output directory")->required();
    c_toy->add_option("--seed", toy.seed, "Sampling seed");
    c_toy->add_option("--embed-seed", toy.embed_seed, "Seed of the embedding subspace");
    c_toy->add_option("--dim", toy.dim, "Observation dimension");
    c_toy->add_option("--separation", toy.separation, "Distance of each class mean from the origin");
    c_toy->add_option("--n-train", toy.n_train, "Training samples per class");
    c_toy->add_option("--n-val", toy.n_val, "Validation samples per class");
    c_toy->add_option("--n-test", toy.n_test, "Test samples per class");
    c_toy->add_option("--external-noise", toy.external_noise, "Noise level of the external scores");
    c_toy->add_option("--prefix", toy.prefix, "Sample id prefix");

    ExtractArgs ex;
    auto* c_ex = app.add_subcommand("extract", "WAV directories to log-MEL feature archives");
    c_ex->add_option("--wav-dir", ex.wav_dir, "Directory with one subdirectory per word")->required();
    c_ex->add_option("--out", ex.out, "Output directory")->required();
    c_ex->add_option("--seed", ex.seed, "Split seed");
    c_ex->add_option("--pair", ex.pairs, "Word pair 'a,b' (repeatable); default: all subdirectories");
    c_ex->add_option("--n-train", ex.n_train, "Training samples per class");
    c_ex->add_option("--n-val", ex.n_val, "Validation samples per class");
    c_ex->add_option("--format", ex.format, "binary or csv");
    c_ex->add_option("--threads", ex.threads, "Worker threads")->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train a PBN");
    c_tr->add_option("--features", tr.features, "Training archive")->required();
    c_tr->add_option("--val", tr.val, "Validation archive");
    c_tr->add_option("--config", tr.config, "key=value config file");
    c_tr->add_option("--set", tr.set, "Extra key=value (repeatable)");
    c_tr->add_option("--out-model", tr.out_model, "Model file")->required();
    c_tr->add_option("--history", tr.history, "History CSV");
    c_tr->add_flag("--pretrain", tr.pretrain, "Run discriminative pretraining first");
    c_tr->add_option("--seed", tr.seed, "Overrides the config seed");
    c_tr->add_option("--threads", tr.threads, "Worker threads")->check(CLI::PositiveNumber);

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Score a feature archive");
    c_ev->add_option("--model", ev.model, "Model file")->required();
    c_ev->add_option("--features", ev.features, "Feature archive")->required();
    c_ev->add_option("--out-scores", ev.out_scores, "Score table CSV")->required();
    c_ev->add_option("--external", ev.external, "External scores CSV to attach");
    c_ev->add_option("--layer", ev.layer, "Reconstruction layer, 1-based (default: last interior)");
    c_ev->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

    ReconArgs rc;
    auto* c_rc = app.add_subcommand("reconstruct", "Reconstruct samples from a hidden layer");
    c_rc->add_option("--model", rc.model, "Model file")->required();
    c_rc->add_option("--features", rc.features, "Feature archive")->required();
    c_rc->add_option("--layer", rc.layer, "Layer, 1-based")->required();
    c_rc->add_option("--out-images", rc.out_images, "Output directory")->required();
    c_rc->add_option("--limit", rc.limit, "Only the first n samples");
    c_rc->add_option("--threads", rc.threads, "Worker threads")->check(CLI::PositiveNumber);

    SynthArgs sy;
    auto* c_sy = app.add_subcommand("synthesize", "Random samples from the output prior");
    c_sy->add_option("--model", sy.model, "Model file")->required();
    c_sy->add_option("--label", sy.label, "Class label")->required();
    c_sy->add_option("--count", sy.count, "Number of samples")->check(CLI::NonNegativeNumber);
    c_sy->add_option("--seed", sy.seed, "Seed of the first sample");
    c_sy->add_option("--out-images", sy.out_images, "Output directory")->required();

    OutOfSetArgs oo;
    auto* c_oo = app.add_subcommand("outofset", "Inter-pair decision by reconstruction statistic");
    c_oo->add_option("--model-a", oo.model_a, "Model of pair A")->required();
    c_oo->add_option("--model-b", oo.model_b, "Model of pair B")->required();
    c_oo->add_option("--features-a", oo.features_a, "Samples of pair A")->required();
    c_oo->add_option("--features-b", oo.features_b, "Samples of pair B")->required();
    c_oo->add_option("--layer", oo.layer, "Layer, 1-based (default: last interior)");
    c_oo->add_option("--out", oo.out, "Decision CSV")->required();
    c_oo->add_option("--threads", oo.threads, "Worker threads")->check(CLI::PositiveNumber);

    CombineArgs co;
    auto* c_co = app.add_subcommand("combine", "Accuracy versus additive combination weight");
    c_co->add_option("--scores", co.scores, "Test score table")->required();
    c_co->add_option("--external", co.external, "External test scores CSV");
    c_co->add_option("--val-scores", co.val_scores, "Validation score table (standardization)");
    c_co->add_option("--val-external", co.val_external, "External validation scores CSV");
    c_co->add_option("--sweep", co.sweep, "Number of weight intervals")->check(CLI::PositiveNumber);
    c_co->add_option("--out", co.out, "Sweep CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // --help exits cleanly, everything else is a usage error
    }

    try {
        if (c_toy->parsed()) return run_toy(toy);
        if (c_ex->parsed()) return run_extract(ex);
        if (c_tr->parsed()) return run_train(tr);
        if (c_ev->parsed()) return run_eval(ev);
        if (c_rc->parsed()) return run_reconstruct(rc);
        if (c_sy->parsed()) return run_synthesize(sy);
        if (c_oo->parsed()) return run_outofset(oo);
        if (c_co->parsed()) return run_combine(co);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
