#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "pbn/archive.hpp"
#include "pbn/builders.hpp"
#include "pbn/model_io.hpp"
#include "pbn/pgm.hpp"
#include "pbn/run_config.hpp"
#include "pbn/scores.hpp"

using namespace pbn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("pbn_io_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Dataset sample_dataset() {
    Dataset d;
    d.shape = {3, 2};
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int i = 0; i < 7; ++i) {
        VectorXd x(6);
        for (Index k = 0; k < 6; ++k) x[k] = n(rng) * std::pow(10.0, double(k) - 3);
        d.push_back("utt_" + std::to_string(i), x, i % 2);
    }
    d.samples[2][1] = -0.0;
    return d;
}

void expect_same(const Dataset& a, const Dataset& b) {
    EXPECT_EQ(a.ids, b.ids);
    EXPECT_EQ(a.labels, b.labels);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.samples[i], b.samples[i]);
}

ScoreTable sample_scores() {
    ScoreTable t;
    t.rows.push_back({"a", 0, {-1.5, -9.25}, 3.0});
    t.rows.push_back({"b", 1, {-12.0, -2.0}, 0.1});
    t.rows.push_back({"c", 1, {-4.0, -4.5}, std::numeric_limits<double>::quiet_NaN()});
    t.rows.push_back({"d", 0, {-3.0, -8.0}, 1.0});
    return t;
}

}  // namespace

TEST(Archive, BinaryRoundTripIsExact) {
    const Dataset d = sample_dataset();
    const fs::path p = scratch("d.feat");
    save_features_binary(p.string(), d, "note");
    const Dataset r = load_features(p.string());
    expect_same(d, r);
    EXPECT_EQ(r.shape, d.shape);
    EXPECT_TRUE(std::signbit(r.samples[2][1]));
}

TEST(Archive, CsvRoundTripIsExact) {
    const Dataset d = sample_dataset();
    const fs::path p = scratch("d.csv");
    save_features_csv(p.string(), d, "provenance");
    expect_same(d, load_features(p.string()));
    EXPECT_EQ(slurp(p).substr(0, 2), "# ");
}

TEST(Archive, RejectsDamage) {
    const fs::path p = scratch("bad.feat");
    save_features_binary(p.string(), sample_dataset());
    std::string bytes = slurp(p);
    std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    EXPECT_THROW(load_features(p.string()), FormatError);
    EXPECT_THROW(load_features(scratch("absent.feat").string()), Error);
    std::ofstream(scratch("ragged.csv")) << "id,label,f0,f1\nx,0,1.0\n";
    EXPECT_THROW(load_features(scratch("ragged.csv").string()), FormatError);
}

TEST(ModelIo, RoundTripIsByteIdentical) {
    Network net = paper_network();
    initialize_weights(net, 3);
    net.standardization.mean = VectorXd::LinSpaced(900, -1, 1);
    net.standardization.scale = VectorXd::LinSpaced(900, 0.5, 2);
    ModelFile m{net, {{"config", {{"seed", "3"}}}}};
    const std::string a = serialize_model(m);
    const ModelFile back = deserialize_model(a);
    EXPECT_EQ(serialize_model(back), a);
    EXPECT_EQ(back.extra["config"]["seed"], "3");
    ASSERT_EQ(back.net.depth(), 5);
    for (int l = 0; l < 5; ++l) {
        EXPECT_EQ(back.net.layers[std::size_t(l)].map.parameters(), net.layers[std::size_t(l)].map.parameters());
        EXPECT_EQ(back.net.layers[std::size_t(l)].activation, net.layers[std::size_t(l)].activation);
        EXPECT_EQ(back.net.layers[std::size_t(l)].input_prior, net.layers[std::size_t(l)].input_prior);
    }
    EXPECT_EQ(back.net.layers[1].map.geometry().stride_rows, 3);
    EXPECT_EQ(back.net.output_prior.C, 200.0);
}

TEST(ModelIo, RejectsCorruption) {
    Network net = build_network({4}, {dense_layer(3), dense_layer(2)}, {Activation::truncated_gaussian}, {});
    const std::string a = serialize_model({net, nlohmann::json::object()});
    EXPECT_THROW(deserialize_model(a.substr(0, a.size() - 1)), FormatError);
    EXPECT_THROW(deserialize_model(a + "x"), FormatError);
    std::string b = a;
    b[0] = 'Q';
    EXPECT_THROW(deserialize_model(b), FormatError);
}

TEST(Scores, RoundTripWithMissingStatistic) {
    const ScoreTable t = sample_scores();
    const fs::path p = scratch("s.csv");
    save_scores(p.string(), t, "hdr");
    const ScoreTable r = load_scores(p.string());
    ASSERT_EQ(r.size(), 4u);
    EXPECT_EQ(r.rows[0].log_lf, t.rows[0].log_lf);
    EXPECT_TRUE(std::isnan(r.rows[2].recon_stat));
    EXPECT_FALSE(r.has_external());
}

TEST(Scores, JoinRequiresMatchingIds) {
    ScoreTable t = sample_scores();
    std::map<std::string, double> ext = {{"a", 1.0}, {"b", -1.0}, {"c", 0.5}};
    EXPECT_THROW(join_external(t, ext), FormatError);
    ext["e"] = 0.0;
    EXPECT_THROW(join_external(t, ext), FormatError);
    ext.erase("e");
    ext["d"] = 2.0;
    join_external(t, ext);
    EXPECT_TRUE(t.has_external());
    EXPECT_EQ(t.rows[1].external, -1.0);
}

TEST(Scores, ExternalFileIsScoreDifference) {
    const fs::path p = scratch("ext.csv");
    std::ofstream(p) << "id,score_0,score_1\na,2.5,0.5\nb,-1,3\n";
    const auto m = load_external_scores(p.string());
    EXPECT_EQ(m.at("a"), 2.0);
    EXPECT_EQ(m.at("b"), -4.0);
}

TEST(Combine, SweepEndpointsReproduceEachRanking) {
    ScoreTable t = sample_scores();
    join_external(t, {{"a", -1.0}, {"b", -3.0}, {"c", 2.0}, {"d", 0.5}});
    const auto rows = combination_sweep(t, t, 4);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows.front().weight, 0.0);
    EXPECT_EQ(rows.back().weight, 1.0);
    // Independent recomputation of each endpoint.
    auto endpoint = [&](auto stat) {
        double mean = 0.0;
        for (const auto& r : t.rows) mean += stat(r);
        mean /= double(t.size());
        int ok = 0;
        for (const auto& r : t.rows) ok += (stat(r) - mean >= 0.0 ? 0 : 1) == r.label;
        return double(ok) / double(t.size());
    };
    EXPECT_EQ(rows.front().accuracy, endpoint([](const ScoreRow& r) { return r.log_lf[0] - r.log_lf[1]; }));
    EXPECT_EQ(rows.back().accuracy, endpoint([](const ScoreRow& r) { return r.external; }));
}

TEST(Combine, OutOfSetDecision) {
    EXPECT_EQ(outofset_decision(27.6, 2.0), 0);
    EXPECT_EQ(outofset_decision(2.0, 27.6), 1);
    EXPECT_EQ(outofset_decision(3.0, 3.0), 0);
    EXPECT_EQ(outofset_decision(NAN, 1.0), 1);
    EXPECT_EQ(outofset_decision(1.0, NAN), 0);
}

TEST(RunConfig, ParsesAndRejects) {
    std::istringstream ok("# comment\nepochs = 5\n\nlearning_rate=0.01\n");
    const KeyValues kv = parse_key_values(ok);
    EXPECT_EQ(kv.at("epochs"), "5");
    EXPECT_EQ(kv.at("learning_rate"), "0.01");
    std::istringstream dup("a=1\na=2\n");
    EXPECT_THROW(parse_key_values(dup), FormatError);
    std::istringstream bare("justakey\n");
    EXPECT_THROW(parse_key_values(bare), FormatError);
    EXPECT_THROW(resolve_train_config({{"epoch", "5"}}), FormatError);
    EXPECT_EQ(resolve_train_config({{"epochs", "5"}}).at("epochs"), "5");
    EXPECT_EQ(resolve_train_config({}).at("C"), "200");
}

TEST(RunConfig, HashIsStableAndSensitive) {
    const KeyValues a = resolve_train_config({}), b = resolve_train_config({{"seed", "1"}});
    EXPECT_EQ(config_hash(a), config_hash(resolve_train_config({})));
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    EXPECT_NE(provenance_line(0, a).find("seed=0"), std::string::npos);
}

TEST(RunConfig, PlanBuildsNetwork) {
    const TrainPlan p = make_train_plan(resolve_train_config({{"hidden", "5,3"}, {"activations", "linear,tg"}}));
    const Network net = build_from_plan(p, 8, {}, 2);
    ASSERT_EQ(net.depth(), 3);
    EXPECT_EQ(net.layers[1].map.out_dim(), 3);
    EXPECT_EQ(net.layers[1].activation, Activation::truncated_gaussian);
    const Network paper = build_from_plan(make_train_plan(resolve_train_config({})), 900, {45, 20}, 2);
    EXPECT_EQ(paper.layers[0].map.kind(), MapKind::conv);
    EXPECT_THROW(make_train_plan(resolve_train_config({{"learning_rate", "-1"}})), Error);
}

TEST(Pgm, SpectrogramLayoutPutsHighBandsOnTop) {
    VectorXd v = VectorXd::Zero(6);  // 3 frames x 2 bands
    v[1] = 1.0;                      // frame 0, band 1
    const ImageLayout lay = image_layout({3, 2}, 6);
    EXPECT_EQ(lay.rows, 2);
    EXPECT_EQ(lay.cols, 3);
    const auto px = to_gray(v, lay);
    EXPECT_EQ(px[0], 255);
    EXPECT_EQ(px[3], 0);
    const fs::path p = scratch("x.pgm");
    write_pgm(p.string(), v, lay, "c");
    EXPECT_EQ(slurp(p), std::string("P5\n# c\n3 2\n255\n") + std::string(reinterpret_cast<const char*>(px.data()), 6));
}
