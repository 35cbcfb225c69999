#pragma once

// Model files. Layout (little-endian):
//   "PBNMODEL" | u32 format version | u64 metadata length | metadata JSON
//   | float64 arrays, concatenated in the order listed under "arrays".
// Arrays are row-major. Metadata is serialized with sorted keys and a fixed
// number format, so load followed by save reproduces the file byte for byte.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pbn/network.hpp"

namespace pbn {

inline constexpr char kModelMagic[8] = {'P', 'B', 'N', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

struct ModelFile {
    Network net;
    /// Free-form string metadata: training config echo, provenance header.
    nlohmann::json extra = nlohmann::json::object();
};

namespace detail {
inline nlohmann::json layer_json(const LayerSpec& ly) {
    nlohmann::json j;
    j["map"] = to_string(ly.map.kind());
    j["in_dim"] = ly.map.in_dim();
    j["out_dim"] = ly.map.out_dim();
    if (ly.map.kind() == MapKind::conv) {
        const auto& g = ly.map.geometry();
        j["conv"] = {{"in_channels", g.in_channels}, {"in_rows", g.in_rows},         {"in_cols", g.in_cols},
                     {"out_channels", g.out_channels}, {"kernel_rows", g.kernel_rows}, {"kernel_cols", g.kernel_cols},
                     {"stride_rows", g.stride_rows},   {"stride_cols", g.stride_cols}};
    }
    j["input_prior"] = to_string(ly.input_prior);
    j["activation"] = to_string(ly.activation);
    return j;
}

inline void append(std::string& out, const VectorXd& v) {
    out.append(reinterpret_cast<const char*>(v.data()), std::size_t(v.size()) * sizeof(double));
}
}  // namespace detail

inline std::string serialize_model(const ModelFile& m) {
    const Network& net = m.net;
    net.validate();
    nlohmann::json meta;
    meta["format"] = "pbn-model";
    meta["layers"] = nlohmann::json::array();
    nlohmann::json arrays = nlohmann::json::array();
    std::string payload;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& ly = net.layers[l];
        meta["layers"].push_back(detail::layer_json(ly));
        const std::string p = "layer" + std::to_string(l + 1);
        arrays.push_back({{"name", p + ".weights"}, {"length", ly.map.parameters().size()}});
        detail::append(payload, ly.map.parameters());
        arrays.push_back({{"name", p + ".bias"}, {"length", ly.bias.size()}});
        detail::append(payload, ly.bias);
    }
    if (!net.standardization.empty()) {
        arrays.push_back({{"name", "standardization.mean"}, {"length", net.standardization.mean.size()}});
        detail::append(payload, net.standardization.mean);
        arrays.push_back({{"name", "standardization.scale"}, {"length", net.standardization.scale.size()}});
        detail::append(payload, net.standardization.scale);
    }
    meta["output_prior"] = {{"C", net.output_prior.C}, {"L", net.output_prior.L}, {"n_classes", net.output_prior.n_classes}};
    meta["arrays"] = arrays;
    meta["extra"] = m.extra;

    const std::string text = meta.dump();
    std::string out(kModelMagic, 8);
    const std::uint32_t ver = kModelVersion;
    const std::uint64_t len = text.size();
    out.append(reinterpret_cast<const char*>(&ver), 4);
    out.append(reinterpret_cast<const char*>(&len), 8);
    out += text;
    out += payload;
    return out;
}

inline ModelFile deserialize_model(const std::string& bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kModelMagic, 8) != 0) throw FormatError("not a PBN model file");
    std::uint32_t ver;
    std::uint64_t len;
    std::memcpy(&ver, bytes.data() + 8, 4);
    std::memcpy(&len, bytes.data() + 12, 8);
    if (ver != kModelVersion) throw FormatError("unsupported model version " + std::to_string(ver));
    if (20 + len > bytes.size()) throw FormatError("model metadata truncated");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + std::ptrdiff_t(len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model metadata: ") + e.what());
    }
    std::size_t pos = 20 + len;
    auto take = [&](const std::string& expect, Index n) {
        if (pos + std::size_t(n) * sizeof(double) > bytes.size()) throw FormatError("model array " + expect + " truncated");
        VectorXd v(n);
        std::memcpy(v.data(), bytes.data() + pos, std::size_t(n) * sizeof(double));
        pos += std::size_t(n) * sizeof(double);
        return v;
    };
    try {
        ModelFile m;
        Network& net = m.net;
        const auto& arrays = meta.at("arrays");
        std::size_t a = 0;
        auto next = [&](const std::string& name) {
            if (a >= arrays.size() || arrays[a].at("name") != name) throw FormatError("model array " + name + " missing");
            return take(name, arrays[a++].at("length").get<Index>());
        };
        const auto& layers = meta.at("layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& jl = layers[l];
            const std::string p = "layer" + std::to_string(l + 1);
            LayerSpec ly;
            VectorXd w = next(p + ".weights");
            if (jl.at("map") == "conv") {
                const auto& c = jl.at("conv");
                ConvGeometry g;
                g.in_channels = c.at("in_channels");
                g.in_rows = c.at("in_rows");
                g.in_cols = c.at("in_cols");
                g.out_channels = c.at("out_channels");
                g.kernel_rows = c.at("kernel_rows");
                g.kernel_cols = c.at("kernel_cols");
                g.stride_rows = c.at("stride_rows");
                g.stride_cols = c.at("stride_cols");
                ly.map = LinearMap::conv(g, std::move(w));
            } else {
                ly.map = LinearMap::dense(jl.at("out_dim").get<Index>(), jl.at("in_dim").get<Index>()).with_parameters(std::move(w));
            }
            ly.bias = next(p + ".bias");
            ly.input_prior = parse_prior_kind(jl.at("input_prior").get<std::string>());
            ly.activation = parse_activation(jl.at("activation").get<std::string>());
            net.layers.push_back(std::move(ly));
        }
        if (a < arrays.size()) {
            net.standardization.mean = next("standardization.mean");
            net.standardization.scale = next("standardization.scale");
        }
        if (a != arrays.size() || pos != bytes.size()) throw FormatError("model file has trailing data");
        const auto& op = meta.at("output_prior");
        net.output_prior.C = op.at("C");
        net.output_prior.L = op.at("L");
        net.output_prior.n_classes = op.at("n_classes");
        if (meta.contains("extra")) m.extra = meta.at("extra");
        net.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model metadata: ") + e.what());
    }
}

inline void save_model(const std::string& path, const ModelFile& m) {
    const std::string bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + path);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

inline void save_model(const std::string& path, const Network& net) { save_model(path, ModelFile{net, nlohmann::json::object()}); }

inline ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open model " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace pbn
