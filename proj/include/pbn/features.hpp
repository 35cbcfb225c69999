#pragma once

// WAV ingestion and log-MEL spectrogram features: 48 ms Hann windows every
// 16 ms at 16 kHz, 1024-point FFT, 20 triangular MEL bands over 0-8 kHz,
// 45 frames (0.72 s), log energies floored at 1e-10.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "pbn/error.hpp"

namespace pbn {

struct LogMelConfig {
    int sample_rate = 16000;
    int window = 768;  // 48 ms
    int hop = 256;     // 16 ms
    int fft_size = 1024;
    int bands = 20;
    int frames = 45;
    double f_min = 0.0;
    double f_max = 8000.0;
    double energy_floor = 1e-10;

    int feature_dim() const { return bands * frames; }
};

struct Waveform {
    int sample_rate = 0;
    std::vector<double> samples;  // full scale is [-1, 1)
};

namespace detail {
inline std::uint32_t read_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }
inline void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
    s.push_back(char(v & 0xff));
    s.push_back(char(v >> 8));
}
}  // namespace detail

/// Parses a RIFF/WAVE PCM16 mono file.
inline Waveform read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw IngestionError(path + ": not a RIFF/WAVE file");
    Waveform w;
    bool have_fmt = false, have_data = false;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t len = detail::read_u32(&buf[pos + 4]);
        const unsigned char* body = &buf[pos + 8];
        if (pos + 8 + len > buf.size()) throw IngestionError(path + ": truncated chunk");
        if (std::memcmp(&buf[pos], "fmt ", 4) == 0) {
            if (len < 16) throw IngestionError(path + ": short fmt chunk");
            const auto format = detail::read_u16(body);
            const auto channels = detail::read_u16(body + 2);
            w.sample_rate = int(detail::read_u32(body + 4));
            const auto bits = detail::read_u16(body + 14);
            if (format != 1 || bits != 16) throw IngestionError(path + ": only PCM16 is supported");
            if (channels != 1) throw IngestionError(path + ": only mono is supported");
            have_fmt = true;
        } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
            w.samples.resize(len / 2);
            for (std::size_t i = 0; i < w.samples.size(); ++i)
                w.samples[i] = double(std::int16_t(detail::read_u16(body + 2 * i))) / 32768.0;
            have_data = true;
        }
        pos += 8 + len + (len & 1);
    }
    if (!have_fmt || !have_data) throw IngestionError(path + ": missing fmt or data chunk");
    return w;
}

/// Writes PCM16 mono; samples are clipped to [-1, 1).
inline void write_wav(const std::string& path, const Waveform& w) {
    std::string body;
    for (double s : w.samples) {
        const double v = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
        detail::put_u16(body, std::uint16_t(std::int16_t(v)));
    }
    std::string out = "RIFF";
    detail::put_u32(out, std::uint32_t(36 + body.size()));
    out += "WAVEfmt ";
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);
    detail::put_u16(out, 1);
    detail::put_u32(out, std::uint32_t(w.sample_rate));
    detail::put_u32(out, std::uint32_t(w.sample_rate * 2));
    detail::put_u16(out, 2);
    detail::put_u16(out, 16);
    out += "data";
    detail::put_u32(out, std::uint32_t(body.size()));
    out += body;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot write " + path);
    f.write(out.data(), std::streamsize(out.size()));
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// bands x (fft_size/2 + 1) triangular filter weights with edges uniform in mel.
inline Eigen::MatrixXd mel_filterbank(const LogMelConfig& cfg) {
    const int bins = cfg.fft_size / 2 + 1;
    std::vector<double> edges(cfg.bands + 2);
    const double m0 = hz_to_mel(cfg.f_min), m1 = hz_to_mel(cfg.f_max);
    for (int i = 0; i < cfg.bands + 2; ++i) edges[i] = mel_to_hz(m0 + (m1 - m0) * i / (cfg.bands + 1));
    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.bands, bins);
    for (int b = 0; b < cfg.bands; ++b)
        for (int k = 0; k < bins; ++k) {
            const double f = double(k) * cfg.sample_rate / cfg.fft_size;
            const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
            if (f > lo && f < mid)
                fb(b, k) = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                fb(b, k) = (hi - f) / (hi - mid);
        }
    return fb;
}

/// Periodic-free symmetric Hann window of length n.
inline std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
    return w;
}

/// frames x bands log-MEL energies, flattened frame-major (index t*bands + b).
/// Frame t covers samples [t*hop, t*hop + window), zero-padded past the end;
/// frames starting beyond the clip hold the floor energy.
inline Eigen::VectorXd logmel(const std::vector<double>& samples, int sample_rate, const LogMelConfig& cfg = {}) {
    if (sample_rate != cfg.sample_rate)
        throw IngestionError("logmel: sample rate " + std::to_string(sample_rate) + " Hz, expected " +
                             std::to_string(cfg.sample_rate) + " Hz (no resampling)");
    if (samples.size() < std::size_t(cfg.hop))
        throw IngestionError("logmel: clip shorter than one hop (" + std::to_string(cfg.hop) + " samples)");
    static thread_local std::map<int, Eigen::MatrixXd> fb_cache;
    auto it = fb_cache.find(cfg.fft_size * 1000 + cfg.bands);
    if (it == fb_cache.end()) it = fb_cache.emplace(cfg.fft_size * 1000 + cfg.bands, mel_filterbank(cfg)).first;
    const Eigen::MatrixXd& fb = it->second;
    const std::vector<double> win = hann_window(cfg.window);
    const double log_floor = std::log(cfg.energy_floor);

    Eigen::VectorXd out = Eigen::VectorXd::Constant(cfg.feature_dim(), log_floor);
    Eigen::FFT<double> fft;
    std::vector<double> frame(cfg.fft_size);
    std::vector<std::complex<double>> spec;
    Eigen::VectorXd power(cfg.fft_size / 2 + 1);
    for (int t = 0; t < cfg.frames; ++t) {
        const std::size_t start = std::size_t(t) * cfg.hop;
        if (start >= samples.size()) break;
        std::fill(frame.begin(), frame.end(), 0.0);
        for (int i = 0; i < cfg.window && start + i < samples.size(); ++i) frame[i] = samples[start + i] * win[i];
        fft.fwd(spec, frame);
        for (int k = 0; k <= cfg.fft_size / 2; ++k) power[k] = std::norm(spec[k]);
        const Eigen::VectorXd energy = fb * power;
        for (int b = 0; b < cfg.bands; ++b)
            out[t * cfg.bands + b] = std::log(std::max(energy[b], cfg.energy_floor));
    }
    return out;
}

inline Eigen::VectorXd logmel(const Waveform& w, const LogMelConfig& cfg = {}) {
    return logmel(w.samples, w.sample_rate, cfg);
}

// ---------------------------------------------------------------------------
// Dataset split

struct ManifestEntry {
    std::string id;
    int label = 0;
};

struct Split {
    std::vector<ManifestEntry> train, val, test;
};

/// Per class: seeded shuffle, then n_train / n_val / remainder.
inline Split split_dataset(const std::vector<ManifestEntry>& manifest, std::uint64_t seed, int n_train = 500,
                           int n_val = 150) {
    std::map<int, std::vector<ManifestEntry>> by_class;
    for (const auto& e : manifest) by_class[e.label].push_back(e);
    Split s;
    std::mt19937_64 rng(seed);
    for (auto& [label, items] : by_class) {
        if (items.size() < std::size_t(n_train + n_val))
            throw IngestionError("class " + std::to_string(label) + " has " + std::to_string(items.size()) +
                                 " samples, need at least " + std::to_string(n_train + n_val));
        std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[std::size_t(rng() % i)]);
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto& dst = i < std::size_t(n_train) ? s.train : i < std::size_t(n_train + n_val) ? s.val : s.test;
            dst.push_back(items[i]);
        }
    }
    return s;
}

}  // namespace pbn
