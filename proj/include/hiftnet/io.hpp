#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hiftnet/common.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/tensor.hpp"

namespace hiftnet {

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint16_t read_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace detail

// 16-bit PCM mono WAV writer; samples are clamped to [-1, 1].
inline void write_wav(const std::string& path, const Waveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw AudioError("cannot open for writing: " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
    const std::uint32_t data_bytes = n * 2;
    os.write("RIFF", 4);
    detail::write_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    detail::write_u32(os, 16);
    detail::write_u16(os, 1);  // PCM
    detail::write_u16(os, 1);  // mono
    detail::write_u32(os, static_cast<std::uint32_t>(w.sample_rate));
    detail::write_u32(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
    detail::write_u16(os, 2);
    detail::write_u16(os, 16);
    os.write("data", 4);
    detail::write_u32(os, data_bytes);
    for (float s : w.samples) {
        float c = std::clamp(s, -1.0f, 1.0f);
        std::int16_t q = static_cast<std::int16_t>(std::lrintf(c * 32767.0f));
        detail::write_u16(os, static_cast<std::uint16_t>(q));
    }
    if (!os) throw AudioError("short write: " + path);
}

// Reads 16-bit PCM mono WAV; rejects anything else. Chunk order is
// arbitrary; unknown chunks are skipped.
inline Waveform read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw AudioError("cannot open: " + path);
    char tag[4];
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw AudioError("not a RIFF file: " + path);
    detail::read_u32(is);
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw AudioError("not a WAVE file: " + path);
    bool have_fmt = false;
    std::uint16_t channels = 0, bits = 0, format = 0;
    std::uint32_t rate = 0;
    Waveform w;
    bool have_data = false;
    while (is) {
        is.read(tag, 4);
        if (!is) break;
        std::uint32_t size = detail::read_u32(is);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = detail::read_u16(is);
            channels = detail::read_u16(is);
            rate = detail::read_u32(is);
            detail::read_u32(is);
            detail::read_u16(is);
            bits = detail::read_u16(is);
            if (size > 16) is.seekg(size - 16, std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw AudioError("data chunk before fmt: " + path);
            if (format != 1 || bits != 16) throw AudioError("only 16-bit PCM supported: " + path);
            if (channels != 1) throw AudioError("only mono supported: " + path);
            const std::uint32_t n = size / 2;
            w.samples.resize(n);
            std::vector<char> buf(size);
            is.read(buf.data(), static_cast<std::streamsize>(size));
            if (!is) throw AudioError("truncated data chunk: " + path);
            for (std::uint32_t i = 0; i < n; ++i) {
                std::int16_t q;
                std::memcpy(&q, buf.data() + 2 * i, 2);
                w.samples[i] = static_cast<float>(q) / 32767.0f;
            }
            have_data = true;
            if (size & 1) is.seekg(1, std::ios::cur);
        } else {
            is.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (!have_fmt || !have_data) throw AudioError("missing fmt or data chunk: " + path);
    w.sample_rate = static_cast<long>(rate);
    return w;
}

// Binary mel container: magic "MEL0", u32 version, u32 rows, u32 cols,
// then rows*cols row-major float32.
inline void write_mel(const std::string& path, const Tensor& mel) {
    require(mel.rank() == 2, "write_mel: expect [rows, cols]");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw AudioError("cannot open for writing: " + path);
    os.write("MEL0", 4);
    detail::write_u32(os, 1);
    detail::write_u32(os, static_cast<std::uint32_t>(mel.dim(0)));
    detail::write_u32(os, static_cast<std::uint32_t>(mel.dim(1)));
    os.write(reinterpret_cast<const char*>(mel.data()),
             static_cast<std::streamsize>(mel.numel() * sizeof(float)));
    if (!os) throw AudioError("short write: " + path);
}

inline Tensor read_mel(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw AudioError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MEL0", 4) != 0) throw AudioError("bad mel container magic: " + path);
    std::uint32_t version = detail::read_u32(is);
    if (version != 1) throw AudioError("unsupported mel container version: " + path);
    std::uint32_t rows = detail::read_u32(is);
    std::uint32_t cols = detail::read_u32(is);
    if (!is || rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 26))
        throw AudioError("bad mel container header: " + path);
    std::vector<float> data(static_cast<std::size_t>(rows) * cols);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!is) throw AudioError("truncated mel container: " + path);
    return Tensor::from({static_cast<long>(rows), static_cast<long>(cols)}, std::move(data));
}

// Two-column text: frame time in seconds, f0 in Hz (0 = unvoiced).
inline void write_f0(const std::string& path, const std::vector<std::pair<double, double>>& f0) {
    std::ofstream os(path);
    if (!os) throw AudioError("cannot open for writing: " + path);
    os.setf(std::ios::fixed);
    os.precision(6);
    for (auto [t, f] : f0) os << t << " " << f << "\n";
    if (!os) throw AudioError("short write: " + path);
}

inline std::vector<std::pair<double, double>> read_f0(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw AudioError("cannot open: " + path);
    std::vector<std::pair<double, double>> out;
    double t, f;
    while (is >> t >> f) out.emplace_back(t, f);
    return out;
}

// Text manifest: one wav path per line; blank lines and #-comments skipped.
inline std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw AudioError("cannot open manifest: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        auto start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos) continue;
        auto end = line.find_last_not_of(" \t\r");
        std::string trimmed = line.substr(start, end - start + 1);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        out.push_back(trimmed);
    }
    return out;
}

}  // namespace hiftnet
