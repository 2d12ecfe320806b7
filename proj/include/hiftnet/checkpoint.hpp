#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hiftnet/common.hpp"
#include "hiftnet/config.hpp"
#include "hiftnet/nn.hpp"
#include "hiftnet/tensor.hpp"

// Versioned binary checkpoint container: a config snapshot, the step
// counter, optimizer states, and named tensors (parameter values plus
// AdamW moments). Round-trips bit-exactly.

namespace hiftnet {

struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointShapeError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointCorruptError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointCompatError : CheckpointError {
    using CheckpointError::CheckpointError;
};

struct OptimizerState {
    std::string name;
    long step_count = 0;
    float lr = 0, beta1 = 0, beta2 = 0, weight_decay = 0;

    static OptimizerState of(const std::string& name, const AdamW& opt, float base_lr,
                             float beta1, float beta2, float weight_decay) {
        OptimizerState s;
        s.name = name;
        s.step_count = opt.step_count();
        s.lr = base_lr;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.weight_decay = weight_decay;
        return s;
    }
};

struct CheckpointBundle {
    static constexpr std::uint32_t kVersion = 1;

    long step = 0;
    std::string config_text;
    std::vector<OptimizerState> optimizers;
    std::vector<std::pair<std::string, Tensor>> tensors;  // insertion-ordered

    void add_tensor(const std::string& name, const Tensor& t) {
        for (const auto& [n, unused] : tensors)
            if (n == name) throw CheckpointShapeError("checkpoint: duplicate tensor " + name);
        tensors.emplace_back(name, t);
    }

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }

    // Persist parameter values, optionally with their AdamW moments.
    void add_params(const ParamRefs& params, bool with_moments) {
        for (const Parameter* p : params) {
            require(!p->name.empty(), "checkpoint: unnamed parameter");
            add_tensor(p->name, p->value);
            if (with_moments) {
                add_tensor(p->name + ".adam_m", p->m);
                add_tensor(p->name + ".adam_v", p->v);
            }
        }
    }

    // Restore into live parameters; every name must exist with the exact
    // stored shape. Moments are restored when requested and present.
    void restore_params(const ParamRefs& params, bool with_moments) const {
        for (Parameter* p : params) {
            const Tensor* t = find(p->name);
            if (!t) throw CheckpointShapeError("checkpoint: missing tensor " + p->name);
            if (!t->same_shape(p->value))
                throw CheckpointShapeError("checkpoint: shape mismatch for " + p->name +
                                           " (stored " + t->shape_str() + ", live " +
                                           p->value.shape_str() + ")");
            p->value = *t;
            p->var = -1;
            p->tape_id = 0;
            if (with_moments) {
                const Tensor* m = find(p->name + ".adam_m");
                const Tensor* v = find(p->name + ".adam_v");
                if (!m || !v)
                    throw CheckpointShapeError("checkpoint: missing moments for " + p->name);
                if (!m->same_shape(p->value) || !v->same_shape(p->value))
                    throw CheckpointShapeError("checkpoint: moment shape mismatch for " + p->name);
                p->m = *m;
                p->v = *v;
            }
        }
    }

    const OptimizerState& optimizer(const std::string& name) const {
        for (const OptimizerState& s : optimizers)
            if (s.name == name) return s;
        throw CheckpointCorruptError("checkpoint: missing optimizer state " + name);
    }
};

namespace ckpt_detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw CheckpointCorruptError("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t lo = get_u32(is);
    std::uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

inline float get_f32(std::istream& is) {
    std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline std::string get_str(std::istream& is, std::uint32_t max_len = 1u << 24) {
    std::uint32_t n = get_u32(is);
    if (n > max_len) throw CheckpointCorruptError("checkpoint: implausible string length");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw CheckpointCorruptError("checkpoint: truncated string");
    return s;
}

}  // namespace ckpt_detail

inline void save_checkpoint(std::ostream& os, const CheckpointBundle& b) {
    using namespace ckpt_detail;
    os.write("HFCK", 4);
    put_u32(os, CheckpointBundle::kVersion);
    put_u64(os, static_cast<std::uint64_t>(b.step));
    put_str(os, b.config_text);
    put_u32(os, static_cast<std::uint32_t>(b.optimizers.size()));
    for (const OptimizerState& s : b.optimizers) {
        put_str(os, s.name);
        put_u64(os, static_cast<std::uint64_t>(s.step_count));
        put_f32(os, s.lr);
        put_f32(os, s.beta1);
        put_f32(os, s.beta2);
        put_f32(os, s.weight_decay);
    }
    put_u32(os, static_cast<std::uint32_t>(b.tensors.size()));
    for (const auto& [name, t] : b.tensors) {
        put_str(os, name);
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) put_u32(os, static_cast<std::uint32_t>(t.dim(d)));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel()) * 4);
    }
    if (!os) throw CheckpointError("checkpoint: write failure");
}

inline void save_checkpoint(const std::string& path, const CheckpointBundle& b) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot open for writing: " + path);
    save_checkpoint(os, b);
    if (!os) throw CheckpointError("checkpoint: short write: " + path);
}

inline CheckpointBundle load_checkpoint(std::istream& is) {
    using namespace ckpt_detail;
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "HFCK", 4) != 0)
        throw CheckpointCorruptError("checkpoint: bad magic (not a checkpoint file)");
    const std::uint32_t version = get_u32(is);
    if (version != CheckpointBundle::kVersion)
        throw CheckpointVersionError("checkpoint: unsupported version " + std::to_string(version) +
                                     " (expected " + std::to_string(CheckpointBundle::kVersion) +
                                     ")");
    CheckpointBundle b;
    b.step = static_cast<long>(get_u64(is));
    b.config_text = get_str(is);
    const std::uint32_t n_opt = get_u32(is);
    if (n_opt > 64) throw CheckpointCorruptError("checkpoint: implausible optimizer count");
    for (std::uint32_t i = 0; i < n_opt; ++i) {
        OptimizerState s;
        s.name = get_str(is, 4096);
        s.step_count = static_cast<long>(get_u64(is));
        s.lr = get_f32(is);
        s.beta1 = get_f32(is);
        s.beta2 = get_f32(is);
        s.weight_decay = get_f32(is);
        b.optimizers.push_back(std::move(s));
    }
    const std::uint32_t n_tensors = get_u32(is);
    if (n_tensors > 1u << 20) throw CheckpointCorruptError("checkpoint: implausible tensor count");
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = get_str(is, 4096);
        const std::uint32_t rank = get_u32(is);
        if (rank > 4) throw CheckpointCorruptError("checkpoint: implausible tensor rank");
        std::vector<long> shape;
        long numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = get_u32(is);
            if (dim > 1u << 28) throw CheckpointCorruptError("checkpoint: implausible dimension");
            shape.push_back(static_cast<long>(dim));
            numel *= static_cast<long>(dim);
        }
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(numel) * 4);
        if (!is) throw CheckpointCorruptError("checkpoint: truncated tensor data for " + name);
        b.tensors.emplace_back(std::move(name), std::move(t));
    }
    // trailing garbage means the file is not what we wrote
    is.peek();
    if (!is.eof()) throw CheckpointCorruptError("checkpoint: trailing bytes after payload");
    return b;
}

inline CheckpointBundle load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open: " + path);
    return load_checkpoint(is);
}

// Architecture-affecting keys must match between a checkpoint's config
// snapshot and the requested config; training-schedule keys may differ.
inline void check_checkpoint_compat(const Config& requested, const Config& stored) {
    static const char* prefixes[] = {"audio.", "fft.", "mel.", "source.", "gen.", "adv.", "f0."};
    for (const ConfigKey& k : config_registry()) {
        const std::string name = k.name;
        bool arch = false;
        for (const char* p : prefixes)
            if (name.rfind(p, 0) == 0 && name.rfind("f0train.", 0) != 0) arch = true;
        if (!arch) continue;
        const std::string& a = requested.get_string(name);
        const std::string& b = stored.get_string(name);
        if (a != b)
            throw CheckpointCompatError("checkpoint: config mismatch on " + name + " (requested " +
                                        a + ", stored " + b + ")");
    }
}

}  // namespace hiftnet
