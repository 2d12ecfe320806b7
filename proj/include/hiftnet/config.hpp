#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hiftnet/adversary.hpp"
#include "hiftnet/common.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/generator.hpp"
#include "hiftnet/objectives.hpp"
#include "hiftnet/pitch.hpp"

// Flat key=value configuration with a closed key registry: unknown keys
// and ill-typed values are rejected at set time, so a typo cannot
// silently fall back to a default.

namespace hiftnet {

enum class ConfigType { Long, Double, Bool, String };

struct ConfigKey {
    const char* name;
    ConfigType type;
    const char* desk;  // default value (desk preset)
    const char* full;  // paper-scale preset override; nullptr = same as desk
};

inline const std::vector<ConfigKey>& config_registry() {
    static const std::vector<ConfigKey> keys = {
        {"audio.sample_rate", ConfigType::Long, "22050", nullptr},
        {"fft.size", ConfigType::Long, "1024", nullptr},
        {"fft.hop", ConfigType::Long, "256", nullptr},
        {"fft.win", ConfigType::Long, "1024", nullptr},
        {"mel.bins", ConfigType::Long, "80", nullptr},
        {"mel.fmin", ConfigType::Double, "0", nullptr},
        {"mel.fmax", ConfigType::Double, "8000", nullptr},
        {"mel.floor", ConfigType::Double, "1e-5", nullptr},
        {"source.harmonics", ConfigType::Long, "8", nullptr},
        {"source.amplitude", ConfigType::Double, "0.1", nullptr},
        {"source.noise_std", ConfigType::Double, "0.0333333", nullptr},
        {"source.uv_threshold", ConfigType::Double, "10", nullptr},
        {"gen.stem_channels", ConfigType::Long, "16", "512"},
        {"gen.use_hn_nsf", ConfigType::Bool, "true", nullptr},
        {"gen.use_stft_source", ConfigType::Bool, "true", nullptr},
        {"gen.use_snake", ConfigType::Bool, "true", nullptr},
        {"gen.inject_per_stage", ConfigType::Bool, "true", nullptr},
        {"gen.snake_alpha_init", ConfigType::Double, "1.0", nullptr},
        {"gen.mag_clamp", ConfigType::Double, "10.0", nullptr},
        {"adv.mpd_base", ConfigType::Long, "4", "32"},
        {"adv.mpd_cap", ConfigType::Long, "16", "1024"},
        {"adv.mrd_channels", ConfigType::Long, "1", "32"},
        {"f0.channels", ConfigType::Long, "32", "64"},
        {"f0.lstm_hidden", ConfigType::Long, "16", "32"},
        {"f0.kernel", ConfigType::Long, "5", nullptr},
        {"f0.use_recurrent", ConfigType::Bool, "true", nullptr},
        {"train.steps", ConfigType::Long, "5000", "500000"},
        {"train.batch", ConfigType::Long, "16", nullptr},
        {"train.segment", ConfigType::Long, "8192", "22016"},
        {"train.lr", ConfigType::Double, "2e-4", nullptr},
        {"train.beta1", ConfigType::Double, "0.8", nullptr},
        {"train.beta2", ConfigType::Double, "0.99", nullptr},
        {"train.weight_decay", ConfigType::Double, "0.01", nullptr},
        {"train.lr_decay", ConfigType::Double, "0.999", nullptr},
        {"train.seed", ConfigType::Long, "1", nullptr},
        {"train.checkpoint_every", ConfigType::Long, "1000", nullptr},
        {"train.log_every", ConfigType::Long, "50", nullptr},
        {"train.f0_source", ConfigType::String, "net", nullptr},
        {"loss.feat_match", ConfigType::Double, "2.0", nullptr},
        {"loss.mel", ConfigType::Double, "45.0", nullptr},
        {"loss.tpr", ConfigType::Double, "1.0", nullptr},
        {"loss.tpr_tau", ConfigType::Double, "0.04", nullptr},
        {"f0train.steps", ConfigType::Long, "2000", nullptr},
        {"f0train.batch", ConfigType::Long, "8", nullptr},
        {"f0train.segment_frames", ConfigType::Long, "64", nullptr},
        {"f0train.lr", ConfigType::Double, "1e-3", nullptr},
    };
    return keys;
}

class Config {
  public:
    static Config desk() {
        Config c;
        for (const ConfigKey& k : config_registry()) c.values_[k.name] = k.desk;
        return c;
    }

    static Config full() {
        Config c = desk();
        for (const ConfigKey& k : config_registry())
            if (k.full) c.values_[k.name] = k.full;
        return c;
    }

    static Config preset(const std::string& name) {
        if (name == "desk") return desk();
        if (name == "full") return full();
        throw ConfigError("unknown preset: " + name + " (expected desk or full)");
    }

    static const ConfigKey& key_info(const std::string& key) {
        for (const ConfigKey& k : config_registry())
            if (key == k.name) return k;
        throw ConfigError("unknown config key: " + key);
    }

    void set(const std::string& key, const std::string& value) {
        const ConfigKey& info = key_info(key);
        check_typed(info, value);
        values_[key] = value;
    }

    // "key=value" as passed on the command line
    void apply_override(const std::string& kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override must look like key=value: " + kv);
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }

    long get_long(const std::string& key) const {
        return parse_long(raw(key), key);
    }
    double get_double(const std::string& key) const {
        return parse_double(raw(key), key);
    }
    bool get_bool(const std::string& key) const {
        return parse_bool(raw(key), key);
    }
    const std::string& get_string(const std::string& key) const { return raw(key); }

    // key = value lines; '#' comments; unknown keys rejected
    static Config load(std::istream& is) {
        Config c = desk();
        std::string line;
        long lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            std::string t = trim(line);
            if (t.empty()) continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
        return c;
    }

    static Config load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path);
        return load(is);
    }

    void save(std::ostream& os) const {
        for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    }

    void save_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw ConfigError("cannot write config file: " + path);
        save(os);
        if (!os) throw ConfigError("short write on config file: " + path);
    }

    std::string serialized() const {
        std::ostringstream os;
        save(os);
        return os.str();
    }

    bool operator==(const Config& o) const { return values_ == o.values_; }

    // materialized module configs

    FftParams fft_params() const {
        return FftParams(get_long("fft.size"), get_long("fft.hop"), get_long("fft.win"));
    }

    MelParams mel_params() const {
        MelParams mp;
        mp.n_mels = get_long("mel.bins");
        mp.fmin = get_double("mel.fmin");
        mp.fmax = get_double("mel.fmax");
        mp.sample_rate = static_cast<int>(get_long("audio.sample_rate"));
        mp.floor = get_double("mel.floor");
        return mp;
    }

    SourceConfig source_config() const {
        SourceConfig sc;
        sc.sample_rate = static_cast<int>(get_long("audio.sample_rate"));
        sc.hop = get_long("fft.hop");
        sc.n_harmonics = get_long("source.harmonics");
        sc.amplitude = get_double("source.amplitude");
        sc.noise_std = get_double("source.noise_std");
        sc.uv_threshold = get_double("source.uv_threshold");
        return sc;
    }

    GeneratorConfig generator_config() const {
        GeneratorConfig g;
        g.mel_bins = get_long("mel.bins");
        g.stem_channels = get_long("gen.stem_channels");
        g.use_hn_nsf = get_bool("gen.use_hn_nsf");
        g.use_stft_source = get_bool("gen.use_stft_source");
        g.use_snake = get_bool("gen.use_snake");
        g.inject_per_stage = get_bool("gen.inject_per_stage");
        g.snake_alpha_init = static_cast<float>(get_double("gen.snake_alpha_init"));
        g.mag_clamp = static_cast<float>(get_double("gen.mag_clamp"));
        g.source = source_config();
        g.validate();
        return g;
    }

    AdversaryConfig adversary_config() const {
        AdversaryConfig a;
        a.mpd_base = get_long("adv.mpd_base");
        a.mpd_cap = get_long("adv.mpd_cap");
        a.mrd_channels = get_long("adv.mrd_channels");
        a.validate();
        return a;
    }

    F0NetConfig f0net_config() const {
        F0NetConfig f;
        f.mel_bins = get_long("mel.bins");
        f.channels = get_long("f0.channels");
        f.lstm_hidden = get_long("f0.lstm_hidden");
        f.kernel = get_long("f0.kernel");
        f.use_recurrent = get_bool("f0.use_recurrent");
        f.validate();
        return f;
    }

    F0TrainConfig f0train_config() const {
        F0TrainConfig t;
        t.steps = get_long("f0train.steps");
        t.batch = get_long("f0train.batch");
        t.segment_frames = get_long("f0train.segment_frames");
        t.lr = static_cast<float>(get_double("f0train.lr"));
        t.seed = static_cast<std::uint64_t>(get_long("train.seed"));
        t.validate();
        return t;
    }

    LossWeights loss_weights() const {
        LossWeights w;
        w.feat_match = static_cast<float>(get_double("loss.feat_match"));
        w.mel = static_cast<float>(get_double("loss.mel"));
        w.tpr = static_cast<float>(get_double("loss.tpr"));
        return w;
    }

    TprConfig tpr_config() const {
        TprConfig t;
        t.tau = static_cast<float>(get_double("loss.tpr_tau"));
        t.validate();
        return t;
    }

  private:
    static std::string trim(const std::string& s) {
        auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    const std::string& raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key: " + key);
        return it->second;
    }

    static long parse_long(const std::string& v, const std::string& key) {
        char* end = nullptr;
        long out = std::strtol(v.c_str(), &end, 10);
        if (end == v.c_str() || *end != '\0')
            throw ConfigError("config key " + key + ": expected integer, got '" + v + "'");
        return out;
    }

    static double parse_double(const std::string& v, const std::string& key) {
        char* end = nullptr;
        double out = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0')
            throw ConfigError("config key " + key + ": expected number, got '" + v + "'");
        return out;
    }

    static bool parse_bool(const std::string& v, const std::string& key) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config key " + key + ": expected true/false, got '" + v + "'");
    }

    static void check_typed(const ConfigKey& info, const std::string& value) {
        switch (info.type) {
            case ConfigType::Long:
                parse_long(value, info.name);
                break;
            case ConfigType::Double:
                parse_double(value, info.name);
                break;
            case ConfigType::Bool:
                parse_bool(value, info.name);
                break;
            case ConfigType::String:
                if (std::string(info.name) == "train.f0_source" && value != "net" &&
                    value != "oracle")
                    throw ConfigError("train.f0_source must be net or oracle, got '" + value + "'");
                break;
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace hiftnet
