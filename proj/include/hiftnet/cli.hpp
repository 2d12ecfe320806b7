#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hiftnet/checkpoint.hpp"
#include "hiftnet/config.hpp"
#include "hiftnet/evaluation.hpp"
#include "hiftnet/excitation.hpp"
#include "hiftnet/inference.hpp"
#include "hiftnet/io.hpp"
#include "hiftnet/pitch.hpp"
#include "hiftnet/synthetic.hpp"
#include "hiftnet/training.hpp"

// Command-line entry point: one subcommand per workflow, shared flags,
// and one exit code per error family. Every command writes the exact
// config it ran under next to its outputs, so a run can be reproduced
// from that snapshot alone.

namespace hiftnet::cli {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;
constexpr int kConfig = 3;
constexpr int kCheckpoint = 4;
constexpr int kAudio = 5;
constexpr int kNumeric = 6;

struct CommonOpts {
    std::string config_path;
    std::string ckpt_path;
    std::string out;
    std::string preset = "desk";
    long seed = -1;                      // -1 keeps the config's train.seed
    std::vector<std::string> overrides;  // raw key=value strings
};

// A bare key (no dot) resolves when exactly one registry entry ends in
// ".<key>", so ablation flags read on the command line as they do in the
// docs: --override use_hn_nsf=false.
inline std::string resolve_key(const std::string& key) {
    if (key.find('.') != std::string::npos) return key;
    std::string hit;
    for (const ConfigKey& k : config_registry()) {
        const std::string name = k.name;
        const auto dot = name.find('.');
        if (dot != std::string::npos && name.substr(dot + 1) == key) {
            if (!hit.empty())
                throw UsageError("ambiguous config key " + key + " (matches " + hit + " and " +
                                 name + ")");
            hit = name;
        }
    }
    if (hit.empty()) throw UsageError("unknown config key: " + key);
    return hit;
}

// Command-line overrides are argv validation, so bad ones are usage
// errors; a broken config file stays a config error.
inline void apply_cli_overrides(Config& c, const CommonOpts& o) {
    for (const std::string& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError("--override must look like key=value: " + kv);
        try {
            c.set(resolve_key(kv.substr(0, eq)), kv.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    if (o.seed >= 0) c.set("train.seed", std::to_string(o.seed));
}

inline Config base_config(const CommonOpts& o) {
    Config c = o.config_path.empty() ? Config::preset(o.preset) : Config::load_file(o.config_path);
    apply_cli_overrides(c, o);
    return c;
}

// Checkpoint-driven commands start from the stored snapshot; a --config
// on top must agree on every architecture key.
inline Config config_from_checkpoint(const CheckpointBundle& b, const CommonOpts& o) {
    Config c = Synthesizer::stored_config(b);
    if (!o.config_path.empty()) {
        Config requested = Config::load_file(o.config_path);
        check_checkpoint_compat(requested, c);
        c = requested;
    }
    apply_cli_overrides(c, o);
    return c;
}

inline std::uint64_t noise_seed(const Config& c) {
    return static_cast<std::uint64_t>(c.get_long("train.seed"));
}

inline void snapshot_next_to(const std::string& artifact_path, const Config& c) {
    c.save_file(artifact_path + ".config.txt");
}

inline std::filesystem::path ensure_out_dir(const std::string& out, const Config& c) {
    require(!out.empty(), "missing --out directory");
    std::filesystem::path dir(out);
    std::filesystem::create_directories(dir);
    c.save_file((dir / "config.txt").string());
    return dir;
}

inline nlohmann::json loss_json(const LossReport& r, float lr) {
    return nlohmann::json{{"step", r.step},
                          {"lr", lr},
                          {"adv_g", r.adv_g},
                          {"adv_d", r.adv_d},
                          {"feat_match", r.feat_match},
                          {"mel_l1", r.mel_l1},
                          {"tpr_g", r.tpr_g},
                          {"tpr_d", r.tpr_d},
                          {"total_g", r.total_g},
                          {"total_d", r.total_d}};
}

inline std::string ckpt_name(long step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%06ld.hfck", step);
    return buf;
}

// ----- subcommands -------------------------------------------------------

inline int cmd_train(const CommonOpts& o, const std::string& manifest, bool resume_from_ckpt) {
    CheckpointBundle bundle;
    bool have_bundle = false;
    if (!o.ckpt_path.empty()) {
        bundle = load_checkpoint(o.ckpt_path);
        have_bundle = true;
    }
    require(!resume_from_ckpt || have_bundle, "resume needs --ckpt");
    Config cfg = (resume_from_ckpt) ? config_from_checkpoint(bundle, o) : base_config(o);

    const auto dir = ensure_out_dir(o.out, cfg);
    std::vector<Clip> corpus = load_corpus(manifest, cfg.get_long("train.segment"),
                                           static_cast<int>(cfg.get_long("audio.sample_rate")),
                                           &std::cerr);
    std::cout << "corpus: " << corpus.size() << " clips\n";

    Trainer trainer(cfg, std::move(corpus));
    if (resume_from_ckpt) {
        trainer.restore(bundle);
        std::cout << "resumed at step " << trainer.completed_steps() << "\n";
    } else if (have_bundle) {
        trainer.load_f0_params(bundle);  // pre-trained F0 net rides along
        std::cout << "loaded F0 parameters from " << o.ckpt_path << "\n";
    }

    std::ofstream log((dir / "train.log.jsonl").string(), std::ios::app);
    if (!log) throw ConfigError("cannot write training log in " + dir.string());
    TrainHooks hooks;
    hooks.on_log = [&](const LossReport& r) {
        log << loss_json(r, trainer.lr_at(r.step)).dump() << "\n";
        log.flush();
        std::cout << "step " << r.step << " total_g " << r.total_g << " total_d " << r.total_d
                  << " mel_l1 " << r.mel_l1 << "\n";
    };
    hooks.on_checkpoint = [&](long step) {
        save_checkpoint((dir / ckpt_name(step)).string(), trainer.snapshot());
    };
    trainer.run(hooks);
    save_checkpoint((dir / "ckpt_final.hfck").string(), trainer.snapshot());
    std::cout << "finished at step " << trainer.completed_steps() << "; artifacts in "
              << dir.string() << "\n";
    return kOk;
}

inline int cmd_copy_synth(const CommonOpts& o, const std::string& in_path,
                          const std::string& out_path) {
    require(!o.ckpt_path.empty(), "copy-synth needs --ckpt");
    CheckpointBundle b = load_checkpoint(o.ckpt_path);
    Config cfg = config_from_checkpoint(b, o);
    Synthesizer s(cfg);
    s.load(b);
    Waveform in = read_wav(in_path);
    Waveform out = s.copy_synth(in, noise_seed(cfg));
    write_wav(out_path, out);
    snapshot_next_to(out_path, cfg);
    std::cout << "wrote " << out_path << " (" << out.samples.size() << " samples at "
              << out.sample_rate << " Hz)\n";
    return kOk;
}

inline int cmd_mel2wav(const CommonOpts& o, const std::string& in_path,
                       const std::string& out_path) {
    require(!o.ckpt_path.empty(), "mel2wav needs --ckpt");
    CheckpointBundle b = load_checkpoint(o.ckpt_path);
    Config cfg = config_from_checkpoint(b, o);
    Synthesizer s(cfg);
    s.load(b);
    Tensor mel = read_mel(in_path);
    Waveform out = s.mel_to_wave(mel, noise_seed(cfg));
    write_wav(out_path, out);
    snapshot_next_to(out_path, cfg);
    std::cout << "wrote " << out_path << " (" << out.samples.size() << " samples at "
              << out.sample_rate << " Hz)\n";
    return kOk;
}

inline int cmd_f0_extract(const CommonOpts& o, const std::string& in_path,
                          const std::string& out_path) {
    Config cfg;
    Waveform in = read_wav(in_path);
    F0Contour c;
    if (!o.ckpt_path.empty()) {
        CheckpointBundle b = load_checkpoint(o.ckpt_path);
        cfg = config_from_checkpoint(b, o);
        F0Net net(cfg.f0net_config(), noise_seed(cfg));
        b.restore_params(net.collect(), /*with_moments=*/false);
        require(in.sample_rate == cfg.get_long("audio.sample_rate"),
                "f0-extract: sample rate mismatch");
        Tensor mel = mel_spectrogram(in.samples, cfg.fft_params(), cfg.mel_params());
        c = infer_f0(mel, net);
    } else {
        cfg = base_config(o);
        LabelParams lp;
        lp.sample_rate = static_cast<int>(cfg.get_long("audio.sample_rate"));
        lp.hop = cfg.get_long("fft.hop");
        PitchLabel l = label_f0(in, lp);
        c.p.assign(l.f0.begin(), l.f0.end());
    }
    const double hop = static_cast<double>(cfg.get_long("fft.hop"));
    const double sr = static_cast<double>(cfg.get_long("audio.sample_rate"));
    std::vector<std::pair<double, double>> rows;
    for (long i = 0; i < c.frames(); ++i)
        rows.emplace_back((i * hop + hop / 2) / sr, c.p[static_cast<std::size_t>(i)]);
    write_f0(out_path, rows);
    snapshot_next_to(out_path, cfg);
    std::cout << "wrote " << out_path << " (" << rows.size() << " frames)\n";
    return kOk;
}

inline int cmd_f0_train(const CommonOpts& o, const std::string& manifest) {
    Config cfg = base_config(o);
    const auto dir = ensure_out_dir(o.out, cfg);
    const FftParams fp = cfg.fft_params();
    const MelParams mp = cfg.mel_params();
    const F0TrainConfig tc = cfg.f0train_config();
    std::vector<Clip> corpus =
        load_corpus(manifest, tc.segment_frames * fp.hop, mp.sample_rate, &std::cerr);

    LabelParams lp;
    lp.sample_rate = mp.sample_rate;
    lp.hop = fp.hop;
    std::vector<F0Sample> samples;
    for (const Clip& clip : corpus) {
        F0Sample s;
        s.mel = mel_spectrogram(clip.wave.samples, fp, mp);
        s.label = label_f0(clip.wave, lp);
        samples.push_back(std::move(s));
    }
    std::cout << "labeled " << samples.size() << " clips\n";

    F0Net net(cfg.f0net_config(), tc.seed);
    F0TrainResult result = train_f0_net(net, samples, tc);

    std::ofstream log((dir / "f0train.log.jsonl").string());
    if (!log) throw ConfigError("cannot write f0 training log in " + dir.string());
    for (std::size_t i = 0; i < result.curve.size(); ++i)
        log << nlohmann::json{{"step", i}, {"loss", result.curve[i]}}.dump() << "\n";

    F0EvalResult ev = evaluate_f0(net, samples);
    std::cout << "training-set median voiced error " << ev.median_hz_err << " Hz, voicing accuracy "
              << ev.voicing_accuracy << "\n";

    CheckpointBundle b;
    b.step = tc.steps;
    b.config_text = cfg.serialized();
    b.add_params(net.collect(), /*with_moments=*/false);
    save_checkpoint((dir / "f0.hfck").string(), b);
    std::cout << "wrote " << (dir / "f0.hfck").string() << "\n";
    return kOk;
}

inline int cmd_eval(const CommonOpts& o, const std::string& ref_path, const std::string& syn_path) {
    Config cfg = base_config(o);
    Waveform ref = read_wav(ref_path);
    Waveform syn = read_wav(syn_path);
    MetricResult r = mcd_dtw(ref, syn, cfg.fft_params(), cfg.mel_params());
    std::cout << "mcd " << r.mcd << "\naligned_frames " << r.n_frames_aligned << "\n";
    if (!o.out.empty()) {
        nlohmann::json j{{"mcd", r.mcd},
                         {"aligned_frames", r.n_frames_aligned},
                         {"reference", ref_path},
                         {"synthesized", syn_path},
                         {"config", cfg.serialized()}};
        std::ofstream os(o.out);
        if (!os) throw ConfigError("cannot write report: " + o.out);
        os << j.dump(2) << "\n";
    }
    return kOk;
}

inline int cmd_bench_rtf(const CommonOpts& o) {
    require(!o.ckpt_path.empty(), "bench-rtf needs --ckpt");
    CheckpointBundle b = load_checkpoint(o.ckpt_path);
    Config cfg = config_from_checkpoint(b, o);
    Synthesizer s(cfg);
    s.load(b);

    const int sr = static_cast<int>(cfg.get_long("audio.sample_rate"));
    const long hop = cfg.get_long("fft.hop");
    Waveform probe = synthetic::speech_like(noise_seed(cfg), 10.0, sr);
    Tensor mel = s.mel_of(probe);
    F0Contour c = s.contour(mel, &probe);
    const long N = mel.dim(1);

    // one ten-second utterance
    MetricResult one = measure_rtf(
        [&](std::size_t) { return s.synthesize(mel, c, noise_seed(cfg)); },
        {static_cast<double>(N * hop) / sr});

    // the same audio as ten one-second utterances
    const long chunk = N / 10;
    auto slice = [&](std::size_t i) {
        const long n0 = static_cast<long>(i) * chunk;
        Tensor m({mel.dim(0), chunk});
        for (long r = 0; r < mel.dim(0); ++r)
            std::copy(mel.data() + r * N + n0, mel.data() + r * N + n0 + chunk,
                      m.data() + r * chunk);
        F0Contour part;
        part.p.assign(c.p.begin() + n0, c.p.begin() + n0 + chunk);
        return s.synthesize(m, part, noise_seed(cfg) + i);
    };
    MetricResult many =
        measure_rtf(slice, std::vector<double>(10, static_cast<double>(chunk * hop) / sr));

    std::cout << "rtf_one_long " << one.rtf << " (wall " << one.wall_time_sec << " s for "
              << one.audio_sec << " s)\n";
    std::cout << "rtf_ten_short " << many.rtf << " (wall " << many.wall_time_sec << " s for "
              << many.audio_sec << " s)\n";
    if (!o.out.empty()) {
        nlohmann::json j{{"rtf_one_long", one.rtf},
                         {"rtf_ten_short", many.rtf},
                         {"wall_one_long_sec", one.wall_time_sec},
                         {"wall_ten_short_sec", many.wall_time_sec},
                         {"config", cfg.serialized()}};
        std::ofstream os(o.out);
        if (!os) throw ConfigError("cannot write report: " + o.out);
        os << j.dump(2) << "\n";
    }
    return kOk;
}

inline int cmd_dump_source(const CommonOpts& o, const std::string& in_path,
                           const std::string& out_path) {
    Config cfg = base_config(o);
    Waveform in = read_wav(in_path);
    LabelParams lp;
    lp.sample_rate = static_cast<int>(cfg.get_long("audio.sample_rate"));
    lp.hop = cfg.get_long("fft.hop");
    PitchLabel l = label_f0(in, lp);
    F0Contour c;
    c.p.assign(l.f0.begin(), l.f0.end());

    SourceConfig sc = cfg.source_config();
    const std::vector<float> uniform(static_cast<std::size_t>(sc.channels()),
                                     1.0f / static_cast<float>(sc.channels()));
    ExcitationSource src = build_source(c, sc, uniform, noise_seed(cfg));
    Waveform out;
    out.sample_rate = lp.sample_rate;
    out.samples = src.combined;
    write_wav(out_path, out);
    snapshot_next_to(out_path, cfg);
    std::cout << "wrote " << out_path << " (" << out.samples.size() << " samples)\n";
    return kOk;
}

// ----- dispatch ----------------------------------------------------------

inline void add_common(CLI::App* cmd, CommonOpts& o, bool with_ckpt = true) {
    cmd->add_option("--config", o.config_path, "config file (key = value lines)");
    if (with_ckpt) cmd->add_option("--ckpt", o.ckpt_path, "checkpoint file");
    cmd->add_option("--seed", o.seed, "seed override (sets train.seed)");
    cmd->add_option("--override", o.overrides, "config override key=value (repeatable)");
    cmd->add_option("--preset", o.preset, "base preset when no --config is given (desk|full)");
}

inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"mel-spectrogram to waveform vocoder toolbox"};
    app.name("hiftnet");
    app.require_subcommand(1);

    CommonOpts o;
    std::string manifest, in_path, out_path;
    int rc = kOk;

    auto* train = app.add_subcommand("train", "train a vocoder on a corpus manifest");
    train->add_option("manifest", manifest, "text file of wav paths")->required();
    add_common(train, o);
    train->add_option("--out", o.out, "output directory")->required();
    train->callback([&] { rc = cmd_train(o, manifest, /*resume_from_ckpt=*/false); });

    auto* resume = app.add_subcommand("resume", "continue training from a checkpoint");
    resume->add_option("manifest", manifest, "text file of wav paths")->required();
    add_common(resume, o);
    resume->get_option("--ckpt")->required();
    resume->add_option("--out", o.out, "output directory")->required();
    resume->callback([&] { rc = cmd_train(o, manifest, /*resume_from_ckpt=*/true); });

    auto* cs = app.add_subcommand("copy-synth", "wav -> mel -> F0 -> generator -> wav");
    cs->add_option("input", in_path, "input wav")->required();
    cs->add_option("output", out_path, "output wav")->required();
    add_common(cs, o);
    cs->get_option("--ckpt")->required();
    cs->callback([&] { rc = cmd_copy_synth(o, in_path, out_path); });

    auto* m2w = app.add_subcommand("mel2wav", "synthesize a waveform from a mel container");
    m2w->add_option("input", in_path, "input mel file")->required();
    m2w->add_option("output", out_path, "output wav")->required();
    add_common(m2w, o);
    m2w->get_option("--ckpt")->required();
    m2w->callback([&] { rc = cmd_mel2wav(o, in_path, out_path); });

    auto* f0x = app.add_subcommand(
        "f0-extract", "write an F0 contour (autocorrelation oracle, or the net with --ckpt)");
    f0x->add_option("input", in_path, "input wav")->required();
    f0x->add_option("output", out_path, "output two-column text")->required();
    add_common(f0x, o);
    f0x->callback([&] { rc = cmd_f0_extract(o, in_path, out_path); });

    auto* f0t = app.add_subcommand("f0-train", "train the F0 net against the label oracle");
    f0t->add_option("manifest", manifest, "text file of wav paths")->required();
    add_common(f0t, o, /*with_ckpt=*/false);
    f0t->add_option("--out", o.out, "output directory")->required();
    f0t->callback([&] { rc = cmd_f0_train(o, manifest); });

    auto* ev = app.add_subcommand("eval", "mel-cepstral distortion between two wavs");
    ev->add_option("reference", in_path, "reference wav")->required();
    ev->add_option("synthesized", out_path, "synthesized wav")->required();
    add_common(ev, o, /*with_ckpt=*/false);
    ev->add_option("--out", o.out, "optional JSON report path");
    ev->callback([&] { rc = cmd_eval(o, in_path, out_path); });

    auto* rtf = app.add_subcommand("bench-rtf", "real-time factor of the synthesizer");
    add_common(rtf, o);
    rtf->get_option("--ckpt")->required();
    rtf->add_option("--out", o.out, "optional JSON report path");
    rtf->callback([&] { rc = cmd_bench_rtf(o); });

    auto* ds = app.add_subcommand("dump-source", "write the excitation signal for a wav");
    ds->add_option("input", in_path, "input wav")->required();
    ds->add_option("output", out_path, "output wav")->required();
    add_common(ds, o, /*with_ckpt=*/false);
    ds->callback([&] { rc = cmd_dump_source(o, in_path, out_path); });

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kCheckpoint;
    } catch (const AudioError& e) {
        std::cerr << "audio error: " << e.what() << "\n";
        return kAudio;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return rc;
}

}  // namespace hiftnet::cli
