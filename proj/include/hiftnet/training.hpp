#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hiftnet/adversary.hpp"
#include "hiftnet/checkpoint.hpp"
#include "hiftnet/config.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/excitation.hpp"
#include "hiftnet/generator.hpp"
#include "hiftnet/io.hpp"
#include "hiftnet/objectives.hpp"
#include "hiftnet/pitch.hpp"
#include "hiftnet/rng.hpp"

// Corpus loading, deterministic batch assembly, the alternating
// discriminator/generator update, the learning-rate schedule, and
// checkpoint plumbing.

namespace hiftnet {

struct TrainConfig {
    long steps = 5000;
    long batch = 16;
    long segment = 8192;  // samples per crop; must be hop-divisible
    float lr = 2e-4f;
    float beta1 = 0.8f;
    float beta2 = 0.99f;
    float weight_decay = 0.01f;
    float lr_decay = 0.999f;  // per epoch
    std::uint64_t seed = 1;
    long checkpoint_every = 1000;
    long log_every = 50;
    bool f0_from_oracle = false;  // default: frozen F0 net on ground-truth mel

    static TrainConfig from(const Config& c) {
        TrainConfig t;
        t.steps = c.get_long("train.steps");
        t.batch = c.get_long("train.batch");
        t.segment = c.get_long("train.segment");
        t.lr = static_cast<float>(c.get_double("train.lr"));
        t.beta1 = static_cast<float>(c.get_double("train.beta1"));
        t.beta2 = static_cast<float>(c.get_double("train.beta2"));
        t.weight_decay = static_cast<float>(c.get_double("train.weight_decay"));
        t.lr_decay = static_cast<float>(c.get_double("train.lr_decay"));
        t.seed = static_cast<std::uint64_t>(c.get_long("train.seed"));
        t.checkpoint_every = c.get_long("train.checkpoint_every");
        t.log_every = c.get_long("train.log_every");
        t.f0_from_oracle = c.get_string("train.f0_source") == "oracle";
        return t;
    }

    void validate(long hop) const {
        require(steps > 0 && batch > 0, "train config: bad sizes");
        require(segment > 0 && segment % hop == 0, "train config: segment must be hop-divisible");
        require(lr > 0 && lr_decay > 0 && lr_decay <= 1, "train config: bad schedule");
        require(checkpoint_every > 0 && log_every > 0, "train config: bad periods");
    }
};

struct Clip {
    std::string path;
    Waveform wave;
};

// Reads every manifest entry; unreadable or wrong-rate files are skipped
// with a logged error, too-short clips are zero-padded with a warning.
inline std::vector<Clip> load_corpus(const std::string& manifest_path, long segment,
                                     int sample_rate, std::ostream* log = nullptr) {
    const auto base = std::filesystem::path(manifest_path).parent_path();
    std::vector<Clip> out;
    for (const std::string& rel : read_manifest(manifest_path)) {
        const std::string path = (base / rel).string();
        Clip c;
        c.path = path;
        try {
            c.wave = read_wav(path);
        } catch (const std::exception& e) {
            if (log) *log << "skipping unreadable clip " << path << ": " << e.what() << "\n";
            continue;
        }
        if (c.wave.sample_rate != sample_rate) {
            if (log)
                *log << "skipping " << path << ": sample rate " << c.wave.sample_rate
                     << " != " << sample_rate << "\n";
            continue;
        }
        if (static_cast<long>(c.wave.samples.size()) < segment) {
            if (log)
                *log << "zero-padding short clip " << path << " (" << c.wave.samples.size()
                     << " < " << segment << " samples)\n";
            c.wave.samples.resize(static_cast<std::size_t>(segment), 0.0f);
        }
        out.push_back(std::move(c));
    }
    require(!out.empty(), "corpus: no usable clips in " + manifest_path);
    return out;
}

struct Batch {
    Tensor mel;   // [B, M, N]
    Tensor wave;  // [B, 256*N]
    std::vector<F0Contour> f0;
};

struct TrainHooks {
    std::function<void(const LossReport&)> on_log;
    std::function<void(long step)> on_checkpoint;
};

class Trainer {
  public:
    Trainer(const Config& cfg, std::vector<Clip> corpus)
        : config_(cfg),
          tc_(TrainConfig::from(cfg)),
          fp_(cfg.fft_params()),
          mp_(cfg.mel_params()),
          weights_(cfg.loss_weights()),
          tpr_(cfg.tpr_config()),
          fb_(mel_filterbank(fp_.fft_size, mp_)),
          gen_(make_gen(cfg, tc_.seed)),
          mpd_(make_mpd(cfg, tc_.seed)),
          mrd_(make_mrd(cfg, tc_.seed)),
          f0_(cfg.f0net_config(), tc_.seed ^ 0xf0f0f0f0ull),
          corpus_(std::move(corpus)),
          opt_g_(collect_gen(), tc_.lr, tc_.beta1, tc_.beta2, tc_.weight_decay),
          opt_d_(collect_disc(), tc_.lr, tc_.beta1, tc_.beta2, tc_.weight_decay) {
        tc_.validate(fp_.hop);
        require(gen_.cfg.hop() == fp_.hop, "trainer: generator hop != mel hop");
        for (const Clip& c : corpus_)
            require(static_cast<long>(c.wave.samples.size()) >= tc_.segment,
                    "trainer: clip shorter than segment (load_corpus pads these)");
    }

    // optimizers hold pointers into the models, so the trainer is pinned
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    const TrainConfig& train_config() const { return tc_; }
    const Config& config() const { return config_; }
    Generator& generator() { return gen_; }
    F0Net& f0net() { return f0_; }
    long completed_steps() const { return completed_; }

    long steps_per_epoch() const {
        const long n = static_cast<long>(corpus_.size());
        return std::max<long>(1, (n + tc_.batch - 1) / tc_.batch);
    }

    // lr(epoch) = lr0 * decay^epoch, epoch advancing every steps_per_epoch
    float lr_at(long step) const {
        const long epoch = step / steps_per_epoch();
        return tc_.lr * static_cast<float>(std::pow(tc_.lr_decay, static_cast<double>(epoch)));
    }

    // One batch of aligned (mel, f0, wave) crops, a pure function of
    // (seed, step): resuming at step s rebuilds the exact batch.
    Batch make_batch(long step) {
        const long S = tc_.segment;
        const long frames = S / fp_.hop;
        Batch b;
        b.mel = Tensor({tc_.batch, mp_.n_mels, frames});
        b.wave = Tensor({tc_.batch, S});
        b.f0.resize(static_cast<std::size_t>(tc_.batch));
        std::vector<float> crop(static_cast<std::size_t>(S));
        for (long i = 0; i < tc_.batch; ++i) {
            Pcg32 rng = Pcg32::substream(tc_.seed, static_cast<std::uint64_t>(step),
                                         static_cast<std::uint64_t>(i));
            const Clip& clip =
                corpus_[rng.uniform_index(static_cast<std::uint32_t>(corpus_.size()))];
            const long span = static_cast<long>(clip.wave.samples.size()) - S;
            const long start =
                span == 0 ? 0 : static_cast<long>(rng.uniform_index(static_cast<std::uint32_t>(span + 1)));
            std::copy(clip.wave.samples.begin() + start, clip.wave.samples.begin() + start + S,
                      crop.begin());
            Tensor mel = mel_spectrogram(crop, fp_, mp_);
            require(mel.dim(1) == frames, "make_batch: frame count mismatch");
            std::copy(mel.data(), mel.data() + mel.numel(),
                      b.mel.data() + i * mp_.n_mels * frames);
            std::copy(crop.begin(), crop.end(), b.wave.data() + i * S);
            if (gen_.cfg.use_hn_nsf) {
                if (tc_.f0_from_oracle) {
                    Waveform wv;
                    wv.sample_rate = mp_.sample_rate;
                    wv.samples = crop;
                    PitchLabel l = label_f0(wv, label_params());
                    b.f0[static_cast<std::size_t>(i)].p.assign(l.f0.begin(), l.f0.end());
                } else {
                    b.f0[static_cast<std::size_t>(i)] = infer_f0(mel, f0_);
                }
            } else {
                b.f0[static_cast<std::size_t>(i)].p.assign(static_cast<std::size_t>(frames), 0.0);
            }
        }
        return b;
    }

    // One discriminator update then one generator update, each from a
    // fresh forward pass on its own tape.
    LossReport train_step(long step, const Batch& batch) {
        const float lr = lr_at(step);
        opt_g_.set_lr(lr);
        opt_d_.set_lr(lr);

        Tensor sources;
        if (gen_.cfg.use_hn_nsf)
            sources = gen_.build_sources(batch.f0, tc_.seed ^ (0x9e3779b97f4a7c15ull +
                                                               static_cast<std::uint64_t>(step)));

        LossReport report;
        report.step = step;
        report.weights = weights_;

        // discriminator phase: generator runs without gradients
        {
            Tape t;
            Var y = t.leaf(batch.wave);
            Var y_hat;
            {
                Tape::NoGradScope ng(t);
                Var mel_in = t.leaf(batch.mel);
                Var src = gen_.cfg.use_hn_nsf ? t.leaf(sources) : -1;
                y_hat = gen_.forward(t, mel_in, src).wave;
            }
            DiscOutput real = discriminate(t, mpd_, mrd_, y);
            DiscOutput fake = discriminate(t, mpd_, mrd_, y_hat);
            Var adv_d = objectives::lsgan_d(t, real, fake);
            Var tpr_d = objectives::tpr_loss(t, real, fake, tpr_, /*for_d=*/true);
            Var total_d = t.add(adv_d, t.scale(tpr_d, weights_.tpr));
            report.adv_d = t.value(adv_d)[0];
            report.tpr_d = t.value(tpr_d)[0];
            report.total_d = t.value(total_d)[0];
            report.check();
            t.backward(total_d);
            opt_d_.step(t);
        }

        // generator phase: discriminator parameters enter the tape frozen.
        // Ordering matters: the no-grad pass on real audio registers every
        // discriminator parameter as a constant before the fake pass reuses
        // them, so no discriminator gradients are computed here.
        {
            Tape t;
            Var mel_in = t.leaf(batch.mel);
            Var src = gen_.cfg.use_hn_nsf ? t.leaf(sources) : -1;
            GeneratorOutput out = gen_.forward(t, mel_in, src);
            Var y = t.leaf(batch.wave);
            DiscOutput real;
            {
                Tape::NoGradScope ng(t);
                real = discriminate(t, mpd_, mrd_, y);
            }
            DiscOutput fake = discriminate(t, mpd_, mrd_, out.wave);
            Var adv_g = objectives::lsgan_g(t, fake);
            Var fm = objectives::feature_matching(t, real, fake);
            Var mel_l1 = objectives::mel_loss(t, y, out.wave, fp_, mp_, fb_);
            Var tpr_g = objectives::tpr_loss(t, real, fake, tpr_, /*for_d=*/false);
            Var total_g = t.add(
                t.add(adv_g, t.scale(fm, weights_.feat_match)),
                t.add(t.scale(mel_l1, weights_.mel), t.scale(tpr_g, weights_.tpr)));
            report.adv_g = t.value(adv_g)[0];
            report.feat_match = t.value(fm)[0];
            report.mel_l1 = t.value(mel_l1)[0];
            report.tpr_g = t.value(tpr_g)[0];
            report.total_g = t.value(total_g)[0];
            report.check();
            t.backward(total_g);
            opt_g_.step(t);
        }
        return report;
    }

    // Full loop from the current step counter up to tc.steps.
    void run(const TrainHooks& hooks = {}) {
        while (completed_ < tc_.steps) {
            const long step = completed_;
            Batch b = make_batch(step);
            LossReport r = train_step(step, b);
            ++completed_;
            if (hooks.on_log && (step % tc_.log_every == 0 || completed_ == tc_.steps))
                hooks.on_log(r);
            if (step % 100 == 99) require_finite_params();
            if (hooks.on_checkpoint &&
                (completed_ % tc_.checkpoint_every == 0 || completed_ == tc_.steps))
                hooks.on_checkpoint(completed_);
        }
    }

    void require_finite_params() {
        auto sweep = [](const ParamRefs& refs) {
            for (const Parameter* p : refs)
                if (!p->value.finite())
                    throw NumericError("training: non-finite parameter " + p->name);
        };
        sweep(collect_gen());
        sweep(collect_disc());
    }

    CheckpointBundle snapshot() {
        CheckpointBundle b;
        b.step = completed_;
        b.config_text = config_.serialized();
        b.optimizers.push_back(
            OptimizerState::of("gen", opt_g_, tc_.lr, tc_.beta1, tc_.beta2, tc_.weight_decay));
        b.optimizers.push_back(
            OptimizerState::of("disc", opt_d_, tc_.lr, tc_.beta1, tc_.beta2, tc_.weight_decay));
        b.add_params(collect_gen(), /*with_moments=*/true);
        b.add_params(collect_disc(), /*with_moments=*/true);
        b.add_params(f0_.collect(), /*with_moments=*/false);  // frozen reference copy
        return b;
    }

    // Restores models, moments, and counters; asserts optimizer
    // hyperparameters match the requesting config.
    void restore(const CheckpointBundle& b) {
        Config stored = Config::desk();
        {
            std::istringstream is(b.config_text);
            stored = Config::load(is);
        }
        check_checkpoint_compat(config_, stored);
        for (const char* name : {"gen", "disc"}) {
            const OptimizerState& s = b.optimizer(name);
            if (s.lr != tc_.lr || s.beta1 != tc_.beta1 || s.beta2 != tc_.beta2 ||
                s.weight_decay != tc_.weight_decay)
                throw CheckpointCompatError(
                    "checkpoint: optimizer hyperparameters differ from the requested config");
        }
        b.restore_params(collect_gen(), /*with_moments=*/true);
        b.restore_params(collect_disc(), /*with_moments=*/true);
        b.restore_params(f0_.collect(), /*with_moments=*/false);
        opt_g_.set_step_count(b.optimizer("gen").step_count);
        opt_d_.set_step_count(b.optimizer("disc").step_count);
        completed_ = b.step;
    }

    // Adopt pre-trained F0 parameters (values only; the net stays frozen).
    void load_f0_params(const CheckpointBundle& b) {
        b.restore_params(f0_.collect(), /*with_moments=*/false);
    }

    LabelParams label_params() const {
        LabelParams lp;
        lp.sample_rate = mp_.sample_rate;
        lp.hop = fp_.hop;
        return lp;
    }

  private:
    static Generator make_gen(const Config& cfg, std::uint64_t seed) {
        Pcg32 rng(seed, 0x67656e00ull);  // "gen"
        return Generator(rng, cfg.generator_config());
    }
    static Mpd make_mpd(const Config& cfg, std::uint64_t seed) {
        Pcg32 rng(seed, 0x6d706400ull);  // "mpd"
        return Mpd(rng, cfg.adversary_config());
    }
    static Mrd make_mrd(const Config& cfg, std::uint64_t seed) {
        Pcg32 rng(seed, 0x6d726400ull);  // "mrd"
        return Mrd(rng, cfg.adversary_config());
    }

    ParamRefs collect_gen() {
        ParamRefs refs;
        gen_.collect(refs);
        return refs;
    }
    ParamRefs collect_disc() {
        ParamRefs refs;
        mpd_.collect(refs);
        mrd_.collect(refs);
        return refs;
    }

    Config config_;
    TrainConfig tc_;
    FftParams fp_;
    MelParams mp_;
    LossWeights weights_;
    TprConfig tpr_;
    Tensor fb_;
    Generator gen_;
    Mpd mpd_;
    Mrd mrd_;
    F0Net f0_;
    std::vector<Clip> corpus_;
    AdamW opt_g_, opt_d_;
    long completed_ = 0;
};

}  // namespace hiftnet
