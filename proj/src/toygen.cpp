#include "resgrad/toygen.hpp"

#include <cmath>

#include "resgrad/errors.hpp"
#include "resgrad/rng.hpp"

namespace resgrad {

MelConfig toy_config() {
  MelConfig cfg;
  cfg.n_mels = 64;
  cfg.n_fft = 1024;
  cfg.hop = 256;
  cfg.fmin = 0.0;
  cfg.fmax = 11025.0;
  cfg.sample_rate = 22050;
  cfg.validate();
  return cfg;
}

MelSpectrogram gen_toy_utterance(uint64_t seed, int utt_index) {
  Rng rng(derive_seed(seed, 0x746f7955u, static_cast<uint64_t>(utt_index)));
  const MelConfig cfg = toy_config();
  const int n_mels = cfg.n_mels;
  const int frames = rng.uniform_int(96, 160);

  const double f0 = 8.0 + 12.0 * rng.uniform();  // fundamental bin
  const int n_harm = rng.uniform_int(3, 6);
  const double decay = 0.3 + 0.4 * rng.uniform();
  const double drift_amp = 0.5 + 1.5 * rng.uniform();
  const double drift_period = 60.0 + 60.0 * rng.uniform();
  const double drift_phase = 2.0 * M_PI * rng.uniform();
  const double width = 1.0 + 0.5 * rng.uniform();
  const double env_period = 40.0 + 40.0 * rng.uniform();
  const double env_phase = 2.0 * M_PI * rng.uniform();

  Mat amp = Mat::Zero(frames, n_mels);
  for (int t = 0; t < frames; ++t) {
    const double f0_t =
        f0 + drift_amp * std::sin(2.0 * M_PI * t / drift_period + drift_phase);
    const double env =
        1.0 + 0.3 * std::sin(2.0 * M_PI * t / env_period + env_phase);
    for (int h = 1; h <= n_harm; ++h) {
      const double center = h * f0_t;
      if (center > n_mels + 4) break;
      const double a = env * std::exp(-decay * (h - 1));
      for (int m = 0; m < n_mels; ++m) {
        const double d = (m - center) / width;
        amp(t, m) += a * std::exp(-0.5 * d * d);
      }
    }
    for (int m = 0; m < n_mels; ++m)
      amp(t, m) += 1e-3 * (1.0 + 0.5 * rng.uniform());  // texture floor
  }

  MelSpectrogram mel;
  mel.config = cfg;
  mel.values = quantize_f32(amp.cwiseMax(cfg.log_floor).array().log().matrix());
  return mel;
}

ToyCorpus gen_toy_corpus(int n_utts, uint64_t seed, BaseModel& base_model,
                         const RegressorFitConfig& fit_cfg) {
  if (n_utts < 1) throw ConfigError("gen_toy_corpus: n_utts must be >= 1");
  ToyCorpus corpus;
  corpus.gt.reserve(static_cast<size_t>(n_utts));
  for (int i = 0; i < n_utts; ++i)
    corpus.gt.push_back(gen_toy_utterance(seed, i));

  if (base_model.kind == BaseKind::regressor && !base_model.regressor) {
    std::vector<FeatureSeq> feats;
    feats.reserve(corpus.gt.size());
    for (const auto& m : corpus.gt) feats.push_back(features_from_mel(m));
    RegressorFitConfig cfg = fit_cfg;
    if (cfg.seed == 0) cfg.seed = seed;
    BaseModel fitted = fit_regressor(feats, corpus.gt, cfg);
    base_model.regressor = fitted.regressor;
  }

  corpus.base.reserve(static_cast<size_t>(n_utts));
  for (int i = 0; i < n_utts; ++i) {
    if (base_model.kind == BaseKind::blur) {
      corpus.base.push_back(synthesize(base_model, corpus.gt[static_cast<size_t>(i)], i));
    } else {
      corpus.base.push_back(synthesize(base_model,
                                       features_from_mel(corpus.gt[static_cast<size_t>(i)]),
                                       corpus.gt[static_cast<size_t>(i)].config, i));
    }
  }
  return corpus;
}

}  // namespace resgrad
