#pragma once
// Synthetic harmonic-stack "spectrograms" standing in for a real speech
// corpus: seeded, shape-matched GT/base pairs at desk scale.

#include <cstdint>
#include <vector>

#include "resgrad/basesynth.hpp"
#include "resgrad/mel.hpp"

namespace resgrad {

// Fixed extraction geometry for the synthetic corpus (values are generated
// directly in mel space; the config supplies framing for durations and crops).
MelConfig toy_config();

// One synthetic utterance: 64 bins x 96-160 frames of log-amplitudes with a
// drifting fundamental, 3-6 decaying harmonics and a low additive texture.
MelSpectrogram gen_toy_utterance(uint64_t seed, int utt_index);

struct ToyCorpus {
  std::vector<MelSpectrogram> gt;
  std::vector<MelSpectrogram> base;
};

// Generates the GT side, then pairs it through the base model. A regressor
// base model with no fitted network is fit on the generated GT first (the
// model argument is updated in place).
ToyCorpus gen_toy_corpus(int n_utts, uint64_t seed, BaseModel& base_model,
                         const RegressorFitConfig& fit_cfg = {});

}  // namespace resgrad
