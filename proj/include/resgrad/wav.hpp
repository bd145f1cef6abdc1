#pragma once

#include <string>
#include <vector>

namespace resgrad {

struct AudioClip {
  std::vector<double> samples;  // normalized to [-1, 1]
  int sample_rate = 0;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// PCM WAV, 16- or 24-bit. Multi-channel files are reduced to channel 0.
AudioClip load_audio(const std::string& path);

// 16-bit mono PCM writer, for qualitative demos.
void save_audio(const std::string& path, const AudioClip& clip);

}  // namespace resgrad
