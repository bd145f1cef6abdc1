#include "resgrad/residual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "resgrad/errors.hpp"
#include "resgrad/rng.hpp"

namespace resgrad {

namespace {
constexpr double kStdFloor = 1e-6;

void check_pair(const MelSpectrogram& gt, const MelSpectrogram& base) {
  if (gt.values.rows() != base.values.rows() ||
      gt.values.cols() != base.values.cols())
    throw DataError("residual: gt/base shape mismatch (" +
                    std::to_string(gt.values.rows()) + "x" +
                    std::to_string(gt.values.cols()) + " vs " +
                    std::to_string(base.values.rows()) + "x" +
                    std::to_string(base.values.cols()) + ")");
  if (!(gt.config == base.config))
    throw DataError("residual: gt/base mel config mismatch");
}
}  // namespace

ResidualSample compute_residual(const MelSpectrogram& mel_gt,
                                const MelSpectrogram& mel_base) {
  check_pair(mel_gt, mel_base);
  ResidualSample s;
  s.values = mel_gt.values - mel_base.values;
  s.cond = mel_base.values;
  s.standardized = false;
  return s;
}

ResidualStats fit_stats(const std::vector<ResidualSample>& samples) {
  if (samples.empty()) throw DataError("fit_stats: empty sample list");
  double sum = 0.0, sq = 0.0;
  int64_t n = 0;
  for (const auto& s : samples) {
    sum += s.values.sum();
    sq += s.values.array().square().sum();
    n += s.values.size();
  }
  ResidualStats st;
  st.mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - st.mean * st.mean;
  st.std = std::max(std::sqrt(std::max(var, 0.0)), kStdFloor);
  return st;
}

ResidualStats fit_cond_stats(const std::vector<ResidualSample>& samples) {
  if (samples.empty()) throw DataError("fit_cond_stats: empty sample list");
  double sum = 0.0, sq = 0.0;
  int64_t n = 0;
  for (const auto& s : samples) {
    sum += s.cond.sum();
    sq += s.cond.array().square().sum();
    n += s.cond.size();
  }
  ResidualStats st;
  st.mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - st.mean * st.mean;
  st.std = std::max(std::sqrt(std::max(var, 0.0)), kStdFloor);
  return st;
}

ResidualSample standardize(const ResidualSample& s, const ResidualStats& stats) {
  if (s.standardized) throw ConfigError("standardize: sample already standardized");
  ResidualSample out = s;
  out.values = (s.values.array() - stats.mean) / stats.std;
  out.standardized = true;
  return out;
}

ResidualSample destandardize(const ResidualSample& s, const ResidualStats& stats) {
  if (!s.standardized) throw ConfigError("destandardize: sample not standardized");
  ResidualSample out = s;
  out.values = s.values.array() * stats.std + stats.mean;
  out.standardized = false;
  return out;
}

int max_crop_frames(const MelConfig& cfg, double crop_seconds) {
  return static_cast<int>(std::floor(crop_seconds * cfg.sample_rate / cfg.hop)) + 1;
}

BuiltDataset build_dataset(const std::vector<MelSpectrogram>& gt,
                           const std::vector<MelSpectrogram>& base,
                           double crop_seconds, uint64_t seed, int epoch) {
  if (gt.empty() || gt.size() != base.size())
    throw DataError("build_dataset: empty or misaligned corpus");
  if (crop_seconds <= 0.0) throw ConfigError("crop_seconds must be positive");

  BuiltDataset out;
  out.config = gt[0].config;
  out.samples.reserve(gt.size());
  for (size_t i = 0; i < gt.size(); ++i)
    out.samples.push_back(compute_residual(gt[i], base[i]));

  out.res_stats = fit_stats(out.samples);
  out.cond_stats = fit_cond_stats(out.samples);

  const int cap = max_crop_frames(out.config, crop_seconds);
  for (size_t i = 0; i < out.samples.size(); ++i) {
    auto& s = out.samples[i];
    const int frames = static_cast<int>(s.values.rows());
    if (frames > cap) {
      Rng rng(derive_seed(seed, 0x63726f70u, static_cast<uint64_t>(epoch),
                          static_cast<uint64_t>(i)));
      const int start = rng.uniform_int(0, frames - cap);
      s.values = Mat(s.values.middleRows(start, cap));
      s.cond = Mat(s.cond.middleRows(start, cap));
    }
    s = standardize(s, out.res_stats);
  }
  return out;
}

}  // namespace resgrad
