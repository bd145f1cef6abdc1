#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resgrad/mat.hpp"
#include "resgrad/mel.hpp"

namespace resgrad {

// Mel file: magic "MELS", three LE uint32 (version, frames, n_mels), then
// frames*n_mels float32 LE row-major. A JSON sidecar <path>.json carries the
// MelConfig.
void save_mel(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::string& path);

// Same header style for arbitrary tensors: magic "MELT", LE uint32 version,
// rank, dims..., then float32 LE data. Used for checkpoint parameters.
void save_tensor(const std::string& path, const std::vector<uint32_t>& dims,
                 const std::vector<float>& data);
void load_tensor(const std::string& path, std::vector<uint32_t>& dims,
                 std::vector<float>& data);

// Dataset manifest: JSON list of {utt_id, gt_path, base_path}.
struct ManifestEntry {
  std::string utt_id;
  std::string gt_path;
  std::string base_path;
};

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::string& path);

}  // namespace resgrad
