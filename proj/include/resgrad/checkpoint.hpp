#pragma once
// Checkpoint directory: manifest.json (schedule, stats, architecture, step,
// base-model description, format version) plus tensors/<name>.melt, one file
// per parameter. Tensors are float32, so save -> load is bit-exact.

#include <cstdint>
#include <string>
#include <vector>

#include "resgrad/basesynth.hpp"
#include "resgrad/mel.hpp"
#include "resgrad/nn.hpp"
#include "resgrad/residual.hpp"
#include "resgrad/schedule.hpp"
#include "resgrad/scorenet.hpp"

namespace resgrad {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointInfo {
  std::string kind = "score";  // "score" | "resunet"
  int T = 1000;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  ScoreNetArch arch;       // meaningful when kind == "score"
  int resunet_base = 16;   // meaningful when kind == "resunet"
  ResidualStats res_stats;
  ResidualStats cond_stats;
  MelConfig mel;
  int64_t step = 0;
  int64_t param_count = 0;
  BaseModel base;  // regressor weights, when present, ride along in tensors/
};

NoiseSchedule schedule_from(const CheckpointInfo& info);

// Writes manifest.json and one tensor file per param (plus the base-model
// regressor's tensors when info.base carries one). Overwrites an existing
// checkpoint at dir atomically enough for the single-writer trainer.
void save_checkpoint(const std::string& dir, const CheckpointInfo& info,
                     const std::vector<nn::ParamRef<float>>& params);

// Reads the manifest; when the base model is a regressor its weights are
// loaded and attached. Throws DataError on missing/malformed files.
CheckpointInfo load_checkpoint_info(const std::string& dir);

// Fills the given tensors by name; DataError on absent names or shape drift.
void load_checkpoint_params(const std::string& dir,
                            const std::vector<nn::ParamRef<float>>& params);

}  // namespace resgrad
