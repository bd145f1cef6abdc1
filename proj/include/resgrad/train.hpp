#pragma once
// Score-network training: Adam on the score-matching objective over random
// fixed-size patches of the standardized residual dataset.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "resgrad/checkpoint.hpp"
#include "resgrad/residual.hpp"
#include "resgrad/scorenet.hpp"

namespace resgrad {

struct TrainConfig {
  double lr = 1e-4;
  int steps = 20000;
  int batch = 8;
  uint64_t seed = 0;
  int T = 1000;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  double crop_seconds = 4.0;  // dataset-build cap, recorded for the manifest
  int log_every = 100;
  int ckpt_every = 1000;
  int patch_frames = 32;

  void validate() const;
};

struct TrainResult {
  std::vector<std::pair<int, double>> loss_log;  // (step, smoothed loss)
  double initial_ema = 0.0;
  double final_ema = 0.0;
  int steps_done = 0;
};

// Trains net in place. When out_dir is nonempty, a checkpoint is written
// there every cfg.ckpt_every steps and after the last step; a non-finite
// loss aborts with NumericalError, leaving the last periodic save on disk.
// info supplies the checkpoint metadata (stats, mel config, base model);
// its schedule/step/param_count fields are filled from cfg and the net.
TrainResult train_scorenet(ScoreNet& net, const BuiltDataset& ds,
                           const TrainConfig& cfg, CheckpointInfo info,
                           const std::string& out_dir);

}  // namespace resgrad
