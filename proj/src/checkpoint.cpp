#include "resgrad/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "resgrad/errors.hpp"
#include "resgrad/melsfile.hpp"

namespace resgrad {

namespace fs = std::filesystem;
using nlohmann::json;

NoiseSchedule schedule_from(const CheckpointInfo& info) {
  return make_schedule(info.T, info.beta_1, info.beta_T);
}

namespace {

json mel_config_json(const MelConfig& cfg) {
  return {{"n_mels", cfg.n_mels},   {"n_fft", cfg.n_fft},
          {"hop", cfg.hop},         {"win", cfg.win},
          {"fmin", cfg.fmin},       {"fmax", cfg.fmax},
          {"sample_rate", cfg.sample_rate}, {"log_floor", cfg.log_floor}};
}

MelConfig mel_config_from_json(const json& j) {
  MelConfig cfg;
  cfg.n_mels = j.at("n_mels").get<int>();
  cfg.n_fft = j.at("n_fft").get<int>();
  cfg.hop = j.at("hop").get<int>();
  cfg.win = j.at("win").get<int>();
  cfg.fmin = j.at("fmin").get<double>();
  cfg.fmax = j.at("fmax").get<double>();
  cfg.sample_rate = j.at("sample_rate").get<int>();
  cfg.log_floor = j.at("log_floor").get<double>();
  return cfg;
}

void save_tensor_ref(const std::string& dir, const nn::ParamRef<float>& p) {
  std::vector<uint32_t> dims = {static_cast<uint32_t>(p.value->rows()),
                                static_cast<uint32_t>(p.value->cols())};
  std::vector<float> data(p.value->data(), p.value->data() + p.value->size());
  save_tensor(dir + "/" + p.name + ".melt", dims, data);
}

void load_tensor_ref(const std::string& dir, const nn::ParamRef<float>& p) {
  const std::string path = dir + "/" + p.name + ".melt";
  if (!fs::exists(path))
    throw DataError("checkpoint tensor missing: " + p.name);
  std::vector<uint32_t> dims;
  std::vector<float> data;
  load_tensor(path, dims, data);
  if (dims.size() != 2 || dims[0] != static_cast<uint32_t>(p.value->rows()) ||
      dims[1] != static_cast<uint32_t>(p.value->cols()))
    throw DataError("checkpoint tensor shape mismatch: " + p.name);
  std::copy(data.begin(), data.end(), p.value->data());
}

}  // namespace

void save_checkpoint(const std::string& dir, const CheckpointInfo& info,
                     const std::vector<nn::ParamRef<float>>& params) {
  const fs::path root(dir);
  const fs::path tdir = root / "tensors";
  fs::create_directories(tdir);

  std::vector<nn::ParamRef<float>> all = params;
  if (info.base.kind == BaseKind::regressor) {
    if (!info.base.regressor)
      throw ConfigError("checkpoint: regressor base model without weights");
    auto reg = info.base.regressor->params();
    all.insert(all.end(), reg.begin(), reg.end());
  }

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = info.kind;
  manifest["step"] = info.step;
  manifest["param_count"] = info.param_count;
  manifest["schedule"] = {
      {"T", info.T}, {"beta_1", info.beta_1}, {"beta_T", info.beta_T}};
  if (info.kind == "score") {
    manifest["arch"] = {{"base_channels", info.arch.base_channels},
                        {"depth", info.arch.depth},
                        {"time_embed_dim", info.arch.time_embed_dim},
                        {"mid_blocks", info.arch.mid_blocks},
                        {"channel_mult", info.arch.channel_mult}};
  } else {
    manifest["arch"] = {{"base_channels", info.resunet_base}};
  }
  manifest["res_stats"] = {{"mean", info.res_stats.mean},
                           {"std", info.res_stats.std}};
  manifest["cond_stats"] = {{"mean", info.cond_stats.mean},
                            {"std", info.cond_stats.std}};
  manifest["mel_config"] = mel_config_json(info.mel);

  json base;
  base["kind"] = to_string(info.base.kind);
  base["sigma_time"] = info.base.sigma_time;
  base["sigma_freq"] = info.base.sigma_freq;
  base["pitch_mode"] = to_string(info.base.pitch_mode);
  base["pitch_max_shift"] = info.base.pitch_max_shift;
  base["pitch_seed"] = info.base.pitch_seed;
  if (info.base.kind == BaseKind::regressor) {
    base["regressor"] = {{"n_bands", info.base.regressor->n_bands()},
                         {"n_mels", info.base.regressor->n_mels()},
                         {"hidden", info.base.regressor->hidden()}};
  }
  manifest["base_model"] = base;

  std::vector<std::string> names;
  names.reserve(all.size());
  for (const auto& p : all) names.push_back(p.name);
  manifest["tensors"] = names;

  for (const auto& p : all) save_tensor_ref(tdir.string(), p);

  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

CheckpointInfo load_checkpoint_info(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath, std::ios::binary);
  if (!in) throw DataError("checkpoint manifest not found: " + mpath.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }

  CheckpointInfo info;
  try {
    const int ver = manifest.at("format_version").get<int>();
    if (ver != kCheckpointFormatVersion)
      throw DataError("unsupported checkpoint format version " +
                      std::to_string(ver));
    info.kind = manifest.at("kind").get<std::string>();
    info.step = manifest.at("step").get<int64_t>();
    info.param_count = manifest.at("param_count").get<int64_t>();
    const json& sched = manifest.at("schedule");
    info.T = sched.at("T").get<int>();
    info.beta_1 = sched.at("beta_1").get<double>();
    info.beta_T = sched.at("beta_T").get<double>();
    const json& arch = manifest.at("arch");
    if (info.kind == "score") {
      info.arch.base_channels = arch.at("base_channels").get<int>();
      info.arch.depth = arch.at("depth").get<int>();
      info.arch.time_embed_dim = arch.at("time_embed_dim").get<int>();
      info.arch.mid_blocks = arch.at("mid_blocks").get<int>();
      info.arch.channel_mult = arch.at("channel_mult").get<std::vector<int>>();
    } else if (info.kind == "resunet") {
      info.resunet_base = arch.at("base_channels").get<int>();
    } else {
      throw DataError("unknown checkpoint kind: " + info.kind);
    }
    info.res_stats.mean = manifest.at("res_stats").at("mean").get<double>();
    info.res_stats.std = manifest.at("res_stats").at("std").get<double>();
    info.cond_stats.mean = manifest.at("cond_stats").at("mean").get<double>();
    info.cond_stats.std = manifest.at("cond_stats").at("std").get<double>();
    info.mel = mel_config_from_json(manifest.at("mel_config"));

    const json& base = manifest.at("base_model");
    info.base.kind = base_kind_from_string(base.at("kind").get<std::string>());
    info.base.sigma_time = base.at("sigma_time").get<double>();
    info.base.sigma_freq = base.at("sigma_freq").get<double>();
    info.base.pitch_mode =
        pitch_mode_from_string(base.at("pitch_mode").get<std::string>());
    info.base.pitch_max_shift = base.at("pitch_max_shift").get<int>();
    info.base.pitch_seed = base.at("pitch_seed").get<uint64_t>();
    if (info.base.kind == BaseKind::regressor) {
      const json& reg = base.at("regressor");
      info.base.regressor = std::make_shared<MelRegressor>(
          reg.at("n_bands").get<int>(), reg.at("n_mels").get<int>(),
          reg.at("hidden").get<int>(), 0);
      load_checkpoint_params(dir, info.base.regressor->params());
    }
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  return info;
}

void load_checkpoint_params(const std::string& dir,
                            const std::vector<nn::ParamRef<float>>& params) {
  const std::string tdir = (fs::path(dir) / "tensors").string();
  for (const auto& p : params) load_tensor_ref(tdir, p);
}

}  // namespace resgrad
