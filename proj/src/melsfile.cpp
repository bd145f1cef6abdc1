#include "resgrad/melsfile.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "resgrad/errors.hpp"

namespace resgrad {

namespace {

using nlohmann::json;

void write_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("truncated file: " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

json config_to_json(const MelConfig& cfg) {
  return json{{"n_mels", cfg.n_mels},   {"n_fft", cfg.n_fft},
              {"hop", cfg.hop},         {"win", cfg.win},
              {"fmin", cfg.fmin},       {"fmax", cfg.fmax},
              {"sample_rate", cfg.sample_rate}, {"log_floor", cfg.log_floor}};
}

MelConfig config_from_json(const json& j) {
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

}  // namespace

void save_mel(const std::string& path, const MelSpectrogram& mel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write mel file: " + path);
  out.write("MELS", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<uint32_t>(mel.frames()));
  write_u32(out, static_cast<uint32_t>(mel.n_mels()));
  for (Eigen::Index r = 0; r < mel.values.rows(); ++r)
    for (Eigen::Index c = 0; c < mel.values.cols(); ++c) {
      const float v = static_cast<float>(mel.values(r, c));
      out.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  if (!out) throw DataError("failed writing mel file: " + path);

  std::ofstream side(path + ".json");
  if (!side) throw DataError("cannot write mel sidecar: " + path + ".json");
  side << config_to_json(mel.config).dump(2) << "\n";
}

MelSpectrogram load_mel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open mel file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MELS")
    throw DataError("bad magic in mel file: " + path);
  const uint32_t version = read_u32(in, path);
  if (version != 1) throw DataError("unsupported mel file version: " + path);
  const uint32_t frames = read_u32(in, path);
  const uint32_t n_mels = read_u32(in, path);

  MelSpectrogram mel;
  mel.values.resize(frames, n_mels);
  for (uint32_t r = 0; r < frames; ++r)
    for (uint32_t c = 0; c < n_mels; ++c) {
      float v;
      in.read(reinterpret_cast<char*>(&v), sizeof(float));
      if (!in) throw DataError("truncated mel file: " + path);
      mel.values(r, c) = static_cast<double>(v);
    }

  std::ifstream side(path + ".json");
  if (!side) throw DataError("missing mel sidecar: " + path + ".json");
  json j;
  side >> j;
  mel.config = config_from_json(j);
  return mel;
}

void save_tensor(const std::string& path, const std::vector<uint32_t>& dims,
                 const std::vector<float>& data) {
  size_t n = 1;
  for (uint32_t d : dims) n *= d;
  if (n != data.size()) throw DataError("tensor dims do not match data size: " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write tensor file: " + path);
  out.write("MELT", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<uint32_t>(dims.size()));
  for (uint32_t d : dims) write_u32(out, d);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw DataError("failed writing tensor file: " + path);
}

void load_tensor(const std::string& path, std::vector<uint32_t>& dims,
                 std::vector<float>& data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MELT")
    throw DataError("bad magic in tensor file: " + path);
  const uint32_t version = read_u32(in, path);
  if (version != 1) throw DataError("unsupported tensor file version: " + path);
  const uint32_t rank = read_u32(in, path);
  dims.resize(rank);
  size_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    dims[i] = read_u32(in, path);
    n *= dims[i];
  }
  data.resize(n);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw DataError("truncated tensor file: " + path);
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  json j = json::array();
  for (const auto& e : entries)
    j.push_back({{"utt_id", e.utt_id}, {"gt_path", e.gt_path}, {"base_path", e.base_path}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  json j;
  in >> j;
  std::vector<ManifestEntry> entries;
  for (const auto& e : j)
    entries.push_back({e.at("utt_id").get<std::string>(),
                       e.at("gt_path").get<std::string>(),
                       e.at("base_path").get<std::string>()});
  return entries;
}

}  // namespace resgrad
