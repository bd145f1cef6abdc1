#include "resgrad/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "resgrad/errors.hpp"

namespace resgrad {

namespace {

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

}  // namespace

AudioClip load_audio(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const uint8_t* hdr = buf.data() + pos;
    uint32_t chunk_len = read_u32(hdr + 4);
    const uint8_t* body = hdr + 8;
    if (pos + 8 + chunk_len > buf.size())
      chunk_len = static_cast<uint32_t>(buf.size() - pos - 8);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (format != 1) throw DataError("unsupported WAV codec (PCM only): " + path);
  if (bits != 16 && bits != 24)
    throw DataError("unsupported bit depth " + std::to_string(bits) + ": " + path);
  if (channels == 0 || rate == 0 || data == nullptr)
    throw DataError("malformed WAV header: " + path);

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t n = data_len / frame_bytes;
  if (n == 0) throw DataError("zero-length audio: " + path);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const uint8_t* s = data + i * frame_bytes;  // channel 0
    if (bits == 16) {
      int16_t v = static_cast<int16_t>(s[0] | (s[1] << 8));
      clip.samples[i] = static_cast<double>(v) / 32768.0;
    } else {
      int32_t v = s[0] | (s[1] << 8) | (s[2] << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;  // sign-extend
      clip.samples[i] = static_cast<double>(v) / 8388608.0;
    }
  }
  return clip;
}

void save_audio(const std::string& path, const AudioClip& clip) {
  if (clip.samples.empty() || clip.sample_rate <= 0)
    throw DataError("refusing to write empty audio: " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audio file: " + path);

  auto put_u32 = [&](uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](uint16_t v) {
    uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
  };

  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  const uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  put_u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<uint32_t>(clip.sample_rate));
  put_u32(static_cast<uint32_t>(clip.sample_rate) * 2);
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_bytes);
  // same 1/32768 scale as the loader, so round-trips stay within half an LSB
  for (double v : clip.samples) {
    long q = std::lround(std::clamp(v, -1.0, 1.0) * 32768.0);
    q = std::clamp(q, -32768l, 32767l);
    put_u16(static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
}

}  // namespace resgrad
