#include "astws/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "astws/common.hpp"

namespace astws {
namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav(const std::string& path, std::span<const double> samples,
               int sample_rate, WavFormat format) {
  const uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const uint16_t block = bits / 8;
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * block);

  std::string buf;
  buf.reserve(44 + data_bytes);
  buf += "RIFF";
  put_u32(buf, 36 + data_bytes);
  buf += "WAVEfmt ";
  put_u32(buf, 16);
  put_u16(buf, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(buf, 1);
  put_u32(buf, static_cast<uint32_t>(sample_rate));
  put_u32(buf, static_cast<uint32_t>(sample_rate) * block);
  put_u16(buf, block);
  put_u16(buf, bits);
  buf += "data";
  put_u32(buf, data_bytes);
  for (double x : samples) {
    if (format == WavFormat::kPcm16) {
      const double c = std::clamp(x, -1.0, 1.0);
      put_u16(buf, static_cast<uint16_t>(static_cast<int16_t>(std::lround(c * 32767.0))));
    } else {
      const float f = static_cast<float>(x);
      uint32_t bitsv;
      std::memcpy(&bitsv, &f, sizeof(bitsv));
      put_u32(buf, bitsv);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  const std::string raw((std::istreambuf_iterator<char>(in)), {});
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const size_t n = raw.size();
  if (n < 12 || raw.compare(0, 4, "RIFF") != 0 || raw.compare(8, 4, "WAVE") != 0) {
    throw InputError(path + ": not a RIFF/WAVE file");
  }
  WavData out;
  uint16_t tag = 0, channels = 0, bits = 0;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= n) {
    const std::string id = raw.substr(pos, 4);
    const uint32_t size = get_u32(p + pos + 4);
    const size_t body = pos + 8;
    if (body + size > n) throw InputError(path + ": truncated chunk " + id);
    if (id == "fmt ") {
      if (size < 16) throw InputError(path + ": short fmt chunk");
      tag = get_u16(p + body);
      channels = get_u16(p + body + 2);
      out.sample_rate = static_cast<int>(get_u32(p + body + 4));
      bits = get_u16(p + body + 14);
      if (tag == kFormatExtensible && size >= 26) tag = get_u16(p + body + 24);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw InputError(path + ": data chunk before fmt chunk");
      if (channels != 1) throw InputError(path + ": only mono files are supported");
      if (tag == kFormatPcm && bits == 16) {
        out.format = WavFormat::kPcm16;
        out.samples.resize(size / 2);
        for (size_t i = 0; i < out.samples.size(); ++i) {
          out.samples[i] = static_cast<int16_t>(get_u16(p + body + 2 * i)) / 32767.0;
        }
      } else if (tag == kFormatFloat && bits == 32) {
        out.format = WavFormat::kFloat32;
        out.samples.resize(size / 4);
        for (size_t i = 0; i < out.samples.size(); ++i) {
          const uint32_t v = get_u32(p + body + 4 * i);
          float f;
          std::memcpy(&f, &v, sizeof(f));
          out.samples[i] = f;
        }
      } else {
        throw InputError(path + ": unsupported sample format (need PCM16 or float32)");
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw InputError(path + ": no data chunk");
}

}  // namespace astws
