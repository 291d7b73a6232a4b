// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rqsep/error.hpp"

namespace rqsep::data {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

dsp::Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::kFormat, "malformed WAV header (missing RIFF/WAVE)" + where);
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0) {
      fail(ErrorKind::kFormat, "truncated WAV chunk" + where);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail(ErrorKind::kFormat, "fmt chunk too short" + where);
      std::uint16_t format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == kFormatExtensible && size >= 26) format = le16(bytes.data() + body + 24);
      if (format != kFormatPcm) {
        fail(ErrorKind::kFormat, "unsupported WAV codec " + std::to_string(format) + " (only PCM)" + where);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Some writers leave the size unset for streamed output.
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) fail(ErrorKind::kFormat, "missing fmt chunk" + where);
  if (data == nullptr) fail(ErrorKind::kFormat, "missing data chunk" + where);
  if (bits != 16) fail(ErrorKind::kFormat, "unsupported PCM bit depth " + std::to_string(bits) + " (only 16-bit)" + where);
  if (channels == 0 || rate == 0) fail(ErrorKind::kFormat, "invalid channel count or sample rate" + where);

  const std::size_t frames = data_size / (2u * channels);
  std::vector<double> samples(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const auto v = static_cast<std::int16_t>(le16(data + 2 * (i * channels + c)));
      acc += static_cast<double>(v) / 32768.0;
    }
    samples[i] = acc / channels;
  }
  return dsp::Waveform(std::move(samples), static_cast<int>(rate));
}

std::int16_t to_pcm16(double sample) {
  if (!std::isfinite(sample)) fail(ErrorKind::kInvalidArgument, "write_wav: non-finite sample");
  const double scaled = sample * 32768.0;
  double r = std::round(scaled);  // half away from zero
  r = std::clamp(r, -32768.0, 32767.0);
  return static_cast<std::int16_t>(r);
}

void write_wav_pcm16(const std::filesystem::path& path, std::span<const std::int16_t> pcm, int sample_rate) {
  if (sample_rate <= 0) fail(ErrorKind::kInvalidArgument, "write_wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (std::int16_t v : pcm) put16(out, static_cast<std::uint16_t>(v));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot write WAV file " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::kIo, "short write to " + path.string());
}

void write_wav(const std::filesystem::path& path, const dsp::Waveform& w) {
  std::vector<std::int16_t> pcm(w.samples.size());
  for (std::size_t i = 0; i < pcm.size(); ++i) pcm[i] = to_pcm16(w.samples[i]);
  write_wav_pcm16(path, pcm, w.sample_rate);
}

}  // namespace rqsep::data
