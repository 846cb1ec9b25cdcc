/*
 * Copyright 2026 The vconv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "vconv/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vconv {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("wav: " + path + ": " + why);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44) fail(path, "truncated header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(path, "not a RIFF/WAVE file");

  // Walk chunks; require a PCM16 mono fmt chunk before data.
  std::size_t pos = 12;
  bool have_fmt = false;
  int sample_rate = 0;
  Waveform w;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t sz = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + sz > bytes.size()) fail(path, "chunk overruns file");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (sz < 16) fail(path, "fmt chunk too small");
      const std::uint16_t format = read_u16(bytes.data() + body);
      const std::uint16_t channels = read_u16(bytes.data() + body + 2);
      sample_rate = static_cast<int>(read_u32(bytes.data() + body + 4));
      const std::uint16_t bits = read_u16(bytes.data() + body + 14);
      if (format != 1) fail(path, "not PCM (format tag " + std::to_string(format) + ")");
      if (channels != 1) fail(path, "not mono (" + std::to_string(channels) + " channels)");
      if (bits != 16) fail(path, "not 16-bit (" + std::to_string(bits) + " bits)");
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) fail(path, "data chunk before fmt");
      const std::size_t n = sz / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t v = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<double>(v) / 32768.0;
      }
      w.sample_rate = sample_rate;
      return w;
    }
    pos = body + sz + (sz & 1);  // chunks are word-aligned
  }
  fail(path, "no data chunk");
}

void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) fail(path, "invalid sample rate");
  std::string out;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate * 2));  // byte rate
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits per sample
  out += "data";
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    double clamped = std::clamp(s, -1.0, 1.0);
    const std::int16_t v = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(path, "cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(path, "write failed");
}

}  // namespace vconv
