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

#include "vconv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vconv::checkpoint {

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }

void put_str(std::string& s, const std::string& v) {
  put_u32(s, static_cast<std::uint32_t>(v.size()));
  s += v;
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin) : b_(bytes), origin_(origin) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string v = b_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  void raw(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }

  bool exhausted() const { return pos_ == b_.size(); }

  [[noreturn]] void fail(const std::string& why) const {
    throw std::runtime_error("checkpoint: " + origin_ + ": " + why);
  }

 private:
  unsigned char byte() { return static_cast<unsigned char>(b_[pos_++]); }

  void need(std::size_t n) {
    if (pos_ + n > b_.size()) fail("truncated file");
  }

  const std::string& b_;
  std::string origin_;
  std::size_t pos_ = 0;
};

void put_config(std::string& s, const neural::NetworkConfig& c) {
  put_u64(s, c.input_dim);
  put_u64(s, c.output_dim);
  put_u64(s, c.prenet_layers);
  put_u64(s, c.prenet_units);
  put_f64(s, c.dropout_rate);
  put_u64(s, c.cbhg_units);
  put_u64(s, c.conv_bank_k);
  put_u64(s, c.bank_channels);
  put_u64(s, c.highway_layers);
  put_u64(s, c.gru_units);
  put_u32(s, static_cast<std::uint32_t>(c.head_kind));
  put_u64(s, c.mixtures);
  put_u32(s, c.mdn_isotropic ? 1 : 0);
  put_f64(s, c.sigma_min);
  put_f64(s, c.sigma_max);
}

neural::NetworkConfig read_config(Reader& r) {
  neural::NetworkConfig c;
  c.input_dim = r.u64();
  c.output_dim = r.u64();
  c.prenet_layers = r.u64();
  c.prenet_units = r.u64();
  c.dropout_rate = r.f64();
  c.cbhg_units = r.u64();
  c.conv_bank_k = r.u64();
  c.bank_channels = r.u64();
  c.highway_layers = r.u64();
  c.gru_units = r.u64();
  const std::uint32_t head = r.u32();
  if (head > 1) r.fail("unknown head kind");
  c.head_kind = static_cast<neural::HeadKind>(head);
  c.mixtures = r.u64();
  c.mdn_isotropic = r.u32() != 0;
  c.sigma_min = r.f64();
  c.sigma_max = r.f64();
  return c;
}

}  // namespace

std::string serialize(const neural::Network& net, const std::string& stage) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_str(out, stage);
  put_str(out, kConventions);
  put_config(out, net.config());
  const auto& params = net.params();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const neural::Param* p : params) {
    put_str(out, p->name);
    put_u32(out, static_cast<std::uint32_t>(p->value.shape.size()));
    for (std::size_t d : p->value.shape) put_u64(out, d);
    for (double v : p->value.data) put_f64(out, v);
  }
  return out;
}

Loaded deserialize(const std::string& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic (not a model file)");
  const std::uint32_t version = r.u32();
  if (version != kVersion) r.fail("unsupported format version " + std::to_string(version));
  Loaded out;
  out.stage = r.str();
  const std::string conventions = r.str();
  if (conventions != kConventions) r.fail("layer conventions mismatch: " + conventions);
  const neural::NetworkConfig cfg = read_config(r);
  out.net = std::make_unique<neural::Network>(cfg, 0);
  const std::uint32_t n = r.u32();
  auto& params = out.net->params();
  if (n != params.size()) r.fail("tensor count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    neural::Param* p = params[i];
    const std::string name = r.str();
    if (name != p->name) r.fail("tensor order mismatch: got " + name + ", expected " + p->name);
    const std::uint32_t ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    if (shape != p->value.shape) r.fail("shape mismatch for " + name);
    for (double& v : p->value.data) v = r.f64();
  }
  if (!r.exhausted()) r.fail("trailing bytes");
  return out;
}

void save(const std::string& path, const neural::Network& net, const std::string& stage) {
  const std::string bytes = serialize(net, stage);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

Loaded load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path);
}

}  // namespace vconv::checkpoint
