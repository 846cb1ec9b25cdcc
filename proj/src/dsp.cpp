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

#include "vconv/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "vconv/kernels.hpp"

namespace vconv::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

void DspConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("dsp: sample_rate must be positive");
  if (frame_len == 0 || frame_hop == 0 || fft_size == 0 || mel_channels == 0 || mfcc_order == 0)
    throw std::invalid_argument("dsp: all sizes must be positive");
  if (frame_len > fft_size) throw std::invalid_argument("dsp: frame_len must not exceed fft_size");
  if (mfcc_order > mel_channels)
    throw std::invalid_argument("dsp: mfcc_order must not exceed mel_channels");
  if (!is_pow2(fft_size)) throw std::invalid_argument("dsp: fft_size must be a power of two");
}

std::size_t frame_count(std::size_t n_samples, std::size_t frame_len, std::size_t frame_hop) {
  if (n_samples < frame_len) throw std::invalid_argument("dsp: utterance too short");
  return 1 + (n_samples - frame_len) / frame_hop;
}

void fft_inplace(std::vector<std::complex<double>>& buf, bool inverse) {
  const std::size_t n = buf.size();
  if (!is_pow2(n)) throw std::invalid_argument("fft: size must be a power of two");
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = buf[i + k];
        const std::complex<double> v = buf[i + k + len / 2] * w;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : buf) x *= inv;
  }
}

namespace {

// One-sided complex STFT of a windowed, zero-padded frame sequence.
// Frames are independent, so the frame loop is the parallel one.
void complex_stft(const std::vector<double>& samples, const DspConfig& cfg,
                  Matrix& re, Matrix& im) {
  const std::size_t t_count = frame_count(samples.size(), cfg.frame_len, cfg.frame_hop);
  const std::size_t bins = cfg.bins();
  const std::vector<double> window = hann_window(cfg.frame_len);
  re = Matrix(t_count, bins);
  im = Matrix(t_count, bins);
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(t_count); ++t) {
    std::vector<std::complex<double>> buf(cfg.fft_size, {0.0, 0.0});
    const double* src = samples.data() + static_cast<std::size_t>(t) * cfg.frame_hop;
    for (std::size_t i = 0; i < cfg.frame_len; ++i) buf[i] = src[i] * window[i];
    fft_inplace(buf, false);
    for (std::size_t b = 0; b < bins; ++b) {
      re(static_cast<std::size_t>(t), b) = buf[b].real();
      im(static_cast<std::size_t>(t), b) = buf[b].imag();
    }
  }
}

}  // namespace

Spectrogram stft(const Waveform& w, const DspConfig& cfg) {
  cfg.validate();
  if (w.samples.empty()) throw std::invalid_argument("dsp: utterance too short");
  if (!all_finite(w.samples)) throw std::invalid_argument("dsp: non-finite samples");
  Matrix re, im;
  complex_stft(w.samples, cfg, re, im);
  Spectrogram s;
  s.frames = Matrix(re.rows, re.cols);
  for (std::size_t i = 0; i < re.data.size(); ++i) {
    s.frames.data[i] = std::hypot(re.data[i], im.data[i]);
  }
  s.frame_hop_s = static_cast<double>(cfg.frame_hop) / cfg.sample_rate;
  s.fft_size = cfg.fft_size;
  return s;
}

Matrix mel_filterbank(const DspConfig& cfg) {
  const std::size_t bins = cfg.bins();
  const double f_max = cfg.sample_rate / 2.0;
  const double mel_max = hz_to_mel(f_max);
  std::vector<double> edges(cfg.mel_channels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(cfg.mel_channels + 1));
  }
  Matrix fb(cfg.mel_channels, bins);
  for (std::size_t m = 0; m < cfg.mel_channels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
      double v = 0.0;
      if (f > lo && f < center) {
        v = (f - lo) / (center - lo);
      } else if (f >= center && f < hi) {
        v = (hi - f) / (hi - center);
      }
      fb(m, b) = v;
    }
  }
  return fb;
}

MfccSequence mfcc_from_spectrogram(const Spectrogram& s, const DspConfig& cfg) {
  cfg.validate();
  if (s.frames.cols != cfg.bins())
    throw std::invalid_argument("dsp: spectrogram bin count does not match fft_size");
  const std::size_t t_count = s.frames.rows;
  const std::size_t n_mel = cfg.mel_channels;
  const Matrix fb = mel_filterbank(cfg);

  // mel energies: T x n_mel = frames (T x bins) * fb^T
  Matrix mel(t_count, n_mel);
  kernels::matmul_nt(s.frames.data.data(), t_count, s.frames.cols, fb.data.data(), n_mel,
                     mel.data.data());

  MfccSequence out;
  out.frames = Matrix(t_count, cfg.mfcc_order);
  // Orthonormal DCT-II of the floored log energies; c_0 dropped.
  const double scale = std::sqrt(2.0 / static_cast<double>(n_mel));
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(t_count); ++t) {
    std::vector<double> loge(n_mel);
    for (std::size_t m = 0; m < n_mel; ++m) {
      loge[m] = std::log(std::max(mel(static_cast<std::size_t>(t), m), cfg.log_floor));
    }
    for (std::size_t k = 1; k <= cfg.mfcc_order; ++k) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n_mel; ++m) {
        acc += loge[m] * std::cos(kPi * static_cast<double>(k) * (static_cast<double>(m) + 0.5) /
                                  static_cast<double>(n_mel));
      }
      out.frames(static_cast<std::size_t>(t), k - 1) = scale * acc;
    }
  }
  return out;
}

MfccSequence mfcc(const Waveform& w, const DspConfig& cfg) {
  return mfcc_from_spectrogram(stft(w, cfg), cfg);
}

MfccSequence cmvn(const MfccSequence& m) {
  const std::size_t t_count = m.frames.rows;
  const std::size_t dims = m.frames.cols;
  if (t_count < 2) throw std::invalid_argument("cmvn: need at least two frames");
  MfccSequence out;
  out.frames = Matrix(t_count, dims);
  out.normalized = true;
  constexpr double kVarFloor = 1e-12;
  for (std::size_t d = 0; d < dims; ++d) {
    double mean = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) mean += m.frames(t, d);
    mean /= static_cast<double>(t_count);
    double var = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      const double c = m.frames(t, d) - mean;
      var += c * c;
    }
    var /= static_cast<double>(t_count);
    if (var < kVarFloor) {
      // constant dimension: map to exact zeros rather than amplifying noise
      for (std::size_t t = 0; t < t_count; ++t) out.frames(t, d) = 0.0;
    } else {
      const double inv = 1.0 / std::sqrt(var);
      for (std::size_t t = 0; t < t_count; ++t) out.frames(t, d) = (m.frames(t, d) - mean) * inv;
    }
  }
  return out;
}

namespace {

// Inverse STFT with synthesis window and squared-window normalization.
std::vector<double> istft(const Matrix& re, const Matrix& im, const DspConfig& cfg) {
  const std::size_t t_count = re.rows;
  const std::size_t n_samples = (t_count - 1) * cfg.frame_hop + cfg.frame_len;
  const std::vector<double> window = hann_window(cfg.frame_len);

  Matrix frames(t_count, cfg.frame_len);
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(t_count); ++t) {
    std::vector<std::complex<double>> buf(cfg.fft_size);
    const std::size_t bins = cfg.bins();
    for (std::size_t b = 0; b < bins; ++b) {
      buf[b] = {re(static_cast<std::size_t>(t), b), im(static_cast<std::size_t>(t), b)};
    }
    for (std::size_t b = bins; b < cfg.fft_size; ++b) buf[b] = std::conj(buf[cfg.fft_size - b]);
    fft_inplace(buf, true);
    for (std::size_t i = 0; i < cfg.frame_len; ++i) {
      frames(static_cast<std::size_t>(t), i) = buf[i].real() * window[i];
    }
  }

  std::vector<double> out(n_samples, 0.0);
  kernels::overlap_add(frames.data.data(), t_count, cfg.frame_len, cfg.frame_hop, out.data(),
                       n_samples);

  // normalize by the overlapped squared window
  Matrix wsq(t_count, cfg.frame_len);
  for (std::size_t t = 0; t < t_count; ++t) {
    for (std::size_t i = 0; i < cfg.frame_len; ++i) wsq(t, i) = window[i] * window[i];
  }
  std::vector<double> norm(n_samples, 0.0);
  kernels::overlap_add(wsq.data.data(), t_count, cfg.frame_len, cfg.frame_hop, norm.data(),
                       n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    out[i] = norm[i] > 1e-8 ? out[i] / norm[i] : 0.0;
  }
  return out;
}

// Relative L2 distance between the target magnitudes and |re + i*im|.
double magnitude_error(const Matrix& target, const Matrix& re, const Matrix& im) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < target.data.size(); ++i) {
    const double mag = std::hypot(re.data[i], im.data[i]);
    const double d = target.data[i] - mag;
    num += d * d;
    den += target.data[i] * target.data[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace

Waveform griffin_lim(const Spectrogram& s, const DspConfig& cfg, std::vector<double>* trace) {
  cfg.validate();
  if (s.frames.cols != cfg.bins())
    throw std::invalid_argument("griffin_lim: bin count does not match fft_size");
  for (double v : s.frames.data) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("griffin_lim: magnitudes must be finite and non-negative");
  }
  const std::size_t t_count = s.frames.rows;
  const std::size_t bins = s.frames.cols;

  // momentum extrapolation on the complex estimate (fast Griffin-Lim)
  constexpr double kMomentum = 0.9;
  constexpr double kAlpha = kMomentum / (1.0 + kMomentum);

  // zero initial phase
  Matrix re = s.frames;
  Matrix im(t_count, bins);
  Matrix prev_re(t_count, bins), prev_im(t_count, bins);

  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples = istft(re, im, cfg);

  for (std::size_t it = 0; it < cfg.griffin_lim_iters; ++it) {
    Matrix ere, eim;
    complex_stft(w.samples, cfg, ere, eim);
    if (trace) trace->push_back(magnitude_error(s.frames, ere, eim));
    // take the phase of the extrapolated estimate, restore the target
    // magnitude
    for (std::size_t i = 0; i < re.data.size(); ++i) {
      const double pr = ere.data[i] - kAlpha * prev_re.data[i];
      const double pi = eim.data[i] - kAlpha * prev_im.data[i];
      const double mag = std::hypot(pr, pi);
      if (mag > 1e-12) {
        re.data[i] = s.frames.data[i] * pr / mag;
        im.data[i] = s.frames.data[i] * pi / mag;
      } else {
        re.data[i] = s.frames.data[i];
        im.data[i] = 0.0;
      }
      prev_re.data[i] = ere.data[i];
      prev_im.data[i] = eim.data[i];
    }
    w.samples = istft(re, im, cfg);
  }
  if (trace) {
    Matrix ere, eim;
    complex_stft(w.samples, cfg, ere, eim);
    trace->push_back(magnitude_error(s.frames, ere, eim));
  }
  return w;
}

}  // namespace vconv::dsp
