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

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "vconv/tensor.hpp"
#include "vconv/wav.hpp"

namespace vconv::dsp {

struct DspConfig {
  int sample_rate = 16000;
  std::size_t frame_len = 400;  // 25 ms
  std::size_t frame_hop = 160;  // 10 ms
  std::size_t fft_size = 512;   // 257 one-sided bins
  std::size_t mel_channels = 80;
  std::size_t mfcc_order = 40;
  std::size_t griffin_lim_iters = 60;
  double log_floor = 1e-10;  // floor on mel energies before the log

  std::size_t bins() const { return fft_size / 2 + 1; }
  void validate() const;  // throws std::invalid_argument on a bad combination
};

// Magnitude spectrogram, frames on rows, fft_size/2+1 bins on columns.
struct Spectrogram {
  Matrix frames;
  double frame_hop_s = 0.01;
  std::size_t fft_size = 512;
};

struct MfccSequence {
  Matrix frames;  // T x mfcc_order, c_1..c_D (c_0 dropped)
  bool normalized = false;
};

// Number of analysis frames; requires n_samples >= frame_len.
std::size_t frame_count(std::size_t n_samples, std::size_t frame_len, std::size_t frame_hop);

// Hann-windowed magnitude STFT, frames zero-padded to fft_size.
// Throws "too short" when the waveform does not fill one frame.
Spectrogram stft(const Waveform& w, const DspConfig& cfg);

// Mel filterbank log energies -> DCT-II, dropping c_0.
MfccSequence mfcc(const Waveform& w, const DspConfig& cfg);
// Same cepstra computed from an existing magnitude spectrogram. Conversion
// quality is scored on the pre-vocoder spectrogram through this path.
MfccSequence mfcc_from_spectrogram(const Spectrogram& s, const DspConfig& cfg);

// Per-utterance, per-dimension zero-mean unit-variance scaling (population
// variance, floored for constant dimensions). Requires at least two frames.
MfccSequence cmvn(const MfccSequence& m);

// Iterative phase reconstruction starting from zero phase. When trace is
// non-null it receives the relative L2 magnitude error after every iteration.
Waveform griffin_lim(const Spectrogram& s, const DspConfig& cfg,
                     std::vector<double>* trace = nullptr);

// Radix-2 in-place complex FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& buf, bool inverse);

// Mel filterbank weights, mel_channels x bins triangles on the magnitude
// spectrum, HTK mel scale, spanning 0..sample_rate/2.
Matrix mel_filterbank(const DspConfig& cfg);

}  // namespace vconv::dsp
