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

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vconv/corpus.hpp"
#include "vconv/dsp.hpp"
#include "vconv/neural.hpp"

namespace vconv::pipeline {

// Phone posteriors, one row per frame, rows summing to 1.
struct PpgSequence {
  Matrix frames;
};

struct StageConfig {
  std::size_t segment_frames = 401;
  std::size_t epochs = 10;
  std::size_t batch_segments = 4;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

// One distillation example: normalized multi-speaker cepstra paired with the
// cascade's pre-vocoder spectrogram for the same utterance.
struct Stage3Pair {
  dsp::MfccSequence input;
  dsp::Spectrogram target;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean per-frame loss
  // stage 3: relative L2 between the student's point estimate and the
  // cascade pseudo-target (log domain), once per epoch
  std::vector<double> epoch_distill_rel_l2;
};

struct TrainedNetwork {
  std::unique_ptr<neural::Network> net;
  TrainLog log;
};

struct LabeledUtterance {
  std::string name;
  Matrix features;          // normalized MFCC, T x D
  std::vector<int> labels;  // one phone id per frame
};

// ---- training stages ----

// Stage 1: frame-wise phone recognizer (softmax head, cross entropy).
TrainedNetwork train_stage1(const std::vector<LabeledUtterance>& data,
                            const neural::NetworkConfig& netcfg, const StageConfig& cfg);

// Stage 2: PPG -> target (log) spectrogram with a mixture head. Inputs are
// the recognizer's posteriors on the target speaker's own utterances.
TrainedNetwork train_stage2(neural::Network& net1, const std::vector<Waveform>& target_utts,
                            const neural::NetworkConfig& netcfg, const StageConfig& cfg,
                            const dsp::DspConfig& dspcfg);

// Networks 1+2 used as an aligner: renders pseudo-parallel training pairs
// for the direct network from a multi-speaker corpus.
std::vector<Stage3Pair> synthesize_stage3_pairs(neural::Network& net1, neural::Network& net2,
                                                const std::vector<Waveform>& multi_utts,
                                                const dsp::DspConfig& dspcfg);

// Stage 3: direct source-to-target network distilled from the cascade.
// warm_start, when given, copies every shape-compatible tensor from net2.
TrainedNetwork train_stage3(const std::vector<Stage3Pair>& pairs,
                            const neural::NetworkConfig& netcfg, const StageConfig& cfg,
                            const neural::Network* warm_start = nullptr);

// ---- conversion ----

PpgSequence compute_ppg(neural::Network& net1, const dsp::MfccSequence& m);

struct Conversion {
  dsp::Spectrogram spec;  // pre-vocoder linear magnitudes
  Waveform wav;
};

// Direct path: one network, then Griffin-Lim. The spectrogram is returned
// separately so timing can exclude vocoding.
Conversion convert(neural::Network& net3, const Waveform& w, const dsp::DspConfig& dspcfg);
dsp::Spectrogram convert_spectrogram(neural::Network& net3, const Waveform& w,
                                     const dsp::DspConfig& dspcfg);

// Baseline path: recognizer then mapper, same output contract.
Conversion baseline_convert(neural::Network& net1, neural::Network& net2, const Waveform& w,
                            const dsp::DspConfig& dspcfg);
dsp::Spectrogram baseline_convert_spectrogram(neural::Network& net1, neural::Network& net2,
                                              const Waveform& w, const dsp::DspConfig& dspcfg);

// ---- helpers ----

// Fraction of frames whose argmax posterior matches the label.
double frame_accuracy(neural::Network& net1, const std::vector<LabeledUtterance>& data);

// Spectrogram compression used for mixture targets (log1p), and its inverse
// (expm1 clamped at zero).
Matrix log_compress(const Matrix& magnitudes);
Matrix log_expand(const Matrix& log_magnitudes);

// Loads stage-1 features and labels from a corpus, failing with the
// utterance name when label and frame counts disagree.
std::vector<LabeledUtterance> load_labeled(const corpus::Corpus& c,
                                           const std::vector<const corpus::Utterance*>& utts,
                                           const dsp::DspConfig& dspcfg);

// Fixed-length training segments with zero padding and a validity mask for
// the final partial segment.
struct Segment {
  Matrix x;
  Matrix y;                        // empty for stage 1
  std::vector<int> labels;         // empty for stages 2/3
  std::vector<std::uint8_t> mask;  // 1 = real frame, 0 = padding
  std::size_t n_valid = 0;
};

std::vector<Segment> segment_utterance(const Matrix& x, const Matrix* y,
                                       const std::vector<int>* labels,
                                       std::size_t segment_frames);

}  // namespace vconv::pipeline
