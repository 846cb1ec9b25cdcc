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

#include <functional>
#include <string>
#include <vector>

#include "vconv/dsp.hpp"
#include "vconv/wav.hpp"

namespace vconv::eval {

enum class Align { frame, dtw };

// Mel-cepstral distortion in dB between 40-order cepstral sequences,
// averaged over aligned frames:
//   (10 / ln 10) * sqrt(2 * sum_d (c_d^target - c_d^converted)^2)
// frame mode pairs frames by index and requires equal lengths; dtw mode
// aligns with a symmetric-step dynamic time warp first.
double mcd(const dsp::MfccSequence& target, const dsp::MfccSequence& converted,
           Align align = Align::frame);

struct McdReport {
  std::vector<double> per_utterance;  // dB
  double mean = 0.0;
  double stddev = 0.0;  // population convention
  std::size_t n_utterances = 0;
};

McdReport mcd_batch(
    const std::vector<std::pair<dsp::MfccSequence, dsp::MfccSequence>>& pairs,
    Align align = Align::frame);

struct BenchReport {
  std::string model_name;
  double total_seconds = 0.0;  // best-of-repeats total over all utterances
  std::size_t n_utterances = 0;
  std::size_t param_count = 0;
};

// Maps a waveform to its converted pre-vocoder spectrogram. Vocoding stays
// outside the timed region by construction.
using SpectrogramConverter = std::function<dsp::Spectrogram(const Waveform&)>;

// Wall-clock time of feature extraction + inference + point estimation over
// all utterances, single-threaded, min over `repeats` passes.
BenchReport bench_convert(const std::string& model_name, const SpectrogramConverter& converter,
                          const std::vector<Waveform>& utterances, std::size_t repeats,
                          std::size_t param_count);

// 100 * (baseline - proposed) / baseline; requires baseline > 0.
double relative_reduction(double baseline, double proposed);

// One decimal, matching the reporting convention of the summary table.
std::string format_one_decimal(double v);

// Human-readable summary: one row per model, then the baseline cascade, the
// proposed direct network, and their relative reductions.
std::string format_summary_table(const BenchReport& net1, const BenchReport& net2,
                                 const BenchReport& net3, const BenchReport& cascade);

// Structured records, one per line: name, seconds, utterances, parameters.
std::string format_tsv(const std::vector<BenchReport>& reports);
std::string format_tsv(const McdReport& report);

}  // namespace vconv::eval
