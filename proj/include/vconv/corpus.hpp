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
#include <string>
#include <vector>

#include "vconv/dsp.hpp"
#include "vconv/wav.hpp"

namespace vconv::corpus {

// A synthetic phone: formant resonances applied to a pulse-plus-noise source.
struct SyntheticPhone {
  int id = 0;
  std::vector<double> formant_centers;  // Hz, at least two
  std::vector<double> bandwidths;       // Hz, one per formant
};

struct SyntheticSpeaker {
  std::string id;
  double formant_scale = 1.0;   // [0.7, 1.4]
  double pitch_hz = 120.0;      // [60, 400]
  double spectral_tilt = 0.0;   // dB/octave, negative darkens
};

struct CorpusSpec {
  std::vector<SyntheticPhone> phones;
  std::vector<SyntheticSpeaker> speakers;
  std::size_t utterances_per_speaker = 20;
  double utterance_seconds = 2.0;
  std::uint64_t seed = 1;
  int sample_rate = 16000;

  void validate() const;
};

// 8 phones spread over vowel formant space; 6 speakers: four for the
// multi-speaker training pool, one held out as conversion source, one target.
CorpusSpec default_spec(std::uint64_t seed);

struct Utterance {
  std::string audio_path;
  std::string speaker_id;
  std::string label_path;  // empty when the manifest row carries "-"
};

struct Corpus {
  std::vector<Utterance> utterances;

  std::vector<const Utterance*> by_speaker(const std::string& speaker_id) const;
  std::vector<std::string> speaker_ids() const;  // in order of first appearance
};

// Renders every utterance (the same phone sequence for all speakers, so
// parallel content exists for evaluation), writes WAVs, frame-level label
// files, and the manifest. Returns the manifest path.
std::string generate_corpus(const CorpusSpec& spec, const std::string& out_dir,
                            const dsp::DspConfig& dspcfg = {});

// Manifest: one record per line, tab-separated:
//   audio_path <TAB> speaker_id <TAB> label_path-or-"-"
// Paths are resolved relative to the manifest location; missing files are
// reported eagerly.
Corpus load_manifest(const std::string& path);

// Frame-level phone labels, one integer per line.
std::vector<int> read_labels(const std::string& path);

// ---- rendering pieces, exposed for tests ----

struct PhoneSegment {
  int phone = 0;
  std::size_t begin = 0;  // sample range [begin, end)
  std::size_t end = 0;
};

std::vector<PhoneSegment> random_phone_sequence(const CorpusSpec& spec, std::uint64_t seq_seed,
                                                std::size_t n_samples);

// Formant-filtered pulse train plus noise; deterministic in every argument.
Waveform render_utterance(const CorpusSpec& spec, const std::vector<PhoneSegment>& segments,
                          const SyntheticSpeaker& speaker, std::uint64_t noise_seed);

std::vector<int> frame_labels(const std::vector<PhoneSegment>& segments, std::size_t n_samples,
                              const dsp::DspConfig& dspcfg);

}  // namespace vconv::corpus
