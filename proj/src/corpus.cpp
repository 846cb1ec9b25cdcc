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

#include "vconv/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "vconv/rng.hpp"

namespace vconv::corpus {

namespace fs = std::filesystem;

void CorpusSpec::validate() const {
  if (phones.empty() || speakers.empty())
    throw std::invalid_argument("corpus: phone and speaker lists must be non-empty");
  if (utterances_per_speaker == 0 || utterance_seconds <= 0.0 || sample_rate <= 0)
    throw std::invalid_argument("corpus: counts and durations must be positive");
  for (const auto& p : phones) {
    if (p.formant_centers.size() < 2)
      throw std::invalid_argument("corpus: phone " + std::to_string(p.id) +
                                  " needs at least two formants");
    if (p.formant_centers.size() != p.bandwidths.size())
      throw std::invalid_argument("corpus: phone " + std::to_string(p.id) +
                                  " has mismatched formant/bandwidth lists");
    for (double f : p.formant_centers) {
      if (f <= 0.0 || f >= sample_rate / 2.0)
        throw std::invalid_argument("corpus: formant out of (0, nyquist) in phone " +
                                    std::to_string(p.id));
    }
  }
  for (const auto& s : speakers) {
    if (s.formant_scale < 0.7 || s.formant_scale > 1.4)
      throw std::invalid_argument("corpus: speaker " + s.id + " formant_scale out of [0.7, 1.4]");
    if (s.pitch_hz < 60.0 || s.pitch_hz > 400.0)
      throw std::invalid_argument("corpus: speaker " + s.id + " pitch out of [60, 400] Hz");
  }
}

CorpusSpec default_spec(std::uint64_t seed) {
  CorpusSpec spec;
  spec.seed = seed;
  // vowel-like formant triples, spread for separability
  const double f[8][3] = {
      {310, 2020, 2960}, {660, 1700, 2600}, {730, 1090, 2440}, {300, 870, 2240},
      {530, 1840, 2480}, {570, 840, 2410},  {440, 1220, 2240}, {490, 1500, 1890},
  };
  for (int i = 0; i < 8; ++i) {
    SyntheticPhone p;
    p.id = i;
    p.formant_centers = {f[i][0], f[i][1], f[i][2]};
    p.bandwidths = {60.0, 90.0, 120.0};
    spec.phones.push_back(p);
  }
  // spk0..spk3 form the multi-speaker pool, spk4 the held-out conversion
  // source, spk5 the target voice.
  spec.speakers = {
      {"spk0", 0.85, 95.0, -2.0},  {"spk1", 0.95, 120.0, -0.5}, {"spk2", 1.05, 160.0, 0.5},
      {"spk3", 1.15, 200.0, 1.5},  {"spk4", 0.90, 110.0, -1.0}, {"spk5", 1.30, 260.0, -3.0},
  };
  return spec;
}

std::vector<PhoneSegment> random_phone_sequence(const CorpusSpec& spec, std::uint64_t seq_seed,
                                                std::size_t n_samples) {
  Rng rng(seq_seed);
  std::vector<PhoneSegment> segments;
  std::size_t pos = 0;
  int prev = -1;
  while (pos < n_samples) {
    int phone = rng.next_int(0, static_cast<int>(spec.phones.size()) - 1);
    if (phone == prev && spec.phones.size() > 1) {
      phone = (phone + 1) % static_cast<int>(spec.phones.size());
    }
    prev = phone;
    const double dur_s = rng.uniform(0.15, 0.35);
    const std::size_t len = static_cast<std::size_t>(dur_s * spec.sample_rate);
    PhoneSegment seg;
    seg.phone = phone;
    seg.begin = pos;
    seg.end = std::min(pos + len, n_samples);
    segments.push_back(seg);
    pos = seg.end;
  }
  return segments;
}

namespace {

// Two-pole resonator with unit gain at DC (y = a*x + b*y1 + c*y2).
struct Resonator {
  double a = 1.0, b = 0.0, c = 0.0;
  double y1 = 0.0, y2 = 0.0;

  void tune(double freq_hz, double bw_hz, int sample_rate) {
    const double r = std::exp(-std::numbers::pi * bw_hz / sample_rate);
    c = -r * r;
    b = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq_hz / sample_rate);
    a = 1.0 - b - c;
  }

  double step(double x) {
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

Waveform render_utterance(const CorpusSpec& spec, const std::vector<PhoneSegment>& segments,
                          const SyntheticSpeaker& speaker, std::uint64_t noise_seed) {
  const std::size_t n = segments.empty() ? 0 : segments.back().end;
  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples.assign(n, 0.0);
  if (n == 0) return w;

  // glottal source: pulse train at the speaker's pitch plus aspiration noise
  Rng noise(noise_seed);
  std::vector<double> source(n);
  const double period = spec.sample_rate / speaker.pitch_hz;
  double next_pulse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.03 * noise.uniform(-1.0, 1.0);
    if (static_cast<double>(i) >= next_pulse) {
      v += 1.0;
      next_pulse += period;
    }
    source[i] = v;
  }

  const std::size_t max_formants = [&] {
    std::size_t m = 0;
    for (const auto& p : spec.phones) m = std::max(m, p.formant_centers.size());
    return m;
  }();
  std::vector<Resonator> cascade(max_formants);

  // filter states persist across segment boundaries; only coefficients switch
  for (const auto& seg : segments) {
    const SyntheticPhone& phone = spec.phones.at(static_cast<std::size_t>(seg.phone));
    const std::size_t active = phone.formant_centers.size();
    for (std::size_t k = 0; k < active; ++k) {
      const double f = std::min(phone.formant_centers[k] * speaker.formant_scale,
                                spec.sample_rate / 2.0 * 0.95);
      cascade[k].tune(f, phone.bandwidths[k], spec.sample_rate);
    }
    for (std::size_t i = seg.begin; i < seg.end; ++i) {
      double v = source[i];
      for (std::size_t k = 0; k < active; ++k) v = cascade[k].step(v);
      w.samples[i] = v;
    }
  }

  // spectral tilt: pre-emphasis brightens, one-pole smoothing darkens
  const double tilt = speaker.spectral_tilt;
  if (tilt > 0.0) {
    const double alpha = std::min(0.97, tilt / 6.0 * 0.97);
    double prev = 0.0;
    for (double& s : w.samples) {
      const double cur = s;
      s = cur - alpha * prev;
      prev = cur;
    }
  } else if (tilt < 0.0) {
    const double beta = std::min(0.97, -tilt / 6.0 * 0.97);
    double state = 0.0;
    for (double& s : w.samples) {
      state = (1.0 - beta) * s + beta * state;
      s = state;
    }
  }

  // normalize peak to a fixed headroom
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    const double gain = 0.6 / peak;
    for (double& s : w.samples) s *= gain;
  }
  return w;
}

std::vector<int> frame_labels(const std::vector<PhoneSegment>& segments, std::size_t n_samples,
                              const dsp::DspConfig& dspcfg) {
  const std::size_t t_count = dsp::frame_count(n_samples, dspcfg.frame_len, dspcfg.frame_hop);
  std::vector<int> labels(t_count, 0);
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t center = t * dspcfg.frame_hop + dspcfg.frame_len / 2;
    for (const auto& seg : segments) {
      if (center >= seg.begin && center < seg.end) {
        labels[t] = seg.phone;
        break;
      }
    }
  }
  return labels;
}

std::string generate_corpus(const CorpusSpec& spec, const std::string& out_dir,
                            const dsp::DspConfig& dspcfg) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  if (ec) throw std::runtime_error("corpus: cannot create " + out_dir + "/wav: " + ec.message());
  fs::create_directories(fs::path(out_dir) / "labels", ec);
  if (ec)
    throw std::runtime_error("corpus: cannot create " + out_dir + "/labels: " + ec.message());

  const std::size_t n_samples =
      static_cast<std::size_t>(spec.utterance_seconds * spec.sample_rate);
  const std::size_t n_utts = spec.utterances_per_speaker;
  const std::size_t n_spk = spec.speakers.size();

  std::vector<std::string> manifest_rows(n_spk * n_utts);

  // one job per (speaker, utterance); per-job seeds keep results independent
  // of scheduling, and failures are carried out of the parallel region
  std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(dynamic) collapse(2)
  for (std::int64_t si = 0; si < static_cast<std::int64_t>(n_spk); ++si) {
    for (std::int64_t ui = 0; ui < static_cast<std::int64_t>(n_utts); ++ui) {
      try {
        const auto& speaker = spec.speakers[static_cast<std::size_t>(si)];
        const std::uint64_t seq_seed =
            hash_combine(spec.seed, 0x5eedULL + static_cast<std::uint64_t>(ui));
        const auto segments = random_phone_sequence(spec, seq_seed, n_samples);
        const std::uint64_t noise_seed = hash_combine(
            hash_combine(spec.seed, 0x401feULL + static_cast<std::uint64_t>(ui)),
            static_cast<std::uint64_t>(si));
        const Waveform w = render_utterance(spec, segments, speaker, noise_seed);

        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "_u%03d", static_cast<int>(ui));
        const std::string wav_rel = "wav/" + speaker.id + suffix + ".wav";
        const std::string lab_rel = "labels/" + speaker.id + suffix + ".lab";
        write_wav((fs::path(out_dir) / wav_rel).string(), w);

        const auto labels = frame_labels(segments, n_samples, dspcfg);
        std::ofstream lf(fs::path(out_dir) / lab_rel);
        if (!lf) throw std::runtime_error("corpus: cannot write " + lab_rel);
        for (int l : labels) lf << l << "\n";

        manifest_rows[static_cast<std::size_t>(si) * n_utts + static_cast<std::size_t>(ui)] =
            wav_rel + "\t" + speaker.id + "\t" + lab_rel;
      } catch (...) {
#pragma omp critical
        if (!first_error) first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  const std::string manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
  std::ofstream mf(manifest_path, std::ios::trunc);
  if (!mf) throw std::runtime_error("corpus: cannot write " + manifest_path);
  for (const auto& row : manifest_rows) mf << row << "\n";
  return manifest_path;
}

Corpus load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot open " + path);
  const fs::path base = fs::path(path).parent_path();
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3)
      throw std::runtime_error("manifest: " + path + ": line " + std::to_string(line_no) +
                               ": expected 3 tab-separated fields, got " +
                               std::to_string(fields.size()));
    Utterance u;
    u.audio_path = (base / fields[0]).string();
    u.speaker_id = fields[1];
    if (fields[2] != "-") u.label_path = (base / fields[2]).string();
    if (!fs::exists(u.audio_path))
      throw std::runtime_error("manifest: missing audio file " + u.audio_path);
    if (!u.label_path.empty() && !fs::exists(u.label_path))
      throw std::runtime_error("manifest: missing label file " + u.label_path);
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

std::vector<int> read_labels(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("labels: cannot open " + path);
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      const int v = std::stoi(line, &used);
      if (used != line.size()) throw std::invalid_argument("trailing characters");
      labels.push_back(v);
    } catch (const std::exception&) {
      throw std::runtime_error("labels: " + path + ": line " + std::to_string(line_no) +
                               ": not an integer");
    }
  }
  return labels;
}

std::vector<const Utterance*> Corpus::by_speaker(const std::string& speaker_id) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances) {
    if (u.speaker_id == speaker_id) out.push_back(&u);
  }
  return out;
}

std::vector<std::string> Corpus::speaker_ids() const {
  std::vector<std::string> out;
  for (const auto& u : utterances) {
    if (std::find(out.begin(), out.end(), u.speaker_id) == out.end()) out.push_back(u.speaker_id);
  }
  return out;
}

}  // namespace vconv::corpus
