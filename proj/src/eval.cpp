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

#include "vconv/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "vconv/kernels.hpp"

namespace vconv::eval {

namespace {

constexpr std::size_t kMcdOrder = 40;
const double kMcdScale = 10.0 / std::log(10.0);

double frame_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return kMcdScale * std::sqrt(2.0 * s);
}

double mcd_frame_aligned(const Matrix& a, const Matrix& b) {
  double total = 0.0;
  for (std::size_t t = 0; t < a.rows; ++t) total += frame_distance(a.row(t), b.row(t), a.cols);
  return total / static_cast<double>(a.rows);
}

// Symmetric-step DTW (diagonal, vertical, horizontal, all weight 1) on the
// per-frame distortion; the minimum-total-cost path is normalized by its
// node count, so equal-length inputs can never score above frame mode.
double mcd_dtw(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows, m = b.rows;
  Matrix cost(n, m);
  Matrix len(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = frame_distance(a.row(i), b.row(j), a.cols);
      if (i == 0 && j == 0) {
        cost(i, j) = d;
        len(i, j) = 1.0;
        continue;
      }
      double best = std::numeric_limits<double>::infinity();
      double best_len = 0.0;
      if (i > 0 && j > 0 && cost(i - 1, j - 1) < best) {
        best = cost(i - 1, j - 1);
        best_len = len(i - 1, j - 1);
      }
      if (i > 0 && cost(i - 1, j) < best) {
        best = cost(i - 1, j);
        best_len = len(i - 1, j);
      }
      if (j > 0 && cost(i, j - 1) < best) {
        best = cost(i, j - 1);
        best_len = len(i, j - 1);
      }
      cost(i, j) = best + d;
      len(i, j) = best_len + 1.0;
    }
  }
  return cost(n - 1, m - 1) / len(n - 1, m - 1);
}

}  // namespace

double mcd(const dsp::MfccSequence& target, const dsp::MfccSequence& converted, Align align) {
  if (target.frames.cols != kMcdOrder || converted.frames.cols != kMcdOrder)
    throw std::invalid_argument("mcd: cepstral order must be 40");
  if (target.frames.rows == 0 || converted.frames.rows == 0)
    throw std::invalid_argument("mcd: empty sequence");
  if (align == Align::frame) {
    if (target.frames.rows != converted.frames.rows)
      throw std::invalid_argument("mcd: frame mode requires equal lengths (" +
                                  std::to_string(target.frames.rows) + " vs " +
                                  std::to_string(converted.frames.rows) + ")");
    return mcd_frame_aligned(target.frames, converted.frames);
  }
  return mcd_dtw(target.frames, converted.frames);
}

McdReport mcd_batch(const std::vector<std::pair<dsp::MfccSequence, dsp::MfccSequence>>& pairs,
                    Align align) {
  if (pairs.empty()) throw std::invalid_argument("mcd_batch: no pairs");
  McdReport r;
  for (const auto& [target, converted] : pairs) {
    r.per_utterance.push_back(mcd(target, converted, align));
  }
  r.n_utterances = r.per_utterance.size();
  for (double v : r.per_utterance) r.mean += v;
  r.mean /= static_cast<double>(r.n_utterances);
  for (double v : r.per_utterance) r.stddev += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(r.stddev / static_cast<double>(r.n_utterances));
  return r;
}

BenchReport bench_convert(const std::string& model_name, const SpectrogramConverter& converter,
                          const std::vector<Waveform>& utterances, std::size_t repeats,
                          std::size_t param_count) {
  if (utterances.empty()) throw std::invalid_argument("bench: no utterances");
  if (repeats == 0) throw std::invalid_argument("bench: repeats must be positive");

  kernels::ThreadGuard single(1);  // timing contract: one inference thread
  // warm pass outside the timed region (first-touch and cache effects)
  (void)converter(utterances.front());

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& w : utterances) {
      const dsp::Spectrogram s = converter(w);
      (void)s;
    }
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }

  BenchReport out;
  out.model_name = model_name;
  out.total_seconds = best;
  out.n_utterances = utterances.size();
  out.param_count = param_count;
  return out;
}

double relative_reduction(double baseline, double proposed) {
  if (!(baseline > 0.0)) throw std::invalid_argument("relative_reduction: baseline must be > 0");
  return 100.0 * (baseline - proposed) / baseline;
}

std::string format_one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

namespace {

std::string fmt_seconds(double s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", s);
  return buf;
}

}  // namespace

std::string format_summary_table(const BenchReport& net1, const BenchReport& net2,
                                 const BenchReport& net3, const BenchReport& cascade) {
  std::ostringstream os;
  auto row = [&os](const std::string& name, const std::string& secs, const std::string& params) {
    os << name;
    for (std::size_t i = name.size(); i < 28; ++i) os << ' ';
    os << secs;
    for (std::size_t i = secs.size(); i < 24; ++i) os << ' ';
    os << params << "\n";
  };
  row("Model", "Conversion time (s)", "# parameters");
  row("network 1", fmt_seconds(net1.total_seconds), std::to_string(net1.param_count));
  row("network 2", fmt_seconds(net2.total_seconds), std::to_string(net2.param_count));
  row("network 3", fmt_seconds(net3.total_seconds), std::to_string(net3.param_count));
  row("baseline (network 1+2)", fmt_seconds(cascade.total_seconds),
      std::to_string(cascade.param_count));
  row("proposed (network 3)", fmt_seconds(net3.total_seconds), std::to_string(net3.param_count));
  row("relative reduction (%)",
      format_one_decimal(relative_reduction(cascade.total_seconds, net3.total_seconds)),
      format_one_decimal(relative_reduction(static_cast<double>(cascade.param_count),
                                            static_cast<double>(net3.param_count))));
  return os.str();
}

std::string format_tsv(const std::vector<BenchReport>& reports) {
  std::ostringstream os;
  for (const auto& r : reports) {
    os << r.model_name << '\t' << r.total_seconds << '\t' << r.n_utterances << '\t'
       << r.param_count << "\n";
  }
  return os.str();
}

std::string format_tsv(const McdReport& report) {
  std::ostringstream os;
  for (std::size_t i = 0; i < report.per_utterance.size(); ++i) {
    os << "utterance_" << i << '\t' << report.per_utterance[i] << "\n";
  }
  os << "mean\t" << report.mean << "\n";
  os << "stddev\t" << report.stddev << "\n";
  os << "n_utterances\t" << report.n_utterances << "\n";
  return os.str();
}

}  // namespace vconv::eval
