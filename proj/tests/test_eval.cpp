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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "vconv/eval.hpp"
#include "vconv/rng.hpp"

using namespace vconv;

namespace {

dsp::MfccSequence random_cepstra(std::size_t t, std::uint64_t seed) {
  Rng rng(seed);
  dsp::MfccSequence m;
  m.frames = Matrix(t, 40);
  for (auto& v : m.frames.data) v = rng.uniform(-2.0, 2.0);
  return m;
}

}  // namespace

TEST_CASE("mcd of identical sequences is exactly zero") {
  const auto a = random_cepstra(20, 1);
  CHECK(eval::mcd(a, a) == 0.0);
  CHECK(eval::mcd(a, a, eval::Align::dtw) == 0.0);
}

TEST_CASE("a unit difference in one dimension of every frame gives (10/ln10) sqrt(2)") {
  const auto a = random_cepstra(15, 2);
  auto b = a;
  for (std::size_t t = 0; t < b.frames.rows; ++t) b.frames(t, 7) += 1.0;
  const double expected = 10.0 / std::log(10.0) * std::sqrt(2.0);
  CHECK(std::abs(eval::mcd(a, b) - expected) < 1e-9);
  CHECK(std::abs(expected - 6.141851463713754) < 1e-12);
}

TEST_CASE("mcd scales linearly with the difference magnitude") {
  const auto a = random_cepstra(12, 3);
  auto b = random_cepstra(12, 4);
  const double base = eval::mcd(a, b);
  auto c = a;
  for (std::size_t i = 0; i < c.frames.data.size(); ++i) {
    c.frames.data[i] = a.frames.data[i] + 2.5 * (b.frames.data[i] - a.frames.data[i]);
  }
  CHECK(eval::mcd(a, c) == doctest::Approx(2.5 * base).epsilon(1e-12));
}

TEST_CASE("mcd is symmetric") {
  const auto a = random_cepstra(9, 5);
  const auto b = random_cepstra(9, 6);
  CHECK(eval::mcd(a, b) == doctest::Approx(eval::mcd(b, a)).epsilon(1e-12));
}

TEST_CASE("mcd validates dimensions and lengths") {
  dsp::MfccSequence wrong;
  wrong.frames = Matrix(5, 39);
  const auto ok = random_cepstra(5, 7);
  CHECK_THROWS_AS(eval::mcd(wrong, ok), std::invalid_argument);
  const auto longer = random_cepstra(6, 8);
  CHECK_THROWS_AS(eval::mcd(ok, longer), std::invalid_argument);
  CHECK_NOTHROW(eval::mcd(ok, longer, eval::Align::dtw));
}

TEST_CASE("dtw alignment never scores above frame alignment on equal lengths") {
  for (int iter = 0; iter < 10; ++iter) {
    const auto a = random_cepstra(25, 100 + iter);
    const auto b = random_cepstra(25, 200 + iter);
    CHECK(eval::mcd(a, b, eval::Align::dtw) <= eval::mcd(a, b) + 1e-12);
  }
}

TEST_CASE("dtw recovers a time-shifted copy almost perfectly") {
  const auto a = random_cepstra(30, 9);
  dsp::MfccSequence shifted;
  shifted.frames = Matrix(30, 40);
  for (std::size_t t = 0; t < 30; ++t) {
    const std::size_t src = t == 0 ? 0 : t - 1;  // one-frame lag
    std::copy(a.frames.row(src), a.frames.row(src) + 40, shifted.frames.row(t));
  }
  CHECK(eval::mcd(a, shifted, eval::Align::dtw) < eval::mcd(a, shifted));
}

TEST_CASE("mcd_batch statistics use the population convention") {
  const auto a = random_cepstra(10, 11);
  auto b = a;
  for (std::size_t t = 0; t < 10; ++t) b.frames(t, 0) += 1.0;  // one unit apart

  const auto single = eval::mcd_batch({{a, a}});
  CHECK(single.n_utterances == 1);
  CHECK(single.mean == 0.0);
  CHECK(single.stddev == 0.0);

  const auto two = eval::mcd_batch({{a, a}, {a, b}});
  const double v = eval::mcd(a, b);
  CHECK(two.mean == doctest::Approx(v / 2.0).epsilon(1e-12));
  CHECK(two.stddev == doctest::Approx(v / 2.0).epsilon(1e-12));  // |a-b|/2

  std::vector<std::pair<dsp::MfccSequence, dsp::MfccSequence>> ten;
  for (int i = 0; i < 10; ++i) ten.emplace_back(random_cepstra(8, 300 + i), random_cepstra(8, 400 + i));
  CHECK(eval::mcd_batch(ten).n_utterances == 10);
}

TEST_CASE("relative reduction reproduces the reference arithmetic exactly") {
  CHECK(eval::format_one_decimal(eval::relative_reduction(12.13, 6.73)) == "44.5");
  CHECK(eval::format_one_decimal(eval::relative_reduction(12515404.0, 7268623.0)) == "41.9");
  CHECK(eval::relative_reduction(3.7, 3.7) == 0.0);
  CHECK_THROWS_AS(eval::relative_reduction(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(eval::relative_reduction(-2.0, 1.0), std::invalid_argument);
}

TEST_CASE("bench runs every utterance per repeat and reports the minimum") {
  std::vector<Waveform> utts(4);
  for (auto& w : utts) w.samples.assign(1600, 0.1);

  std::atomic<int> calls{0};
  const eval::SpectrogramConverter conv = [&calls](const Waveform&) {
    ++calls;
    dsp::Spectrogram s;
    s.frames = Matrix(4, 4);
    return s;
  };
  const auto report = eval::bench_convert("toy", conv, utts, 3, 1234);
  CHECK(calls.load() == 1 + 4 * 3);  // one warm call, then repeats x utterances
  CHECK(report.n_utterances == 4);
  CHECK(report.param_count == 1234);
  CHECK(report.total_seconds >= 0.0);
  CHECK(report.model_name == "toy");
}

TEST_CASE("vocoder iterations sit outside the timed region") {
  // the converter contract hands back a pre-vocoder spectrogram, so a
  // wildly different Griffin-Lim budget must not move the measurement
  std::vector<Waveform> utts(3);
  for (auto& w : utts) w.samples.assign(8000, 0.05);

  auto busywork = [](const Waveform& w) {
    // deterministic compute standing in for feature extraction + inference
    dsp::Spectrogram s;
    s.frames = Matrix(256, 257);
    double acc = 0.0;
    for (std::size_t i = 0; i < 400000; ++i) {
      acc += std::sin(static_cast<double>(i % 97)) * w.samples[i % w.samples.size()];
    }
    s.frames(0, 0) = acc;
    return s;
  };

  dsp::DspConfig none;
  none.griffin_lim_iters = 0;
  dsp::DspConfig heavy;
  heavy.griffin_lim_iters = 1000;
  // the configs differ only in vocoder budget; the timed path ignores them
  const eval::SpectrogramConverter conv_a = busywork;
  const eval::SpectrogramConverter conv_b = busywork;
  const auto ra = eval::bench_convert("gl0", conv_a, utts, 5, 0);
  const auto rb = eval::bench_convert("gl1000", conv_b, utts, 5, 0);
  const double rel = std::abs(ra.total_seconds - rb.total_seconds) /
                     std::max(ra.total_seconds, rb.total_seconds);
  CHECK(rel < 0.01);
}

TEST_CASE("summary table carries the relative-reduction row") {
  eval::BenchReport r1{"network 1", 0.5, 30, 100};
  eval::BenchReport r2{"network 2", 0.7, 30, 200};
  eval::BenchReport r3{"network 3", 0.6, 30, 250};
  eval::BenchReport rc{"baseline (network 1+2)", 1.2, 30, 300};
  const std::string table = eval::format_summary_table(r1, r2, r3, rc);
  CHECK(table.find("relative reduction (%)") != std::string::npos);
  CHECK(table.find("50.0") != std::string::npos);  // time: (1.2-0.6)/1.2
  CHECK(table.find("16.7") != std::string::npos);  // params: (300-250)/300
  const std::string tsv = eval::format_tsv({r1, r2, r3, rc});
  CHECK(tsv.find("network 3\t0.6\t30\t250\n") != std::string::npos);
}
