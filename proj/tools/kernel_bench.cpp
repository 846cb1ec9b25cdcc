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

// Times every kernel against its serial reference and checks that the two
// produce bit-identical results. Run with no arguments.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "vconv/kernels.hpp"
#include "vconv/rng.hpp"

namespace {

using namespace vconv;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double time_best_of(const std::function<void()>& fn, int repeats = 5) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

void report(const std::string& name, double serial_s, double parallel_s, bool exact) {
  std::printf("%-26s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   %s\n", name.c_str(),
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
              exact ? "bit-exact" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("kernel benchmark, %d thread(s)\n\n", kernels::max_threads());
  bool all_exact = true;

  {
    const std::size_t m = 512, k = 512, n = 512;
    const auto a = random_vec(m * k, 1);
    const auto b = random_vec(k * n, 2);
    std::vector<double> c_serial(m * n), c_par(m * n);
    const double ts = time_best_of([&] { kernels::matmul_nn_serial(a.data(), m, k, b.data(), n, c_serial.data()); });
    const double tp = time_best_of([&] { kernels::matmul_nn(a.data(), m, k, b.data(), n, c_par.data()); });
    const bool ok = bit_equal(c_serial, c_par);
    all_exact = all_exact && ok;
    report("matmul_nn 512x512x512", ts, tp, ok);
  }
  {
    const std::size_t m = 512, k = 512, n = 512;
    const auto a = random_vec(m * k, 3);
    const auto b = random_vec(n * k, 4);
    std::vector<double> c_serial(m * n), c_par(m * n);
    const double ts = time_best_of([&] { kernels::matmul_nt_serial(a.data(), m, k, b.data(), n, c_serial.data()); });
    const double tp = time_best_of([&] { kernels::matmul_nt(a.data(), m, k, b.data(), n, c_par.data()); });
    const bool ok = bit_equal(c_serial, c_par);
    all_exact = all_exact && ok;
    report("matmul_nt 512x512x512", ts, tp, ok);
  }
  {
    const std::size_t k = 512, m = 512, n = 512;
    const auto a = random_vec(k * m, 5);
    const auto b = random_vec(k * n, 6);
    std::vector<double> c_serial(m * n), c_par(m * n);
    const double ts = time_best_of([&] { kernels::matmul_tn_serial(a.data(), k, m, b.data(), n, c_serial.data()); });
    const double tp = time_best_of([&] { kernels::matmul_tn(a.data(), k, m, b.data(), n, c_par.data()); });
    const bool ok = bit_equal(c_serial, c_par);
    all_exact = all_exact && ok;
    report("matmul_tn 512x512x512", ts, tp, ok);
  }
  {
    const std::size_t t = 2048, cin = 64, cout = 64, kw = 8;
    const auto x = random_vec(t * cin, 7);
    const auto w = random_vec(cout * cin * kw, 8);
    const auto b = random_vec(cout, 9);
    std::vector<double> y_serial(t * cout), y_par(t * cout);
    const double ts = time_best_of([&] {
      kernels::conv1d_same_serial(x.data(), t, cin, w.data(), cout, kw, b.data(), y_serial.data());
    });
    const double tp = time_best_of([&] {
      kernels::conv1d_same(x.data(), t, cin, w.data(), cout, kw, b.data(), y_par.data());
    });
    const bool ok = bit_equal(y_serial, y_par);
    all_exact = all_exact && ok;
    report("conv1d 2048x64x64 k8", ts, tp, ok);
  }
  {
    const std::size_t t = 4096, frame_len = 400, hop = 160;
    const std::size_t n = (t - 1) * hop + frame_len;
    const auto frames = random_vec(t * frame_len, 10);
    std::vector<double> out_serial(n), out_par(n);
    const double ts = time_best_of(
        [&] { kernels::overlap_add_serial(frames.data(), t, frame_len, hop, out_serial.data(), n); });
    const double tp = time_best_of(
        [&] { kernels::overlap_add(frames.data(), t, frame_len, hop, out_par.data(), n); });
    const bool ok = bit_equal(out_serial, out_par);
    all_exact = all_exact && ok;
    report("overlap_add 4096 frames", ts, tp, ok);
  }

  std::printf("\n%s\n", all_exact ? "all kernels bit-exact" : "kernel mismatch detected");
  return all_exact ? 0 : 1;
}
