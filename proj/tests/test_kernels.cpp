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

#include <vector>

#include "vconv/kernels.hpp"
#include "vconv/rng.hpp"

using namespace vconv;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("matmul variants match the serial reference bit for bit") {
  Rng rng(42);
  for (int iter = 0; iter < 20; ++iter) {
    // shapes straddle the parallel-dispatch threshold
    const std::size_t m = 1 + rng.next_u64() % 90;
    const std::size_t k = 1 + rng.next_u64() % 90;
    const std::size_t n = 1 + rng.next_u64() % 90;
    const auto a = random_vec(m * k, 100 + iter);
    const auto b_nn = random_vec(k * n, 200 + iter);
    const auto b_nt = random_vec(n * k, 300 + iter);
    const auto a_tn = random_vec(k * m, 400 + iter);

    std::vector<double> ref(m * n), got(m * n);
    kernels::matmul_nn_serial(a.data(), m, k, b_nn.data(), n, ref.data());
    kernels::matmul_nn(a.data(), m, k, b_nn.data(), n, got.data());
    CHECK(ref == got);

    kernels::matmul_nt_serial(a.data(), m, k, b_nt.data(), n, ref.data());
    kernels::matmul_nt(a.data(), m, k, b_nt.data(), n, got.data());
    CHECK(ref == got);

    kernels::matmul_tn_serial(a_tn.data(), k, m, b_nn.data(), n, ref.data());
    kernels::matmul_tn(a_tn.data(), k, m, b_nn.data(), n, got.data());
    CHECK(ref == got);
  }
}

TEST_CASE("matmul_nt agrees with a hand example") {
  // A = [1 2; 3 4], B(rows are the transposed matrix) = [5 6; 7 8]
  // C = A * B^T = [1*5+2*6, 1*7+2*8; 3*5+4*6, 3*7+4*8]
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> b{5, 6, 7, 8};
  std::vector<double> c(4);
  kernels::matmul_nt(a.data(), 2, 2, b.data(), 2, c.data());
  CHECK(c == std::vector<double>{17, 23, 39, 53});
}

TEST_CASE("the three matmul layouts agree on the same product") {
  const std::size_t m = 7, k = 5, n = 9;
  const auto a = random_vec(m * k, 1);
  const auto b = random_vec(k * n, 2);
  std::vector<double> c_nn(m * n);
  kernels::matmul_nn(a.data(), m, k, b.data(), n, c_nn.data());

  // B^T laid out n x k, fed through matmul_nt
  std::vector<double> bt(n * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
  }
  std::vector<double> c_nt(m * n);
  kernels::matmul_nt(a.data(), m, k, bt.data(), n, c_nt.data());

  // A^T laid out k x m, fed through matmul_tn
  std::vector<double> at(k * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
  }
  std::vector<double> c_tn(m * n);
  kernels::matmul_tn(at.data(), k, m, b.data(), n, c_tn.data());

  for (std::size_t i = 0; i < m * n; ++i) {
    CHECK(c_nn[i] == doctest::Approx(c_nt[i]).epsilon(1e-12));
    CHECK(c_nn[i] == doctest::Approx(c_tn[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv1d matches direct summation and its serial build") {
  Rng rng(7);
  for (int iter = 0; iter < 12; ++iter) {
    const std::size_t t = 1 + rng.next_u64() % 40;
    const std::size_t cin = 1 + rng.next_u64() % 6;
    const std::size_t cout = 1 + rng.next_u64() % 6;
    const std::size_t kw = 1 + rng.next_u64() % 8;
    const auto x = random_vec(t * cin, 500 + iter);
    const auto w = random_vec(cout * cin * kw, 600 + iter);
    const auto b = random_vec(cout, 700 + iter);

    std::vector<double> y(t * cout), y_serial(t * cout);
    kernels::conv1d_same(x.data(), t, cin, w.data(), cout, kw, b.data(), y.data());
    kernels::conv1d_same_serial(x.data(), t, cin, w.data(), cout, kw, b.data(), y_serial.data());
    CHECK(y == y_serial);

    // direct summation oracle with explicit zero padding
    const std::size_t pad_left = (kw - 1) / 2;
    for (std::size_t ti = 0; ti < t; ++ti) {
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = b[o];
        for (std::size_t dt = 0; dt < kw; ++dt) {
          const long src = static_cast<long>(ti + dt) - static_cast<long>(pad_left);
          if (src < 0 || src >= static_cast<long>(t)) continue;
          for (std::size_t i = 0; i < cin; ++i) {
            acc += w[(o * cin + i) * kw + dt] * x[static_cast<std::size_t>(src) * cin + i];
          }
        }
        CHECK(y[ti * cout + o] == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv1d gradients match their serial references bit for bit") {
  Rng rng(11);
  for (int iter = 0; iter < 10; ++iter) {
    const std::size_t t = 1 + rng.next_u64() % 50;
    const std::size_t cin = 1 + rng.next_u64() % 5;
    const std::size_t cout = 1 + rng.next_u64() % 5;
    const std::size_t kw = 1 + rng.next_u64() % 6;
    const auto x = random_vec(t * cin, 800 + iter);
    const auto w = random_vec(cout * cin * kw, 900 + iter);
    const auto dy = random_vec(t * cout, 1000 + iter);

    std::vector<double> dx(t * cin), dx_serial(t * cin);
    kernels::conv1d_same_grad_input(dy.data(), t, cout, w.data(), cin, kw, dx.data());
    kernels::conv1d_same_grad_input_serial(dy.data(), t, cout, w.data(), cin, kw,
                                           dx_serial.data());
    CHECK(dx == dx_serial);

    std::vector<double> dw(cout * cin * kw, 0.0), dw_serial(cout * cin * kw, 0.0);
    std::vector<double> db(cout, 0.0), db_serial(cout, 0.0);
    kernels::conv1d_same_grad_filter(x.data(), t, cin, dy.data(), cout, kw, dw.data(), db.data());
    kernels::conv1d_same_grad_filter_serial(x.data(), t, cin, dy.data(), cout, kw,
                                            dw_serial.data(), db_serial.data());
    CHECK(dw == dw_serial);
    CHECK(db == db_serial);
  }
}

TEST_CASE("overlap_add equals the scatter formulation") {
  Rng rng(13);
  for (int iter = 0; iter < 8; ++iter) {
    const std::size_t t = 1 + rng.next_u64() % 30;
    const std::size_t frame_len = 4 + rng.next_u64() % 60;
    const std::size_t hop = 1 + rng.next_u64() % frame_len;
    const std::size_t n = (t - 1) * hop + frame_len;
    const auto frames = random_vec(t * frame_len, 1100 + iter);

    std::vector<double> out(n), out_serial(n);
    kernels::overlap_add(frames.data(), t, frame_len, hop, out.data(), n);
    kernels::overlap_add_serial(frames.data(), t, frame_len, hop, out_serial.data(), n);
    CHECK(out == out_serial);

    std::vector<double> scatter(n, 0.0);
    for (std::size_t ti = 0; ti < t; ++ti) {
      for (std::size_t i = 0; i < frame_len; ++i) scatter[ti * hop + i] += frames[ti * frame_len + i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(out[i] == doctest::Approx(scatter[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("thread guard restores the previous thread count") {
  const int before = kernels::max_threads();
  {
    kernels::ThreadGuard guard(1);
    CHECK(kernels::max_threads() == 1);
  }
  CHECK(kernels::max_threads() == before);
}
