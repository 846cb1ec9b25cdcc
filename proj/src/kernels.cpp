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

#include "vconv/kernels.hpp"

#include <algorithm>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vconv::kernels {

ThreadGuard::ThreadGuard(int n) {
#ifdef _OPENMP
  saved_ = omp_get_max_threads();
  omp_set_num_threads(n);
#else
  saved_ = 1;
  (void)n;
#endif
}

ThreadGuard::~ThreadGuard() {
#ifdef _OPENMP
  omp_set_num_threads(saved_);
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// Below this many multiply-adds the parallel-region overhead dominates.
constexpr std::size_t kParallelThreshold = 32768;

inline double dot_stride1(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void matmul_nn_serial(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nn(const double* a, std::size_t m, std::size_t k,
               const double* b, std::size_t n, double* c) {
  if (m * n * k < kParallelThreshold) {
    matmul_nn_serial(a, m, k, b, n, c);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    std::fill(ci, ci + n, 0.0);
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt_serial(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = dot_stride1(ai, b + j * k, k);
  }
}

void matmul_nt(const double* a, std::size_t m, std::size_t k,
               const double* b, std::size_t n, double* c) {
  if (m * n * k < kParallelThreshold) {
    matmul_nt_serial(a, m, k, b, n, c);
    return;
  }
#pragma omp parallel for schedule(static) collapse(2)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(n); ++j) {
      c[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] =
          dot_stride1(a + static_cast<std::size_t>(i) * k,
                      b + static_cast<std::size_t>(j) * k, k);
    }
  }
}

void matmul_tn_serial(const double* a, std::size_t k, std::size_t m,
                      const double* b, std::size_t n, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_tn(const double* a, std::size_t k, std::size_t m,
               const double* b, std::size_t n, double* c) {
  if (m * n * k < kParallelThreshold) {
    matmul_tn_serial(a, k, m, b, n, c);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + static_cast<std::size_t>(i)];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

namespace {

inline void conv1d_frame(const double* x, std::size_t t_total, std::size_t cin,
                         const double* w, std::size_t cout, std::size_t kw,
                         const double* b, double* y, std::size_t ti) {
  const std::size_t pad_left = (kw - 1) / 2;
  double* yt = y + ti * cout;
  for (std::size_t o = 0; o < cout; ++o) {
    double acc = b ? b[o] : 0.0;
    const double* wo = w + o * cin * kw;
    for (std::size_t dt = 0; dt < kw; ++dt) {
      const std::int64_t src = static_cast<std::int64_t>(ti) + static_cast<std::int64_t>(dt) -
                               static_cast<std::int64_t>(pad_left);
      if (src < 0 || src >= static_cast<std::int64_t>(t_total)) continue;
      const double* xs = x + static_cast<std::size_t>(src) * cin;
      for (std::size_t i = 0; i < cin; ++i) acc += wo[i * kw + dt] * xs[i];
    }
    yt[o] = acc;
  }
}

}  // namespace

void conv1d_same_serial(const double* x, std::size_t t, std::size_t cin,
                        const double* w, std::size_t cout, std::size_t kw,
                        const double* b, double* y) {
  for (std::size_t ti = 0; ti < t; ++ti) conv1d_frame(x, t, cin, w, cout, kw, b, y, ti);
}

void conv1d_same(const double* x, std::size_t t, std::size_t cin,
                 const double* w, std::size_t cout, std::size_t kw,
                 const double* b, double* y) {
  if (t * cin * cout * kw < kParallelThreshold) {
    conv1d_same_serial(x, t, cin, w, cout, kw, b, y);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t ti = 0; ti < static_cast<std::int64_t>(t); ++ti) {
    conv1d_frame(x, t, cin, w, cout, kw, b, y, static_cast<std::size_t>(ti));
  }
}

namespace {

// dx[ti, i] = sum_{o, dt} w[o, i, dt] * dy[ti + pad_left - dt, o]
inline void conv1d_grad_input_frame(const double* dy, std::size_t t, std::size_t cout,
                                    const double* w, std::size_t cin, std::size_t kw,
                                    double* dx, std::size_t ti) {
  const std::size_t pad_left = (kw - 1) / 2;
  double* dxt = dx + ti * cin;
  std::fill(dxt, dxt + cin, 0.0);
  for (std::size_t dt = 0; dt < kw; ++dt) {
    const std::int64_t dst = static_cast<std::int64_t>(ti) + static_cast<std::int64_t>(pad_left) -
                             static_cast<std::int64_t>(dt);
    if (dst < 0 || dst >= static_cast<std::int64_t>(t)) continue;
    const double* dyt = dy + static_cast<std::size_t>(dst) * cout;
    for (std::size_t o = 0; o < cout; ++o) {
      const double g = dyt[o];
      const double* wo = w + o * cin * kw;
      for (std::size_t i = 0; i < cin; ++i) dxt[i] += g * wo[i * kw + dt];
    }
  }
}

}  // namespace

void conv1d_same_grad_input_serial(const double* dy, std::size_t t, std::size_t cout,
                                   const double* w, std::size_t cin, std::size_t kw,
                                   double* dx) {
  for (std::size_t ti = 0; ti < t; ++ti) conv1d_grad_input_frame(dy, t, cout, w, cin, kw, dx, ti);
}

void conv1d_same_grad_input(const double* dy, std::size_t t, std::size_t cout,
                            const double* w, std::size_t cin, std::size_t kw,
                            double* dx) {
  if (t * cin * cout * kw < kParallelThreshold) {
    conv1d_same_grad_input_serial(dy, t, cout, w, cin, kw, dx);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t ti = 0; ti < static_cast<std::int64_t>(t); ++ti) {
    conv1d_grad_input_frame(dy, t, cout, w, cin, kw, dx, static_cast<std::size_t>(ti));
  }
}

namespace {

// One output channel accumulates over all frames serially; channels are
// independent, so the channel loop is the parallel one.
inline void conv1d_grad_filter_channel(const double* x, std::size_t t, std::size_t cin,
                                       const double* dy, std::size_t cout, std::size_t kw,
                                       double* dw, double* db, std::size_t o) {
  const std::size_t pad_left = (kw - 1) / 2;
  double* dwo = dw + o * cin * kw;
  double dbo = 0.0;
  for (std::size_t ti = 0; ti < t; ++ti) {
    const double g = dy[ti * cout + o];
    dbo += g;
    for (std::size_t dt = 0; dt < kw; ++dt) {
      const std::int64_t src = static_cast<std::int64_t>(ti) + static_cast<std::int64_t>(dt) -
                               static_cast<std::int64_t>(pad_left);
      if (src < 0 || src >= static_cast<std::int64_t>(t)) continue;
      const double* xs = x + static_cast<std::size_t>(src) * cin;
      for (std::size_t i = 0; i < cin; ++i) dwo[i * kw + dt] += g * xs[i];
    }
  }
  if (db) db[o] += dbo;
}

}  // namespace

void conv1d_same_grad_filter_serial(const double* x, std::size_t t, std::size_t cin,
                                    const double* dy, std::size_t cout, std::size_t kw,
                                    double* dw, double* db) {
  for (std::size_t o = 0; o < cout; ++o) conv1d_grad_filter_channel(x, t, cin, dy, cout, kw, dw, db, o);
}

void conv1d_same_grad_filter(const double* x, std::size_t t, std::size_t cin,
                             const double* dy, std::size_t cout, std::size_t kw,
                             double* dw, double* db) {
  if (t * cin * cout * kw < kParallelThreshold) {
    conv1d_same_grad_filter_serial(x, t, cin, dy, cout, kw, dw, db);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < static_cast<std::int64_t>(cout); ++o) {
    conv1d_grad_filter_channel(x, t, cin, dy, cout, kw, dw, db, static_cast<std::size_t>(o));
  }
}

void add_bias_rows(double* y, std::size_t t, std::size_t c, const double* b) {
#pragma omp parallel for schedule(static) if (t * c >= kParallelThreshold)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(t); ++r) {
    double* yr = y + static_cast<std::size_t>(r) * c;
    for (std::size_t j = 0; j < c; ++j) yr[j] += b[j];
  }
}

void colsum_accum(const double* dy, std::size_t t, std::size_t c, double* db) {
#pragma omp parallel for schedule(static) if (t * c >= kParallelThreshold)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(c); ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < t; ++r) s += dy[r * c + static_cast<std::size_t>(j)];
    db[static_cast<std::size_t>(j)] += s;
  }
}

namespace {

inline double ola_sample(const double* frames, std::size_t t, std::size_t frame_len,
                         std::size_t hop, std::size_t n) {
  // frame ti covers samples [ti*hop, ti*hop + frame_len)
  const std::size_t t_hi = n / hop;
  const std::size_t t_lo =
      (n + 1 > frame_len) ? (n + 1 - frame_len + hop - 1) / hop : 0;
  double s = 0.0;
  for (std::size_t ti = t_lo; ti <= t_hi && ti < t; ++ti) {
    s += frames[ti * frame_len + (n - ti * hop)];
  }
  return s;
}

}  // namespace

void overlap_add_serial(const double* frames, std::size_t t, std::size_t frame_len,
                        std::size_t hop, double* out, std::size_t n_samples) {
  for (std::size_t n = 0; n < n_samples; ++n) out[n] = ola_sample(frames, t, frame_len, hop, n);
}

void overlap_add(const double* frames, std::size_t t, std::size_t frame_len,
                 std::size_t hop, double* out, std::size_t n_samples) {
  if (n_samples * (frame_len / hop + 1) < kParallelThreshold) {
    overlap_add_serial(frames, t, frame_len, hop, out, n_samples);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < static_cast<std::int64_t>(n_samples); ++n) {
    out[n] = ola_sample(frames, t, frame_len, hop, static_cast<std::size_t>(n));
  }
}

}  // namespace vconv::kernels
