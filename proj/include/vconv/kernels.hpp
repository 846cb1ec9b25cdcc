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

#include <cstddef>

namespace vconv::kernels {

// Dense kernels behind the network and DSP layers. Every kernel comes in two
// builds: the OpenMP one used in production and a serial reference kept for
// testing. A parallel kernel assigns each output element to exactly one
// thread and keeps the inner accumulation order fixed, so the two builds are
// bit-identical for any thread count.

// Pins the number of OpenMP threads for the lifetime of the guard.
// bench_convert uses this to force single-threaded inference while timing.
class ThreadGuard {
 public:
  explicit ThreadGuard(int n);
  ~ThreadGuard();
  ThreadGuard(const ThreadGuard&) = delete;
  ThreadGuard& operator=(const ThreadGuard&) = delete;

 private:
  int saved_;
};

int max_threads();

// C[m x n] = A[m x k] * B[k x n]
void matmul_nn(const double* a, std::size_t m, std::size_t k,
               const double* b, std::size_t n, double* c);
void matmul_nn_serial(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c);

// C[m x n] = A[m x k] * B[n x k]^T  (the y = x * W^T case)
void matmul_nt(const double* a, std::size_t m, std::size_t k,
               const double* b, std::size_t n, double* c);
void matmul_nt_serial(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c);

// C[m x n] = A[k x m]^T * B[k x n]  (the dW = dy^T * x case)
void matmul_tn(const double* a, std::size_t k, std::size_t m,
               const double* b, std::size_t n, double* c);
void matmul_tn_serial(const double* a, std::size_t k, std::size_t m,
                      const double* b, std::size_t n, double* c);

// 1-d convolution along the time axis with 'same' zero padding.
// x: T x cin, w: cout x cin x kw, b: cout (may be null), y: T x cout.
// pad_left = (kw - 1) / 2, so even widths pad one more frame on the right.
void conv1d_same(const double* x, std::size_t t, std::size_t cin,
                 const double* w, std::size_t cout, std::size_t kw,
                 const double* b, double* y);
void conv1d_same_serial(const double* x, std::size_t t, std::size_t cin,
                        const double* w, std::size_t cout, std::size_t kw,
                        const double* b, double* y);

// dx: T x cin from dy: T x cout under the same padding convention.
void conv1d_same_grad_input(const double* dy, std::size_t t, std::size_t cout,
                            const double* w, std::size_t cin, std::size_t kw,
                            double* dx);
void conv1d_same_grad_input_serial(const double* dy, std::size_t t, std::size_t cout,
                                   const double* w, std::size_t cin, std::size_t kw,
                                   double* dx);

// Accumulates dw (cout x cin x kw) and db (cout); both += their contribution.
void conv1d_same_grad_filter(const double* x, std::size_t t, std::size_t cin,
                             const double* dy, std::size_t cout, std::size_t kw,
                             double* dw, double* db);
void conv1d_same_grad_filter_serial(const double* x, std::size_t t, std::size_t cin,
                                    const double* dy, std::size_t cout, std::size_t kw,
                                    double* dw, double* db);

// out[r] += bias broadcast over rows; y: T x c, b: c.
void add_bias_rows(double* y, std::size_t t, std::size_t c, const double* b);

// db[c] += sum over rows of dy.
void colsum_accum(const double* dy, std::size_t t, std::size_t c, double* db);

// Overlap-add of windowed frames, gather formulation: each output sample sums
// the frames covering it, so the loop over samples parallelizes without races.
// frames: T x frame_len, out: n_samples (must equal (T-1)*hop + frame_len).
void overlap_add(const double* frames, std::size_t t, std::size_t frame_len,
                 std::size_t hop, double* out, std::size_t n_samples);
void overlap_add_serial(const double* frames, std::size_t t, std::size_t frame_len,
                        std::size_t hop, double* out, std::size_t n_samples);

}  // namespace vconv::kernels
