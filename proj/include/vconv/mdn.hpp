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
#include <vector>

#include "vconv/tensor.hpp"

namespace vconv::mdn {

// Shape and clamp policy of a mixture head. Diagonal keeps one stddev per
// mixture and dimension; isotropic shares one stddev across dimensions.
struct MdnSpec {
  std::size_t mixtures = 5;
  std::size_t dim = 257;
  bool isotropic = false;
  double sigma_min = 1e-3;
  double sigma_max = 1e3;

  // raw head width: [weight logits | means | log stddevs]
  std::size_t raw_width() const {
    return mixtures + mixtures * dim + (isotropic ? mixtures : mixtures * dim);
  }
};

// Per-frame mixture parameters. stddevs are stored per dimension even for
// isotropic heads (the shared value is broadcast).
struct MdnParams {
  MdnSpec spec;
  Matrix weights;   // T x M, rows sum to 1, strictly positive
  Tensor means;     // T x M x D
  Tensor stddevs;   // T x M x D, clamped to [sigma_min, sigma_max]

  std::size_t frames() const { return weights.rows; }
};

// Softmax over the weight logits, raw means, exp-then-clamp stddevs.
MdnParams split_head(const Matrix& raw, const MdnSpec& spec);

// Mixture density per frame, diagonal Gaussians.
std::vector<double> mdn_pdf(const MdnParams& p, const Matrix& x);

struct NllResult {
  double loss = 0.0;      // summed over unmasked frames
  Matrix raw_grad;        // T x raw_width, zero rows at masked frames
  std::size_t n_frames = 0;  // unmasked frame count
};

// Negative log likelihood under the mixture, evaluated with log-sum-exp, and
// its exact gradient with respect to the raw head outputs. An empty mask
// means every frame counts; mask[t] == 0 excludes frame t from loss and grad.
NllResult mdn_nll(const MdnParams& p, const Matrix& x,
                  const std::vector<std::uint8_t>& mask = {});

// Mean of the highest-weight component per frame; ties break toward the
// lowest component index.
Matrix point_estimate(const MdnParams& p);

}  // namespace vconv::mdn
