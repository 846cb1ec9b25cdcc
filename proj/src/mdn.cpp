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

#include "vconv/mdn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vconv::mdn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

void check_shapes(const MdnParams& p, const Matrix& x) {
  if (x.rows != p.frames() || x.cols != p.spec.dim)
    throw std::invalid_argument("mdn: target shape does not match parameters");
}

}  // namespace

MdnParams split_head(const Matrix& raw, const MdnSpec& spec) {
  const std::size_t m = spec.mixtures;
  const std::size_t d = spec.dim;
  if (raw.cols != spec.raw_width())
    throw std::invalid_argument("mdn: raw head has width " + std::to_string(raw.cols) +
                                ", expected " + std::to_string(spec.raw_width()));
  const std::size_t t_count = raw.rows;
  MdnParams p;
  p.spec = spec;
  p.weights = Matrix(t_count, m);
  p.means = Tensor({t_count, m, d});
  p.stddevs = Tensor({t_count, m, d});

  for (std::size_t t = 0; t < t_count; ++t) {
    const double* r = raw.row(t);
    // stable softmax over the M weight logits
    double mx = r[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, r[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(r[j] - mx);
    for (std::size_t j = 0; j < m; ++j) p.weights(t, j) = std::exp(r[j] - mx) / denom;

    const double* mu = r + m;
    const double* ls = r + m + m * d;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        p.means.at3(t, j, k) = mu[j * d + k];
        const double s = spec.isotropic ? ls[j] : ls[j * d + k];
        p.stddevs.at3(t, j, k) = std::clamp(std::exp(s), spec.sigma_min, spec.sigma_max);
      }
    }
  }
  return p;
}

namespace {

// log of the j-th component density at frame t (diagonal Gaussian)
double component_log_density(const MdnParams& p, const Matrix& x, std::size_t t, std::size_t j) {
  const std::size_t d = p.spec.dim;
  double acc = -0.5 * kLog2Pi * static_cast<double>(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = p.stddevs.at3(t, j, k);
    const double z = (x(t, k) - p.means.at3(t, j, k)) / sd;
    acc += -std::log(sd) - 0.5 * z * z;
  }
  return acc;
}

}  // namespace

std::vector<double> mdn_pdf(const MdnParams& p, const Matrix& x) {
  check_shapes(p, x);
  const std::size_t t_count = p.frames();
  const std::size_t m = p.spec.mixtures;
  std::vector<double> out(t_count, 0.0);
  for (std::size_t t = 0; t < t_count; ++t) {
    // log-sum-exp over components for a strictly positive result
    std::vector<double> a(m);
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      a[j] = std::log(p.weights(t, j)) + component_log_density(p, x, t, j);
      mx = std::max(mx, a[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(a[j] - mx);
    out[t] = std::exp(mx) * s;
  }
  return out;
}

NllResult mdn_nll(const MdnParams& p, const Matrix& x, const std::vector<std::uint8_t>& mask) {
  check_shapes(p, x);
  if (!all_finite(x)) throw std::invalid_argument("mdn: non-finite target");
  if (!mask.empty() && mask.size() != x.rows)
    throw std::invalid_argument("mdn: mask length does not match frame count");
  const std::size_t t_count = p.frames();
  const std::size_t m = p.spec.mixtures;
  const std::size_t d = p.spec.dim;
  const bool iso = p.spec.isotropic;

  NllResult res;
  res.raw_grad = Matrix(t_count, p.spec.raw_width());
  std::vector<double> frame_loss(t_count, 0.0);

#pragma omp parallel for schedule(static)
  for (std::int64_t ti = 0; ti < static_cast<std::int64_t>(t_count); ++ti) {
    const std::size_t t = static_cast<std::size_t>(ti);
    if (!mask.empty() && mask[t] == 0) continue;
    std::vector<double> a(m);
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      a[j] = std::log(p.weights(t, j)) + component_log_density(p, x, t, j);
      mx = std::max(mx, a[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(a[j] - mx);
    const double lse = mx + std::log(s);
    frame_loss[t] = -lse;

    double* g = res.raw_grad.row(t);
    double* g_logit = g;
    double* g_mean = g + m;
    double* g_ls = g + m + m * d;
    for (std::size_t j = 0; j < m; ++j) {
      const double gamma = std::exp(a[j] - lse);  // responsibility
      g_logit[j] = p.weights(t, j) - gamma;
      double sum_z2m1 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double sd = p.stddevs.at3(t, j, k);
        const double z = (x(t, k) - p.means.at3(t, j, k)) / sd;
        g_mean[j * d + k] = -gamma * z / sd;
        // d(-log N)/d log(sigma) = 1 - z^2; zero where the clamp is active
        const bool clamped = sd <= p.spec.sigma_min || sd >= p.spec.sigma_max;
        if (iso) {
          if (!clamped) sum_z2m1 += 1.0 - z * z;
        } else {
          g_ls[j * d + k] = clamped ? 0.0 : gamma * (1.0 - z * z);
        }
      }
      if (iso) g_ls[j] = gamma * sum_z2m1;
    }
  }

  // fixed-order reduction keeps the loss bit-reproducible
  for (std::size_t t = 0; t < t_count; ++t) {
    if (!mask.empty() && mask[t] == 0) continue;
    res.loss += frame_loss[t];
    ++res.n_frames;
  }
  return res;
}

Matrix point_estimate(const MdnParams& p) {
  const std::size_t t_count = p.frames();
  const std::size_t m = p.spec.mixtures;
  const std::size_t d = p.spec.dim;
  Matrix out(t_count, d);
  for (std::size_t t = 0; t < t_count; ++t) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j) {
      if (p.weights(t, j) > p.weights(t, best)) best = j;  // strict: ties keep lowest index
    }
    for (std::size_t k = 0; k < d; ++k) out(t, k) = p.means.at3(t, best, k);
  }
  return out;
}

}  // namespace vconv::mdn
