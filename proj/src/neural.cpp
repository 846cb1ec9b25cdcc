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

#include "vconv/neural.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vconv/kernels.hpp"
#include "vconv/rng.hpp"

namespace vconv::neural {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix add_matrices(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

Matrix hconcat(const std::vector<Matrix>& parts) {
  std::size_t cols = 0;
  for (const auto& p : parts) cols += p.cols;
  Matrix out(parts.front().rows, cols);
  for (std::size_t t = 0; t < out.rows; ++t) {
    double* dst = out.row(t);
    for (const auto& p : parts) {
      const double* src = p.row(t);
      std::copy(src, src + p.cols, dst);
      dst += p.cols;
    }
  }
  return out;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(m.rows, count);
  for (std::size_t t = 0; t < m.rows; ++t) {
    std::copy(m.row(t) + begin, m.row(t) + begin + count, out.row(t));
  }
  return out;
}

Matrix reverse_rows(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t t = 0; t < m.rows; ++t) {
    std::copy(m.row(m.rows - 1 - t), m.row(m.rows - 1 - t) + m.cols, out.row(t));
  }
  return out;
}

void accumulate(Tensor& grad, const std::vector<double>& delta) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += delta[i];
}

}  // namespace

// ---- config --------------------------------------------------------------

std::size_t NetworkConfig::head_width() const {
  return head_kind == HeadKind::softmax ? output_dim : mdn_spec().raw_width();
}

mdn::MdnSpec NetworkConfig::mdn_spec() const {
  mdn::MdnSpec s;
  s.mixtures = mixtures;
  s.dim = output_dim;
  s.isotropic = mdn_isotropic;
  s.sigma_min = sigma_min;
  s.sigma_max = sigma_max;
  return s;
}

void NetworkConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("network: input layer has zero width");
  if (output_dim == 0) throw std::invalid_argument("network: head has zero width");
  if (prenet_layers == 0) throw std::invalid_argument("network: pre-net needs at least one layer");
  if (prenet_width() == 0)
    throw std::invalid_argument("network: pre-net width is zero (cbhg_units too small?)");
  if (bank_width() == 0)
    throw std::invalid_argument("network: conv bank has zero channels (cbhg_units too small?)");
  if (conv_bank_k == 0) throw std::invalid_argument("network: conv bank is empty");
  if (cbhg_units == 0) throw std::invalid_argument("network: projection width is zero");
  if (highway_layers == 0) throw std::invalid_argument("network: highway stack is empty");
  if (gru_units == 0) throw std::invalid_argument("network: GRU has zero units");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("network: dropout rate must be in [0, 1)");
  if (head_kind == HeadKind::mdn && mixtures == 0)
    throw std::invalid_argument("network: mixture head needs at least one component");
  if (sigma_min <= 0.0 || sigma_max <= sigma_min)
    throw std::invalid_argument("network: bad stddev clamps");
}

// ---- Linear ----------------------------------------------------------------

Linear::Linear(std::string name, std::size_t in, std::size_t out) {
  w.name = name + ".w";
  w.value = Tensor({out, in});
  w.grad = Tensor({out, in});
  w.init_scale = std::sqrt(6.0 / static_cast<double>(in + out));
  b.name = name + ".b";
  b.value = Tensor({out});
  b.grad = Tensor({out});
}

Matrix Linear::forward(const Matrix& x) {
  const std::size_t out = w.value.shape[0];
  const std::size_t in = w.value.shape[1];
  if (x.cols != in)
    throw std::invalid_argument(w.name + ": expected " + std::to_string(in) + " columns, got " +
                                std::to_string(x.cols));
  x_ = x;
  Matrix y(x.rows, out);
  kernels::matmul_nt(x.data.data(), x.rows, in, w.value.data.data(), out, y.data.data());
  kernels::add_bias_rows(y.data.data(), y.rows, out, b.value.data.data());
  return y;
}

Matrix Linear::backward(const Matrix& dy) {
  const std::size_t out = w.value.shape[0];
  const std::size_t in = w.value.shape[1];
  std::vector<double> dw(out * in, 0.0);
  kernels::matmul_tn(dy.data.data(), dy.rows, out, x_.data.data(), in, dw.data());
  accumulate(w.grad, dw);
  kernels::colsum_accum(dy.data.data(), dy.rows, out, b.grad.data.data());
  Matrix dx(dy.rows, in);
  kernels::matmul_nn(dy.data.data(), dy.rows, out, w.value.data.data(), in, dx.data.data());
  return dx;
}

// ---- Relu ------------------------------------------------------------------

Matrix Relu::forward(const Matrix& x) {
  x_ = x;
  Matrix y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return y;
}

Matrix Relu::backward(const Matrix& dy) {
  Matrix dx(dy.rows, dy.cols);
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    dx.data[i] = x_.data[i] > 0.0 ? dy.data[i] : 0.0;
  }
  return dx;
}

// ---- Dropout ---------------------------------------------------------------

Matrix Dropout::forward(const Matrix& x, const FwdCtx& ctx) {
  if (ctx.mode == Mode::infer || rate_ == 0.0) {
    mask_ = Matrix();
    return x;
  }
  const double keep = 1.0 - rate_;
  mask_ = Matrix(x.rows, x.cols);
  const std::uint64_t stream = hash_combine(ctx.seed, tag_);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const std::uint64_t h = hash_combine(stream, static_cast<std::uint64_t>(i));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    mask_.data[i] = u < keep ? 1.0 / keep : 0.0;
  }
  Matrix y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] * mask_.data[i];
  return y;
}

Matrix Dropout::backward(const Matrix& dy) {
  if (mask_.empty()) return dy;
  Matrix dx(dy.rows, dy.cols);
  for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = dy.data[i] * mask_.data[i];
  return dx;
}

// ---- Conv1d ----------------------------------------------------------------

Conv1d::Conv1d(std::string name, std::size_t in, std::size_t out, std::size_t k, bool with_bias)
    : in_ch(in), out_ch(out), kw(k) {
  w.name = name + ".w";
  w.value = Tensor({out, in, k});
  w.grad = Tensor({out, in, k});
  w.init_scale = std::sqrt(6.0 / static_cast<double>((in + out) * k));
  b.name = name + ".b";
  if (with_bias) {
    b.value = Tensor({out});
    b.grad = Tensor({out});
  }
}

Matrix Conv1d::forward(const Matrix& x) {
  if (x.cols != in_ch)
    throw std::invalid_argument(w.name + ": expected " + std::to_string(in_ch) +
                                " channels, got " + std::to_string(x.cols));
  x_ = x;
  Matrix y(x.rows, out_ch);
  kernels::conv1d_same(x.data.data(), x.rows, in_ch, w.value.data.data(), out_ch, kw,
                       has_bias() ? b.value.data.data() : nullptr, y.data.data());
  return y;
}

Matrix Conv1d::backward(const Matrix& dy) {
  kernels::conv1d_same_grad_filter(x_.data.data(), x_.rows, in_ch, dy.data.data(), out_ch, kw,
                                   w.grad.data.data(),
                                   has_bias() ? b.grad.data.data() : nullptr);
  Matrix dx(dy.rows, in_ch);
  kernels::conv1d_same_grad_input(dy.data.data(), dy.rows, out_ch, w.value.data.data(), in_ch, kw,
                                  dx.data.data());
  return dx;
}

// ---- BatchNorm ---------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, std::size_t channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  gamma.name = name + ".gamma";
  gamma.value = Tensor({channels});
  std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
  gamma.grad = Tensor({channels});
  beta.name = name + ".beta";
  beta.value = Tensor({channels});
  beta.grad = Tensor({channels});
  running_mean.name = name + ".running_mean";
  running_mean.value = Tensor({channels});
  running_mean.trainable = false;
  running_var.name = name + ".running_var";
  running_var.value = Tensor({channels});
  std::fill(running_var.value.data.begin(), running_var.value.data.end(), 1.0);
  running_var.trainable = false;
}

Matrix BatchNorm::forward(const Matrix& x, const FwdCtx& ctx) {
  const std::size_t c_count = gamma.value.shape[0];
  const std::size_t t_count = x.rows;
  train_fwd_ = ctx.mode == Mode::train;
  xhat_ = Matrix(t_count, c_count);
  inv_std_.assign(c_count, 0.0);
  Matrix y(t_count, c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    double mean, var;
    if (train_fwd_) {
      mean = 0.0;
      for (std::size_t t = 0; t < t_count; ++t) mean += x(t, c);
      mean /= static_cast<double>(t_count);
      var = 0.0;
      for (std::size_t t = 0; t < t_count; ++t) {
        const double d = x(t, c) - mean;
        var += d * d;
      }
      var /= static_cast<double>(t_count);
      running_mean.value.data[c] = (1.0 - momentum_) * running_mean.value.data[c] + momentum_ * mean;
      running_var.value.data[c] = (1.0 - momentum_) * running_var.value.data[c] + momentum_ * var;
    } else {
      mean = running_mean.value.data[c];
      var = running_var.value.data[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma.value.data[c];
    const double bb = beta.value.data[c];
    for (std::size_t t = 0; t < t_count; ++t) {
      const double xh = (x(t, c) - mean) * inv;
      xhat_(t, c) = xh;
      y(t, c) = g * xh + bb;
    }
  }
  return y;
}

Matrix BatchNorm::backward(const Matrix& dy) {
  const std::size_t c_count = gamma.value.shape[0];
  const std::size_t t_count = dy.rows;
  Matrix dx(t_count, c_count);
  const double inv_t = 1.0 / static_cast<double>(t_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      s1 += dy(t, c);
      s2 += dy(t, c) * xhat_(t, c);
    }
    gamma.grad.data[c] += s2;
    beta.grad.data[c] += s1;
    const double g = gamma.value.data[c] * inv_std_[c];
    if (train_fwd_) {
      // batch statistics took part in the forward pass
      for (std::size_t t = 0; t < t_count; ++t) {
        dx(t, c) = g * (dy(t, c) - s1 * inv_t - xhat_(t, c) * s2 * inv_t);
      }
    } else {
      for (std::size_t t = 0; t < t_count; ++t) dx(t, c) = g * dy(t, c);
    }
  }
  return dx;
}

// ---- MaxPool2 -----------------------------------------------------------------

Matrix MaxPool2::forward(const Matrix& x) {
  rows_ = x.rows;
  cols_ = x.cols;
  take_next_.assign(rows_ * cols_, 0);
  Matrix y(rows_, cols_);
  for (std::size_t t = 0; t < rows_; ++t) {
    for (std::size_t c = 0; c < cols_; ++c) {
      if (t + 1 < rows_ && x(t + 1, c) > x(t, c)) {
        y(t, c) = x(t + 1, c);
        take_next_[t * cols_ + c] = 1;
      } else {
        y(t, c) = x(t, c);
      }
    }
  }
  return y;
}

Matrix MaxPool2::backward(const Matrix& dy) {
  Matrix dx(rows_, cols_);
  for (std::size_t t = 0; t < rows_; ++t) {
    for (std::size_t c = 0; c < cols_; ++c) {
      double g = 0.0;
      if (!take_next_[t * cols_ + c]) g += dy(t, c);
      if (t > 0 && take_next_[(t - 1) * cols_ + c]) g += dy(t - 1, c);
      dx(t, c) = g;
    }
  }
  return dx;
}

// ---- Highway --------------------------------------------------------------------

Highway::Highway(std::string name, std::size_t width) {
  auto make = [&](Param& p, const char* suffix, bool matrix) {
    p.name = name + suffix;
    p.value = matrix ? Tensor({width, width}) : Tensor({width});
    p.grad = p.value;
    p.grad.zero();
    if (matrix) p.init_scale = std::sqrt(6.0 / static_cast<double>(2 * width));
  };
  make(wh, ".wh", true);
  make(bh, ".bh", false);
  make(wt, ".wt", true);
  make(bt, ".bt", false);
  // start with the gate mostly open to the identity path
  std::fill(bt.value.data.begin(), bt.value.data.end(), -1.0);
}

Matrix Highway::forward(const Matrix& x) {
  const std::size_t width = wh.value.shape[0];
  if (x.cols != width)
    throw std::invalid_argument(wh.name + ": expected " + std::to_string(width) +
                                " columns, got " + std::to_string(x.cols));
  x_ = x;
  h_ = Matrix(x.rows, width);
  g_ = Matrix(x.rows, width);
  kernels::matmul_nt(x.data.data(), x.rows, width, wh.value.data.data(), width, h_.data.data());
  kernels::add_bias_rows(h_.data.data(), x.rows, width, bh.value.data.data());
  kernels::matmul_nt(x.data.data(), x.rows, width, wt.value.data.data(), width, g_.data.data());
  kernels::add_bias_rows(g_.data.data(), x.rows, width, bt.value.data.data());
  Matrix y(x.rows, width);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    h_.data[i] = h_.data[i] > 0.0 ? h_.data[i] : 0.0;
    g_.data[i] = sigmoid(g_.data[i]);
    y.data[i] = g_.data[i] * h_.data[i] + (1.0 - g_.data[i]) * x.data[i];
  }
  return y;
}

Matrix Highway::backward(const Matrix& dy) {
  const std::size_t width = wh.value.shape[0];
  Matrix dah(dy.rows, width);
  Matrix dag(dy.rows, width);
  Matrix dx(dy.rows, width);
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    const double g = g_.data[i];
    dah.data[i] = dy.data[i] * g * (h_.data[i] > 0.0 ? 1.0 : 0.0);
    dag.data[i] = dy.data[i] * (h_.data[i] - x_.data[i]) * g * (1.0 - g);
    dx.data[i] = dy.data[i] * (1.0 - g);
  }
  std::vector<double> dw(width * width, 0.0);
  kernels::matmul_tn(dah.data.data(), dah.rows, width, x_.data.data(), width, dw.data());
  accumulate(wh.grad, dw);
  kernels::colsum_accum(dah.data.data(), dah.rows, width, bh.grad.data.data());
  kernels::matmul_tn(dag.data.data(), dag.rows, width, x_.data.data(), width, dw.data());
  accumulate(wt.grad, dw);
  kernels::colsum_accum(dag.data.data(), dag.rows, width, bt.grad.data.data());

  Matrix tmp(dy.rows, width);
  kernels::matmul_nn(dah.data.data(), dah.rows, width, wh.value.data.data(), width, tmp.data.data());
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += tmp.data[i];
  kernels::matmul_nn(dag.data.data(), dag.rows, width, wt.value.data.data(), width, tmp.data.data());
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += tmp.data[i];
  return dx;
}

// ---- Gru -----------------------------------------------------------------------

Gru::Gru(std::string name, std::size_t in, std::size_t units_) : in_dim(in), units(units_) {
  w_ih.name = name + ".w_ih";
  w_ih.value = Tensor({3 * units, in});
  w_ih.grad = Tensor({3 * units, in});
  w_ih.init_scale = std::sqrt(6.0 / static_cast<double>(in + units));
  w_hh.name = name + ".w_hh";
  w_hh.value = Tensor({3 * units, units});
  w_hh.grad = Tensor({3 * units, units});
  w_hh.init_scale = std::sqrt(6.0 / static_cast<double>(2 * units));
  bias.name = name + ".bias";
  bias.value = Tensor({3 * units});
  bias.grad = Tensor({3 * units});
}

Matrix Gru::forward(const Matrix& x) {
  if (x.cols != in_dim)
    throw std::invalid_argument(w_ih.name + ": expected " + std::to_string(in_dim) +
                                " columns, got " + std::to_string(x.cols));
  const std::size_t t_count = x.rows;
  const std::size_t u = units;
  x_ = x;

  // input contributions for all frames at once
  Matrix gates(t_count, 3 * u);
  kernels::matmul_nt(x.data.data(), t_count, in_dim, w_ih.value.data.data(), 3 * u,
                     gates.data.data());
  kernels::add_bias_rows(gates.data.data(), t_count, 3 * u, bias.value.data.data());

  z_ = Matrix(t_count, u);
  r_ = Matrix(t_count, u);
  n_ = Matrix(t_count, u);
  hprev_ = Matrix(t_count, u);
  rh_ = Matrix(t_count, u);
  Matrix out(t_count, u);

  std::vector<double> h(u, 0.0);
  std::vector<double> zr(2 * u);
  std::vector<double> nn(u);
  std::vector<double> rh(u);
  for (std::size_t t = 0; t < t_count; ++t) {
    std::copy(h.begin(), h.end(), hprev_.row(t));
    // update and reset gates share one matvec against [Uz; Ur]
    kernels::matmul_nt(h.data(), 1, u, w_hh.value.data.data(), 2 * u, zr.data());
    const double* gt = gates.row(t);
    for (std::size_t j = 0; j < u; ++j) {
      z_(t, j) = sigmoid(gt[j] + zr[j]);
      r_(t, j) = sigmoid(gt[u + j] + zr[u + j]);
      rh[j] = r_(t, j) * h[j];
    }
    std::copy(rh.begin(), rh.end(), rh_.row(t));
    kernels::matmul_nt(rh.data(), 1, u, w_hh.value.data.data() + 2 * u * u, u, nn.data());
    for (std::size_t j = 0; j < u; ++j) {
      const double n = std::tanh(gt[2 * u + j] + nn[j]);
      n_(t, j) = n;
      h[j] = (1.0 - z_(t, j)) * n + z_(t, j) * h[j];
    }
    std::copy(h.begin(), h.end(), out.row(t));
  }
  return out;
}

Matrix Gru::backward(const Matrix& dy) {
  const std::size_t t_count = dy.rows;
  const std::size_t u = units;
  Matrix dgates(t_count, 3 * u);
  std::vector<double> dh(u, 0.0);
  std::vector<double> dn(u), dz(u), dr(u), drh(u), tmp(2 * u), dhn(u);

  for (std::size_t tt = t_count; tt-- > 0;) {
    const std::size_t t = tt;
    for (std::size_t j = 0; j < u; ++j) dh[j] += dy(t, j);
    double* dgt = dgates.row(t);
    for (std::size_t j = 0; j < u; ++j) {
      const double z = z_(t, j), n = n_(t, j);
      dn[j] = dh[j] * (1.0 - z);
      dz[j] = dh[j] * (hprev_(t, j) - n);
      dgt[2 * u + j] = dn[j] * (1.0 - n * n);  // candidate pre-activation
    }
    // through Un (r .* h_prev)
    kernels::matmul_nn(dgt + 2 * u, 1, u, w_hh.value.data.data() + 2 * u * u, u, drh.data());
    for (std::size_t j = 0; j < u; ++j) {
      const double z = z_(t, j), r = r_(t, j);
      dr[j] = drh[j] * hprev_(t, j);
      dhn[j] = dh[j] * z + drh[j] * r;
      dgt[j] = dz[j] * z * (1.0 - z);
      dgt[u + j] = dr[j] * r * (1.0 - r);
    }
    // through Uz and Ur in one pass
    kernels::matmul_nn(dgt, 1, 2 * u, w_hh.value.data.data(), u, tmp.data());
    for (std::size_t j = 0; j < u; ++j) dh[j] = dhn[j] + tmp[j];
  }

  // batched parameter gradients, fixed accumulation order
  std::vector<double> dwih(3 * u * in_dim, 0.0);
  kernels::matmul_tn(dgates.data.data(), t_count, 3 * u, x_.data.data(), in_dim, dwih.data());
  accumulate(w_ih.grad, dwih);
  kernels::colsum_accum(dgates.data.data(), t_count, 3 * u, bias.grad.data.data());

  const Matrix dg_zr = slice_cols(dgates, 0, 2 * u);
  const Matrix dg_n = slice_cols(dgates, 2 * u, u);
  std::vector<double> dwhh_zr(2 * u * u, 0.0);
  kernels::matmul_tn(dg_zr.data.data(), t_count, 2 * u, hprev_.data.data(), u, dwhh_zr.data());
  std::vector<double> dwhh_n(u * u, 0.0);
  kernels::matmul_tn(dg_n.data.data(), t_count, u, rh_.data.data(), u, dwhh_n.data());
  for (std::size_t i = 0; i < dwhh_zr.size(); ++i) w_hh.grad.data[i] += dwhh_zr[i];
  for (std::size_t i = 0; i < dwhh_n.size(); ++i) w_hh.grad.data[2 * u * u + i] += dwhh_n[i];

  Matrix dx(t_count, in_dim);
  kernels::matmul_nn(dgates.data.data(), t_count, 3 * u, w_ih.value.data.data(), in_dim,
                     dx.data.data());
  return dx;
}

// ---- BiGru ----------------------------------------------------------------------

BiGru::BiGru(const std::string& name, std::size_t in, std::size_t units)
    : fwd(name + ".fwd", in, units), bwd(name + ".bwd", in, units) {}

Matrix BiGru::forward(const Matrix& x) {
  const Matrix yf = fwd.forward(x);
  const Matrix yb = reverse_rows(bwd.forward(reverse_rows(x)));
  return hconcat({yf, yb});
}

Matrix BiGru::backward(const Matrix& dy) {
  const std::size_t u = fwd.units;
  const Matrix dyf = slice_cols(dy, 0, u);
  const Matrix dyb = slice_cols(dy, u, u);
  Matrix dx = fwd.backward(dyf);
  const Matrix dxb = reverse_rows(bwd.backward(reverse_rows(dyb)));
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dxb.data[i];
  return dx;
}

// ---- Cbhg -----------------------------------------------------------------------

Cbhg::Cbhg(const NetworkConfig& cfg)
    : proj1("cbhg.proj1", cfg.conv_bank_k * cfg.bank_width(), cfg.cbhg_units, 3, false),
      proj2("cbhg.proj2", cfg.cbhg_units, cfg.prenet_width(), 3, false),
      proj1_bn("cbhg.proj1.bn", cfg.cbhg_units),
      proj2_bn("cbhg.proj2.bn", cfg.prenet_width()),
      gru("cbhg.gru", cfg.prenet_width(), cfg.gru_units) {
  for (std::size_t k = 1; k <= cfg.conv_bank_k; ++k) {
    const std::string nm = "cbhg.bank." + std::to_string(k);
    bank.emplace_back(nm, cfg.prenet_width(), cfg.bank_width(), k, false);
    bank_bn.emplace_back(nm + ".bn", cfg.bank_width());
    bank_relu.emplace_back();
  }
  for (std::size_t i = 0; i < cfg.highway_layers; ++i) {
    highway.emplace_back("cbhg.highway." + std::to_string(i), cfg.prenet_width());
  }
}

Matrix Cbhg::forward(const Matrix& x, const FwdCtx& ctx) {
  std::vector<Matrix> bank_out;
  bank_out.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    bank_out.push_back(bank_relu[i].forward(bank_bn[i].forward(bank[i].forward(x), ctx)));
  }
  Matrix h = pool.forward(hconcat(bank_out));
  h = proj1_relu.forward(proj1_bn.forward(proj1.forward(h), ctx));
  h = proj2_bn.forward(proj2.forward(h), ctx);
  h = add_matrices(h, x);  // residual with the pre-net output
  for (auto& hw : highway) h = hw.forward(h);
  return gru.forward(h);
}

Matrix Cbhg::backward(const Matrix& dy) {
  Matrix d = gru.backward(dy);
  for (std::size_t i = highway.size(); i-- > 0;) d = highway[i].backward(d);
  const Matrix d_residual = d;  // the identity branch of the residual add
  d = proj2.backward(proj2_bn.backward(d));
  d = proj1.backward(proj1_bn.backward(proj1_relu.backward(d)));
  d = pool.backward(d);
  Matrix dx = d_residual;
  std::size_t col = 0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const std::size_t w = bank[i].out_ch;
    Matrix di = slice_cols(d, col, w);
    col += w;
    di = bank[i].backward(bank_bn[i].backward(bank_relu[i].backward(di)));
    for (std::size_t j = 0; j < dx.data.size(); ++j) dx.data[j] += di.data[j];
  }
  return dx;
}

// ---- Network ---------------------------------------------------------------------

Network::Network(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t pw = cfg_.prenet_width();
  for (std::size_t i = 0; i < cfg_.prenet_layers; ++i) {
    const std::size_t in = i == 0 ? cfg_.input_dim : pw;
    prenet_fc_.emplace_back("prenet." + std::to_string(i), in, pw);
    prenet_relu_.emplace_back();
    prenet_drop_.emplace_back(cfg_.dropout_rate, 0x0d0 + i);
  }
  cbhg_ = std::make_unique<Cbhg>(cfg_);
  final_ = std::make_unique<Linear>("final", 2 * cfg_.gru_units, cfg_.head_width());
  collect_params();

  // per-parameter streams keyed by registration order
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (!p->trainable || p->init_scale == 0.0) continue;
    Rng rng(hash_combine(seed, static_cast<std::uint64_t>(i) + 1));
    for (double& v : p->value.data) v = rng.uniform(-p->init_scale, p->init_scale);
  }
}

void Network::collect_params() {
  params_.clear();
  for (auto& fc : prenet_fc_) {
    params_.push_back(&fc.w);
    params_.push_back(&fc.b);
  }
  for (std::size_t i = 0; i < cbhg_->bank.size(); ++i) {
    params_.push_back(&cbhg_->bank[i].w);
    params_.push_back(&cbhg_->bank_bn[i].gamma);
    params_.push_back(&cbhg_->bank_bn[i].beta);
    params_.push_back(&cbhg_->bank_bn[i].running_mean);
    params_.push_back(&cbhg_->bank_bn[i].running_var);
  }
  for (auto* conv : {&cbhg_->proj1, &cbhg_->proj2}) {
    params_.push_back(&conv->w);
  }
  for (auto* bn : {&cbhg_->proj1_bn, &cbhg_->proj2_bn}) {
    params_.push_back(&bn->gamma);
    params_.push_back(&bn->beta);
    params_.push_back(&bn->running_mean);
    params_.push_back(&bn->running_var);
  }
  for (auto& hw : cbhg_->highway) {
    params_.push_back(&hw.wh);
    params_.push_back(&hw.bh);
    params_.push_back(&hw.wt);
    params_.push_back(&hw.bt);
  }
  for (auto* g : {&cbhg_->gru.fwd, &cbhg_->gru.bwd}) {
    params_.push_back(&g->w_ih);
    params_.push_back(&g->w_hh);
    params_.push_back(&g->bias);
  }
  params_.push_back(&final_->w);
  params_.push_back(&final_->b);
}

Matrix Network::forward(const Matrix& x, Mode mode, std::uint64_t seed) {
  if (x.rows == 0) throw std::invalid_argument("network: empty input sequence");
  if (x.cols != cfg_.input_dim)
    throw std::invalid_argument("network: expected " + std::to_string(cfg_.input_dim) +
                                " input columns, got " + std::to_string(x.cols));
  if (!all_finite(x)) throw std::invalid_argument("network: non-finite input");
  FwdCtx ctx{mode, seed};
  Matrix h = x;
  for (std::size_t i = 0; i < prenet_fc_.size(); ++i) {
    h = prenet_drop_[i].forward(prenet_relu_[i].forward(prenet_fc_[i].forward(h)), ctx);
  }
  h = cbhg_->forward(h, ctx);
  Matrix raw = final_->forward(h);
  have_train_fwd_ = mode == Mode::train;
  return raw;
}

void Network::backward(const Matrix& loss_grad) {
  if (!have_train_fwd_)
    throw std::logic_error("network: backward without a preceding train-mode forward");
  if (loss_grad.cols != cfg_.head_width())
    throw std::invalid_argument("network: loss gradient has wrong width");
  Matrix d = final_->backward(loss_grad);
  d = cbhg_->backward(d);
  for (std::size_t i = prenet_fc_.size(); i-- > 0;) {
    d = prenet_fc_[i].backward(prenet_relu_[i].backward(prenet_drop_[i].backward(d)));
  }
}

void Network::zero_grads() {
  for (Param* p : params_) p->grad.zero();
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const Param* p : params_) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

// ---- Adam -----------------------------------------------------------------------

Adam::Adam(Network& net, double lr, double beta1, double beta2, double eps)
    : net_(net), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Param* p : net_.params()) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void Adam::step() {
  for (Param* p : net_.params()) {
    if (p->trainable && !all_finite(p->grad.data))
      throw std::runtime_error("adam: non-finite gradient in " + p->name);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& params = net_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i];
    if (!p->trainable) continue;
    double* m = m_[i].data.data();
    double* v = v_[i].data.data();
    const double* g = p->grad.data.data();
    double* w = p->value.data.data();
    const std::size_t n = p->value.size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

// ---- losses ----------------------------------------------------------------------

LossGrad cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                       const std::vector<std::uint8_t>& mask) {
  if (labels.size() != logits.rows)
    throw std::invalid_argument("cross_entropy: label count does not match frame count");
  if (!mask.empty() && mask.size() != logits.rows)
    throw std::invalid_argument("cross_entropy: mask length does not match frame count");
  LossGrad out;
  out.raw_grad = Matrix(logits.rows, logits.cols);
  for (std::size_t t = 0; t < logits.rows; ++t) {
    if (!mask.empty() && mask[t] == 0) continue;
    const int label = labels[t];
    if (label < 0 || static_cast<std::size_t>(label) >= logits.cols)
      throw std::invalid_argument("cross_entropy: label out of range at frame " +
                                  std::to_string(t));
    const double* row = logits.row(t);
    double mx = row[0];
    for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) denom += std::exp(row[c] - mx);
    const double lse = mx + std::log(denom);
    out.loss += lse - row[static_cast<std::size_t>(label)];
    double* g = out.raw_grad.row(t);
    for (std::size_t c = 0; c < logits.cols; ++c) g[c] = std::exp(row[c] - lse);
    g[static_cast<std::size_t>(label)] -= 1.0;
    ++out.n_frames;
  }
  return out;
}

LossGrad squared_loss(const Matrix& raw, const Matrix& target) {
  if (raw.rows != target.rows || raw.cols != target.cols)
    throw std::invalid_argument("squared_loss: shape mismatch");
  LossGrad out;
  out.raw_grad = Matrix(raw.rows, raw.cols);
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    const double d = raw.data[i] - target.data[i];
    out.loss += 0.5 * d * d;
    out.raw_grad.data[i] = d;
  }
  out.n_frames = raw.rows;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t t = 0; t < logits.rows; ++t) {
    const double* row = logits.row(t);
    double mx = row[0];
    for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) denom += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < logits.cols; ++c) out(t, c) = std::exp(row[c] - mx) / denom;
  }
  return out;
}

// ---- gradient check ----------------------------------------------------------------

GradCheckReport grad_check(Network& net, const Matrix& x,
                           const std::function<LossGrad(const Matrix&)>& loss_fn,
                           std::uint64_t seed, double fd_step) {
  net.zero_grads();
  const Matrix raw = net.forward(x, Mode::train, seed);
  const LossGrad lg = loss_fn(raw);
  net.backward(lg.raw_grad);

  std::vector<std::vector<double>> analytic;
  for (Param* p : net.params()) analytic.push_back(p->grad.data);

  // central differences cannot resolve slope differences below the rounding
  // of the two loss evaluations; discrepancies under this floor count as
  // agreement (dead ReLU paths and straddled kinks land here)
  const double noise_floor = 128.0 * std::numeric_limits<double>::epsilon() *
                             std::max(1.0, std::abs(lg.loss)) / fd_step;

  GradCheckReport report;
  auto& params = net.params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    if (!p->trainable) continue;
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      const double saved = p->value.data[j];
      p->value.data[j] = saved + fd_step;
      const double lp = loss_fn(net.forward(x, Mode::train, seed)).loss;
      p->value.data[j] = saved - fd_step;
      const double lm = loss_fn(net.forward(x, Mode::train, seed)).loss;
      p->value.data[j] = saved;
      const double numeric = (lp - lm) / (2.0 * fd_step);
      const double a = analytic[pi][j];
      if (std::abs(a - numeric) < noise_floor) continue;
      const double rel = std::abs(a - numeric) / (std::abs(a) + 1e-8);
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p->name;
        report.worst_index = j;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace neural
