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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vconv/mdn.hpp"
#include "vconv/tensor.hpp"

namespace vconv::neural {

enum class HeadKind : std::uint32_t { softmax = 0, mdn = 1 };
enum class Mode { train, infer };

// Shared structure of the three networks: a fully connected pre-net with
// dropout, a CBHG block, and one linear projection to the head width. Only
// input_dim, output_dim and the head differ between networks.
struct NetworkConfig {
  std::size_t input_dim = 40;
  std::size_t output_dim = 257;  // phone count for softmax, data dim for mdn
  std::size_t prenet_layers = 3;
  std::size_t prenet_units = 0;  // 0 -> cbhg_units / 2
  double dropout_rate = 0.2;
  std::size_t cbhg_units = 512;
  std::size_t conv_bank_k = 8;
  std::size_t bank_channels = 0;  // 0 -> cbhg_units / 4
  std::size_t highway_layers = 8;
  std::size_t gru_units = 512;
  HeadKind head_kind = HeadKind::mdn;
  std::size_t mixtures = 5;
  bool mdn_isotropic = false;
  double sigma_min = 1e-3;
  double sigma_max = 1e3;

  std::size_t prenet_width() const { return prenet_units ? prenet_units : cbhg_units / 2; }
  std::size_t bank_width() const { return bank_channels ? bank_channels : cbhg_units / 4; }
  std::size_t head_width() const;
  mdn::MdnSpec mdn_spec() const;
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

// One named parameter (or non-trainable buffer) with its gradient slot.
// init_scale > 0 marks tensors that get uniform(-s, s) initialization.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  double init_scale = 0.0;
};

struct FwdCtx {
  Mode mode = Mode::infer;
  std::uint64_t seed = 0;  // drives dropout masks; ignored at inference
};

// ---- layers ------------------------------------------------------------
// Each layer owns its parameters and the activations its backward needs.
// A layer instance serves one forward/backward pair at a time.

class Linear {
 public:
  Linear(std::string name, std::size_t in, std::size_t out);
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  Param w, b;

 private:
  Matrix x_;
};

class Relu {
 public:
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);

 private:
  Matrix x_;
};

class Dropout {
 public:
  Dropout(double rate, std::uint64_t layer_tag) : rate_(rate), tag_(layer_tag) {}
  Matrix forward(const Matrix& x, const FwdCtx& ctx);
  Matrix backward(const Matrix& dy);

 private:
  double rate_;
  std::uint64_t tag_;
  Matrix mask_;  // 0 or 1/keep, empty at inference
};

// 'same'-padded convolution along time. Convolutions that feed a batch-norm
// are built without a bias; the normalization would cancel it exactly,
// leaving a parameter with no gradient.
class Conv1d {
 public:
  Conv1d(std::string name, std::size_t in, std::size_t out, std::size_t kw,
         bool with_bias = true);
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  bool has_bias() const { return b.value.size() > 0; }
  Param w, b;
  std::size_t in_ch, out_ch, kw;

 private:
  Matrix x_;
};

class BatchNorm {
 public:
  BatchNorm(std::string name, std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  Matrix forward(const Matrix& x, const FwdCtx& ctx);
  Matrix backward(const Matrix& dy);
  Param gamma, beta;
  Param running_mean, running_var;  // buffers, not trainable

 private:
  double momentum_, eps_;
  bool train_fwd_ = false;
  Matrix xhat_;
  std::vector<double> inv_std_;
};

// width-2, stride-1 max pooling; the last frame sees only itself.
class MaxPool2 {
 public:
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);

 private:
  std::vector<std::uint8_t> take_next_;  // 1 when x[t+1] won the window at t
  std::size_t rows_ = 0, cols_ = 0;
};

class Highway {
 public:
  Highway(std::string name, std::size_t width);
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  Param wh, bh, wt, bt;

 private:
  Matrix x_, h_, g_;
};

// Single-direction GRU, gate order [update; reset; candidate], with the
// candidate seeing the reset-gated hidden state:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r .* h) + bn)
//   h' = (1 - z) .* n + z .* h
class Gru {
 public:
  Gru(std::string name, std::size_t in, std::size_t units);
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  Param w_ih, w_hh, bias;  // {3u,in}, {3u,u}, {3u}
  std::size_t in_dim, units;

 private:
  Matrix x_, z_, r_, n_, hprev_, rh_;
};

// Forward and time-reversed GRU, outputs concatenated [fwd | bwd].
class BiGru {
 public:
  BiGru(const std::string& name, std::size_t in, std::size_t units);
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  Gru fwd, bwd;
};

// Conv bank -> max pool -> two conv projections -> residual with the input
// -> highway stack -> bidirectional GRU.
class Cbhg {
 public:
  Cbhg(const NetworkConfig& cfg);
  Matrix forward(const Matrix& x, const FwdCtx& ctx);
  Matrix backward(const Matrix& dy);

  std::vector<Conv1d> bank;
  std::vector<BatchNorm> bank_bn;
  std::vector<Relu> bank_relu;
  MaxPool2 pool;
  Conv1d proj1, proj2;
  BatchNorm proj1_bn, proj2_bn;
  Relu proj1_relu;
  std::vector<Highway> highway;
  BiGru gru;
};

// ---- network -----------------------------------------------------------

class Network {
 public:
  // Deterministic initialization: the same (cfg, seed) builds bit-identical
  // parameters. Throws std::invalid_argument naming the offending layer on
  // inconsistent dimensions.
  Network(const NetworkConfig& cfg, std::uint64_t seed);

  // Frame-synchronous pass; returns the raw head input (T x head_width).
  // Dropout is live only in train mode, with masks derived from seed.
  Matrix forward(const Matrix& x, Mode mode, std::uint64_t seed = 0);

  // Exact reverse-mode gradients of a scalar loss, given d loss / d raw.
  // Requires a prior forward in train mode; accumulates into param grads.
  void backward(const Matrix& loss_grad);

  void zero_grads();
  std::size_t param_count() const;  // trainable scalars only

  std::vector<Param*>& params() { return params_; }
  const std::vector<Param*>& params() const { return params_; }
  const NetworkConfig& config() const { return cfg_; }

  Linear& final_layer() { return *final_; }

 private:
  NetworkConfig cfg_;
  std::vector<Linear> prenet_fc_;
  std::vector<Relu> prenet_relu_;
  std::vector<Dropout> prenet_drop_;
  std::unique_ptr<Cbhg> cbhg_;
  std::unique_ptr<Linear> final_;
  std::vector<Param*> params_;
  bool have_train_fwd_ = false;

  void collect_params();
};

// ---- training utilities -------------------------------------------------

class Adam {
 public:
  explicit Adam(Network& net, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  // One update from the currently accumulated gradients. Throws on
  // non-finite gradients instead of corrupting the parameters.
  void step();
  void set_lr(double lr) { lr_ = lr; }

 private:
  Network& net_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct LossGrad {
  double loss = 0.0;
  Matrix raw_grad;
  std::size_t n_frames = 0;
};

// Frame-wise softmax cross entropy over logits; masked frames contribute
// neither loss nor gradient. Loss is the sum over unmasked frames.
LossGrad cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                       const std::vector<std::uint8_t>& mask = {});

// Mean-squared-error over all entries (sum of squared residuals / 2).
LossGrad squared_loss(const Matrix& raw, const Matrix& target);

// Row-wise softmax (used to turn a softmax head's logits into posteriors).
Matrix softmax_rows(const Matrix& logits);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences over every trainable parameter. loss_fn maps
// the raw head output to a scalar loss and its gradient; the same dropout
// seed is replayed for every evaluation.
GradCheckReport grad_check(Network& net, const Matrix& x,
                           const std::function<LossGrad(const Matrix&)>& loss_fn,
                           std::uint64_t seed, double fd_step = 1e-5);

}  // namespace vconv::neural
