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

#include <cmath>
#include <vector>

#include "vconv/mdn.hpp"
#include "vconv/neural.hpp"
#include "vconv/rng.hpp"

using namespace vconv;
using neural::HeadKind;
using neural::Mode;

namespace {

// toy stack used by the finite-difference suites, ~1.3k parameters
neural::NetworkConfig toy_config(HeadKind head) {
  neural::NetworkConfig cfg;
  cfg.input_dim = 6;
  cfg.prenet_layers = 3;
  cfg.prenet_units = 6;
  cfg.dropout_rate = 0.2;
  cfg.cbhg_units = 8;
  cfg.bank_channels = 2;
  cfg.conv_bank_k = 2;
  cfg.highway_layers = 2;
  cfg.gru_units = 6;
  cfg.head_kind = head;
  if (head == HeadKind::mdn) {
    cfg.output_dim = 3;
    cfg.mixtures = 2;
  } else {
    cfg.output_dim = 5;
  }
  return cfg;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.uniform(-scale, scale);
  return m;
}

neural::Param* find_param(neural::Network& net, const std::string& name) {
  for (auto* p : net.params()) {
    if (p->name == name) return p;
  }
  REQUIRE(false);
  return nullptr;
}

void set_param(neural::Network& net, const std::string& name, const std::vector<double>& vals) {
  auto* p = find_param(net, name);
  REQUIRE(p->value.size() == vals.size());
  p->value.data = vals;
}

}  // namespace

TEST_CASE("identical config and seed build bit-identical networks") {
  const auto cfg = toy_config(HeadKind::mdn);
  neural::Network a(cfg, 99), b(cfg, 99), c(cfg, 100);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    all_equal = all_equal && a.params()[i]->value.data == b.params()[i]->value.data;
    any_diff = any_diff || a.params()[i]->value.data != c.params()[i]->value.data;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("softmax head emits output_dim values per frame, mdn head the raw width") {
  auto cfg = toy_config(HeadKind::softmax);
  neural::Network net(cfg, 1);
  const Matrix y = net.forward(random_matrix(7, 6, 2), Mode::infer);
  CHECK(y.rows == 7);
  CHECK(y.cols == 5);

  auto mcfg = toy_config(HeadKind::mdn);
  neural::Network mnet(mcfg, 1);
  const Matrix ym = mnet.forward(random_matrix(7, 6, 2), Mode::infer);
  CHECK(ym.cols == mcfg.mixtures * (1 + 2 * mcfg.output_dim));
}

TEST_CASE("parameter count matches a layer-by-layer hand count") {
  // widths 4 everywhere, K=2, highway 2 (bank channels 4/4 = 1)
  neural::NetworkConfig cfg;
  cfg.input_dim = 4;
  cfg.output_dim = 4;
  cfg.prenet_layers = 3;
  cfg.cbhg_units = 4;
  cfg.conv_bank_k = 2;
  cfg.highway_layers = 2;
  cfg.gru_units = 4;
  cfg.head_kind = HeadKind::softmax;
  neural::Network net(cfg, 1);

  const std::size_t pw = 2;  // 4/2
  const std::size_t bc = 1;  // 4/4
  std::size_t expected = 0;
  expected += (4 * pw + pw) + 2 * (pw * pw + pw);    // prenet
  expected += bc * pw * 1 + bc * pw * 2 + 2 * 2 * bc;  // bias-free bank convs + bn
  expected += 4 * (2 * bc) * 3 + 2 * 4;              // proj1 + bn
  expected += pw * 4 * 3 + 2 * pw;                   // proj2 + bn
  expected += 2 * 2 * (pw * pw + pw);                // highway
  expected += 2 * (3 * 4 * pw + 3 * 4 * 4 + 3 * 4);  // bi-gru
  expected += 4 * (2 * 4) + 4;                       // final
  CHECK(net.param_count() == expected);

  neural::Network same(cfg, 7);
  CHECK(same.param_count() == net.param_count());
}

TEST_CASE("a single 3->2 dense layer has 8 parameters") {
  neural::Linear fc("fc", 3, 2);
  CHECK(fc.w.value.size() + fc.b.value.size() == 8);
}

TEST_CASE("sequence length is preserved through the full stack") {
  auto cfg = toy_config(HeadKind::softmax);
  neural::Network net(cfg, 3);
  for (std::size_t t : {std::size_t{1}, std::size_t{2}, std::size_t{9}, std::size_t{33}}) {
    const Matrix y = net.forward(random_matrix(t, 6, t), Mode::infer);
    CHECK(y.rows == t);
  }
}

TEST_CASE("inference is deterministic; train-mode dropout replays from the seed") {
  auto cfg = toy_config(HeadKind::softmax);
  neural::Network net(cfg, 4);
  const Matrix x = random_matrix(5, 6, 11);
  const Matrix a = net.forward(x, Mode::infer);
  const Matrix b = net.forward(x, Mode::infer);
  CHECK(a.data == b.data);

  const Matrix t1 = net.forward(x, Mode::train, 77);
  const Matrix t2 = net.forward(x, Mode::train, 77);
  const Matrix t3 = net.forward(x, Mode::train, 78);
  CHECK(t1.data == t2.data);
  CHECK(t1.data != t3.data);
}

TEST_CASE("hand-traced forward pass on a unit-width stack") {
  neural::NetworkConfig cfg;
  cfg.input_dim = 1;
  cfg.output_dim = 1;
  cfg.prenet_layers = 1;
  cfg.prenet_units = 1;
  cfg.dropout_rate = 0.0;
  cfg.cbhg_units = 1;
  cfg.bank_channels = 1;
  cfg.conv_bank_k = 1;
  cfg.highway_layers = 1;
  cfg.gru_units = 1;
  cfg.head_kind = HeadKind::softmax;
  neural::Network net(cfg, 1);

  set_param(net, "prenet.0.w", {0.5});
  set_param(net, "prenet.0.b", {0.1});
  set_param(net, "cbhg.bank.1.w", {0.8});
  // batch-norm buffers stay at mean 0, var 1; gamma/beta at 1/0
  set_param(net, "cbhg.proj1.w", {0.0, 0.7, 0.0});  // k=3 taps, center active
  set_param(net, "cbhg.proj2.w", {0.0, 0.6, 0.0});
  set_param(net, "cbhg.highway.0.wh", {1.2});
  set_param(net, "cbhg.highway.0.bh", {0.3});
  set_param(net, "cbhg.highway.0.wt", {0.9});
  set_param(net, "cbhg.highway.0.bt", {-0.5});
  set_param(net, "cbhg.gru.fwd.w_ih", {0.4, 0.3, 0.2});  // gates z, r, n
  set_param(net, "cbhg.gru.fwd.w_hh", {0.0, 0.0, 0.0});
  set_param(net, "cbhg.gru.fwd.bias", {0.1, -0.1, 0.05});
  set_param(net, "cbhg.gru.bwd.w_ih", {0.5, 0.1, 0.6});
  set_param(net, "cbhg.gru.bwd.w_hh", {0.0, 0.0, 0.0});
  set_param(net, "cbhg.gru.bwd.bias", {-0.2, 0.0, 0.15});
  set_param(net, "final.w", {1.5, -2.0});
  set_param(net, "final.b", {0.25});

  Matrix x(1, 1);
  x(0, 0) = 0.6;
  const Matrix y = net.forward(x, Mode::infer);

  // independent scalar trace of the same arithmetic
  auto sg = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double eps = 1e-5;
  const double prenet = std::max(0.0, 0.5 * 0.6 + 0.1);  // 0.4
  const double bank = std::max(0.0, (0.8 * prenet) / std::sqrt(1.0 + eps));
  const double pool = bank;  // T = 1
  const double p1 = std::max(0.0, (0.7 * pool) / std::sqrt(1.0 + eps));
  const double p2 = (0.6 * p1) / std::sqrt(1.0 + eps);
  const double res = p2 + prenet;
  const double hw_h = std::max(0.0, 1.2 * res + 0.3);
  const double hw_g = sg(0.9 * res - 0.5);
  const double hw = hw_g * hw_h + (1.0 - hw_g) * res;
  const double zf = sg(0.4 * hw + 0.1);
  const double nf = std::tanh(0.2 * hw + 0.05);
  const double hf = (1.0 - zf) * nf;
  const double zb = sg(0.5 * hw - 0.2);
  const double nb = std::tanh(0.6 * hw + 0.15);
  const double hb = (1.0 - zb) * nb;
  const double expected = 1.5 * hf - 2.0 * hb + 0.25;

  CHECK(y(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("backward without a train forward is an error; zero loss grad gives zero grads") {
  auto cfg = toy_config(HeadKind::softmax);
  neural::Network net(cfg, 5);
  CHECK_THROWS_AS(net.backward(Matrix(3, 5)), std::logic_error);

  const Matrix x = random_matrix(3, 6, 21);
  net.forward(x, Mode::train, 1);
  net.zero_grads();
  net.backward(Matrix(3, 5));
  for (auto* p : net.params()) {
    for (double g : p->grad.data) CHECK(g == 0.0);
  }
}

TEST_CASE("backward is additive in the loss gradient (per-frame contributions sum)") {
  auto cfg = toy_config(HeadKind::softmax);
  neural::Network net(cfg, 6);
  const Matrix x = random_matrix(4, 6, 31);
  net.forward(x, Mode::train, 9);

  Matrix g1 = random_matrix(4, 5, 41, 0.5);
  Matrix g2 = random_matrix(4, 5, 42, 0.5);
  Matrix gsum(4, 5);
  for (std::size_t i = 0; i < gsum.data.size(); ++i) gsum.data[i] = g1.data[i] + g2.data[i];

  auto snapshot = [&net] {
    std::vector<std::vector<double>> out;
    for (auto* p : net.params()) out.push_back(p->grad.data);
    return out;
  };
  net.zero_grads();
  net.backward(g1);
  const auto a = snapshot();
  net.zero_grads();
  net.backward(g2);
  const auto b = snapshot();
  net.zero_grads();
  net.backward(gsum);
  const auto c = snapshot();

  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      CHECK(a[i][j] + b[i][j] == doctest::Approx(c[i][j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("bidirectional GRU: reversing time and swapping directions reverses the output") {
  neural::BiGru gru("g", 3, 2);
  Rng rng(17);
  for (auto* p : {&gru.fwd.w_ih, &gru.fwd.w_hh, &gru.fwd.bias, &gru.bwd.w_ih, &gru.bwd.w_hh,
                  &gru.bwd.bias}) {
    for (auto& v : p->value.data) v = rng.uniform(-0.8, 0.8);
  }
  const Matrix x = random_matrix(6, 3, 71);
  const Matrix y = gru.forward(x);

  neural::BiGru swapped("g", 3, 2);
  swapped.fwd.w_ih.value = gru.bwd.w_ih.value;
  swapped.fwd.w_hh.value = gru.bwd.w_hh.value;
  swapped.fwd.bias.value = gru.bwd.bias.value;
  swapped.bwd.w_ih.value = gru.fwd.w_ih.value;
  swapped.bwd.w_hh.value = gru.fwd.w_hh.value;
  swapped.bwd.bias.value = gru.fwd.bias.value;

  Matrix xr(6, 3);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t c = 0; c < 3; ++c) xr(t, c) = x(5 - t, c);
  }
  const Matrix yr = swapped.forward(xr);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t u = 0; u < 2; ++u) {
      CHECK(yr(t, u) == y(5 - t, 2 + u));      // swapped fwd block = old bwd
      CHECK(yr(t, 2 + u) == y(5 - t, u));      // swapped bwd block = old fwd
    }
  }
}

TEST_CASE("a highway layer with the transform gate forced shut is the identity") {
  neural::Highway hw("h", 4);
  Rng rng(3);
  for (auto& v : hw.wh.value.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : hw.bh.value.data) v = rng.uniform(-1.0, 1.0);
  std::fill(hw.wt.value.data.begin(), hw.wt.value.data.end(), 0.0);
  std::fill(hw.bt.value.data.begin(), hw.bt.value.data.end(), -1e9);
  const Matrix x = random_matrix(5, 4, 81);
  const Matrix y = hw.forward(x);
  CHECK(y.data == x.data);
}

TEST_CASE("dropout: identity at inference, unbiased and replayable in training") {
  neural::Dropout drop(0.25, 42);
  const Matrix x = random_matrix(4, 8, 91);

  neural::FwdCtx infer{Mode::infer, 0};
  CHECK(drop.forward(x, infer).data == x.data);

  neural::FwdCtx train{Mode::train, 7};
  const Matrix y1 = drop.forward(x, train);
  const Matrix y2 = drop.forward(x, train);
  CHECK(y1.data == y2.data);
  const double keep_scale = 1.0 / 0.75;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const bool zero = y1.data[i] == 0.0;
    const bool scaled = y1.data[i] == doctest::Approx(x.data[i] * keep_scale).epsilon(1e-12);
    CHECK((zero || scaled));
  }

  // expectation over many mask seeds approaches the input
  Matrix acc(4, 8);
  const int trials = 4000;
  for (int s = 0; s < trials; ++s) {
    const Matrix y = drop.forward(x, neural::FwdCtx{Mode::train, 1000 + static_cast<std::uint64_t>(s)});
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += y.data[i];
  }
  for (std::size_t i = 0; i < acc.data.size(); ++i) {
    CHECK(acc.data[i] / trials == doctest::Approx(x.data[i]).epsilon(0.08).scale(0.1));
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged; first step is ~lr") {
  auto cfg = toy_config(HeadKind::softmax);
  neural::Network net(cfg, 12);
  neural::Adam adam(net, 0.1);

  std::vector<std::vector<double>> before;
  for (auto* p : net.params()) before.push_back(p->value.data);
  net.zero_grads();
  adam.step();
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(net.params()[i]->value.data == before[i]);
  }

  // one bias entry with constant gradient 1: the bias-corrected first step
  // of a fresh optimizer moves it by lr / (1 + eps)
  neural::Network net2(cfg, 12);
  neural::Adam fresh(net2, 0.1);
  auto* fb = find_param(net2, "final.b");
  const double start = fb->value.data[0];
  net2.zero_grads();
  fb->grad.data[0] = 1.0;
  fresh.step();
  CHECK(fb->value.data[0] == doctest::Approx(start - 0.1).epsilon(1e-6));
}

TEST_CASE("adam refuses non-finite gradients") {
  auto cfg = toy_config(HeadKind::softmax);
  neural::Network net(cfg, 13);
  neural::Adam adam(net, 0.01);
  net.zero_grads();
  find_param(net, "final.b")->grad.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam.step(), std::runtime_error);
}

TEST_CASE("identical seeds give identical training trajectories") {
  auto cfg = toy_config(HeadKind::softmax);
  const Matrix x = random_matrix(6, 6, 55);
  const std::vector<int> labels{0, 1, 2, 3, 4, 0};

  auto run = [&](neural::Network& net) {
    neural::Adam adam(net, 1e-3);
    for (int step = 0; step < 5; ++step) {
      net.zero_grads();
      const Matrix raw = net.forward(x, Mode::train, 100 + step);
      const auto lg = neural::cross_entropy(raw, labels);
      net.backward(lg.raw_grad);
      adam.step();
    }
  };
  neural::Network a(cfg, 77), b(cfg, 77);
  run(a);
  run(b);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i]->value.data == b.params()[i]->value.data);
  }
}

TEST_CASE("linear layer + squared loss gradient is exact against the closed form and FD") {
  neural::Linear fc("fc", 3, 2);
  Rng rng(5);
  for (auto& v : fc.w.value.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : fc.b.value.data) v = rng.uniform(-0.5, 0.5);
  const Matrix x = random_matrix(4, 3, 61);
  const Matrix target = random_matrix(4, 2, 62);

  const Matrix y = fc.forward(x);
  const auto lg = neural::squared_loss(y, target);
  fc.w.grad.zero();
  fc.b.grad.zero();
  fc.backward(lg.raw_grad);

  // closed form: dW = (y - target)^T x
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) {
      double expect = 0.0;
      for (std::size_t t = 0; t < 4; ++t) expect += (y(t, o) - target(t, o)) * x(t, i);
      CHECK(fc.w.grad.at2(o, i) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  // finite differences
  const double h = 1e-5;
  double max_rel = 0.0;
  auto loss_at = [&]() { return neural::squared_loss(fc.forward(x), target).loss; };
  for (auto* p : {&fc.w, &fc.b}) {
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      const double saved = p->value.data[j];
      p->value.data[j] = saved + h;
      const double lp = loss_at();
      p->value.data[j] = saved - h;
      const double lm = loss_at();
      p->value.data[j] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      max_rel = std::max(max_rel,
                         std::abs(p->grad.data[j] - numeric) / (std::abs(p->grad.data[j]) + 1e-8));
    }
  }
  CHECK(max_rel < 1e-7);
}

TEST_CASE("full toy stack with the mixture head passes the finite-difference check") {
  auto cfg = toy_config(HeadKind::mdn);
  neural::Network net(cfg, 2024);
  CHECK(net.param_count() <= 5000);
  const Matrix x = random_matrix(4, 6, 101);
  const Matrix target = random_matrix(4, 3, 102, 1.5);
  const mdn::MdnSpec spec = cfg.mdn_spec();

  const auto report = neural::grad_check(
      net, x,
      [&](const Matrix& raw) {
        const auto r = mdn::mdn_nll(mdn::split_head(raw, spec), target);
        return neural::LossGrad{r.loss, r.raw_grad, r.n_frames};
      },
      501);
  CAPTURE(report.worst_param);
  CAPTURE(report.analytic);
  CAPTURE(report.numeric);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("full toy stack with the softmax head and cross entropy passes FD") {
  auto cfg = toy_config(HeadKind::softmax);
  neural::Network net(cfg, 2025);
  CHECK(net.param_count() <= 5000);
  const Matrix x = random_matrix(4, 6, 103);
  const std::vector<int> labels{1, 0, 4, 2};

  const auto report = neural::grad_check(
      net, x, [&](const Matrix& raw) { return neural::cross_entropy(raw, labels); }, 502);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("config validation names the offending layer") {
  neural::NetworkConfig cfg = toy_config(HeadKind::softmax);
  cfg.cbhg_units = 2;  // bank channels 2/4 = 0
  cfg.bank_channels = 0;
  cfg.prenet_units = 2;
  CHECK_THROWS_WITH_AS(neural::Network(cfg, 1).param_count(),
                       "network: conv bank has zero channels (cbhg_units too small?)",
                       std::invalid_argument);

  cfg = toy_config(HeadKind::softmax);
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(neural::Network(cfg, 1).param_count(), std::invalid_argument);

  neural::Network ok(toy_config(HeadKind::softmax), 1);
  CHECK_THROWS_AS(ok.forward(Matrix(3, 7), Mode::infer), std::invalid_argument);
}
