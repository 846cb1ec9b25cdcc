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

#include "vconv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vconv/mdn.hpp"
#include "vconv/rng.hpp"

namespace vconv::pipeline {

void StageConfig::validate() const {
  if (segment_frames == 0 || batch_segments == 0)
    throw std::invalid_argument("stage config: counts must be positive");
  if (learning_rate <= 0.0) throw std::invalid_argument("stage config: learning rate must be positive");
}

Matrix log_compress(const Matrix& magnitudes) {
  Matrix out(magnitudes.rows, magnitudes.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::log1p(magnitudes.data[i]);
  return out;
}

Matrix log_expand(const Matrix& log_magnitudes) {
  Matrix out(log_magnitudes.rows, log_magnitudes.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::max(0.0, std::expm1(log_magnitudes.data[i]));
  }
  return out;
}

std::vector<Segment> segment_utterance(const Matrix& x, const Matrix* y,
                                       const std::vector<int>* labels,
                                       std::size_t segment_frames) {
  std::vector<Segment> out;
  const std::size_t t_total = x.rows;
  for (std::size_t start = 0; start < t_total; start += segment_frames) {
    const std::size_t n_valid = std::min(segment_frames, t_total - start);
    Segment seg;
    seg.n_valid = n_valid;
    seg.mask.assign(segment_frames, 0);
    std::fill(seg.mask.begin(), seg.mask.begin() + static_cast<std::ptrdiff_t>(n_valid), 1);
    seg.x = Matrix(segment_frames, x.cols);
    for (std::size_t t = 0; t < n_valid; ++t) {
      std::copy(x.row(start + t), x.row(start + t) + x.cols, seg.x.row(t));
    }
    if (y) {
      seg.y = Matrix(segment_frames, y->cols);
      for (std::size_t t = 0; t < n_valid; ++t) {
        std::copy(y->row(start + t), y->row(start + t) + y->cols, seg.y.row(t));
      }
    }
    if (labels) {
      seg.labels.assign(segment_frames, 0);
      std::copy(labels->begin() + static_cast<std::ptrdiff_t>(start),
                labels->begin() + static_cast<std::ptrdiff_t>(start + n_valid),
                seg.labels.begin());
    }
    out.push_back(std::move(seg));
  }
  return out;
}

namespace {

// Shared mini-batch trainer. loss_fn evaluates one segment's raw head output
// and returns the summed loss with its gradient; gradients are scaled to the
// batch's frame mean before the optimizer step. Everything iterates in a
// seed-determined order, so runs are bit-reproducible.
using SegmentLoss =
    std::function<neural::LossGrad(const Matrix& raw, const Segment& seg)>;

TrainLog run_training(neural::Network& net, std::vector<Segment>& segments,
                      const StageConfig& cfg, const SegmentLoss& loss_fn,
                      const std::function<double()>& epoch_metric = nullptr) {
  TrainLog log;
  neural::Adam adam(net, cfg.learning_rate);
  std::vector<std::size_t> order(segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // deterministic shuffle per epoch
    Rng shuffle_rng(hash_combine(cfg.seed, 0xe90c + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.next_u64() % i;
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t epoch_frames = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_segments) {
      const std::size_t b_end = std::min(b + cfg.batch_segments, order.size());
      std::size_t batch_frames = 0;
      for (std::size_t i = b; i < b_end; ++i) batch_frames += segments[order[i]].n_valid;
      if (batch_frames == 0) continue;
      net.zero_grads();
      for (std::size_t i = b; i < b_end; ++i) {
        Segment& seg = segments[order[i]];
        const std::uint64_t drop_seed =
            hash_combine(hash_combine(cfg.seed, epoch), 0xd0 + order[i]);
        const Matrix raw = net.forward(seg.x, neural::Mode::train, drop_seed);
        neural::LossGrad lg = loss_fn(raw, seg);
        epoch_loss += lg.loss;
        const double scale = 1.0 / static_cast<double>(batch_frames);
        for (double& g : lg.raw_grad.data) g *= scale;
        net.backward(lg.raw_grad);
      }
      adam.step();
      epoch_frames += batch_frames;
    }
    log.epoch_loss.push_back(epoch_frames ? epoch_loss / static_cast<double>(epoch_frames) : 0.0);
    if (epoch_metric) log.epoch_distill_rel_l2.push_back(epoch_metric());
  }
  return log;
}

}  // namespace

TrainedNetwork train_stage1(const std::vector<LabeledUtterance>& data,
                            const neural::NetworkConfig& netcfg, const StageConfig& cfg) {
  cfg.validate();
  if (netcfg.head_kind != neural::HeadKind::softmax)
    throw std::invalid_argument("stage 1: recognizer needs a softmax head");
  if (data.empty()) throw std::invalid_argument("stage 1: empty corpus");
  for (const auto& u : data) {
    if (u.labels.size() != u.features.rows)
      throw std::invalid_argument("stage 1: utterance " + u.name + ": " +
                                  std::to_string(u.labels.size()) + " labels for " +
                                  std::to_string(u.features.rows) + " frames");
    for (int l : u.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= netcfg.output_dim)
        throw std::invalid_argument("stage 1: utterance " + u.name + ": label " +
                                    std::to_string(l) + " outside phone set");
    }
  }

  TrainedNetwork out;
  out.net = std::make_unique<neural::Network>(netcfg, cfg.seed);
  std::vector<Segment> segments;
  for (const auto& u : data) {
    auto segs = segment_utterance(u.features, nullptr, &u.labels, cfg.segment_frames);
    for (auto& s : segs) segments.push_back(std::move(s));
  }
  out.log = run_training(*out.net, segments, cfg, [](const Matrix& raw, const Segment& seg) {
    return neural::cross_entropy(raw, seg.labels, seg.mask);
  });
  return out;
}

PpgSequence compute_ppg(neural::Network& net1, const dsp::MfccSequence& m) {
  if (!m.normalized) throw std::invalid_argument("compute_ppg: features must be normalized");
  if (net1.config().head_kind != neural::HeadKind::softmax)
    throw std::invalid_argument("compute_ppg: recognizer must have a softmax head");
  PpgSequence p;
  p.frames = neural::softmax_rows(net1.forward(m.frames, neural::Mode::infer));
  return p;
}

TrainedNetwork train_stage2(neural::Network& net1, const std::vector<Waveform>& target_utts,
                            const neural::NetworkConfig& netcfg, const StageConfig& cfg,
                            const dsp::DspConfig& dspcfg) {
  cfg.validate();
  if (target_utts.empty()) throw std::invalid_argument("stage 2: empty target corpus");
  if (netcfg.head_kind != neural::HeadKind::mdn)
    throw std::invalid_argument("stage 2: mapper needs a mixture head");
  if (netcfg.input_dim != net1.config().output_dim)
    throw std::invalid_argument("stage 2: input width must equal the phone set size");

  const mdn::MdnSpec spec = netcfg.mdn_spec();
  std::vector<Segment> segments;
  for (const auto& w : target_utts) {
    const dsp::Spectrogram s = dsp::stft(w, dspcfg);
    const dsp::MfccSequence feats = dsp::cmvn(dsp::mfcc_from_spectrogram(s, dspcfg));
    const PpgSequence ppg = compute_ppg(net1, feats);
    const Matrix target = log_compress(s.frames);
    auto segs = segment_utterance(ppg.frames, &target, nullptr, cfg.segment_frames);
    for (auto& seg : segs) segments.push_back(std::move(seg));
  }

  TrainedNetwork out;
  out.net = std::make_unique<neural::Network>(netcfg, cfg.seed);
  out.log = run_training(*out.net, segments, cfg, [&spec](const Matrix& raw, const Segment& seg) {
    const mdn::NllResult r = mdn::mdn_nll(mdn::split_head(raw, spec), seg.y, seg.mask);
    return neural::LossGrad{r.loss, r.raw_grad, r.n_frames};
  });
  return out;
}

std::vector<Stage3Pair> synthesize_stage3_pairs(neural::Network& net1, neural::Network& net2,
                                                const std::vector<Waveform>& multi_utts,
                                                const dsp::DspConfig& dspcfg) {
  std::vector<Stage3Pair> pairs;
  pairs.reserve(multi_utts.size());
  for (const auto& w : multi_utts) {
    Stage3Pair pair;
    pair.input = dsp::cmvn(dsp::mfcc(w, dspcfg));
    // exactly the cascade's pre-vocoder output, same code path as conversion
    pair.target = baseline_convert_spectrogram(net1, net2, w, dspcfg);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

TrainedNetwork train_stage3(const std::vector<Stage3Pair>& pairs,
                            const neural::NetworkConfig& netcfg, const StageConfig& cfg,
                            const neural::Network* warm_start) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("stage 3: empty pair set");
  if (netcfg.head_kind != neural::HeadKind::mdn)
    throw std::invalid_argument("stage 3: direct network needs a mixture head");
  for (const auto& p : pairs) {
    if (p.input.frames.rows != p.target.frames.rows)
      throw std::invalid_argument("stage 3: pair with mismatched frame counts");
  }

  TrainedNetwork out;
  out.net = std::make_unique<neural::Network>(netcfg, cfg.seed);
  if (warm_start) {
    // adopt every tensor whose shape survives the input-width change
    const auto& src = warm_start->params();
    auto& dst = out.net->params();
    for (std::size_t i = 0; i < dst.size() && i < src.size(); ++i) {
      if (src[i]->name == dst[i]->name && src[i]->value.shape == dst[i]->value.shape) {
        dst[i]->value = src[i]->value;
      }
    }
  }

  const mdn::MdnSpec spec = netcfg.mdn_spec();
  std::vector<Segment> segments;
  std::vector<Matrix> log_targets;
  for (const auto& p : pairs) {
    const Matrix target = log_compress(p.target.frames);
    log_targets.push_back(target);
    auto segs = segment_utterance(p.input.frames, &target, nullptr, cfg.segment_frames);
    for (auto& seg : segs) segments.push_back(std::move(seg));
  }

  neural::Network& net = *out.net;
  const auto distill_gap = [&]() {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Matrix raw = net.forward(pairs[i].input.frames, neural::Mode::infer);
      const Matrix est = mdn::point_estimate(mdn::split_head(raw, spec));
      for (std::size_t j = 0; j < est.data.size(); ++j) {
        const double d = est.data[j] - log_targets[i].data[j];
        num += d * d;
        den += log_targets[i].data[j] * log_targets[i].data[j];
      }
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  };

  out.log = run_training(net, segments, cfg,
                         [&spec](const Matrix& raw, const Segment& seg) {
                           const mdn::NllResult r =
                               mdn::mdn_nll(mdn::split_head(raw, spec), seg.y, seg.mask);
                           return neural::LossGrad{r.loss, r.raw_grad, r.n_frames};
                         },
                         distill_gap);
  return out;
}

namespace {

dsp::Spectrogram readout_to_spectrogram(const Matrix& raw, const mdn::MdnSpec& spec,
                                        const dsp::DspConfig& dspcfg) {
  const Matrix est = mdn::point_estimate(mdn::split_head(raw, spec));
  dsp::Spectrogram s;
  s.frames = log_expand(est);
  s.frame_hop_s = static_cast<double>(dspcfg.frame_hop) / dspcfg.sample_rate;
  s.fft_size = dspcfg.fft_size;
  return s;
}

}  // namespace

dsp::Spectrogram convert_spectrogram(neural::Network& net3, const Waveform& w,
                                     const dsp::DspConfig& dspcfg) {
  const dsp::MfccSequence feats = dsp::cmvn(dsp::mfcc(w, dspcfg));
  const Matrix raw = net3.forward(feats.frames, neural::Mode::infer);
  return readout_to_spectrogram(raw, net3.config().mdn_spec(), dspcfg);
}

Conversion convert(neural::Network& net3, const Waveform& w, const dsp::DspConfig& dspcfg) {
  Conversion c;
  c.spec = convert_spectrogram(net3, w, dspcfg);
  c.wav = dsp::griffin_lim(c.spec, dspcfg);
  return c;
}

dsp::Spectrogram baseline_convert_spectrogram(neural::Network& net1, neural::Network& net2,
                                              const Waveform& w, const dsp::DspConfig& dspcfg) {
  const dsp::MfccSequence feats = dsp::cmvn(dsp::mfcc(w, dspcfg));
  const PpgSequence ppg = compute_ppg(net1, feats);
  const Matrix raw = net2.forward(ppg.frames, neural::Mode::infer);
  return readout_to_spectrogram(raw, net2.config().mdn_spec(), dspcfg);
}

Conversion baseline_convert(neural::Network& net1, neural::Network& net2, const Waveform& w,
                            const dsp::DspConfig& dspcfg) {
  Conversion c;
  c.spec = baseline_convert_spectrogram(net1, net2, w, dspcfg);
  c.wav = dsp::griffin_lim(c.spec, dspcfg);
  return c;
}

double frame_accuracy(neural::Network& net1, const std::vector<LabeledUtterance>& data) {
  std::size_t hit = 0, total = 0;
  for (const auto& u : data) {
    const Matrix logits = net1.forward(u.features, neural::Mode::infer);
    for (std::size_t t = 0; t < logits.rows; ++t) {
      const double* row = logits.row(t);
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols; ++c) {
        if (row[c] > row[best]) best = c;
      }
      hit += best == static_cast<std::size_t>(u.labels[t]) ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

std::vector<LabeledUtterance> load_labeled(const corpus::Corpus&,
                                           const std::vector<const corpus::Utterance*>& utts,
                                           const dsp::DspConfig& dspcfg) {
  std::vector<LabeledUtterance> out;
  for (const corpus::Utterance* u : utts) {
    if (u->label_path.empty())
      throw std::invalid_argument("stage 1: utterance " + u->audio_path + " has no labels");
    LabeledUtterance lu;
    lu.name = u->audio_path;
    const Waveform w = read_wav(u->audio_path);
    lu.features = dsp::cmvn(dsp::mfcc(w, dspcfg)).frames;
    lu.labels = corpus::read_labels(u->label_path);
    if (lu.labels.size() != lu.features.rows)
      throw std::invalid_argument("stage 1: utterance " + lu.name + ": " +
                                  std::to_string(lu.labels.size()) + " labels for " +
                                  std::to_string(lu.features.rows) + " frames");
    out.push_back(std::move(lu));
  }
  return out;
}

}  // namespace vconv::pipeline
