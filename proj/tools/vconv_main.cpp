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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vconv/checkpoint.hpp"
#include "vconv/corpus.hpp"
#include "vconv/dsp.hpp"
#include "vconv/eval.hpp"
#include "vconv/pipeline.hpp"
#include "vconv/rng.hpp"

namespace {

using namespace vconv;

struct NetFlags {
  std::size_t units = 64;
  std::size_t bank_k = 4;
  std::size_t highway_layers = 2;
  std::size_t gru_units = 64;
  std::size_t prenet_units = 0;
  std::size_t mixtures = 5;
  double dropout = 0.2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--units", units, "CBHG hidden units");
    cmd->add_option("--bank-k", bank_k, "convolution bank size");
    cmd->add_option("--highway-layers", highway_layers, "highway depth");
    cmd->add_option("--gru-units", gru_units, "GRU units per direction");
    cmd->add_option("--prenet-units", prenet_units, "pre-net width (0 = units/2)");
    cmd->add_option("--mixtures", mixtures, "mixture components for spectrogram heads");
    cmd->add_option("--dropout", dropout, "pre-net dropout rate");
  }

  neural::NetworkConfig base() const {
    neural::NetworkConfig c;
    c.cbhg_units = units;
    c.conv_bank_k = bank_k;
    c.highway_layers = highway_layers;
    c.gru_units = gru_units;
    c.prenet_units = prenet_units;
    c.mixtures = mixtures;
    c.dropout_rate = dropout;
    return c;
  }
};

struct TrainFlags {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::size_t batch_segments = 4;
  std::size_t segment_frames = 401;
  std::uint64_t seed = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--batch-segments", batch_segments, "segments per optimizer step");
    cmd->add_option("--segment-frames", segment_frames, "training segment length in frames");
    cmd->add_option("--seed", seed, "run seed");
  }

  pipeline::StageConfig stage() const {
    pipeline::StageConfig c;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.batch_segments = batch_segments;
    c.segment_frames = segment_frames;
    c.seed = seed;
    return c;
  }
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// --utts A:B half-open utterance index range within each speaker
std::pair<std::size_t, std::size_t> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--utts", "expected A:B");
  return {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
}

std::vector<const corpus::Utterance*> select_utterances(const corpus::Corpus& c,
                                                        const std::vector<std::string>& speakers,
                                                        const std::string& utt_range) {
  std::vector<const corpus::Utterance*> out;
  for (const auto& spk : speakers) {
    auto utts = c.by_speaker(spk);
    if (utts.empty()) throw std::runtime_error("no utterances for speaker " + spk);
    std::size_t lo = 0, hi = utts.size();
    if (!utt_range.empty()) {
      std::tie(lo, hi) = parse_range(utt_range);
      hi = std::min(hi, utts.size());
    }
    for (std::size_t i = lo; i < hi; ++i) out.push_back(utts[i]);
  }
  return out;
}

std::vector<Waveform> load_waves(const std::vector<const corpus::Utterance*>& utts) {
  std::vector<Waveform> out;
  out.reserve(utts.size());
  for (const auto* u : utts) out.push_back(read_wav(u->audio_path));
  return out;
}

void write_loss_log(const std::string& path, const pipeline::TrainLog& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write loss log " + path);
  char buf[64];
  for (double v : log.epoch_loss) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    f << buf << "\n";
  }
}

std::unique_ptr<neural::Network> load_stage_checkpoint(const std::string& path,
                                                       const std::string& required_stage,
                                                       const std::string& why) {
  if (path.empty())
    throw std::runtime_error("missing prerequisite: " + why + " requires a " + required_stage +
                             " checkpoint");
  checkpoint::Loaded loaded = checkpoint::load(path);
  if (loaded.stage != required_stage)
    throw std::runtime_error(path + " is a \"" + loaded.stage + "\" checkpoint, expected \"" +
                             required_stage + "\"");
  return std::move(loaded.net);
}

int run_gen_corpus(const std::string& out_dir, std::uint64_t seed, std::size_t utterances,
                   double seconds) {
  corpus::CorpusSpec spec = corpus::default_spec(seed);
  spec.utterances_per_speaker = utterances;
  spec.utterance_seconds = seconds;
  const std::string manifest = corpus::generate_corpus(spec, out_dir);
  std::cerr << "wrote " << manifest << "\n";
  return 0;
}

int run_train(int stage, const std::string& manifest, const std::string& out,
              const std::string& net1_path, const std::string& net2_path,
              const std::vector<std::string>& speakers, const std::string& utt_range,
              std::size_t phones_flag, bool warm_start, const NetFlags& nf,
              const TrainFlags& tf) {
  const dsp::DspConfig dspcfg;
  const corpus::Corpus c = corpus::load_manifest(manifest);
  if (speakers.empty()) throw std::runtime_error("--speakers is required for training");
  const auto utts = select_utterances(c, speakers, utt_range);

  pipeline::TrainedNetwork trained;
  std::string stage_tag;
  if (stage == 1) {
    const auto data = pipeline::load_labeled(c, utts, dspcfg);
    std::size_t phones = phones_flag;
    if (phones == 0) {
      int max_label = 0;
      for (const auto& u : data) {
        for (int l : u.labels) max_label = std::max(max_label, l);
      }
      phones = static_cast<std::size_t>(max_label) + 1;
    }
    neural::NetworkConfig cfg = nf.base();
    cfg.input_dim = dspcfg.mfcc_order;
    cfg.output_dim = phones;
    cfg.head_kind = neural::HeadKind::softmax;
    trained = pipeline::train_stage1(data, cfg, tf.stage());
    stage_tag = "net1";
  } else if (stage == 2) {
    auto net1 = load_stage_checkpoint(net1_path, "net1", "stage 2");
    neural::NetworkConfig cfg = nf.base();
    cfg.input_dim = net1->config().output_dim;
    cfg.output_dim = dspcfg.bins();
    cfg.head_kind = neural::HeadKind::mdn;
    trained = pipeline::train_stage2(*net1, load_waves(utts), cfg, tf.stage(), dspcfg);
    stage_tag = "net2";
  } else if (stage == 3) {
    auto net1 = load_stage_checkpoint(net1_path, "net1", "stage 3");
    auto net2 = load_stage_checkpoint(net2_path, "net2", "stage 3");
    const auto pairs =
        pipeline::synthesize_stage3_pairs(*net1, *net2, load_waves(utts), dspcfg);
    neural::NetworkConfig cfg = net2->config();
    cfg.input_dim = dspcfg.mfcc_order;
    trained = pipeline::train_stage3(pairs, cfg, tf.stage(), warm_start ? net2.get() : nullptr);
    stage_tag = "net3";
  } else {
    throw std::runtime_error("unknown stage " + std::to_string(stage));
  }

  checkpoint::save(out, *trained.net, stage_tag);
  write_loss_log(out + ".loss.txt", trained.log);
  std::cerr << "wrote " << out << " (" << trained.net->param_count() << " parameters)\n";
  return 0;
}

int run_convert(const std::string& mode, const std::vector<std::string>& models,
                const std::string& in_path, const std::string& out_path,
                std::size_t gl_iters) {
  dsp::DspConfig dspcfg;
  dspcfg.griffin_lim_iters = gl_iters;
  const Waveform w = read_wav(in_path);
  if (w.sample_rate != dspcfg.sample_rate)
    throw std::runtime_error(in_path + ": sample rate " + std::to_string(w.sample_rate) +
                             " does not match required " + std::to_string(dspcfg.sample_rate));
  pipeline::Conversion conv;
  if (mode == "direct") {
    if (models.size() != 1)
      throw std::runtime_error("direct mode takes exactly one --model (the net3 checkpoint)");
    auto net3 = load_stage_checkpoint(models[0], "net3", "direct conversion");
    conv = pipeline::convert(*net3, w, dspcfg);
  } else {
    if (models.size() != 2)
      throw std::runtime_error("cascade mode takes two --model flags (net1 then net2)");
    auto net1 = load_stage_checkpoint(models[0], "net1", "cascade conversion");
    auto net2 = load_stage_checkpoint(models[1], "net2", "cascade conversion");
    conv = pipeline::baseline_convert(*net1, *net2, w, dspcfg);
  }
  write_wav(out_path, conv.wav);
  std::cerr << "wrote " << out_path << "\n";
  return 0;
}

dsp::MfccSequence mfcc_of(const std::string& path, const dsp::DspConfig& dspcfg) {
  const Waveform w = read_wav(path);
  return dsp::mfcc(w, dspcfg);
}

int run_eval(const std::string& target, const std::string& converted, const std::string& pairs,
             const std::string& align, const std::string& out_path) {
  const dsp::DspConfig dspcfg;
  const eval::Align a = align == "dtw" ? eval::Align::dtw : eval::Align::frame;
  std::vector<std::pair<dsp::MfccSequence, dsp::MfccSequence>> batch;
  if (!pairs.empty()) {
    std::ifstream f(pairs);
    if (!f) throw std::runtime_error("cannot open " + pairs);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw std::runtime_error(pairs + ": line " + std::to_string(line_no) +
                                 ": expected target<TAB>converted");
      batch.emplace_back(mfcc_of(line.substr(0, tab), dspcfg),
                         mfcc_of(line.substr(tab + 1), dspcfg));
    }
  } else {
    if (target.empty() || converted.empty())
      throw std::runtime_error("eval needs --pairs or both --target and --converted");
    batch.emplace_back(mfcc_of(target, dspcfg), mfcc_of(converted, dspcfg));
  }
  const eval::McdReport report = eval::mcd_batch(batch, a);
  const std::string tsv = eval::format_tsv(report);
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    f << tsv;
  }
  std::cout << tsv;
  return 0;
}

int run_bench(const std::string& net1_path, const std::string& net2_path,
              const std::string& net3_path, std::size_t utterances, double seconds,
              std::size_t repeats, std::uint64_t seed, std::size_t phones, const NetFlags& nf,
              bool tsv, const std::string& out_path) {
  const dsp::DspConfig dspcfg;

  std::unique_ptr<neural::Network> net1, net2, net3;
  if (!net1_path.empty() || !net2_path.empty() || !net3_path.empty()) {
    net1 = load_stage_checkpoint(net1_path, "net1", "bench");
    net2 = load_stage_checkpoint(net2_path, "net2", "bench");
    net3 = load_stage_checkpoint(net3_path, "net3", "bench");
  } else {
    // untrained networks at matched structure; timing does not depend on
    // the parameter values
    neural::NetworkConfig c1 = nf.base();
    c1.input_dim = dspcfg.mfcc_order;
    c1.output_dim = phones;
    c1.head_kind = neural::HeadKind::softmax;
    neural::NetworkConfig c2 = nf.base();
    c2.input_dim = phones;
    c2.output_dim = dspcfg.bins();
    c2.head_kind = neural::HeadKind::mdn;
    neural::NetworkConfig c3 = nf.base();
    c3.input_dim = dspcfg.mfcc_order;
    c3.output_dim = dspcfg.bins();
    c3.head_kind = neural::HeadKind::mdn;
    net1 = std::make_unique<neural::Network>(c1, seed);
    net2 = std::make_unique<neural::Network>(c2, seed + 1);
    net3 = std::make_unique<neural::Network>(c3, seed + 2);
  }

  // synthetic timing material at the protocol shape (N utterances of S sec)
  corpus::CorpusSpec spec = corpus::default_spec(seed);
  spec.utterance_seconds = seconds;
  const std::size_t n_samples = static_cast<std::size_t>(seconds * spec.sample_rate);
  std::vector<Waveform> utts;
  for (std::size_t i = 0; i < utterances; ++i) {
    const auto segs = corpus::random_phone_sequence(spec, hash_combine(seed, i), n_samples);
    utts.push_back(corpus::render_utterance(spec, segs, spec.speakers[i % spec.speakers.size()],
                                            hash_combine(seed, 1000 + i)));
  }

  // per-utterance posteriors so the network-2 row times only its own pass
  std::map<const Waveform*, pipeline::PpgSequence> ppgs;
  for (const auto& w : utts) {
    ppgs[&w] = pipeline::compute_ppg(*net1, dsp::cmvn(dsp::mfcc(w, dspcfg)));
  }

  const auto direct = [&](const Waveform& w) {
    return pipeline::convert_spectrogram(*net3, w, dspcfg);
  };
  const auto cascade = [&](const Waveform& w) {
    return pipeline::baseline_convert_spectrogram(*net1, *net2, w, dspcfg);
  };
  const auto net1_only = [&](const Waveform& w) {
    const auto ppg = pipeline::compute_ppg(*net1, dsp::cmvn(dsp::mfcc(w, dspcfg)));
    dsp::Spectrogram s;  // recognizer emits posteriors, not magnitudes
    s.frames = ppg.frames;
    return s;
  };
  const auto net2_only = [&](const Waveform& w) {
    const auto& ppg = ppgs.at(&w);
    const Matrix raw = net2->forward(ppg.frames, neural::Mode::infer);
    const Matrix est = mdn::point_estimate(mdn::split_head(raw, net2->config().mdn_spec()));
    dsp::Spectrogram s;
    s.frames = pipeline::log_expand(est);
    s.fft_size = dspcfg.fft_size;
    return s;
  };

  const eval::BenchReport r3 = eval::bench_convert("network 3", direct, utts, repeats,
                                                   net3->param_count());
  const eval::BenchReport r1 = eval::bench_convert("network 1", net1_only, utts, repeats,
                                                   net1->param_count());
  const eval::BenchReport r2 = eval::bench_convert("network 2", net2_only, utts, repeats,
                                                   net2->param_count());
  eval::BenchReport rc = eval::bench_convert("baseline (network 1+2)", cascade, utts, repeats,
                                             net1->param_count() + net2->param_count());

  const std::string table = eval::format_summary_table(r1, r2, r3, rc);
  std::cout << table;
  if (tsv) std::cout << eval::format_tsv({r1, r2, r3, rc});
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    f << eval::format_tsv({r1, r2, r3, rc});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voice conversion toolkit: cascaded PPG baseline and distilled direct network"};
  app.require_subcommand(1);
  app.set_config("--config");

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic phone-labeled corpus");
  std::string gen_out;
  std::uint64_t gen_seed = 1;
  std::size_t gen_utts = 20;
  double gen_seconds = 2.0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "corpus seed");
  gen->add_option("--utterances", gen_utts, "utterances per speaker");
  gen->add_option("--seconds", gen_seconds, "utterance length in seconds");

  // train
  auto* train = app.add_subcommand("train", "run one training stage");
  int stage = 0;
  std::string manifest, train_out, net1_path, net2_path, speakers_csv, utt_range;
  std::size_t phones_flag = 0;
  bool warm_start = false;
  NetFlags train_nf;
  TrainFlags train_tf;
  train->add_option("--stage", stage, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
  train->add_option("--manifest", manifest, "corpus manifest")->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();
  train->add_option("--net1", net1_path, "stage-1 checkpoint (stages 2 and 3)");
  train->add_option("--net2", net2_path, "stage-2 checkpoint (stage 3)");
  train->add_option("--speakers", speakers_csv, "comma-separated speaker ids to train on")
      ->required();
  train->add_option("--utts", utt_range, "per-speaker utterance index range A:B");
  train->add_option("--phones", phones_flag, "phone set size (stage 1; 0 = infer from labels)");
  train->add_flag("--warm-start", warm_start, "initialize net3 from net2 where shapes match");
  train_nf.attach(train);
  train_tf.attach(train);

  // convert
  auto* convert = app.add_subcommand("convert", "convert one utterance");
  std::string mode, conv_in, conv_out;
  std::vector<std::string> models;
  std::size_t gl_iters = 60;
  convert->add_option("--mode", mode, "direct or cascade")
      ->required()
      ->check(CLI::IsMember({"direct", "cascade"}));
  convert->add_option("--model", models, "checkpoint path (repeat for cascade: net1 net2)")
      ->required();
  convert->add_option("--in", conv_in, "input wav")->required();
  convert->add_option("--out", conv_out, "output wav")->required();
  convert->add_option("--gl-iters", gl_iters, "Griffin-Lim iterations");

  // eval
  auto* evalc = app.add_subcommand("eval", "mel-cepstral distortion between recordings");
  std::string eval_target, eval_converted, eval_pairs, eval_align = "frame", eval_out;
  evalc->add_option("--target", eval_target, "target wav");
  evalc->add_option("--converted", eval_converted, "converted wav");
  evalc->add_option("--pairs", eval_pairs, "TSV of target<TAB>converted wav paths");
  evalc->add_option("--align", eval_align, "frame or dtw")
      ->check(CLI::IsMember({"frame", "dtw"}));
  evalc->add_option("--out", eval_out, "also write the report here");

  // bench
  auto* bench = app.add_subcommand("bench", "conversion-time and parameter comparison");
  std::string b_net1, b_net2, b_net3, bench_out;
  std::size_t b_utts = 30, b_repeats = 3, b_phones = 8;
  double b_seconds = 2.0;
  std::uint64_t b_seed = 1;
  bool b_tsv = false;
  NetFlags bench_nf;
  bench->add_option("--net1", b_net1, "stage-1 checkpoint (otherwise untrained nets are built)");
  bench->add_option("--net2", b_net2, "stage-2 checkpoint");
  bench->add_option("--net3", b_net3, "stage-3 checkpoint");
  bench->add_option("--utterances", b_utts, "number of timing utterances");
  bench->add_option("--seconds", b_seconds, "seconds per utterance");
  bench->add_option("--repeats", b_repeats, "timing repeats (minimum is reported)");
  bench->add_option("--seed", b_seed, "seed for synthetic timing material");
  bench->add_option("--phones", b_phones, "phone set size for the recognizer head");
  bench->add_flag("--tsv", b_tsv, "also print structured records");
  bench->add_option("--out", bench_out, "write structured records here");
  bench_nf.attach(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage errors have a stable exit code
  }

  try {
    if (gen->parsed()) return run_gen_corpus(gen_out, gen_seed, gen_utts, gen_seconds);
    if (train->parsed())
      return run_train(stage, manifest, train_out, net1_path, net2_path,
                       split_csv(speakers_csv), utt_range, phones_flag, warm_start, train_nf,
                       train_tf);
    if (convert->parsed()) return run_convert(mode, models, conv_in, conv_out, gl_iters);
    if (evalc->parsed())
      return run_eval(eval_target, eval_converted, eval_pairs, eval_align, eval_out);
    if (bench->parsed())
      return run_bench(b_net1, b_net2, b_net3, b_utts, b_seconds, b_repeats, b_seed, b_phones,
                       bench_nf, b_tsv, bench_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
