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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "vconv/checkpoint.hpp"
#include "vconv/corpus.hpp"

using namespace vconv;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(VCONV_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult res;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) res.output.append(buf, n);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kTinyNet =
    " --units 8 --bank-k 2 --highway-layers 2 --gru-units 8 --mixtures 2";
const std::string kTinyTrain =
    " --epochs 2 --segment-frames 60 --batch-segments 2 --lr 1e-3 --seed 3";

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("gen-corpus").exit_code == 2);           // missing --out
  CHECK(run_cli("no-such-subcommand").exit_code == 2);
  CHECK(run_cli("convert --mode sideways --model a --in b --out c").exit_code == 2);
}

TEST_CASE("help exits cleanly") {
  const auto res = run_cli("--help");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("gen-corpus") != std::string::npos);
}

TEST_CASE("gen-corpus is idempotent byte for byte") {
  const auto dir_a = fresh_dir("vconv_cli_gen_a");
  const auto dir_b = fresh_dir("vconv_cli_gen_b");
  const std::string flags = " --seed 7 --utterances 2 --seconds 0.6";
  CHECK(run_cli("gen-corpus --out " + dir_a.string() + flags).exit_code == 0);
  CHECK(run_cli("gen-corpus --out " + dir_b.string() + flags).exit_code == 0);
  CHECK(read_bytes((dir_a / "manifest.tsv").string()) ==
        read_bytes((dir_b / "manifest.tsv").string()));
  CHECK(read_bytes((dir_a / "wav" / "spk0_u000.wav").string()) ==
        read_bytes((dir_b / "wav" / "spk0_u000.wav").string()));
  CHECK(read_bytes((dir_a / "labels" / "spk5_u001.lab").string()) ==
        read_bytes((dir_b / "labels" / "spk5_u001.lab").string()));
}

TEST_CASE("the full training chain runs end to end with stable prerequisites") {
  const auto dir = fresh_dir("vconv_cli_chain");
  const std::string manifest = (dir / "manifest.tsv").string();
  REQUIRE(run_cli("gen-corpus --out " + dir.string() + " --seed 5 --utterances 2 --seconds 0.6")
              .exit_code == 0);

  // stage 3 without prerequisites fails with exit 1 and names the stage
  const auto missing = run_cli("train --stage 3 --manifest " + manifest +
                               " --out " + (dir / "net3.ckpt").string() +
                               " --speakers spk0" + kTinyNet + kTinyTrain);
  CHECK(missing.exit_code == 1);
  CHECK(missing.output.find("net1") != std::string::npos);

  // stage 1, twice, identical bytes
  const std::string s1 = "train --stage 1 --manifest " + manifest + " --speakers spk0,spk1" +
                         kTinyNet + kTinyTrain;
  REQUIRE(run_cli(s1 + " --out " + (dir / "net1.ckpt").string()).exit_code == 0);
  REQUIRE(run_cli(s1 + " --out " + (dir / "net1_again.ckpt").string()).exit_code == 0);
  CHECK(read_bytes((dir / "net1.ckpt").string()) ==
        read_bytes((dir / "net1_again.ckpt").string()));
  CHECK(fs::exists(dir / "net1.ckpt.loss.txt"));

  // stage 2 with the wrong checkpoint tag fails
  const auto wrong_tag = run_cli("train --stage 2 --manifest " + manifest + " --out " +
                                 (dir / "net2.ckpt").string() + " --net1 " +
                                 (dir / "net1.ckpt").string() + " --speakers spk5" + kTinyNet +
                                 kTinyTrain);
  REQUIRE(wrong_tag.exit_code == 0);

  const auto mislabeled = run_cli("train --stage 3 --manifest " + manifest + " --out " +
                                  (dir / "net3.ckpt").string() + " --net1 " +
                                  (dir / "net2.ckpt").string() + " --net2 " +
                                  (dir / "net2.ckpt").string() + " --speakers spk0" + kTinyNet +
                                  kTinyTrain);
  CHECK(mislabeled.exit_code == 1);
  CHECK(mislabeled.output.find("net1") != std::string::npos);

  // stage 3 proper
  REQUIRE(run_cli("train --stage 3 --manifest " + manifest + " --out " +
                  (dir / "net3.ckpt").string() + " --net1 " + (dir / "net1.ckpt").string() +
                  " --net2 " + (dir / "net2.ckpt").string() + " --speakers spk0,spk1" +
                  kTinyNet + kTinyTrain)
            .exit_code == 0);

  // checkpoints survive a load/save round trip through the library
  const checkpoint::Loaded net3 = checkpoint::load((dir / "net3.ckpt").string());
  CHECK(net3.stage == "net3");
  CHECK(checkpoint::serialize(*net3.net, net3.stage) == read_bytes((dir / "net3.ckpt").string()));

  // conversion: direct needs one model, cascade two, outputs deterministic
  const std::string in_wav = (dir / "wav" / "spk4_u000.wav").string();
  const std::string direct = "convert --mode direct --model " + (dir / "net3.ckpt").string() +
                             " --in " + in_wav + " --gl-iters 3 --out ";
  REQUIRE(run_cli(direct + (dir / "out1.wav").string()).exit_code == 0);
  REQUIRE(run_cli(direct + (dir / "out2.wav").string()).exit_code == 0);
  CHECK(read_bytes((dir / "out1.wav").string()) == read_bytes((dir / "out2.wav").string()));

  CHECK(run_cli("convert --mode direct --model " + (dir / "net1.ckpt").string() + " --model " +
                (dir / "net2.ckpt").string() + " --in " + in_wav + " --out " +
                (dir / "bad.wav").string())
            .exit_code == 1);

  REQUIRE(run_cli("convert --mode cascade --model " + (dir / "net1.ckpt").string() +
                  " --model " + (dir / "net2.ckpt").string() + " --in " + in_wav +
                  " --gl-iters 3 --out " + (dir / "casc.wav").string())
              .exit_code == 0);

  // the converted file is PCM16 mono 16 kHz and readable back
  const Waveform out = read_wav((dir / "out1.wav").string());
  CHECK(out.sample_rate == 16000);
  CHECK(!out.samples.empty());

  // eval on identical files reports zero distortion
  const auto ev = run_cli("eval --target " + in_wav + " --converted " + in_wav);
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("mean\t0") != std::string::npos);
}

TEST_CASE("bench prints the comparison table at the protocol shape") {
  const auto res = run_cli(
      "bench --utterances 2 --seconds 0.6 --repeats 1 --phones 4" + kTinyNet);
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("network 1") != std::string::npos);
  CHECK(res.output.find("baseline (network 1+2)") != std::string::npos);
  CHECK(res.output.find("proposed (network 3)") != std::string::npos);
  CHECK(res.output.find("relative reduction (%)") != std::string::npos);
}
