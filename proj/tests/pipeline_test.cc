// tests/pipeline_test.cc

// Copyright 2026 The pfusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <sstream>

#include <doctest.h>

#include "pfusion/pipeline.h"
#include "test-util.h"

namespace pfusion {
namespace {

using testing::RandomFrames;
using testing::TempDir;

std::string ErrorName(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.name();
  }
  return "";
}

ErrorKind KindOf(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::kUsage;
}

// Payload bytes of a PGM1 file (everything after the header).
std::string Payload(const fs::path &path) {
  const std::string bytes = testing::Slurp(path);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  return bytes.substr(8 + len);
}

double FindCellWeight(const MatrixResult &m, const std::string &key) {
  for (const auto &c : m.cells)
    if (c.key == key) return c.weights.target_weight;
  return -1;
}

TEST_CASE("exit codes") {
  CHECK(ExitCode(ErrorKind::kUsage) == 2);
  CHECK(ExitCode(ErrorKind::kValidation) == 3);
  CHECK(ExitCode(ErrorKind::kIo) == 4);
  CHECK(ExitCode(ErrorKind::kNumerical) == 5);
}

TEST_CASE("resolve weights") {
  FuseOptions o;
  o.inputs = {"a.pgm", "b.pgm"};
  o.mode = FusionMode::kCrossLingual;
  CHECK(ErrorName([&] { ResolveWeights(o); }) == "missing-weights");

  o.weights = std::vector<double>{0.25, 0.75};
  WeightVector w = ResolveWeights(o);
  CHECK(w.sources[0].lang == "a");
  CHECK(w.sources[1].weight == 0.75);

  o.weights = std::vector<double>{0.0, 0.25, 0.75};
  CHECK(ResolveWeights(o).target_weight == 0.0);
  o.weights = std::vector<double>{0.1, 0.25, 0.65};
  CHECK(ErrorName([&] { ResolveWeights(o); }) == "mode-violation");
  o.weights = std::vector<double>{1.0};
  CHECK(ErrorName([&] { ResolveWeights(o); }) == "source-count-mismatch");

  o.weights = std::vector<double>{0.5, 0.5};
  o.derive = true;
  CHECK(ErrorName([&] { ResolveWeights(o); }) == "conflicting-flags");
  CHECK(KindOf([&] { ResolveWeights(o); }) == ErrorKind::kUsage);

  FuseOptions m;
  m.mode = FusionMode::kMultilingual;
  m.inputs = {"a.pgm"};
  m.weights = std::vector<double>{0.4, 0.6};
  CHECK(ErrorName([&] { ResolveWeights(m); }) == "conflicting-flags");
  m.target = fs::path("t.pgm");
  w = ResolveWeights(m);
  CHECK(w.target_weight == 0.4);
  m.weights = std::vector<double>{1.0};
  CHECK(ErrorName([&] { ResolveWeights(m); }) == "source-count-mismatch");
}

TEST_CASE("derived weights follow the similarity table order") {
  TempDir dir("resolve");
  WriteSimilarityTableFile({{"x", 1.0, 0.5}, {"y", 2.0, 0.5}}, dir / "sim.txt");
  FuseOptions o;
  o.inputs = {"p.pgm", "q.pgm"};
  o.derive = true;
  o.tau = 1.0;
  o.sim_table = dir / "sim.txt";
  const WeightVector w = ResolveWeights(o);
  CHECK(w.sources[0].lang == "x");
  CHECK(w.sources[0].weight > w.sources[1].weight);
  o.inputs.push_back("r.pgm");
  CHECK(ErrorName([&] { ResolveWeights(o); }) == "source-count-mismatch");
}

TEST_CASE("fuse with a single unit weight copies the payload") {
  TempDir dir("fuse1");
  Rng rng(3);
  WritePosteriorgramFile(Posteriorgram("u1", "tgt", RandomFrames(rng, 13, 5)),
                         dir / "in.pgm");
  FuseOptions o;
  o.inputs = {dir / "in.pgm"};
  o.weights = std::vector<double>{1.0};
  o.output = dir / "out.pgm";
  CmdFuse(o);
  CHECK(Payload(dir / "out.pgm") == Payload(dir / "in.pgm"));
}

TEST_CASE("eval of a hypothesis against itself") {
  TempDir dir("eval");
  Rng rng(4);
  const ClassInventory inv("tgt", {"sil", "a", "b", "c", "a"}, "sil");
  WriteInventoryFile(inv, dir / "inv.txt");
  FrameMatrix m = RandomFrames(rng, 40, 5);
  WritePosteriorgramFile(Posteriorgram("u1", "tgt", m), dir / "h/u1.pgm");
  WritePosteriorgramFile(Posteriorgram("u2", "tgt", RandomFrames(rng, 30, 5)),
                         dir / "h/u2.pgm");
  EvalOptions o;
  o.hypothesis = dir / "h";
  o.reference = dir / "h";
  o.inventory = dir / "inv.txt";
  o.topn = {1, 2};
  const EvalReport r = CmdEval(o);
  CHECK(r.frames == 70);
  CHECK(r.top_n.at(1) == 1.0);
  CHECK(r.per == 0.0);
  CHECK(FormatReport(r).find("top1=1.000000\nper") == std::string::npos);
  CHECK(FormatReport(r).find("top1=1.000000\n") != std::string::npos);
  CHECK(FormatReport(r).find("per=0.000000\n") != std::string::npos);

  o.labels = dir / "labels";
  CHECK(ErrorName([&] { CmdEval(o); }) == "conflicting-flags");
}

TEST_CASE("commands leave no partial output on validation failure") {
  TempDir dir("partial");
  Rng rng(5);
  WritePosteriorgramFile(Posteriorgram("u1", "tgt", RandomFrames(rng, 10, 4)),
                         dir / "a/u1.pgm");
  WritePosteriorgramFile(Posteriorgram("u2", "tgt", RandomFrames(rng, 10, 4)),
                         dir / "a/u2.pgm");
  WritePosteriorgramFile(Posteriorgram("u1", "tgt", RandomFrames(rng, 10, 4)),
                         dir / "b/u1.pgm");
  // u2 of input b has the wrong frame count.
  WritePosteriorgramFile(Posteriorgram("u2", "tgt", RandomFrames(rng, 9, 4)),
                         dir / "b/u2.pgm");
  FuseOptions o;
  o.inputs = {dir / "a", dir / "b"};
  o.weights = std::vector<double>{0.5, 0.5};
  o.output = dir / "fused";
  CHECK(ErrorName([&] { CmdFuse(o); }) == "align-mismatch");
  CHECK_FALSE(fs::exists(dir / "fused"));

  // Corrupt row in the last file of a directory.
  {
    std::ofstream os(dir / "a/u3.pgm", std::ios::binary);
    std::string bytes = testing::Slurp(dir / "a/u1.pgm");
    bytes[bytes.size() - 2] = 0x7f;  // huge float in the last entry
    os << bytes;
  }
  MappingNetwork net("tgt", "out", 4, {4, 4, 4}, 3);
  net.Initialize(1);
  SaveNetworkFile(net, dir / "net.mnw");
  CHECK(KindOf([&] { CmdMap(dir / "net.mnw", dir / "a", dir / "mapped"); }) ==
        ErrorKind::kValidation);
  CHECK_FALSE(fs::exists(dir / "mapped"));
}

TEST_CASE("train-map pairs utterances by id") {
  TempDir dir("train");
  Rng rng(6);
  for (const char *id : {"u1", "u2"}) {
    WritePosteriorgramFile(Posteriorgram(id, "s", RandomFrames(rng, 12, 3)),
                           dir / "s" / (std::string(id) + ".pgm"));
    WritePosteriorgramFile(Posteriorgram(id, "t", RandomFrames(rng, 12, 4)),
                           dir / "t" / (std::string(id) + ".pgm"));
  }
  WritePosteriorgramFile(Posteriorgram("u9", "t", RandomFrames(rng, 12, 4)),
                         dir / "t2/u9.pgm");
  TrainMapOptions o;
  o.source = dir / "s";
  o.target = dir / "t";
  o.dev_source = dir / "s/u1.pgm";
  o.dev_target = dir / "t/u1.pgm";
  o.training.hidden = {4, 4, 4};
  o.training.max_epochs = 2;
  o.output = dir / "net.mnw";
  o.trace = dir / "trace.csv";
  const TrainResult r = CmdTrainMap(o);
  CHECK(r.trace.epochs.size() == 2);
  CHECK(LoadNetworkFile(dir / "net.mnw").target_dim() == 4);
  const std::string trace = testing::Slurp(dir / "trace.csv");
  CHECK(trace.rfind("epoch,train_kl,dev_kl,dev_top1\n", 0) == 0);

  o.dev_target = dir / "t2/u9.pgm";
  o.output = dir / "net2.mnw";
  CHECK(ErrorName([&] { CmdTrainMap(o); }) == "align-mismatch");
  CHECK_FALSE(fs::exists(dir / "net2.mnw"));
}

TEST_CASE("gen-synth refuses to overwrite a corpus") {
  TempDir dir("gen");
  SynthConfig cfg = DefaultSynthConfig(1);
  cfg.splits = {{"eval", 1}};
  CmdGenSynth(cfg, dir / "c");
  CHECK(ErrorName([&] { CmdGenSynth(cfg, dir / "c"); }) == "output-exists");
}

TEST_CASE("pipeline config parsing and validation") {
  const PipelineConfig cfg = PipelineConfigFromJson(
      R"({"name": "e1", "corpus": "c", "output": "/abs/out", "target": "beta",
          "sources": ["alpha", "gamma"],
          "synth": {"preset": "default", "seed": 3},
          "training": {"max_epochs": 4, "hidden": [16, 16, 8], "seed": 9},
          "weights": {"tau": 0.5, "target_share": 0.4},
          "topn": [1, 3]})",
      "/base");
  CHECK(cfg.name == "e1");
  CHECK(cfg.corpus == fs::path("/base/c"));
  CHECK(cfg.output == fs::path("/abs/out"));
  CHECK(cfg.training.max_epochs == 4);
  CHECK(cfg.training.hidden == HiddenDims{16, 16, 8});
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.target_share == 0.4);
  CHECK(cfg.topn == std::vector<int>{1, 3});
  REQUIRE(cfg.synth.has_value());
  CHECK(cfg.synth->seed == 3);

  auto parse = [](const std::string &text) {
    return [text] { PipelineConfigFromJson(text, "/b"); };
  };
  CHECK(ErrorName(parse(R"({"corpus": "c", "output": "o", "target": "a", "sources": []})")) ==
        "invalid-config");
  CHECK(ErrorName(parse(R"({"corpus": "c", "output": "o", "target": "a", "sources": ["a"]})")) ==
        "invalid-config");
  CHECK(ErrorName(parse(R"({"corpus": "c", "output": "c", "target": "a", "sources": ["b"]})")) ==
        "invalid-config");
  CHECK(ErrorName(parse(R"({"corpus": "c", "output": "o", "target": "a", "sources": ["b", "b"]})")) ==
        "invalid-config");
  CHECK(ErrorName(parse("{not json")) == "invalid-config");
}

TEST_CASE("run matrix covers every source subset") {
  TempDir dir("matrix");
  PipelineConfig cfg;
  cfg.corpus = dir / "corpus";
  cfg.output = dir / "out";
  SynthConfig synth = DefaultSynthConfig(2);
  synth.splits = {{"train", 12}, {"dev", 3}, {"eval", 4}};
  cfg.synth = synth;
  cfg.target = "delta";
  cfg.sources = {"alpha", "beta", "gamma"};
  cfg.training.hidden = {16, 16, 16};
  cfg.training.max_epochs = 2;
  const MatrixResult m = CmdRunMatrix(cfg);
  std::vector<std::string> keys;
  for (const auto &c : m.cells) keys.push_back(c.key);
  CHECK(keys == std::vector<std::string>{"mono", "multi-mf", "cross-mf",
                                         "cross-alpha+beta", "cross-alpha+gamma",
                                         "cross-beta+gamma", "cross-alpha",
                                         "cross-beta", "cross-gamma"});
  CHECK(m.similarity.size() == 3);
  for (const auto &c : m.cells) {
    if (c.key == "mono") continue;
    CHECK(ValidateWeights(c.weights).ok);
    CHECK(fs::exists(cfg.output / "cells" / c.key / "weights.txt"));
  }
  CHECK(FindCellWeight(m, "multi-mf") == 0.5);

  std::ostringstream table, csv;
  WriteMatrixTable(m, table);
  WriteMatrixCsv(m, csv);
  CHECK(table.str().find("cross-alpha+gamma") != std::string::npos);
  CHECK(csv.str().rfind("setting,mode,target,alpha,beta,gamma,frames", 0) == 0);
  CHECK(testing::Slurp(cfg.output / "results.csv") == csv.str());

  // Existing corpus is reused as is.
  PipelineConfig again = cfg;
  again.output = dir / "out2";
  CmdRunMatrix(again);
  CHECK(testing::Slurp(again.output / "results.csv") == csv.str());
}

}  // namespace
}  // namespace pfusion
