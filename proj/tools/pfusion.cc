// tools/pfusion.cc

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

// pfusion: synthesize posteriorgram corpora, train mapping networks, map,
// fuse and evaluate.
//
//   pfusion gen-synth --preset default --out corpus
//   pfusion train-map --source corpus/alpha/train --target corpus/beta/train
//       --dev-source corpus/alpha/dev --dev-target corpus/beta/dev
//       --out alpha-beta.mnw
//   pfusion map --net alpha-beta.mnw --in corpus/alpha/eval --out mapped/alpha
//   pfusion fuse --mode cross --in mapped/alpha --in mapped/gamma
//       --weights 0.5,0.5 --out fused
//   pfusion eval --hyp fused --labels corpus/labels/beta/eval
//       --inventory corpus/beta/inventory.txt
//   pfusion run-matrix --config experiment.json

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pfusion/pipeline.h"

namespace {

using namespace pfusion;

struct Globals {
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void PrintError(std::string_view name, std::string_view kind,
                std::string message) {
  for (char &c : message)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "error=" << name << " kind=" << kind << " message=" << message
            << std::endl;
}

std::vector<double> ParseWeightList(const std::string &text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    out.push_back(ParseExact(std::string_view(text).substr(pos, end - pos),
                             "bad-weights"));
    pos = end + 1;
  }
  return out;
}

HiddenDims ParseHidden(const std::string &text) {
  HiddenDims h{};
  std::size_t pos = 0;
  for (int i = 0; i < kNumHiddenLayers; ++i) {
    std::size_t end = text.find(',', pos);
    if ((end == std::string::npos) != (i == kNumHiddenLayers - 1))
      ThrowUsage("bad-hidden", "--hidden needs three comma-separated widths");
    if (end == std::string::npos) end = text.size();
    try {
      h[i] = std::stoi(text.substr(pos, end - pos));
    } catch (const std::exception &) {
      ThrowUsage("bad-hidden", "bad width in '" + text + "'");
    }
    pos = end + 1;
  }
  return h;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"posteriorgram mapping and fusion toolkit", "pfusion"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed_value = 0;
  auto *seed_opt =
      app.add_option("--seed", seed_value, "seed for all randomness");
  app.add_flag("--verbose", g.verbose, "progress on stderr");

  // gen-synth
  auto *gen = app.add_subcommand("gen-synth", "write a synthetic corpus");
  std::string gen_config, gen_preset, gen_out;
  auto *gen_cfg_opt = gen->add_option("--config", gen_config, "JSON config");
  auto *gen_preset_opt =
      gen->add_option("--preset", gen_preset, "default|confusable|graded");
  gen_cfg_opt->excludes(gen_preset_opt);
  gen->add_option("--out", gen_out, "output directory")->required();

  // train-map
  auto *train = app.add_subcommand("train-map", "train a mapping network");
  TrainMapOptions tm;
  std::string tm_out, tm_trace, tm_hidden;
  train->add_option("--source", tm.source, "source train pgm(s)")->required();
  train->add_option("--target", tm.target, "target train pgm(s)")->required();
  train->add_option("--dev-source", tm.dev_source)->required();
  train->add_option("--dev-target", tm.dev_target)->required();
  train->add_option("--out", tm_out, "MNW1 output")->required();
  train->add_option("--trace", tm_trace, "per-epoch CSV output");
  train->add_option("--epochs", tm.training.max_epochs);
  train->add_option("--batch-size", tm.training.batch_size);
  train->add_option("--lr", tm.training.learning_rate);
  train->add_option("--momentum", tm.training.momentum);
  train->add_option("--patience", tm.training.patience);
  train->add_option("--hidden", tm_hidden, "h1,h2,h3");

  // map
  auto *map = app.add_subcommand("map", "apply a mapping network");
  std::string map_net, map_in, map_out;
  map->add_option("--net", map_net)->required();
  map->add_option("--in", map_in)->required();
  map->add_option("--out", map_out)->required();

  // fuse
  auto *fuse = app.add_subcommand("fuse", "fuse posteriorgrams");
  FuseOptions fo;
  std::string fo_mode, fo_target, fo_weights, fo_weights_file, fo_sim, fo_out;
  std::vector<std::string> fo_inputs;
  fuse->add_option("--mode", fo_mode, "multi|cross")->required();
  fuse->add_option("--target", fo_target, "target model pgm(s), multi only");
  fuse->add_option("--in", fo_inputs, "mapped pgm(s), one per source")
      ->required();
  fuse->add_option("--weights", fo_weights, "[w_T,]w_1,...,w_K");
  fuse->add_option("--weights-file", fo_weights_file);
  fuse->add_flag("--derive-weights", fo.derive);
  fuse->add_option("--tau", fo.tau);
  fuse->add_option("--target-share", fo.target_share);
  fuse->add_option("--sim-table", fo_sim);
  fuse->add_option("--out", fo_out)->required();

  // eval
  auto *eval = app.add_subcommand("eval", "score posteriorgrams");
  EvalOptions eo;
  std::string eo_ref, eo_labels, eo_topn = "1,2,5,10", eo_out;
  eval->add_option("--hyp", eo.hypothesis)->required();
  eval->add_option("--ref", eo_ref, "reference pgm(s)");
  eval->add_option("--labels", eo_labels, "reference label file(s)");
  eval->add_option("--inventory", eo.inventory)->required();
  eval->add_option("--topn", eo_topn);
  eval->add_option("--out", eo_out, "also write the report here");

  // run-matrix
  auto *matrix = app.add_subcommand("run-matrix", "run every fusion setting");
  std::string mx_config;
  matrix->add_option("--config", mx_config, "JSON experiment")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    PrintError("bad-arguments", "usage", e.what());
    return 2;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (*gen) {
      if (gen_config.empty() == gen_preset.empty())
        ThrowUsage("conflicting-flags", "give exactly one of --config, --preset");
      SynthConfig cfg = gen_config.empty()
                            ? PresetSynthConfig(gen_preset, g.seed.value_or(1))
                            : ReadSynthConfigFile(gen_config);
      if (g.seed) cfg.seed = *g.seed;
      const SynthCorpus corpus = CmdGenSynth(cfg, gen_out);
      if (g.verbose)
        std::cerr << "wrote " << corpus.utterances.size() << " utterances x "
                  << cfg.languages.size() << " languages to " << gen_out
                  << '\n';
    } else if (*train) {
      if (g.seed) tm.training.seed = *g.seed;
      if (!tm_hidden.empty()) tm.training.hidden = ParseHidden(tm_hidden);
      tm.output = tm_out;
      if (!tm_trace.empty()) tm.trace = fs::path(tm_trace);
      const TrainResult r = CmdTrainMap(tm);
      if (g.verbose) WriteTraceCsv(r.trace, std::cerr);
    } else if (*map) {
      CmdMap(map_net, map_in, map_out);
    } else if (*fuse) {
      fo.mode = ParseMode(fo_mode);
      if (!fo_target.empty()) fo.target = fs::path(fo_target);
      for (const auto &in : fo_inputs) fo.inputs.emplace_back(in);
      if (!fo_weights.empty()) fo.weights = ParseWeightList(fo_weights);
      if (!fo_weights_file.empty()) fo.weights_file = fs::path(fo_weights_file);
      if (!fo_sim.empty()) {
        if (!fo.derive)
          ThrowUsage("conflicting-flags", "--sim-table needs --derive-weights");
        fo.sim_table = fs::path(fo_sim);
      }
      fo.output = fo_out;
      const WeightVector w = CmdFuse(fo);
      if (g.verbose) WriteWeights(w, std::cerr);
    } else if (*eval) {
      if (!eo_ref.empty()) eo.reference = fs::path(eo_ref);
      if (!eo_labels.empty()) eo.labels = fs::path(eo_labels);
      eo.topn = ParseTopN(eo_topn);
      const EvalReport report = CmdEval(eo);
      if (!eo_out.empty()) {
        std::ofstream os(eo_out, std::ios::binary);
        if (!os) ThrowIo("write-failed", "cannot open '" + eo_out + "'");
        WriteReport(report, os);
      }
      WriteReport(report, std::cout);
    } else if (*matrix) {
      PipelineConfig cfg = ReadPipelineConfig(mx_config);
      if (g.seed) {
        cfg.training.seed = *g.seed;
        if (cfg.synth) cfg.synth->seed = *g.seed;
      }
      const MatrixResult result = CmdRunMatrix(cfg);
      WriteMatrixTable(result, std::cout);
    }
  } catch (const Error &e) {
    std::string message = e.what();
    const std::string prefix = e.name() + ": ";
    if (message.rfind(prefix, 0) == 0) message.erase(0, prefix.size());
    PrintError(e.name(), KindName(e.kind()), message);
    return ExitCode(e.kind());
  } catch (const std::filesystem::filesystem_error &e) {
    PrintError("filesystem", "io", e.what());
    return ExitCode(ErrorKind::kIo);
  } catch (const std::exception &e) {
    PrintError("internal", "internal", e.what());
    return 1;
  }
  return 0;
}
