// pfusion/pipeline.h

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

/** @file
 * The command layer behind the `pfusion` tool. Each command loads and
 * validates all of its inputs before it creates any output file.
 *
 * Wherever a command takes a posteriorgram "path", a directory is accepted
 * as well; its *.pgm files are processed in file-name order and outputs are
 * written under the same names into the output directory.
 */

#ifndef PFUSION_PIPELINE_H_
#define PFUSION_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pfusion/fusion.h"
#include "pfusion/mapping-net.h"
#include "pfusion/metrics.h"
#include "pfusion/synth.h"

namespace pfusion {

namespace fs = std::filesystem;

/// Process exit status for an error kind.
int ExitCode(ErrorKind kind);
std::string_view KindName(ErrorKind kind);

/// A single .pgm file, or every .pgm in a directory sorted by file name.
std::vector<fs::path> ListPosteriorgrams(const fs::path &path);
std::vector<Posteriorgram> LoadPosteriorgrams(const fs::path &path);

/// Writes the corpus; refuses to overwrite an existing manifest.
SynthCorpus CmdGenSynth(const SynthConfig &cfg, const fs::path &out_dir);

struct TrainMapOptions {
  fs::path source;      // train split, source language
  fs::path target;      // train split, target language
  fs::path dev_source;
  fs::path dev_target;
  TrainingConfig training;
  fs::path output;      // MNW1 file
  std::optional<fs::path> trace;  // CSV
};

/// Pairs source and target utterances by utterance id.
TrainResult CmdTrainMap(const TrainMapOptions &opt);

void WriteTraceCsv(const TrainingTrace &trace, std::ostream &os);

void CmdMap(const fs::path &network, const fs::path &input,
            const fs::path &output);

struct FuseOptions {
  FusionMode mode = FusionMode::kCrossLingual;
  std::optional<fs::path> target;  // multilingual only
  std::vector<fs::path> inputs;    // mapped posteriorgrams, one per source
  std::optional<std::vector<double>> weights;  // [w_T,] w_1..w_K
  std::optional<fs::path> weights_file;
  bool derive = false;
  double tau = kDefaultTemperature;
  double target_share = kDefaultTargetShare;
  std::optional<fs::path> sim_table;  // rows in input order
  fs::path output;
};

/// Resolves the weight vector a fuse invocation would use.
/// Errors: conflicting-flags, missing-weights, source-count-mismatch.
WeightVector ResolveWeights(const FuseOptions &opt);
WeightVector CmdFuse(const FuseOptions &opt);

struct EvalOptions {
  fs::path hypothesis;
  std::optional<fs::path> reference;  // posteriorgram(s)
  std::optional<fs::path> labels;     // label file(s)
  fs::path inventory;
  std::vector<int> topn = kDefaultTopN;
};

EvalReport CmdEval(const EvalOptions &opt);

struct PipelineConfig {
  std::string name = "experiment";
  fs::path corpus;
  std::optional<SynthConfig> synth;  // generate the corpus if missing
  std::string target;
  std::vector<std::string> sources;
  TrainingConfig training;
  double tau = kDefaultTemperature;
  double target_share = kDefaultTargetShare;
  std::vector<int> topn = kDefaultTopN;
  fs::path output;

  /// Throws invalid-config.
  void Validate() const;
};

/// JSON; relative paths resolve against the config file's directory.
PipelineConfig ReadPipelineConfig(const fs::path &path);
PipelineConfig PipelineConfigFromJson(const std::string &text,
                                      const fs::path &base_dir);

struct MatrixCell {
  std::string key;      // "mono", "multi-mf", "cross-mf", "cross-<a>+<b>"
  FusionMode mode = FusionMode::kCrossLingual;
  bool uses_target = false;
  std::vector<std::string> sources;
  WeightVector weights;
  EvalReport report;
};

struct MatrixResult {
  std::string target;
  std::vector<std::string> sources;
  SimilarityTable similarity;
  std::vector<MatrixCell> cells;
};

/// Trains one network per source, maps the eval split, measures similarity
/// (mean mapped entropy, top-1 agreement with the target model), then fuses
/// and scores every configuration against the target-language truth labels:
/// the target model alone, multilingual fusion of all sources, and
/// cross-lingual fusion of every non-empty source subset.
MatrixResult CmdRunMatrix(const PipelineConfig &cfg);

void WriteMatrixTable(const MatrixResult &result, std::ostream &os);
void WriteMatrixCsv(const MatrixResult &result, std::ostream &os);

}  // namespace pfusion

#endif  // PFUSION_PIPELINE_H_
