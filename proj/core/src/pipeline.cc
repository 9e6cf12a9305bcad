// core/src/pipeline.cc

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

#include "pfusion/pipeline.h"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "io-util.h"

namespace pfusion {

namespace {

using nlohmann::json;

std::map<std::string, Posteriorgram> ById(std::vector<Posteriorgram> pgs,
                                          const fs::path &origin) {
  std::map<std::string, Posteriorgram> out;
  for (auto &pg : pgs) {
    const std::string id = pg.utterance_id();
    if (!out.emplace(id, std::move(pg)).second)
      ThrowValidation("duplicate-utterance",
                      "utterance '" + id + "' occurs twice in " +
                          origin.string());
  }
  return out;
}

// Pairs two posteriorgram collections by utterance id.
AlignedSet PairById(const fs::path &source, const fs::path &target) {
  auto src = ById(LoadPosteriorgrams(source), source);
  auto tgt = ById(LoadPosteriorgrams(target), target);
  AlignedSet set;
  for (auto &[id, pg] : src) {
    auto it = tgt.find(id);
    if (it == tgt.end())
      ThrowValidation("align-mismatch", "utterance '" + id + "' missing from " +
                                            target.string());
    set.source.push_back(std::move(pg));
    set.target.push_back(std::move(it->second));
    tgt.erase(it);
  }
  if (!tgt.empty())
    ThrowValidation("align-mismatch", "utterance '" + tgt.begin()->first +
                                          "' missing from " + source.string());
  return set;
}

std::string Fixed(double value, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

void WriteText(const fs::path &path, const std::string &text) {
  std::ofstream os = OpenOutput(path);
  os << text;
}

TrainingConfig TrainingFromJson(const json &j, TrainingConfig cfg) {
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.epsilon_floor = j.value("epsilon_floor", cfg.epsilon_floor);
  if (j.contains("hidden")) {
    const auto h = j.at("hidden").get<std::vector<int>>();
    if (h.size() != kNumHiddenLayers)
      ThrowValidation("invalid-config", "hidden needs exactly 3 widths");
    std::copy(h.begin(), h.end(), cfg.hidden.begin());
  }
  return cfg;
}

std::string CellKey(const std::vector<std::string> &sources,
                    std::size_t total) {
  if (sources.size() == total) return "cross-mf";
  std::string key = "cross-";
  for (std::size_t i = 0; i < sources.size(); ++i)
    key += (i ? "+" : "") + sources[i];
  return key;
}

}  // namespace

int ExitCode(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return 2;
    case ErrorKind::kValidation:
      return 3;
    case ErrorKind::kIo:
      return 4;
    case ErrorKind::kNumerical:
      return 5;
  }
  return 1;
}

std::string_view KindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return "usage";
    case ErrorKind::kValidation:
      return "validation";
    case ErrorKind::kIo:
      return "io";
    case ErrorKind::kNumerical:
      return "numerical";
  }
  return "unknown";
}

std::vector<fs::path> ListPosteriorgrams(const fs::path &path) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto &entry : fs::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ".pgm")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      ThrowIo("file-not-found", "no .pgm files in '" + path.string() + "'");
    return files;
  }
  if (!fs::exists(path, ec))
    ThrowIo("file-not-found", "'" + path.string() + "' does not exist");
  return {path};
}

std::vector<Posteriorgram> LoadPosteriorgrams(const fs::path &path) {
  std::vector<Posteriorgram> out;
  for (const auto &file : ListPosteriorgrams(path)) {
    out.push_back(ReadPosteriorgramFile(file));
    if (const auto v = ValidateDistributionRows(out.back().frames()); !v)
      ThrowValidation(v.error, file.string() + " row " +
                                   std::to_string(v.row) + ": " + v.message);
  }
  return out;
}

SynthCorpus CmdGenSynth(const SynthConfig &cfg, const fs::path &out_dir) {
  if (fs::exists(out_dir / "manifest.txt"))
    ThrowIo("output-exists", "'" + out_dir.string() +
                                 "' already holds a corpus manifest");
  SynthCorpus corpus = Generate(cfg);
  for (const auto &lang : cfg.languages)
    for (const auto &pg : corpus.posteriors.at(lang.tag))
      ValidatePosteriorgram(pg, SynthInventory(cfg, lang.tag)).ThrowIfFailed();
  WriteCorpus(corpus, out_dir);
  return corpus;
}

void WriteTraceCsv(const TrainingTrace &trace, std::ostream &os) {
  os << "epoch,train_kl,dev_kl,dev_top1\n";
  char buf[160];
  for (const auto &r : trace.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.6f\n", r.epoch, r.train_kl,
                  r.dev_kl, r.dev_top1);
    os << buf;
  }
  os << "# best_epoch=" << trace.best_epoch
     << " stopping_reason=" << trace.stopping_reason << '\n';
}

TrainResult CmdTrainMap(const TrainMapOptions &opt) {
  opt.training.Validate();
  const AlignedSet train = PairById(opt.source, opt.target);
  const AlignedSet dev = PairById(opt.dev_source, opt.dev_target);
  TrainResult result = Train(train, dev, opt.training);
  SaveNetworkFile(result.net, opt.output);
  if (opt.trace) {
    std::ofstream os = OpenOutput(*opt.trace);
    WriteTraceCsv(result.trace, os);
  }
  return result;
}

void CmdMap(const fs::path &network, const fs::path &input,
            const fs::path &output) {
  const MappingNetwork net = LoadNetworkFile(network);
  const auto files = ListPosteriorgrams(input);
  std::vector<Posteriorgram> mapped;
  for (const auto &file : files) {
    const Posteriorgram pg = ReadPosteriorgramFile(file);
    ValidateDistributionRows(pg.frames()).ThrowIfFailed();
    mapped.push_back(MapPosteriorgram(net, pg));
  }
  if (fs::is_directory(input)) {
    for (std::size_t i = 0; i < files.size(); ++i)
      WritePosteriorgramFile(mapped[i], output / files[i].filename());
  } else {
    WritePosteriorgramFile(mapped.front(), output);
  }
}

WeightVector ResolveWeights(const FuseOptions &opt) {
  const int given = (opt.weights ? 1 : 0) + (opt.weights_file ? 1 : 0) +
                    (opt.derive ? 1 : 0);
  if (given > 1)
    ThrowUsage("conflicting-flags",
               "use exactly one of --weights, --weights-file, "
               "--derive-weights");
  if (given == 0)
    ThrowUsage("missing-weights",
               "one of --weights, --weights-file, --derive-weights is needed");
  const bool multi = opt.mode == FusionMode::kMultilingual;
  if (multi != opt.target.has_value())
    ThrowUsage("conflicting-flags",
               multi ? "multilingual fusion needs --target"
                     : "cross-lingual fusion takes no --target");
  const std::size_t k = opt.inputs.size();
  if (k == 0) ThrowUsage("missing-inputs", "no input posteriorgrams");

  WeightVector w;
  w.mode = opt.mode;
  if (opt.weights) {
    const auto &values = *opt.weights;
    std::size_t offset = 0;
    if (multi) {
      if (values.size() != k + 1)
        ThrowValidation("source-count-mismatch",
                        "multilingual --weights needs w_T plus " +
                            std::to_string(k) + " source weights");
      w.target_weight = values[0];
      offset = 1;
    } else if (values.size() == k + 1) {
      w.target_weight = values[0];
      offset = 1;
    } else if (values.size() != k) {
      ThrowValidation("source-count-mismatch",
                      std::to_string(values.size()) + " weights for " +
                          std::to_string(k) + " inputs");
    }
    for (std::size_t i = 0; i < k; ++i)
      w.sources.push_back({opt.inputs[i].stem().string(), values[offset + i]});
  } else if (opt.weights_file) {
    w = ReadWeightsFile(*opt.weights_file);
    if (w.mode != opt.mode)
      ThrowUsage("conflicting-flags", "weight file mode '" +
                                          std::string(ModeName(w.mode)) +
                                          "' contradicts --mode");
    if (w.sources.size() != k)
      ThrowValidation("source-count-mismatch",
                      "weight file has " + std::to_string(w.sources.size()) +
                          " sources for " + std::to_string(k) + " inputs");
  } else {
    if (!opt.sim_table)
      ThrowUsage("missing-weights", "--derive-weights needs --sim-table");
    const SimilarityTable sim = ReadSimilarityTableFile(*opt.sim_table);
    if (sim.size() != k)
      ThrowValidation("source-count-mismatch",
                      "similarity table has " + std::to_string(sim.size()) +
                          " rows for " + std::to_string(k) + " inputs");
    w = DeriveWeights(sim, opt.mode, opt.tau, opt.target_share);
  }
  if (const auto v = ValidateWeights(w); !v)
    ThrowValidation(v.error, v.message);
  return w;
}

WeightVector CmdFuse(const FuseOptions &opt) {
  const WeightVector w = ResolveWeights(opt);
  std::vector<std::map<std::string, Posteriorgram>> inputs;
  for (const auto &path : opt.inputs)
    inputs.push_back(ById(LoadPosteriorgrams(path), path));
  std::map<std::string, Posteriorgram> targets;
  if (opt.target) targets = ById(LoadPosteriorgrams(*opt.target), *opt.target);

  const auto &keys = inputs.front();
  for (std::size_t i = 1; i < inputs.size(); ++i)
    if (inputs[i].size() != keys.size())
      ThrowValidation("align-mismatch",
                      "inputs hold different utterance counts");
  if (opt.target && targets.size() != keys.size())
    ThrowValidation("align-mismatch",
                    "target holds a different utterance count");

  std::vector<Posteriorgram> fused;
  for (const auto &[id, first] : keys) {
    std::vector<Posteriorgram> mapped;
    for (const auto &in : inputs) {
      const auto it = in.find(id);
      if (it == in.end())
        ThrowValidation("align-mismatch", "utterance '" + id +
                                              "' missing from an input");
      mapped.push_back(it->second);
    }
    const Posteriorgram *target = nullptr;
    if (opt.target) {
      const auto it = targets.find(id);
      if (it == targets.end())
        ThrowValidation("align-mismatch",
                        "utterance '" + id + "' missing from target");
      target = &it->second;
    }
    fused.push_back(FusePosteriorgrams(target, mapped, w));
  }

  const bool dir_mode = fs::is_directory(opt.inputs.front());
  if (dir_mode) {
    for (const auto &pg : fused)
      WritePosteriorgramFile(pg, opt.output / (pg.utterance_id() + ".pgm"));
  } else {
    WritePosteriorgramFile(fused.front(), opt.output);
  }
  return w;
}

EvalReport CmdEval(const EvalOptions &opt) {
  if (opt.reference.has_value() == opt.labels.has_value())
    ThrowUsage("conflicting-flags", "give exactly one of --ref and --labels");
  const ClassInventory inv = ReadInventoryFile(opt.inventory);
  const auto hyps = ById(LoadPosteriorgrams(opt.hypothesis), opt.hypothesis);
  for (const auto &[id, pg] : hyps)
    if (const auto v = ValidatePosteriorgram(pg, inv); !v)
      ThrowValidation(v.error, "hypothesis '" + id + "': " + v.message);

  ReportAccumulator acc(opt.topn);
  if (opt.reference) {
    const auto refs = ById(LoadPosteriorgrams(*opt.reference), *opt.reference);
    if (refs.size() != hyps.size())
      ThrowValidation("align-mismatch",
                      "reference and hypothesis utterance counts differ");
    for (const auto &[id, hyp] : hyps) {
      const auto it = refs.find(id);
      if (it == refs.end())
        ThrowValidation("align-mismatch",
                        "no reference for utterance '" + id + "'");
      ValidatePosteriorgram(it->second, inv).ThrowIfFailed();
      acc.Add(std::cref(it->second), hyp, inv);
    }
  } else {
    std::vector<fs::path> files;
    if (fs::is_directory(*opt.labels)) {
      for (const auto &entry : fs::directory_iterator(*opt.labels))
        if (entry.path().extension() == ".lab") files.push_back(entry.path());
    } else {
      files.push_back(*opt.labels);
    }
    std::map<std::string, LabelSequence> labels;
    for (const auto &f : files) {
      LabelSequence seq = ReadLabelsFile(f);
      labels.emplace(seq.utterance_id, std::move(seq));
    }
    if (labels.size() != hyps.size())
      ThrowValidation("align-mismatch",
                      "label and hypothesis utterance counts differ");
    for (const auto &[id, hyp] : hyps) {
      const auto it = labels.find(id);
      if (it == labels.end())
        ThrowValidation("align-mismatch",
                        "no labels for utterance '" + id + "'");
      ValidateLabels(it->second, inv).ThrowIfFailed();
      acc.Add(std::cref(it->second), hyp, inv);
    }
  }
  return acc.Finish();
}

void PipelineConfig::Validate() const {
  auto fail = [](const std::string &msg) {
    ThrowValidation("invalid-config", msg);
  };
  if (target.empty()) fail("exactly one target language is required");
  if (sources.empty()) fail("at least one source language is required");
  std::set<std::string> langs(sources.begin(), sources.end());
  if (langs.size() != sources.size()) fail("duplicate source language");
  if (langs.count(target)) fail("target listed as a source");
  if (corpus.empty() || output.empty()) fail("corpus and output paths needed");
  if (fs::weakly_canonical(corpus) == fs::weakly_canonical(output))
    fail("corpus and output paths must differ");
  training.Validate();
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(target_share >= 0.0 && target_share <= 1.0))
    fail("target_share must lie in [0, 1]");
}

PipelineConfig PipelineConfigFromJson(const std::string &text,
                                      const fs::path &base_dir) {
  PipelineConfig cfg;
  try {
    const json j = json::parse(text);
    auto resolve = [&base_dir](const std::string &p) {
      const fs::path path(p);
      return path.is_absolute() ? path : base_dir / path;
    };
    cfg.name = j.value("name", cfg.name);
    cfg.corpus = resolve(j.at("corpus").get<std::string>());
    cfg.output = resolve(j.at("output").get<std::string>());
    cfg.target = j.at("target").get<std::string>();
    cfg.sources = j.at("sources").get<std::vector<std::string>>();
    if (j.contains("synth")) cfg.synth = SynthConfigFromJson(j.at("synth").dump());
    if (j.contains("training"))
      cfg.training = TrainingFromJson(j.at("training"), cfg.training);
    if (j.contains("weights")) {
      cfg.tau = j.at("weights").value("tau", cfg.tau);
      cfg.target_share = j.at("weights").value("target_share", cfg.target_share);
    }
    if (j.contains("topn")) cfg.topn = j.at("topn").get<std::vector<int>>();
  } catch (const json::exception &e) {
    ThrowValidation("invalid-config", e.what());
  }
  cfg.Validate();
  return cfg;
}

PipelineConfig ReadPipelineConfig(const fs::path &path) {
  std::ifstream is = OpenInput(path);
  std::stringstream buf;
  buf << is.rdbuf();
  return PipelineConfigFromJson(buf.str(), path.parent_path());
}

MatrixResult CmdRunMatrix(const PipelineConfig &cfg) {
  cfg.Validate();
  if (!fs::exists(cfg.corpus / "manifest.txt")) {
    if (!cfg.synth)
      ThrowIo("file-not-found", "no corpus at '" + cfg.corpus.string() +
                                    "' and no synth section to generate one");
    CmdGenSynth(*cfg.synth, cfg.corpus);
  }
  const CorpusManifest manifest = ReadManifest(cfg.corpus);
  for (const auto &lang : cfg.sources)
    if (!manifest.HasLanguage(lang))
      ThrowValidation("missing-language", "corpus has no language '" + lang +
                                              "'");
  if (!manifest.HasLanguage(cfg.target))
    ThrowValidation("missing-language",
                    "corpus has no language '" + cfg.target + "'");

  const fs::path &root = cfg.corpus;
  const fs::path &out = cfg.output;
  const fs::path target_eval = root / cfg.target / "eval";
  const fs::path truth = root / "labels" / cfg.target / "eval";
  const fs::path inventory = manifest.InventoryPath(cfg.target);

  MatrixResult result;
  result.target = cfg.target;
  result.sources = cfg.sources;

  std::map<std::string, fs::path> mapped_dirs;
  for (const auto &src : cfg.sources) {
    const std::string pair = src + "-" + cfg.target;
    TrainMapOptions train;
    train.source = root / src / "train";
    train.target = root / cfg.target / "train";
    train.dev_source = root / src / "dev";
    train.dev_target = root / cfg.target / "dev";
    train.training = cfg.training;
    train.output = out / "nets" / (pair + ".mnw");
    train.trace = out / "nets" / (pair + ".trace.csv");
    CmdTrainMap(train);

    mapped_dirs[src] = out / "mapped" / src;
    CmdMap(train.output, root / src / "eval", mapped_dirs[src]);

    EvalOptions eval;
    eval.hypothesis = mapped_dirs[src];
    eval.reference = target_eval;
    eval.inventory = inventory;
    eval.topn = {1};
    const EvalReport report = CmdEval(eval);
    result.similarity.push_back({src, report.avg_entropy, report.top_n.at(1)});
  }
  WriteSimilarityTableFile(result.similarity, out / "similarity.txt");

  auto evaluate = [&](const fs::path &hyp) {
    EvalOptions eval;
    eval.hypothesis = hyp;
    eval.labels = truth;
    eval.inventory = inventory;
    eval.topn = cfg.topn;
    return CmdEval(eval);
  };

  // Target model alone.
  {
    MatrixCell cell;
    cell.key = "mono";
    cell.mode = FusionMode::kMultilingual;
    cell.uses_target = true;
    cell.weights.mode = FusionMode::kMultilingual;
    cell.weights.target_weight = 1.0;
    cell.report = evaluate(target_eval);
    WriteText(out / "cells" / cell.key / "report.txt",
              FormatReport(cell.report));
    result.cells.push_back(std::move(cell));
  }

  const std::size_t k = cfg.sources.size();
  // All sources first, then by size descending, then lexicographic by mask.
  std::vector<std::uint32_t> masks;
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) masks.push_back(mask);
  std::stable_sort(masks.begin(), masks.end(), [](auto a, auto b) {
    return std::popcount(a) > std::popcount(b);
  });

  auto run_cell = [&](const std::string &key, FusionMode mode,
                      const std::vector<std::string> &sources) {
    MatrixCell cell;
    cell.key = key;
    cell.mode = mode;
    cell.uses_target = mode == FusionMode::kMultilingual;
    cell.sources = sources;
    const fs::path dir = out / "cells" / key;
    SimilarityTable sim;
    FuseOptions fuse;
    for (const auto &src : sources) {
      for (const auto &e : result.similarity)
        if (e.lang == src) sim.push_back(e);
      fuse.inputs.push_back(mapped_dirs.at(src));
    }
    WriteSimilarityTableFile(sim, dir / "similarity.txt");
    fuse.mode = mode;
    if (cell.uses_target) fuse.target = target_eval;
    fuse.derive = true;
    fuse.tau = cfg.tau;
    fuse.target_share = cfg.target_share;
    fuse.sim_table = dir / "similarity.txt";
    fuse.output = dir / "fused";
    cell.weights = CmdFuse(fuse);
    WriteWeightsFile(cell.weights, dir / "weights.txt");
    cell.report = evaluate(fuse.output);
    WriteText(dir / "report.txt", FormatReport(cell.report));
    result.cells.push_back(std::move(cell));
  };

  run_cell("multi-mf", FusionMode::kMultilingual, cfg.sources);
  for (const auto mask : masks) {
    std::vector<std::string> sources;
    for (std::size_t i = 0; i < k; ++i)
      if (mask & (1u << i)) sources.push_back(cfg.sources[i]);
    run_cell(CellKey(sources, k), FusionMode::kCrossLingual, sources);
  }

  {
    std::ofstream os = OpenOutput(out / "results.txt");
    WriteMatrixTable(result, os);
  }
  {
    std::ofstream os = OpenOutput(out / "results.csv");
    WriteMatrixCsv(result, os);
  }
  return result;
}

void WriteMatrixTable(const MatrixResult &result, std::ostream &os) {
  std::size_t key_width = 8;
  for (const auto &c : result.cells)
    key_width = std::max(key_width, c.key.size());
  auto pad = [](const std::string &s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  os << "target: " << result.target << '\n';
  os << pad("setting", key_width) << "  " << pad("tgt", 4);
  for (const auto &s : result.sources)
    os << "  " << pad(s, std::max<std::size_t>(s.size(), 1));
  os << "  frame_acc  phone_acc  %PER\n";
  for (const auto &c : result.cells) {
    os << pad(c.key, key_width) << "  " << pad(c.uses_target ? "Y" : "N", 4);
    for (const auto &s : result.sources) {
      const bool used =
          std::find(c.sources.begin(), c.sources.end(), s) != c.sources.end();
      os << "  " << pad(used ? "Y" : "N", std::max<std::size_t>(s.size(), 1));
    }
    os << "  " << pad(Fixed(c.report.accuracy(), 4), 9) << "  "
       << pad(Fixed(c.report.phone_accuracy, 4), 9) << "  "
       << Fixed(100.0 * c.report.per, 2) << '\n';
  }
}

void WriteMatrixCsv(const MatrixResult &result, std::ostream &os) {
  os << "setting,mode,target";
  for (const auto &s : result.sources) os << ',' << s;
  os << ",frames,frame_acc,phone_acc";
  std::vector<int> ns;
  if (!result.cells.empty())
    for (const auto &[n, v] : result.cells.front().report.top_n) {
      ns.push_back(n);
      os << ",top" << n;
    }
  os << ",avg_entropy_nats,per,sub,ins,del\n";
  for (const auto &c : result.cells) {
    os << c.key << ',' << ModeName(c.mode) << ',' << (c.uses_target ? 'Y' : 'N');
    for (const auto &s : result.sources)
      os << ','
         << (std::find(c.sources.begin(), c.sources.end(), s) != c.sources.end()
                 ? 'Y'
                 : 'N');
    os << ',' << c.report.frames << ',' << Fixed(c.report.accuracy()) << ','
       << Fixed(c.report.phone_accuracy);
    for (int n : ns) os << ',' << Fixed(c.report.top_n.at(n));
    os << ',' << Fixed(c.report.avg_entropy) << ',' << Fixed(c.report.per)
       << ',' << c.report.edits.substitutions << ','
       << c.report.edits.insertions << ',' << c.report.edits.deletions << '\n';
  }
}

}  // namespace pfusion
