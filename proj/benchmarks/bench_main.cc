// benchmarks/bench_main.cc

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

#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "pfusion/fusion.h"
#include "pfusion/mapping-net.h"
#include "pfusion/metrics.h"

namespace pfusion {
namespace {

RowMatrix RandomDistributions(int rows, int cols) {
  return Softmax(2.0 * RowMatrix::Random(rows, cols));
}

MappingNetwork BenchNet(int hidden) {
  MappingNetwork net("src", "tgt", 40, {hidden, hidden, hidden}, 48);
  net.Initialize(1);
  return net;
}

void BM_Forward(benchmark::State &state) {
  const MappingNetwork net = BenchNet(static_cast<int>(state.range(0)));
  const RowMatrix batch = RandomDistributions(256, 40);
  for (auto _ : state) benchmark::DoNotOptimize(Forward(net, batch));
  state.SetItemsProcessed(state.iterations() * batch.rows());
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(256);

void BM_Backward(benchmark::State &state) {
  const MappingNetwork net = BenchNet(static_cast<int>(state.range(0)));
  const RowMatrix batch = RandomDistributions(256, 40);
  const RowMatrix target = RandomDistributions(256, 48);
  for (auto _ : state) benchmark::DoNotOptimize(Backward(net, batch, target));
  state.SetItemsProcessed(state.iterations() * batch.rows());
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(256);

void BM_FusePosteriorgrams(benchmark::State &state) {
  const int k = static_cast<int>(state.range(0));
  const int frames = 1000, dim = 48;
  auto make = [&](const std::string &lang) {
    return Posteriorgram("u", lang, RandomDistributions(frames, dim).cast<float>());
  };
  const Posteriorgram target = make("tgt");
  std::vector<Posteriorgram> mapped;
  WeightVector w;
  w.mode = FusionMode::kMultilingual;
  w.target_weight = 0.5;
  for (int i = 0; i < k; ++i) {
    mapped.push_back(make("tgt"));
    w.sources.push_back({"s" + std::to_string(i), 0.5 / k});
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(FusePosteriorgrams(&target, mapped, w));
  state.SetItemsProcessed(state.iterations() * frames);
}
BENCHMARK(BM_FusePosteriorgrams)->Arg(1)->Arg(3);

void BM_EditDistance(benchmark::State &state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<std::string> ref(n), hyp(n);
  for (int i = 0; i < n; ++i) {
    ref[i] = "p" + std::to_string(i % 17);
    hyp[i] = "p" + std::to_string((i * 7) % 19);
  }
  for (auto _ : state) benchmark::DoNotOptimize(EditDistance(ref, hyp));
}
BENCHMARK(BM_EditDistance)->Arg(30)->Arg(300);

}  // namespace
}  // namespace pfusion

BENCHMARK_MAIN();
