#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "mmcot/fusion.hpp"
#include "mmcot/objectives.hpp"
#include "mmcot/textmetrics.hpp"

using namespace mmcot;

namespace {

std::vector<std::string> random_words(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  std::vector<std::string> out(n);
  for (auto& w : out) w = "w" + std::to_string(pick(rng));
  return out;
}

void BM_FusionForward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto hops = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(1);
  const auto params = FusionParams::init(d, hops, 2, true, rng);
  const Tensor text = Tensor::uniform({24, d}, -1, 1, rng);
  const Tensor image = Tensor::uniform({16, d}, -1, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(multi_hop(text, image, params).state.data().data());
}
BENCHMARK(BM_FusionForward)->Args({16, 1})->Args({16, 2})->Args({32, 2})->Args({64, 2});

void BM_FusionForwardBackward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const auto params = FusionParams::init(d, 2, 2, true, rng);
  const Tensor text = Tensor::uniform({24, d}, -1, 1, rng, true);
  const Tensor image = Tensor::uniform({16, d}, -1, 1, rng);
  for (auto _ : state) {
    for (Tensor p : params.parameters()) p.clear_grad();
    backward(mean(multi_hop(text, image, params).state));
  }
}
BENCHMARK(BM_FusionForwardBackward)->Arg(16)->Arg(32)->Arg(64);

void BM_Contrastive(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::vector<SentenceEmbedding> img, txt;
  for (std::size_t i = 0; i < b; ++i) {
    img.push_back(sentence_embed(Tensor::uniform({8, 16}, -1, 1, rng), Modality::image, i));
    txt.push_back(sentence_embed(Tensor::uniform({8, 16}, -1, 1, rng), Modality::text, i));
  }
  for (auto _ : state) benchmark::DoNotOptimize(contrastive_loss(similarity_matrix(img, txt, 0.1)).item());
}
BENCHMARK(BM_Contrastive)->Arg(8)->Arg(32);

void BM_Bleu(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = random_words(rng, n, 50), r = random_words(rng, n, 50);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::bleu(c, r).value);
}
BENCHMARK(BM_Bleu)->Arg(16)->Arg(64)->Arg(256);

void BM_RougeL(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = random_words(rng, n, 50), r = random_words(rng, n, 50);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::rouge_l(c, r).value);
}
BENCHMARK(BM_RougeL)->Arg(16)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
