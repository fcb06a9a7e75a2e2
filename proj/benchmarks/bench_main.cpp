#include "moereid/losses.hpp"
#include "moereid/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace moereid;

namespace {

struct Fixture {
  data::DatasetIndex dataset;
  Model model;
  Batch batch;

  Fixture()
      : dataset(data::generate_synthetic({.num_ids = 8, .samples_per_id = 4, .seed = 7})),
        model(
            [] {
              ModelConfig cfg;
              cfg.seed = 1;
              return cfg;
            }(),
            dataset.num_train_identities()) {
    data::PkBatchSampler sampler(dataset, 4, 4, 3);
    const auto batches = sampler.epoch(0);
    TrainConfig tc;
    batch = make_batch(dataset, batches[0].sample_indices, model.config(), tc, 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

static void BM_ForwardEval(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    ad::Tape tape;
    const auto out = f.model.forward(tape, f.batch, false, 0);
    benchmark::DoNotOptimize(tape.value(out.embeddings).data());
  }
}
BENCHMARK(BM_ForwardEval)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  auto& f = fixture();
  AdamOptimizer optimizer(f.model.params(), OptimConfig{});
  long step = 0;
  for (auto _ : state) {
    ad::Tape tape;
    const auto out = f.model.forward(tape, f.batch, true, step++);
    const auto total = tape.add(id_loss(tape, out.logits, f.batch.labels(), 0.1),
                                triplet_loss(tape, out.embeddings, f.batch.labels(), 0.3));
    tape.backward(total);
    optimizer.step(tape);
    benchmark::DoNotOptimize(tape.value(total).item());
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_EmbedSample(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.embed(f.batch.samples[0]).data());
}
BENCHMARK(BM_EmbedSample)->Unit(benchmark::kMillisecond);

static void BM_TextEncode(benchmark::State& state) {
  auto& f = fixture();
  std::size_t i = 0;
  const auto& captions = f.batch.samples[0].captions;
  for (auto _ : state) {
    const auto feats = f.model.text_encoder().encode(captions[i++ % 3].text);
    benchmark::DoNotOptimize(feats.cls.data());
  }
}
BENCHMARK(BM_TextEncode)->Unit(benchmark::kMicrosecond);

static void BM_Evaluate(benchmark::State& state) {
  RandomStream rs(5);
  eval::RetrievalSet sets;
  for (int i = 0; i < state.range(0); ++i) {
    eval::RetrievalItem item;
    item.embedding = Tensor(1, 128);
    for (Index k = 0; k < 128; ++k) item.embedding(0, k) = rs.normal();
    item.identity = i % 7;  // coprime with the query stride so both sets share identities
    item.camera = i % 3;
    item.item_id = i;
    if (i % 4 == 0)
      sets.query.push_back(item);
    else
      sets.gallery.push_back(item);
  }
  for (auto _ : state) {
    const auto metrics = eval::evaluate(sets, eval::Protocol::kStandardCamera);
    benchmark::DoNotOptimize(metrics.mAP);
  }
}
BENCHMARK(BM_Evaluate)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
