#include <benchmark/benchmark.h>

#include "owqe/agent.hpp"
#include "owqe/ensemble.hpp"
#include "owqe/envs.hpp"
#include "owqe/nnet.hpp"
#include "owqe/replay.hpp"

using namespace owqe;

namespace {

Activation activation_arg(std::int64_t k) { return k == 0 ? Activation::Relu : Activation::Softmax; }

ReplayBuffer filled_buffer(Eigen::Index ds, Eigen::Index da, int n, Rng& rng) {
  ReplayBuffer buf(ds, da, 10'000);
  std::normal_distribution<double> g;
  for (int i = 0; i < n; ++i) {
    Transition t{Vector::NullaryExpr(ds, [&] { return g(rng); }), Vector::NullaryExpr(da, [&] { return g(rng); }),
                 g(rng), Vector::NullaryExpr(ds, [&] { return g(rng); }), false};
    buf.push(t);
  }
  return buf;
}

void BM_ForwardBackward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Rng rng(1);
  const MlpParams net = make_mlp({4, width, width, 1}, activation_arg(state.range(1)), Activation::Linear, rng);
  const Matrix x = Matrix::Random(4, 64);
  const Matrix up = Matrix::Ones(1, 64);
  ParamGrads grads = ParamGrads::zeros_like(net);
  Tape tape;
  for (auto _ : state) {
    forward_batch(net, x, &tape);
    benchmark::DoNotOptimize(backward_batch(net, tape, up, &grads));
  }
}
BENCHMARK(BM_ForwardBackward)->ArgsProduct({{50, 100, 400}, {0, 1}});

void BM_TrainStep(benchmark::State& state) {
  Rng rng(2);
  HyperParams hp;
  hp.layer_size = static_cast<int>(state.range(0));
  DdpgAgent agent(3, Vector::Constant(1, 2.0), hp, rng);
  const ReplayBuffer buf = filled_buffer(3, 1, 1000, rng);
  for (auto _ : state) benchmark::DoNotOptimize(agent.train_step(buf, rng));
}
BENCHMARK(BM_TrainStep)->Arg(50)->Arg(100)->Arg(400);

void BM_EnsembleStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<DdpgAgent> agents;
  for (std::size_t i = 0; i < n; ++i) agents.emplace_back(3, Vector::Constant(1, 2.0), HyperParams{}, rng);
  const EnsembleWeights w(n);
  const Vector s = Vector::Random(3);
  OuNoise noise(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ensemble_policy_step(agents, w, AggregationStrategy{Strategy::SoftmaxTDError}, s, &noise, &rng, true));
  }
}
BENCHMARK(BM_EnsembleStep)->Arg(2)->Arg(4)->Arg(8);

void BM_WeightUpdate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<DdpgAgent> agents;
  for (std::size_t i = 0; i < n; ++i) agents.emplace_back(3, Vector::Constant(1, 2.0), HyperParams{}, rng);
  EnsembleWeights w(n);
  const ReplayBuffer buf = filled_buffer(3, 1, 1000, rng);
  for (auto _ : state) update_weights(w, agents, buf.sample_batch(64, rng), 1e-3);
}
BENCHMARK(BM_WeightUpdate)->Arg(2)->Arg(4)->Arg(8);

void BM_PendulumStep(benchmark::State& state) {
  Pendulum env;
  env.reset();
  const Vector a = Vector::Constant(1, 0.5);
  for (auto _ : state) {
    auto r = env.step(a);
    if (r.terminal || r.timeout) env.reset();
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_PendulumStep);

}  // namespace
BENCHMARK_MAIN();
