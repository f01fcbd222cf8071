#include <ktmpc/controller.hpp>
#include <ktmpc/gain_synthesis.hpp>
#include <ktmpc/plant.hpp>
#include <ktmpc/simulator.hpp>
#include <ktmpc/tightening.hpp>

#include <benchmark/benchmark.h>

using namespace ktmpc;

namespace {

struct Example {
  KoopmanModel model = Plant::numerical_example().exact_model();
  KtmpcConfig config;
  TighteningSchedule schedule;

  explicit Example(int N) {
    config.N = N;
    config.Q = Matrix::Identity(3, 3);
    config.R = Matrix::Identity(1, 1);
    config.s = 100;
    config.K = dlqr(model.A(), model.B(), config.Q, config.R).K;
    const DisturbanceModel d{Zonotope::symmetric_box(Vector::Constant(3, 0.2)),
                             Zonotope::symmetric_box(Vector::Constant(2, 0.1))};
    schedule = tighten_constraints(HPolytope::symmetric_box(Vector::Constant(2, 5)),
                                   HPolytope::symmetric_box(Vector::Constant(1, 3)), d, model.A(), model.B(),
                                   config.K, model.C_x(), N);
  }
};

void BM_SolveStep(benchmark::State& state) {
  const Example ex(static_cast<int>(state.range(0)));
  const Vector x = (Vector(2) << 0.0, -1.0).finished();
  const Vector yt = Vector::Constant(1, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_step(ex.model, ex.config, ex.schedule, x, yt));
}
BENCHMARK(BM_SolveStep)->Arg(5)->Arg(10)->Arg(20)->Unit(benchmark::kMicrosecond);

void BM_Tighten(benchmark::State& state) {
  const Example ex(1);
  const int N = static_cast<int>(state.range(0));
  const DisturbanceModel d{Zonotope::symmetric_box(Vector::Constant(3, 0.2)),
                           Zonotope::symmetric_box(Vector::Constant(2, 0.1))};
  for (auto _ : state)
    benchmark::DoNotOptimize(tighten_constraints(HPolytope::symmetric_box(Vector::Constant(2, 5)),
                                                 HPolytope::symmetric_box(Vector::Constant(1, 3)), d, ex.model.A(),
                                                 ex.model.B(), ex.config.K, ex.model.C_x(), N));
}
BENCHMARK(BM_Tighten)->Arg(10)->Arg(50)->Unit(benchmark::kMicrosecond);

void BM_FitEdmd(benchmark::State& state) {
  const Plant uni = Plant::unicycle(0.1);
  const TrajectoryData data = generate_training_data(
      uni, static_cast<int>(state.range(0)), 10,
      Zonotope::box((Vector(2) << 0.5, 0.0).finished(), (Vector(2) << 0.5, 2.0).finished()),
      Zonotope::box((Vector(3) << 1.0, 1.0, 0.0).finished(), (Vector(3) << 2.0, 2.0, 3.14159).finished()), 1);
  const Lifting lifting(3, PolynomialLifting{2}, {2});
  for (auto _ : state) benchmark::DoNotOptimize(fit_edmd(data, lifting, uni.C()));
}
BENCHMARK(BM_FitEdmd)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
