// Serial reference vs OpenMP kernels on the fixture network.

#include <benchmark/benchmark.h>

#include <string>

#include "verix/detect.hpp"
#include "verix/parallel.hpp"
#include "verix/traversal.hpp"

namespace {

const std::string kFixtures = VERIX_FIXTURE_DIR;

const verix::Network& network() {
    static const verix::Network net = verix::load_model_file(kFixtures + "/model.json");
    return net;
}

const std::vector<verix::Sample>& samples() {
    static const auto rows = verix::load_dataset_file(kFixtures + "/detect.csv", network().input_dim);
    return rows;
}

void BM_EpsilonBoundsReference(benchmark::State& state) {
    const auto spec = verix::PerturbationSpec::with_epsilon(0.05);
    const auto& x = samples().front().features;
    for (auto _ : state)
        benchmark::DoNotOptimize(verix::epsilon_bounds_reference(network(), x, spec, verix::BoundMethod::crown));
}

void BM_EpsilonBounds(benchmark::State& state) {
    verix::set_num_threads(static_cast<int>(state.range(0)));
    const auto spec = verix::PerturbationSpec::with_epsilon(0.05);
    const auto& x = samples().front().features;
    for (auto _ : state)
        benchmark::DoNotOptimize(verix::epsilon_bounds(network(), x, spec, verix::BoundMethod::crown));
}

void BM_ScoreDatasetReference(benchmark::State& state) {
    verix::PipelineConfig config;
    config.spec = verix::PerturbationSpec::with_epsilon(0.05);
    for (auto _ : state)
        benchmark::DoNotOptimize(verix::score_dataset_reference(network(), samples(), config));
}

void BM_ScoreDataset(benchmark::State& state) {
    verix::set_num_threads(static_cast<int>(state.range(0)));
    verix::PipelineConfig config;
    config.spec = verix::PerturbationSpec::with_epsilon(0.05);
    for (auto _ : state)
        benchmark::DoNotOptimize(verix::score_dataset(network(), samples(), config));
}

} // namespace

BENCHMARK(BM_EpsilonBoundsReference);
BENCHMARK(BM_EpsilonBounds)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(BM_ScoreDatasetReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreDataset)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
