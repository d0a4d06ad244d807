#include <benchmark/benchmark.h>

#include "pous/garbled2pc.hpp"

using namespace pous;

static void BM_Garble(benchmark::State& state) {
    const auto bits = static_cast<unsigned>(state.range(0));
    const auto theta = gc::FixedPoint::encode(0.4, bits);
    std::uint64_t seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(gc::garble_comparator(bits, theta, seed++));
    state.counters["gates"] = static_cast<double>(gc::comparator_gate_count(bits));
}
BENCHMARK(BM_Garble)->Arg(8)->Arg(16)->Arg(32);

static void BM_Evaluate(benchmark::State& state) {
    const auto bits = static_cast<unsigned>(state.range(0));
    gc::Generator gen(0.3, 0.4, bits, 5);
    gc::Evaluator ev(0.5, bits);
    gc::DealerObliviousTransfer ot;
    const auto keys = ot.transfer(gen.evaluator_pairs(), ev.choice_bits());
    for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate(gen.message(), keys));
}
BENCHMARK(BM_Evaluate)->Arg(8)->Arg(16)->Arg(32);

static void BM_DhOt(benchmark::State& state) {
    gc::DhObliviousTransfer ot(3);
    crypto::HashDrbg rng(4, "bench");
    std::vector<gc::WirePair> pairs;
    std::vector<bool> choices;
    for (int i = 0; i < state.range(0); ++i) {
        pairs.push_back(gc::random_wire_pair(rng));
        choices.push_back(i % 2 == 0);
    }
    for (auto _ : state) benchmark::DoNotOptimize(ot.transfer(pairs, choices));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DhOt)->Arg(1)->Arg(16);

static void BM_SecureCompare(benchmark::State& state) {
    gc::DhObliviousTransfer dh(6);
    gc::DealerObliviousTransfer dealer;
    gc::ObliviousTransfer& ot = state.range(0) ? static_cast<gc::ObliviousTransfer&>(dh) : dealer;
    std::uint64_t seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(gc::secure_compare(0.31, 0.52, 0.4, 16, seed++, ot));
    state.SetLabel(ot.name());
}
BENCHMARK(BM_SecureCompare)->Arg(0)->Arg(1);
