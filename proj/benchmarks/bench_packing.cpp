#include <random>

#include <benchmark/benchmark.h>

#include "pous/packing.hpp"

using namespace pous;

namespace {

struct Mempool {
    std::vector<Transaction> txs;
    std::vector<UserVector> vectors;
};

Mempool make_mempool(std::uint32_t users, std::uint32_t txs) {
    std::mt19937_64 rng(11);
    std::poisson_distribution<std::uint32_t> count(4.0);
    std::uniform_real_distribution<double> u(0, 1);
    Mempool m;
    for (UserId k = 1; k <= users; ++k) {
        std::vector<std::uint32_t> v(6);
        for (auto& x : v) x = count(rng);
        m.vectors.push_back({k, v});
    }
    for (std::uint64_t id = 1; id <= txs; ++id) {
        Transaction t;
        t.id = id;
        t.source_user = static_cast<UserId>(1 + rng() % users);
        t.submit_time = u(rng) * 600;
        t.fee = u(rng) * 1e-4;
        m.txs.push_back(t);
    }
    return m;
}

}  // namespace

static void BM_ClusterMempool(benchmark::State& state) {
    const auto m = make_mempool(static_cast<std::uint32_t>(state.range(0)), 20000);
    std::uint64_t seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(packing::cluster_mempool(m.txs, m.vectors, 3, seed++));
}
BENCHMARK(BM_ClusterMempool)->Arg(30)->Arg(200)->Arg(1000);

static void BM_PackBlock(benchmark::State& state) {
    const auto m = make_mempool(200, static_cast<std::uint32_t>(state.range(0)));
    const auto clustering = packing::cluster_mempool(m.txs, m.vectors, 3, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            packing::pack_block(clustering, m.txs, m.vectors, {}, 4194, 600.0, crypto::Digest{}, 1, 1));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PackBlock)->Arg(5000)->Arg(50000);
