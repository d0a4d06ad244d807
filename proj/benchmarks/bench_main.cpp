#include <benchmark/benchmark.h>

// The distro's static benchmark_main archive carries LTO bytecode from another
// compiler release, so the entry point is defined here.
BENCHMARK_MAIN();
