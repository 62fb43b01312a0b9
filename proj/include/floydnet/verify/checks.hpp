#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "floydnet/model/model.hpp"
#include "floydnet/nn/grad_check.hpp"
#include "floydnet/wl/wl.hpp"

namespace floydnet::verify {

constexpr double kGradEps = 1e-5;

// Finite-difference checks of every differentiable primitive on small random
// inputs. Entry names are "<op>/<parameter>".
nn::GradCheckReport gradcheck_primitives(std::uint64_t seed, double tol);
// Scalar loss through the full L = 2, N = 4, d_r = 16, h = 2 model.
nn::GradCheckReport gradcheck_model(std::uint64_t seed, double tol, std::size_t order = 2);

struct EquivalenceResult {
  std::size_t configs = 0;
  double max_forward_diff = 0.0;
  double max_grad_diff = 0.0;
};
// Streamed vs naive pivotal attention, forward and all gradients, over random
// (N <= max_n, h <= 4, d_r <= 32, combine, tile) draws.
EquivalenceResult kernel_equivalence(std::size_t configs, std::uint64_t seed, std::size_t max_n = 24);

struct BenchRow {
  std::string impl;
  std::size_t n = 0;
  std::size_t d_r = 0;
  std::size_t heads = 0;
  double wall_ms = 0.0;
  std::size_t peak_bytes = 0;  // tensor storage above the pre-call level
  double checksum = 0.0;       // sum of forward outputs
};
// One recorded forward and backward pass of the attention layer on a random
// input that is allocated before measurement starts.
BenchRow kernel_bench(model::KernelKind impl, std::size_t n, std::size_t d_r, std::size_t heads, std::uint64_t seed);
std::string bench_csv_header();
std::string bench_csv_row(const BenchRow& row);

// Largest |rotation_compose_check(a, b) - a b| over `pairs` random draws.
double rotation_max_error(std::size_t pairs, std::uint64_t seed);

// Largest deviation between permute(model(g)) and model(pi g) over random
// permutations of a featured random graph, on the full final tensor and on
// the node and graph readouts.
double equivariance_max_error(std::size_t order, std::size_t permutations, std::uint64_t seed);

struct SuiteLine {
  std::string pair_id;
  wl::PairVerdict verdict;
  bool expected = false;
};
// Oracle verdicts for 1-WL, 2-FWL and 3-FWL plus model verdicts for the given
// order over `seeds` seeds (order 0: oracles only).
std::vector<SuiteLine> run_suite(std::size_t model_order, std::size_t seeds, std::uint64_t first_seed);

}  // namespace floydnet::verify
