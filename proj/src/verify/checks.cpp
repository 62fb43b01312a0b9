#include "floydnet/verify/checks.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "floydnet/attention/korder.hpp"
#include "floydnet/attention/rotation.hpp"
#include "floydnet/graph/generators.hpp"
#include "floydnet/nn/memory.hpp"
#include "floydnet/train/train.hpp"

namespace floydnet::verify {

using attention::CombineKind;
using nn::Parameter;
using nn::ParamRefs;
using nn::Rng;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// sum(y * w) for a fixed random w, so no gradient direction is degenerate.
Var project(Tape& tape, Var y, const Tensor& w) { return nn::sum(tape, nn::mul(tape, y, tape.constant(w))); }

void merge(nn::GradCheckReport& into, const std::string& op, const nn::GradCheckReport& part) {
  for (auto e : part.entries) {
    e.name = op + "/" + e.name;
    into.entries.push_back(std::move(e));
  }
  into.passed = into.passed && part.passed;
}

struct Case {
  std::string op;
  std::vector<Parameter> leaves;
  std::function<Var(Tape&, const std::vector<Var>&)> body;
  Shape out_shape;
};

void run_case(nn::GradCheckReport& report, Case c, Rng& rng, double tol, const ParamRefs& extra = {}) {
  ParamRefs refs;
  for (auto& p : c.leaves) refs.push_back(&p);
  refs.insert(refs.end(), extra.begin(), extra.end());
  // output shape from one dry evaluation
  Tensor w;
  {
    Tape probe;
    std::vector<Var> in;
    for (auto& p : c.leaves) in.push_back(probe.parameter(p));
    w = random_tensor(probe.value(c.body(probe, in)).shape(), rng);
  }
  auto f = [&](Tape& tape) {
    std::vector<Var> in;
    for (auto& p : c.leaves) in.push_back(tape.parameter(p));
    return project(tape, c.body(tape, in), w);
  };
  merge(report, c.op, nn::grad_check(f, refs, kGradEps, tol));
}

Parameter leaf(const std::string& name, Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Parameter(name, random_tensor(std::move(shape), rng, lo, hi));
}

}  // namespace

nn::GradCheckReport gradcheck_primitives(std::uint64_t seed, double tol) {
  Rng rng(seed);
  nn::GradCheckReport report;
  report.passed = true;

  {
    auto lin = nn::Linear::init("lin", 4, 3, true, rng);
    run_case(report, {"linear", {leaf("x", {2, 3, 4}, rng)}, [&](Tape& t, auto& in) { return nn::linear(t, in[0], lin); }, {}},
             rng, tol, [&] { ParamRefs r; lin.collect(r); return r; }());
  }
  for (auto kind : {nn::NormKind::kLayerNorm, nn::NormKind::kRmsNorm}) {
    auto norm = nn::Norm::init("norm", 5, kind);
    for (double& v : norm.gain.value.values()) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    for (double& v : norm.offset.value.values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    ParamRefs r;
    norm.collect(r);
    run_case(report,
             {kind == nn::NormKind::kLayerNorm ? "layer_norm" : "rms_norm", {leaf("x", {3, 5}, rng)},
              [&](Tape& t, auto& in) { return nn::layer_norm(t, in[0], norm); }, {}},
             rng, tol, r);
  }
  run_case(report, {"gelu", {leaf("x", {4, 3}, rng, -3, 3)}, [](Tape& t, auto& in) { return nn::gelu(t, in[0]); }, {}}, rng, tol);
  run_case(report, {"softmax", {leaf("x", {3, 4, 2}, rng, -2, 2)}, [](Tape& t, auto& in) { return nn::softmax(t, in[0], 1); }, {}},
           rng, tol);
  run_case(report, {"sigmoid", {leaf("x", {6}, rng, -3, 3)}, [](Tape& t, auto& in) { return nn::sigmoid(t, in[0]); }, {}}, rng, tol);
  run_case(report, {"add", {leaf("a", {2, 3}, rng), leaf("b", {2, 3}, rng)}, [](Tape& t, auto& in) { return nn::add(t, in[0], in[1]); }, {}},
           rng, tol);
  run_case(report, {"mul", {leaf("a", {2, 3}, rng), leaf("b", {2, 3}, rng)}, [](Tape& t, auto& in) { return nn::mul(t, in[0], in[1]); }, {}},
           rng, tol);
  run_case(report, {"scale", {leaf("x", {5}, rng)}, [](Tape& t, auto& in) { return nn::scale(t, in[0], -1.7); }, {}}, rng, tol);
  run_case(report, {"square", {leaf("x", {5}, rng)}, [](Tape& t, auto& in) { return nn::square(t, in[0]); }, {}}, rng, tol);
  run_case(report, {"reshape", {leaf("x", {2, 6}, rng)}, [](Tape& t, auto& in) { return nn::reshape(t, in[0], {3, 4}); }, {}}, rng, tol);
  run_case(report,
           {"concat_last", {leaf("a", {3, 2}, rng), leaf("b", {3, 4}, rng)},
            [](Tape& t, auto& in) { return nn::concat_last(t, {in[0], in[1]}); }, {}},
           rng, tol);
  run_case(report,
           {"concat_rows", {leaf("a", {3, 2}, rng), leaf("b", {1, 2}, rng)},
            [](Tape& t, auto& in) { return nn::concat_rows(t, {in[0], in[1]}); }, {}},
           rng, tol);
  run_case(report,
           {"gather_rows", {leaf("x", {3, 2}, rng)},
            [](Tape& t, auto& in) { return nn::gather_rows(t, in[0], {2, 0, 2, 1, 2}, {5, 2}); }, {}},
           rng, tol);
  {
    auto ff = nn::FeedForward::init("ffn", 4, 6, rng);
    ParamRefs r;
    ff.collect(r);
    run_case(report, {"ffn", {leaf("x", {3, 4}, rng)}, [&](Tape& t, auto& in) { return nn::ffn(t, in[0], ff); }, {}}, rng, tol, r);
  }
  for (auto kind : {CombineKind::kAdditive, CombineKind::kMultiplicative}) {
    const std::string suffix = std::string(".") + attention::combine_name(kind);
    run_case(report,
             {"combine" + suffix, {leaf("a", {2, 3}, rng), leaf("b", {2, 3}, rng)},
              [kind](Tape& t, auto& in) { return attention::combine(t, in[0], in[1], kind); }, {}},
             rng, tol);
    run_case(report,
             {"pivot_pair_combine" + suffix, {leaf("left", {3, 3, 4}, rng), leaf("right", {3, 3, 4}, rng)},
              [kind](Tape& t, auto& in) { return attention::pivot_pair_combine(t, in[0], in[1], kind); }, {}},
             rng, tol);
    auto attn = attention::AttentionParams::init("attn", 8, 2, rng);
    ParamRefs r;
    attn.collect(r);
    run_case(report,
             {"pivotal_naive" + suffix, {leaf("r", {4, 4, 8}, rng)},
              [&](Tape& t, auto& in) { return attention::pivotal_attention_naive(t, in[0], attn, kind); }, {}},
             rng, tol, r);
    run_case(report,
             {"pivotal_streamed" + suffix, {leaf("r", {4, 4, 8}, rng)},
              [&](Tape& t, auto& in) { return attention::pivotal_attention_streamed(t, in[0], attn, kind, 3); }, {}},
             rng, tol, r);
    for (std::size_t k = 1; k <= 3; ++k) {
      auto kp = attention::KOrderAttentionParams::init("korder", k, 4, 2, rng);
      ParamRefs kr;
      kp.collect(kr);
      Shape shape(k, 3);
      shape.push_back(4);
      run_case(report,
               {"korder" + std::to_string(k) + suffix, {leaf("r", shape, rng)},
                [&](Tape& t, auto& in) { return attention::korder_pivotal_attention(t, in[0], kp, kind); }, {}},
               rng, tol, kr);
    }
  }
  run_case(report,
           {"pivot_scores", {leaf("q", {3, 3, 4}, rng), leaf("kc", {3, 3, 3, 4}, rng)},
            [](Tape& t, auto& in) { return attention::pivot_scores(t, in[0], in[1], 2); }, {}},
           rng, tol);
  run_case(report,
           {"pivot_weighted_sum", {leaf("w", {3, 3, 3, 2}, rng), leaf("vc", {3, 3, 3, 4}, rng)},
            [](Tape& t, auto& in) { return attention::pivot_weighted_sum(t, in[0], in[1]); }, {}},
           rng, tol);
  {
    const Tensor target = random_tensor({2, 5}, rng, 0.1, 0.9);
    std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 0, 1, 1, 1, 1};
    for (auto kind : {train::LossKind::kMse, train::LossKind::kMae, train::LossKind::kBce}) {
      run_case(report,
               {std::string("loss.") + train::loss_name(kind), {leaf("x", {2, 5}, rng, -2, 2)},
                [&, kind](Tape& t, auto& in) {
                  const Var p = kind == train::LossKind::kBce ? nn::sigmoid(t, in[0]) : in[0];
                  return train::loss(t, p, target, mask, kind);
                },
                {}},
               rng, tol);
    }
  }
  return report;
}

nn::GradCheckReport gradcheck_model(std::uint64_t seed, double tol, std::size_t order) {
  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.rel_dim = 16;
  cfg.heads = 2;
  cfg.order = order;
  cfg.node_dim = 2;
  cfg.edge_dim = 1;
  cfg.graph_dim = 1;
  cfg.readout = model::ReadoutLevel::kNode;
  cfg.seed = seed;
  auto params = model::ModelParams::init(cfg);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  graph::Graph g(4, 2, 1, 1);
  for (std::size_t v = 0; v < 4; ++v) g.set_node_features(v, random_tensor({2}, rng).values());
  g.set_graph_features(random_tensor({1}, rng).values());
  const std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {1, 2}, {2, 3}, {0, 2}};
  for (auto [u, v] : edges) g.add_edge(u, v, 1.0 + static_cast<double>(u), random_tensor({1}, rng).values());
  const Tensor target = random_tensor({4, 1}, rng);
  const std::vector<std::uint8_t> mask(4, 1);
  auto f = [&](Tape& tape) {
    const Var r = model::model_forward(tape, g, cfg, params);
    const Var pred = model::readout(tape, r, g.n(), cfg, model::ReadoutLevel::kNode, params.decoder);
    return train::loss(tape, pred, target, mask, train::LossKind::kMse);
  };
  nn::GradCheckReport report;
  report.passed = true;
  merge(report, "model" + std::to_string(order), nn::grad_check(f, params.collect(), kGradEps, tol));
  return report;
}

EquivalenceResult kernel_equivalence(std::size_t configs, std::uint64_t seed, std::size_t max_n) {
  Rng rng(seed);
  EquivalenceResult out;
  for (std::size_t c = 0; c < configs; ++c) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, max_n)(rng);
    const std::size_t heads = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const std::size_t per_head = std::uniform_int_distribution<std::size_t>(1, 32 / heads)(rng);
    const std::size_t d = heads * per_head;
    const CombineKind kind = rng() % 2 ? CombineKind::kAdditive : CombineKind::kMultiplicative;
    const std::size_t tile = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    auto attn = attention::AttentionParams::init("attn", d, heads, rng);
    const Tensor r = random_tensor({n, n, d}, rng);
    const Tensor seed_grad = random_tensor({n, n, d}, rng);

    auto run = [&](bool streamed, std::vector<Tensor>& grads) {
      ParamRefs refs;
      attn.collect(refs);
      for (auto* p : refs) p->zero_grad();
      Tape tape;
      const Var x = tape.input(r);
      const Var y = streamed ? attention::pivotal_attention_streamed(tape, x, attn, kind, tile)
                             : attention::pivotal_attention_naive(tape, x, attn, kind);
      tape.backward(y, seed_grad);
      grads.clear();
      grads.push_back(*tape.grad(x));
      for (auto* p : refs) grads.push_back(p->grad);
      return tape.value(y);
    };
    std::vector<Tensor> gn, gs;
    const Tensor yn = run(false, gn);
    const Tensor ys = run(true, gs);
    out.max_forward_diff = std::max(out.max_forward_diff, nn::max_abs_diff(yn, ys));
    for (std::size_t i = 0; i < gn.size(); ++i) out.max_grad_diff = std::max(out.max_grad_diff, nn::max_abs_diff(gn[i], gs[i]));
    ++out.configs;
  }
  return out;
}

BenchRow kernel_bench(model::KernelKind impl, std::size_t n, std::size_t d_r, std::size_t heads, std::uint64_t seed) {
  Rng rng(seed);
  auto attn = attention::AttentionParams::init("attn", d_r, heads, rng);
  const Tensor r = random_tensor({n, n, d_r}, rng);
  BenchRow row{model::kernel_name(impl), n, d_r, heads, 0.0, 0, 0.0};
  ParamRefs refs;
  attn.collect(refs);
  for (auto* p : refs) p->zero_grad();
  const auto start = std::chrono::steady_clock::now();
  {
    nn::memory::PeakProbe probe;
    Tape tape;
    const Var x = tape.input(r);
    const Var y = impl == model::KernelKind::kStreamed
                      ? attention::pivotal_attention_streamed(tape, x, attn, CombineKind::kAdditive)
                      : attention::pivotal_attention_naive(tape, x, attn, CombineKind::kAdditive);
    for (double v : tape.value(y).values()) row.checksum += v;
    tape.backward(y, Tensor(tape.shape(y), 1.0));
    row.peak_bytes = probe.peak_above_baseline();
  }
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return row;
}

std::string bench_csv_header() { return "impl,N,d_r,heads,wall_ms,peak_bytes,checksum"; }

std::string bench_csv_row(const BenchRow& row) {
  std::ostringstream out;
  out << row.impl << "," << row.n << "," << row.d_r << "," << row.heads << "," << std::fixed << std::setprecision(3)
      << row.wall_ms << "," << row.peak_bytes << "," << std::setprecision(12) << row.checksum;
  return out.str();
}

double rotation_max_error(std::size_t pairs, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto a = attention::random_rotation(rng);
    const auto b = attention::random_rotation(rng);
    const auto got = attention::rotation_compose_check(a, b);
    const auto want = attention::mat3_product(a, b);
    for (std::size_t k = 0; k < 9; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
  }
  return worst;
}

double equivariance_max_error(std::size_t order, std::size_t permutations, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = order == 3 ? 5 : 7;
  graph::Graph g = graph::gen_random_graph(n, 0.45, 1, 4, seed);
  graph::Graph featured(n, 2, 1, 1);
  for (std::size_t v = 0; v < n; ++v) featured.set_node_features(v, random_tensor({2}, rng).values());
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (g.has_edge(u, v)) featured.add_edge(u, v, g.weight(u, v), random_tensor({1}, rng).values());
  featured.set_graph_features(random_tensor({1}, rng).values());

  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.rel_dim = 8;
  cfg.heads = 2;
  cfg.order = order;
  cfg.node_dim = 2;
  cfg.edge_dim = 1;
  cfg.graph_dim = 1;
  cfg.readout = model::ReadoutLevel::kNode;
  cfg.seed = seed;
  const auto params = model::ModelParams::init(cfg);

  auto forward = [&](const graph::Graph& h) {
    Tape tape;
    tape.set_recording(false);
    const Var r = model::model_forward(tape, h, cfg, params);
    return std::tuple{tape.value(r), tape.value(model::readout(tape, r, n, cfg, model::ReadoutLevel::kNode, params.decoder)),
                      tape.value(model::readout(tape, r, n, cfg, model::ReadoutLevel::kGraph, params.decoder))};
  };
  const auto [base_r, base_node, base_graph] = forward(featured);
  double worst = 0.0;
  for (std::size_t t = 0; t < permutations; ++t) {
    const auto pi = graph::NodePermutation::random(n, rng());
    const auto [r, node, graph_out] = forward(graph::apply_permutation(featured, pi));
    worst = std::max(worst, nn::max_abs_diff(model::permute_tuples(base_r, pi, order), r));
    worst = std::max(worst, nn::max_abs_diff(model::permute_tuples(base_node, pi, 1), node));
    worst = std::max(worst, nn::max_abs_diff(base_graph, graph_out));
  }
  return worst;
}

std::vector<SuiteLine> run_suite(std::size_t model_order, std::size_t seeds, std::uint64_t first_seed) {
  std::vector<SuiteLine> out;
  for (const auto& c : wl::pair_suite()) {
    out.push_back({c.id, wl::run_oracle(wl::Scheme::kWl1, c.a, c.b), c.wl1});
    out.push_back({c.id, wl::run_oracle(wl::Scheme::kFwl2, c.a, c.b), c.fwl2});
    out.push_back({c.id, wl::run_oracle(wl::Scheme::kFwl3, c.a, c.b), c.fwl3});
    if (model_order == 0) continue;
    for (std::size_t s = 0; s < seeds; ++s) {
      out.push_back({c.id, wl::run_model(model_order, first_seed + s, c.a, c.b), model_order == 2 ? c.fwl2 : c.fwl3});
    }
  }
  return out;
}

}  // namespace floydnet::verify
