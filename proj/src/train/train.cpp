#include "floydnet/train/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "floydnet/graph/generators.hpp"
#include "floydnet/graph/oracles.hpp"
#include "floydnet/nn/checkpoint.hpp"

namespace floydnet::train {

using nn::ShapeError;

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::kMse;
  if (name == "mae") return LossKind::kMae;
  if (name == "bce") return LossKind::kBce;
  throw std::invalid_argument("unknown loss '" + name + "' (expected mse, mae or bce)");
}

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kMse: return "mse";
    case LossKind::kMae: return "mae";
    case LossKind::kBce: return "bce";
  }
  return "?";
}

namespace {
constexpr double kProbFloor = 1e-12;
}

Var loss(Tape& tape, Var pred, const Tensor& target, const std::vector<std::uint8_t>& mask, LossKind kind) {
  const Tensor& p = tape.value(pred);
  if (p.shape() != target.shape() || mask.size() != p.size()) {
    throw ShapeError("loss: prediction " + nn::shape_string(p.shape()) + ", target " +
                     nn::shape_string(target.shape()) + ", mask of " + std::to_string(mask.size()));
  }
  const std::size_t count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  if (count == 0) throw ShapeError("loss: mask selects no entries");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    const double r = p[i] - target[i];
    switch (kind) {
      case LossKind::kMse: total += r * r; break;
      case LossKind::kMae: total += std::abs(r); break;
      case LossKind::kBce: {
        const double q = std::clamp(p[i], kProbFloor, 1.0 - kProbFloor);
        total -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
        break;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  return tape.record(
      Tensor({}, {total * inv}), {pred},
      [pred, target, mask, kind, inv](Tape& t, Var, const Tensor& g) {
        const Tensor& p = t.value(pred);
        Tensor& gp = t.grad_buffer(pred);
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (!mask[i]) continue;
          const double r = p[i] - target[i];
          double d = 0.0;
          switch (kind) {
            case LossKind::kMse: d = 2.0 * r; break;
            case LossKind::kMae: d = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0); break;
            case LossKind::kBce: {
              const double q = std::clamp(p[i], kProbFloor, 1.0 - kProbFloor);
              d = (q - target[i]) / (q * (1.0 - q));
              break;
            }
          }
          gp[i] += g[0] * d * inv;
        }
      },
      "loss");
}

void adamw_step(const nn::ParamRefs& params, AdamWState& state, const AdamWConfig& cfg, double lr) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto* p : params) {
      state.m.push_back(Tensor::zeros_like(p->value));
      state.v.push_back(Tensor::zeros_like(p->value));
    }
    state.step = 0;
  }
  for (const auto* p : params) {
    if (!p->grad.all_finite()) throw nn::NumericError("adamw_step: non-finite gradient in " + p->name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::Parameter& p = *params[k];
    if (p.grad.shape() != p.value.shape()) throw ShapeError("adamw_step: gradient shape mismatch for " + p.name);
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.value[i] *= 1.0 - lr * cfg.weight_decay;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

double clip_grad_norm(const nn::ParamRefs& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    for (const auto* p : params) p->grad.scale_(max_norm / norm);
  }
  return norm;
}

void zero_grads(const nn::ParamRefs& params) {
  for (const auto* p : params) p->zero_grad();
}

PlateauScheduler::PlateauScheduler(double factor, std::size_t patience, double min_scale)
    : factor_(factor), patience_(patience), min_scale_(min_scale), best_(std::numeric_limits<double>::infinity()) {}

void PlateauScheduler::report(double metric) {
  if (metric < best_) {
    best_ = metric;
    bad_ = 0;
    return;
  }
  if (++bad_ > patience_) {
    scale_ = std::max(scale_ * factor_, min_scale_);
    bad_ = 0;
  }
}

double warmup_scale(std::size_t step, std::size_t warmup) {
  if (warmup == 0) return 1.0;
  return std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup));
}

Task parse_task(const std::string& name) {
  if (name == "shortest_path") return Task::kShortestPath;
  if (name == "cycle_count") return Task::kCycleCount;
  throw std::invalid_argument("unknown task '" + name + "' (expected shortest_path or cycle_count)");
}

const char* task_name(Task task) { return task == Task::kShortestPath ? "shortest_path" : "cycle_count"; }

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw std::invalid_argument("betas must lie in [0, 1)");
  }
  if (adam.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (batch == 0 || accumulation == 0) throw std::invalid_argument("batch and accumulation must be >= 1");
  if (train_min_n == 0 || train_min_n > train_max_n) throw std::invalid_argument("bad training size range");
  if (eval_n == 0) throw std::invalid_argument("eval_n must be >= 1");
  if (!(edge_p_min >= 0.0 && edge_p_min <= edge_p_max && edge_p_max <= 1.0)) throw std::invalid_argument("bad edge probability range");
  if (max_weight < 1) throw std::invalid_argument("max_weight must be >= 1");
}

namespace {
std::size_t as_size(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto out = std::stoull(v, &pos);
    if (pos == v.size() && v[0] != '-') return static_cast<std::size_t>(out);
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(k + ": expected a non-negative integer, got '" + v + "'");
}
double as_double(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(k + ": expected a number, got '" + v + "'");
}
}  // namespace

TrainConfig parse_train_config(const std::map<std::string, std::string>& entries, TrainConfig c) {
  for (const auto& [k, v] : entries) {
    if (k == "task") c.task = parse_task(v);
    else if (k == "lr") c.lr = as_double(k, v);
    else if (k == "beta1") c.adam.beta1 = as_double(k, v);
    else if (k == "beta2") c.adam.beta2 = as_double(k, v);
    else if (k == "weight_decay") c.adam.weight_decay = as_double(k, v);
    else if (k == "epochs") c.epochs = as_size(k, v);
    else if (k == "steps_per_epoch") c.steps_per_epoch = as_size(k, v);
    else if (k == "batch") c.batch = as_size(k, v);
    else if (k == "accumulation") c.accumulation = as_size(k, v);
    else if (k == "warmup") c.warmup = as_size(k, v);
    else if (k == "clip") c.clip = as_double(k, v);
    else if (k == "plateau_factor") c.plateau_factor = as_double(k, v);
    else if (k == "plateau_patience") c.plateau_patience = as_size(k, v);
    else if (k == "loss") c.loss = parse_loss(v);
    else if (k == "train_seed") c.seed = as_size(k, v);
    else if (k == "train_min_n") c.train_min_n = as_size(k, v);
    else if (k == "train_max_n") c.train_max_n = as_size(k, v);
    else if (k == "eval_n") c.eval_n = as_size(k, v);
    else if (k == "eval_graphs") c.eval_graphs = as_size(k, v);
    else if (k == "edge_p_min") c.edge_p_min = as_double(k, v);
    else if (k == "edge_p_max") c.edge_p_max = as_double(k, v);
    else if (k == "max_weight") c.max_weight = static_cast<std::int64_t>(as_size(k, v));
    else if (k == "cycle_len") c.cycle_len = as_size(k, v);
    else if (k == "time_budget_s") c.time_budget_s = as_double(k, v);
    else if (k == "target_mae") c.target_mae = as_double(k, v);
    else throw std::invalid_argument("unknown training config key '" + k + "'");
  }
  c.validate();
  return c;
}

Example make_example(Task task, std::size_t n, double edge_p, std::uint64_t seed, const TrainConfig& cfg) {
  Example ex;
  if (task == Task::kShortestPath) {
    ex.g = graph::gen_random_graph(n, edge_p, 1, cfg.max_weight, seed);
    const auto dm = graph::floyd_warshall_oracle(ex.g);
    const double diam = dm.diameter();
    ex.target = Tensor({n, n, 1});
    ex.mask.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || !dm.is_reachable(i, j) || diam <= 0.0) continue;
        ex.target[i * n + j] = dm.at(i, j) / diam;
        ex.mask[i * n + j] = 1;
      }
  } else {
    ex.g = graph::gen_random_graph(n, edge_p, 1, 1, seed);
    const auto counts = graph::cycle_count_oracle(ex.g, cfg.cycle_len);
    ex.target = Tensor({n, n, 1});
    ex.mask.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (!ex.g.has_edge(i, j)) continue;
        ex.target[i * n + j] = counts.edge[i * n + j];
        ex.mask[i * n + j] = 1;
      }
  }
  return ex;
}

namespace {

// Draws until the example has at least one supervised entry.
Example draw_example(const TrainConfig& cfg, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pdist(cfg.edge_p_min, cfg.edge_p_max);
  for (;;) {
    const double p = pdist(rng);
    Example ex = make_example(cfg.task, n, p, rng(), cfg);
    if (std::any_of(ex.mask.begin(), ex.mask.end(), [](auto m) { return m != 0; })) return ex;
  }
}

}  // namespace

std::vector<Example> make_eval_set(const TrainConfig& cfg, std::size_t n, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(draw_example(cfg, n, rng));
  return out;
}

model::ModelConfig task_model_config(Task task, std::size_t layers, std::size_t rel_dim, std::size_t heads,
                                     std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.layers = layers;
  cfg.rel_dim = rel_dim;
  cfg.heads = heads;
  cfg.order = 2;
  cfg.readout = model::ReadoutLevel::kEdge;
  cfg.supernode = true;
  cfg.seed = seed;
  cfg.out_dim = 1;
  cfg.combine = attention::CombineKind::kAdditive;
  (void)task;
  return cfg;
}

double evaluate(const std::vector<Example>& set, const model::ModelConfig& cfg, const model::ModelParams& params) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& ex : set) {
    const Tensor pred = model::predict(ex.g, cfg, params);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!ex.mask[i]) continue;
      total += std::abs(pred[i] - ex.target[i]);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

std::string metrics_json(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["step"] = m.step;
  j["train_loss"] = m.train_loss;
  j["val_mae"] = m.val_mae;
  j["eval_mae"] = m.eval_mae;
  j["lr"] = m.lr;
  j["wall_s"] = m.wall_s;
  return j.dump();
}

TrainRun train_task(const model::ModelConfig& mcfg, const TrainConfig& tcfg, model::ModelParams& params,
                    std::ostream* log, const std::optional<std::filesystem::path>& checkpoint) {
  mcfg.validate();
  tcfg.validate();
  if (mcfg.readout != model::ReadoutLevel::kEdge || mcfg.out_dim != 1) {
    throw TrainError("training tasks use an edge readout with out_dim 1");
  }
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  // held-out sets: validation drives the schedule and early stop, eval is only reported
  const auto val_set = make_eval_set(tcfg, tcfg.eval_n, tcfg.eval_graphs, tcfg.seed ^ 0x5eed0001ULL);
  const auto eval_set = make_eval_set(tcfg, tcfg.eval_n, tcfg.eval_graphs, tcfg.seed ^ 0x5eed0002ULL);
  std::mt19937_64 rng(tcfg.seed);
  std::uniform_int_distribution<std::size_t> size_dist(tcfg.train_min_n, tcfg.train_max_n);

  auto refs = params.collect();
  AdamWState state;
  PlateauScheduler plateau(tcfg.plateau_factor, tcfg.plateau_patience);
  TrainRun run;
  std::size_t step = 0;

  auto report = [&](std::size_t epoch, double train_loss) {
    EpochMetrics m;
    m.epoch = epoch;
    m.step = step;
    m.train_loss = train_loss;
    m.val_mae = evaluate(val_set, mcfg, params);
    m.eval_mae = evaluate(eval_set, mcfg, params);
    m.lr = tcfg.lr * warmup_scale(step, tcfg.warmup) * plateau.scale();
    m.wall_s = elapsed();
    if (!std::isfinite(m.val_mae) || !std::isfinite(m.eval_mae)) throw TrainError("evaluation diverged");
    if (log) *log << metrics_json(m) << std::endl;
    run.epochs.push_back(m);
    return m;
  };

  report(0, std::numeric_limits<double>::quiet_NaN());
  run.stop_reason = "epochs";
  const std::size_t per_step = tcfg.batch * tcfg.accumulation;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t s = 0; s < tcfg.steps_per_epoch; ++s) {
      zero_grads(refs);
      for (std::size_t b = 0; b < per_step; ++b) {
        const Example ex = draw_example(tcfg, size_dist(rng), rng);
        Tape tape;
        const Var r = model::model_forward(tape, ex.g, mcfg, params);
        const Var pred = model::readout(tape, r, ex.g.n(), mcfg, model::ReadoutLevel::kEdge, params.decoder);
        const Var l = loss(tape, pred, ex.target, ex.mask, tcfg.loss);
        const double lv = tape.value(l)[0];
        if (!std::isfinite(lv)) throw TrainError("training loss diverged at step " + std::to_string(step));
        if (epoch == 1 && s == 0) run.initial_loss += lv / static_cast<double>(per_step);
        loss_sum += lv;
        ++loss_n;
        tape.backward(l, Tensor({}, {1.0 / static_cast<double>(per_step)}));
      }
      if (tcfg.clip > 0.0) clip_grad_norm(refs, tcfg.clip);
      adamw_step(refs, state, tcfg.adam, tcfg.lr * warmup_scale(step, tcfg.warmup) * plateau.scale());
      ++step;
    }
    const auto m = report(epoch, loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0);
    plateau.report(m.val_mae);
    if (tcfg.target_mae > 0.0 && m.val_mae < tcfg.target_mae) {
      run.stop_reason = "target";
      break;
    }
    if (tcfg.time_budget_s > 0.0 && elapsed() > tcfg.time_budget_s) {
      run.stop_reason = "time_budget";
      break;
    }
  }
  run.wall_s = elapsed();
  if (checkpoint) {
    nn::save_checkpoint(*checkpoint, refs);
    run.checkpoint = checkpoint;
  }
  return run;
}

}  // namespace floydnet::train
