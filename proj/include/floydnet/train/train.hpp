#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "floydnet/graph/graph.hpp"
#include "floydnet/model/model.hpp"

namespace floydnet::train {

using nn::Tape;
using nn::Tensor;
using nn::Var;

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossKind { kMse, kMae, kBce };
LossKind parse_loss(const std::string& name);
const char* loss_name(LossKind kind);

// Mean over entries with mask != 0. bce expects probabilities in (0, 1).
// Throws ShapeError on mismatched shapes or an empty mask.
Var loss(Tape& tape, Var pred, const Tensor& target, const std::vector<std::uint8_t>& mask, LossKind kind);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

// Decoupled decay p *= 1 - lr * wd, then the bias-corrected Adam update from
// each parameter's accumulated grad. Throws NumericError on a non-finite
// gradient, naming the parameter.
void adamw_step(const nn::ParamRefs& params, AdamWState& state, const AdamWConfig& cfg, double lr);

// Scales all grads so their global L2 norm is at most max_norm; returns the
// norm before scaling.
double clip_grad_norm(const nn::ParamRefs& params, double max_norm);
void zero_grads(const nn::ParamRefs& params);

// Multiplies the rate by `factor` once the metric has not improved for more
// than `patience` consecutive reports.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor = 0.5, std::size_t patience = 10, double min_scale = 1e-3);
  void report(double metric);
  double scale() const { return scale_; }

 private:
  double factor_;
  std::size_t patience_;
  double min_scale_;
  double best_;
  std::size_t bad_ = 0;
  double scale_ = 1.0;
};

// Linear ramp over the first `warmup` optimizer steps.
double warmup_scale(std::size_t step, std::size_t warmup);

enum class Task { kShortestPath, kCycleCount };
Task parse_task(const std::string& name);
const char* task_name(Task task);

struct TrainConfig {
  Task task = Task::kShortestPath;
  double lr = 1e-3;
  AdamWConfig adam;
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 50;
  std::size_t batch = 1;
  std::size_t accumulation = 8;
  std::size_t warmup = 100;
  double clip = 1.0;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 10;
  LossKind loss = LossKind::kMse;
  std::uint64_t seed = 0;
  std::size_t train_min_n = 6;
  std::size_t train_max_n = 10;
  std::size_t eval_n = 12;
  std::size_t eval_graphs = 32;
  double edge_p_min = 0.2;
  double edge_p_max = 0.6;
  std::int64_t max_weight = 3;  // shortest-path edge weights are uniform in 1..max_weight
  std::size_t cycle_len = 3;
  double time_budget_s = 0.0;   // 0: no limit
  double target_mae = 0.0;      // stop once validation MAE drops below; 0: never

  void validate() const;
};

TrainConfig parse_train_config(const std::map<std::string, std::string>& entries, TrainConfig base = {});

struct Example {
  graph::Graph g;
  Tensor target;                    // edge level: [n, n, 1]
  std::vector<std::uint8_t> mask;   // same element count as target
};

// Shortest path: d(i,j) / diameter on reachable pairs i != j. Cycle count:
// cycles of cycle_len through each present edge.
Example make_example(Task task, std::size_t n, double edge_p, std::uint64_t seed, const TrainConfig& cfg);
std::vector<Example> make_eval_set(const TrainConfig& cfg, std::size_t n, std::size_t count, std::uint64_t seed);

// Edge-level model matching the task's input encoding.
model::ModelConfig task_model_config(Task task, std::size_t layers, std::size_t rel_dim, std::size_t heads,
                                     std::uint64_t seed);

// Pooled mean absolute error over masked entries.
double evaluate(const std::vector<Example>& set, const model::ModelConfig& cfg, const model::ModelParams& params);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double eval_mae = 0.0;
  double lr = 0.0;
  double wall_s = 0.0;
};

struct TrainRun {
  std::vector<EpochMetrics> epochs;
  double wall_s = 0.0;
  double initial_loss = 0.0;  // mean training loss over the first epoch's samples before any update
  std::string stop_reason;
  std::optional<std::filesystem::path> checkpoint;
};

std::string metrics_json(const EpochMetrics& m);

// Online training on freshly generated graphs. Epoch 0 is the evaluation of
// the initial parameters. `log` receives one JSON line per evaluation.
TrainRun train_task(const model::ModelConfig& mcfg, const TrainConfig& tcfg, model::ModelParams& params,
                    std::ostream* log = nullptr, const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

}  // namespace floydnet::train
