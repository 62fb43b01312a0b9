#include "floydnet/cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "floydnet/attention/rotation.hpp"
#include "floydnet/graph/io.hpp"
#include "floydnet/graph/oracles.hpp"
#include "floydnet/nn/parallel.hpp"
#include "floydnet/train/train.hpp"
#include "floydnet/verify/checks.hpp"

namespace floydnet::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out = ".";
  std::size_t threads = 1;
  std::string config;
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

fs::path out_file(const Globals& g, const std::string& name) {
  fs::create_directories(g.out);
  return fs::path(g.out) / name;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

ordered_json header(const std::string& command, const Globals& g, ordered_json extra) {
  ordered_json h;
  h["command"] = command;
  h["seed"] = g.seed;
  h["threads"] = g.threads;
  h["config"] = g.config;
  for (auto& [k, v] : extra.items()) h[k] = v;
  return h;
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const auto v = std::stoull(item, &pos);
    if (pos != item.size()) throw UsageError("bad list entry '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw UsageError("empty list '" + s + "'");
  return out;
}

std::map<std::string, std::string> config_entries(const Globals& g) {
  if (g.config.empty()) return {};
  return model::read_key_values(g.config);
}

void split_entries(const std::map<std::string, std::string>& all, std::map<std::string, std::string>& model_kv,
                   std::map<std::string, std::string>& train_kv) {
  for (const auto& [k, v] : all) (model::is_model_key(k) ? model_kv : train_kv)[k] = v;
}

// gradcheck -----------------------------------------------------------------

struct GradcheckOpts {
  double tol = 1e-6;
  double e2e_tol = 1e-5;
  std::size_t seeds = 1;
};

int cmd_gradcheck(const Globals& g, const GradcheckOpts& o, std::ostream& out) {
  auto csv = open_out(out_file(g, "gradcheck.csv"));
  csv << "# " << header("gradcheck", g, {{"tol", o.tol}, {"e2e_tol", o.e2e_tol}, {"seeds", o.seeds}}).dump() << "\n";
  csv << "seed,name,max_rel_error,max_abs_error,passed\n";
  std::map<std::string, double> worst_by_op;
  bool ok = true;
  for (std::size_t s = 0; s < o.seeds; ++s) {
    const std::uint64_t seed = g.seed + s;
    for (const auto& report : {verify::gradcheck_primitives(seed, o.tol), verify::gradcheck_model(seed, o.e2e_tol)}) {
      ok = ok && report.passed;
      for (const auto& e : report.entries) {
        csv << seed << "," << e.name << "," << e.max_rel_error << "," << e.max_abs_error << "," << e.passed << "\n";
        const std::string op = e.name.substr(0, e.name.find('/'));
        worst_by_op[op] = std::max(worst_by_op[op], e.max_rel_error);
      }
    }
  }
  for (const auto& [op, worst] : worst_by_op) {
    out << std::left << std::setw(28) << op << " max_rel_error " << std::scientific << std::setprecision(3) << worst
        << "\n";
  }
  out << (ok ? "gradcheck: PASS" : "gradcheck: FAIL") << "\n";
  return ok ? kExitOk : kExitFailure;
}

// kernel-equiv / kernel-bench -------------------------------------------------

struct EquivOpts {
  std::size_t configs = 100;
  std::size_t max_n = 24;
  double fwd_tol = 1e-10;
  double grad_tol = 1e-9;
};

int cmd_kernel_equiv(const Globals& g, const EquivOpts& o, std::ostream& out) {
  const auto r = verify::kernel_equivalence(o.configs, g.seed, o.max_n);
  const bool ok = r.max_forward_diff < o.fwd_tol && r.max_grad_diff < o.grad_tol;
  ordered_json j = header("kernel-equiv", g, {{"configs", o.configs}, {"max_n", o.max_n}});
  j["max_forward_diff"] = r.max_forward_diff;
  j["max_grad_diff"] = r.max_grad_diff;
  j["passed"] = ok;
  open_out(out_file(g, "kernel_equiv.json")) << j.dump(2) << "\n";
  out << "configs " << r.configs << " max_forward_diff " << r.max_forward_diff << " max_grad_diff " << r.max_grad_diff
      << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? kExitOk : kExitFailure;
}

struct BenchOpts {
  std::string n = "32,64,128";
  std::size_t dr = 64;
  std::size_t heads = 4;
  std::string impl = "streamed";
};

int cmd_kernel_bench(const Globals& g, const BenchOpts& o, std::ostream& out) {
  std::vector<model::KernelKind> impls;
  if (o.impl == "both") impls = {model::KernelKind::kNaive, model::KernelKind::kStreamed};
  else impls = {model::parse_kernel(o.impl)};
  if (o.heads == 0 || o.dr % o.heads != 0) throw UsageError("--dr must be a positive multiple of --heads");
  auto csv = open_out(out_file(g, "kernel_bench.csv"));
  csv << "# " << header("kernel-bench", g, {{"n", o.n}, {"dr", o.dr}, {"heads", o.heads}, {"impl", o.impl}}).dump() << "\n";
  csv << verify::bench_csv_header() << "\n";
  out << verify::bench_csv_header() << "\n";
  for (auto impl : impls) {
    for (std::size_t n : parse_list(o.n)) {
      const auto row = verify::bench_csv_row(verify::kernel_bench(impl, n, o.dr, o.heads, g.seed));
      csv << row << "\n";
      out << row << std::endl;
    }
  }
  return kExitOk;
}

// expressivity ----------------------------------------------------------------

struct ExpressivityOpts {
  std::size_t k = 2;
  std::size_t seeds = 5;
  std::string golden;
};

int cmd_expressivity(const Globals& g, const ExpressivityOpts& o, std::ostream& out) {
  if (o.k > 3 || o.k == 1) throw UsageError("--k must be 0 (oracles only), 2 or 3");
  std::map<std::pair<std::string, std::string>, bool> golden;
  if (!o.golden.empty()) {
    std::ifstream in(o.golden);
    if (!in) throw UsageError("cannot open golden file " + o.golden);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (!j.contains("pair_id")) continue;
      golden[{j["pair_id"].get<std::string>(), j["scheme"].get<std::string>()}] = j["distinguished"].get<bool>();
    }
  }
  const std::string model_as = o.k == 2 ? "2-FWL" : "3-FWL";
  auto file = open_out(out_file(g, "expressivity_k" + std::to_string(o.k) + ".jsonl"));
  file << ordered_json{{"run", header("expressivity", g, {{"k", o.k}, {"seeds", o.seeds}})}}.dump() << "\n";
  bool ok = true;
  std::size_t mismatches = 0, lines = 0;
  for (const auto& line : verify::run_suite(o.k, o.seeds, g.seed)) {
    const std::string text = wl::verdict_json(line.pair_id, line.verdict);
    file << text << "\n";
    out << text << "\n";
    ++lines;
    bool good = line.verdict.distinguished == line.expected;
    if (!golden.empty()) {
      const bool is_model = line.verdict.scheme == wl::Scheme::kModel2 || line.verdict.scheme == wl::Scheme::kModel3;
      const auto it = golden.find({line.pair_id, is_model ? model_as : wl::scheme_name(line.verdict.scheme)});
      if (it == golden.end() || it->second != line.verdict.distinguished) good = false;
    }
    if (!good) ++mismatches;
    ok = ok && good;
  }
  out << "verdicts " << lines << " mismatches " << mismatches << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? kExitOk : kExitFailure;
}

// rotation-check ----------------------------------------------------------------

struct RotationOpts {
  std::size_t pairs = 1000;
  double tol = 1e-12;
};

int cmd_rotation(const Globals& g, const RotationOpts& o, std::ostream& out) {
  const double err = verify::rotation_max_error(o.pairs, g.seed);
  const bool ok = err < o.tol;
  ordered_json j = header("rotation-check", g, {{"pairs", o.pairs}, {"tol", o.tol}});
  j["max_error"] = err;
  j["passed"] = ok;
  open_out(out_file(g, "rotation_check.json")) << j.dump(2) << "\n";
  out << "pairs " << o.pairs << " max_error " << err << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? kExitOk : kExitFailure;
}

// train / eval ----------------------------------------------------------------------

struct TrainOpts {
  std::string task = "shortest_path";
  std::size_t layers = 8;
  std::size_t dr = 64;
  std::size_t heads = 4;
  std::size_t epochs = 0;
  std::size_t steps = 0;
  double time_budget = -1.0;
  double target_mae = -1.0;
};

int cmd_train(const Globals& g, const TrainOpts& o, std::ostream& out) {
  std::map<std::string, std::string> model_kv, train_kv;
  split_entries(config_entries(g), model_kv, train_kv);
  train::TrainConfig tcfg;
  tcfg.task = train::parse_task(o.task);
  tcfg.seed = g.seed;
  tcfg = train::parse_train_config(train_kv, tcfg);
  if (o.epochs) tcfg.epochs = o.epochs;
  if (o.steps) tcfg.steps_per_epoch = o.steps;
  if (o.time_budget >= 0.0) tcfg.time_budget_s = o.time_budget;
  if (o.target_mae >= 0.0) tcfg.target_mae = o.target_mae;
  auto mcfg = train::task_model_config(tcfg.task, o.layers, o.dr, o.heads, g.seed);
  mcfg.kernel = model::KernelKind::kStreamed;
  mcfg = model::parse_config(model_kv, mcfg);
  mcfg.validate();
  auto params = model::ModelParams::init(mcfg);

  auto log = open_out(out_file(g, "train_log.jsonl"));
  log << ordered_json{{"run", header("train", g, {{"task", train::task_name(tcfg.task)}, {"layers", mcfg.layers}, {"rel_dim", mcfg.rel_dim}, {"heads", mcfg.heads}})}}.dump()
      << "\n";
  model::save_config(out_file(g, "model.cfg"), mcfg);
  const auto run = train::train_task(mcfg, tcfg, params, &log, out_file(g, "model.ckpt"));
  const auto& last = run.epochs.back();
  out << "task " << train::task_name(tcfg.task) << " epochs " << last.epoch << " steps " << last.step << " eval_mae "
      << last.eval_mae << " wall_s " << run.wall_s << " stop " << run.stop_reason << "\n";
  return kExitOk;
}

struct EvalOpts {
  std::string task = "shortest_path";
  std::string checkpoint;
  std::string model_config;
  std::size_t n = 12;
  std::size_t graphs = 32;
  double max_mae = -1.0;
};

int cmd_eval(const Globals& g, const EvalOpts& o, std::ostream& out) {
  if (o.checkpoint.empty() || o.model_config.empty()) throw UsageError("eval needs --checkpoint and --model-config");
  const auto mcfg = model::load_config(o.model_config);
  auto params = model::ModelParams::init(mcfg);
  model::load_model(o.checkpoint, params);
  std::map<std::string, std::string> model_kv, train_kv;
  split_entries(config_entries(g), model_kv, train_kv);
  train::TrainConfig tcfg = train::parse_train_config(train_kv);
  tcfg.task = train::parse_task(o.task);
  const auto set = train::make_eval_set(tcfg, o.n, o.graphs, g.seed);
  const double mae = train::evaluate(set, mcfg, params);
  ordered_json j = header("eval", g, {{"task", o.task}, {"n", o.n}, {"graphs", o.graphs}});
  j["mae"] = mae;
  open_out(out_file(g, "eval.json")) << j.dump(2) << "\n";
  out << "task " << o.task << " n " << o.n << " graphs " << o.graphs << " mae " << mae << "\n";
  return o.max_mae >= 0.0 && !(mae < o.max_mae) ? kExitFailure : kExitOk;
}

// oracle -----------------------------------------------------------------------------

struct OracleOpts {
  std::string graph;
  std::string format = "edge-list";
  std::string kind = "shortest_path";
  std::size_t k = 2;
  std::size_t cycle_len = 3;
};

ordered_json finite_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

int cmd_oracle(const Globals& g, const OracleOpts& o, std::ostream& out) {
  if (o.graph.empty()) throw UsageError("oracle needs --graph");
  const auto graph = graph::load_graph(o.graph, graph::parse_format(o.format));
  ordered_json j = header("oracle", g, {{"graph", o.graph}, {"kind", o.kind}});
  j["n"] = graph.n();
  if (o.kind == "shortest_path") {
    const auto dm = graph::floyd_warshall_oracle(graph);
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < dm.n; ++i) {
      ordered_json row = ordered_json::array();
      for (std::size_t k = 0; k < dm.n; ++k) row.push_back(finite_or_null(dm.at(i, k)));
      rows.push_back(row);
    }
    j["distances"] = rows;
    j["diameter"] = dm.diameter();
  } else if (o.kind == "cycles") {
    const auto c = graph::cycle_count_oracle(graph, o.cycle_len);
    j["cycle_len"] = o.cycle_len;
    j["graph_count"] = c.graph;
    j["node_counts"] = c.node;
    j["edge_counts"] = c.edge;
  } else if (o.kind == "wl1" || o.kind == "kfwl" || o.kind == "kwl") {
    const auto p = o.kind == "wl1" ? wl::wl1_refine(graph) : o.kind == "kfwl" ? wl::kfwl_refine(graph, o.k) : wl::kwl_refine(graph, o.k);
    j["order"] = p.order;
    j["rounds"] = p.rounds;
    j["colors"] = p.num_colors();
    j["class_counts"] = p.class_counts;
    std::ostringstream digest;
    digest << std::hex << std::setw(16) << std::setfill('0') << wl::signature(p).digest;
    j["signature"] = digest.str();
  } else {
    throw UsageError("--kind must be shortest_path, cycles, wl1, kfwl or kwl");
  }
  open_out(out_file(g, "oracle.json")) << j.dump(2) << "\n";
  out << j.dump() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"FloydNet: pivotal attention, k-FWL oracles and desk-scale training"};
  app.name(args.empty() ? "floydnet" : fs::path(args[0]).filename().string());
  app.require_subcommand(1, 1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker thread cap; 1 is bitwise deterministic")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "key=value configuration file");

  GradcheckOpts gc;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference checks of every primitive and the full model");
  c_grad->add_option("--tol", gc.tol, "Relative tolerance for primitives")->capture_default_str();
  c_grad->add_option("--e2e-tol", gc.e2e_tol, "Relative tolerance for the full model")->capture_default_str();
  c_grad->add_option("--seeds", gc.seeds, "Number of consecutive seeds")->capture_default_str();

  EquivOpts eq;
  auto* c_equiv = app.add_subcommand("kernel-equiv", "Streamed vs naive pivotal attention, forward and backward");
  c_equiv->add_option("--configs", eq.configs, "Random configurations")->capture_default_str();
  c_equiv->add_option("--max-n", eq.max_n, "Largest node count")->capture_default_str();
  c_equiv->add_option("--fwd-tol", eq.fwd_tol, "Forward max-abs tolerance")->capture_default_str();
  c_equiv->add_option("--grad-tol", eq.grad_tol, "Gradient max-abs tolerance")->capture_default_str();

  BenchOpts bench;
  auto* c_bench = app.add_subcommand("kernel-bench", "Wall time and peak tensor memory of one forward+backward pass");
  c_bench->add_option("--n", bench.n, "Comma-separated node counts")->capture_default_str();
  c_bench->add_option("--dr", bench.dr, "Relationship width d_r")->capture_default_str();
  c_bench->add_option("--heads", bench.heads, "Attention heads")->capture_default_str();
  c_bench->add_option("--impl", bench.impl, "naive, streamed or both")->capture_default_str();

  ExpressivityOpts ex;
  auto* c_expr = app.add_subcommand("expressivity", "Pair-suite verdicts of the WL oracles and the model");
  c_expr->add_option("--k", ex.k, "Model order (0: oracles only)")->capture_default_str();
  c_expr->add_option("--seeds", ex.seeds, "Model seeds")->capture_default_str();
  c_expr->add_option("--golden", ex.golden, "JSON-lines file of frozen oracle verdicts");

  RotationOpts rot;
  auto* c_rot = app.add_subcommand("rotation-check", "Rotation composition through the multiplicative combine");
  c_rot->add_option("--pairs", rot.pairs, "Random rotation pairs")->capture_default_str();
  c_rot->add_option("--tol", rot.tol, "Max-abs tolerance")->capture_default_str();

  TrainOpts tr;
  auto* c_train = app.add_subcommand("train", "Online training on a synthetic task");
  c_train->add_option("--task", tr.task, "shortest_path or cycle_count")->capture_default_str();
  c_train->add_option("--layers", tr.layers, "FloydBlock count L")->capture_default_str();
  c_train->add_option("--dr", tr.dr, "Relationship width d_r")->capture_default_str();
  c_train->add_option("--heads", tr.heads, "Attention heads")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs, "Epochs (0: config value)");
  c_train->add_option("--steps", tr.steps, "Optimizer steps per epoch (0: config value)");
  c_train->add_option("--time-budget", tr.time_budget, "Stop after this many seconds");
  c_train->add_option("--target-mae", tr.target_mae, "Stop once validation MAE is below this");

  EvalOpts ev;
  auto* c_eval = app.add_subcommand("eval", "Held-out MAE of a saved model");
  c_eval->add_option("--task", ev.task, "shortest_path or cycle_count")->capture_default_str();
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file");
  c_eval->add_option("--model-config", ev.model_config, "Model key=value file");
  c_eval->add_option("--n", ev.n, "Graph size")->capture_default_str();
  c_eval->add_option("--graphs", ev.graphs, "Number of graphs")->capture_default_str();
  c_eval->add_option("--max-mae", ev.max_mae, "Exit 1 unless the MAE is below this");

  OracleOpts orc;
  auto* c_oracle = app.add_subcommand("oracle", "Label and refinement oracles on a graph file");
  c_oracle->add_option("--graph", orc.graph, "Graph file");
  c_oracle->add_option("--format", orc.format, "edge-list or dense-matrix")->capture_default_str();
  c_oracle->add_option("--kind", orc.kind, "shortest_path, cycles, wl1, kfwl or kwl")->capture_default_str();
  c_oracle->add_option("--k", orc.k, "Tuple order for kfwl/kwl")->capture_default_str();
  c_oracle->add_option("--cycle-len", orc.cycle_len, "Cycle length for cycles")->capture_default_str();

  // CLI11 consumes arguments from the back; args[0] is the program name.
  std::vector<std::string> rev;
  if (!args.empty()) rev.assign(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    nn::set_max_threads(g.threads);
    if (c_grad->parsed()) return cmd_gradcheck(g, gc, out);
    if (c_equiv->parsed()) return cmd_kernel_equiv(g, eq, out);
    if (c_bench->parsed()) return cmd_kernel_bench(g, bench, out);
    if (c_expr->parsed()) return cmd_expressivity(g, ex, out);
    if (c_rot->parsed()) return cmd_rotation(g, rot, out);
    if (c_train->parsed()) return cmd_train(g, tr, out);
    if (c_eval->parsed()) return cmd_eval(g, ev, out);
    if (c_oracle->parsed()) return cmd_oracle(g, orc, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const model::ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace floydnet::cli
