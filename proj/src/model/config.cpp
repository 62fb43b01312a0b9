#include "floydnet/model/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace floydnet::model {

ReadoutLevel parse_readout(const std::string& name) {
  if (name == "graph") return ReadoutLevel::kGraph;
  if (name == "node") return ReadoutLevel::kNode;
  if (name == "edge") return ReadoutLevel::kEdge;
  throw ConfigError("unknown readout level '" + name + "' (expected graph, node or edge)");
}

const char* readout_name(ReadoutLevel level) {
  switch (level) {
    case ReadoutLevel::kGraph: return "graph";
    case ReadoutLevel::kNode: return "node";
    case ReadoutLevel::kEdge: return "edge";
  }
  return "?";
}

KernelKind parse_kernel(const std::string& name) {
  if (name == "naive") return KernelKind::kNaive;
  if (name == "streamed") return KernelKind::kStreamed;
  throw ConfigError("unknown kernel '" + name + "' (expected naive or streamed)");
}

const char* kernel_name(KernelKind kind) { return kind == KernelKind::kNaive ? "naive" : "streamed"; }

std::vector<std::size_t> ModelConfig::init_hidden_dims() const {
  return init_hidden.empty() ? std::vector<std::size_t>{2 * rel_dim} : init_hidden;
}

std::size_t ModelConfig::init_input_dim() const {
  const std::size_t pairs = order * (order - 1) / 2;
  return graph_dim + order * node_dim + pairs * edge_segment_dim();
}

void ModelConfig::validate() const {
  if (order < 1 || order > 3) throw ConfigError("order must be 1, 2 or 3");
  if (rel_dim == 0 || heads == 0 || rel_dim % heads != 0) throw ConfigError("rel_dim must be a positive multiple of heads");
  if (out_dim == 0) throw ConfigError("out_dim must be >= 1");
  for (std::size_t h : init_hidden)
    if (h == 0) throw ConfigError("init hidden widths must be >= 1");
  if (init_input_dim() == 0) throw ConfigError("initial tuple encoding is empty; add node or graph features");
  if (readout == ReadoutLevel::kEdge && order < 2) throw ConfigError("edge readout needs order >= 2");
  if (readout != ReadoutLevel::kEdge && !supernode) throw ConfigError("graph and node readouts need the supernode");
}

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(out);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(to_size(key, item));
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool is_model_key(const std::string& key) {
  static const char* const keys[] = {"layers",   "rel_dim", "heads",    "combine",  "order",    "readout",
                                     "init_hidden", "ffn_hidden", "supernode", "seed", "kernel", "node_dim",
                                     "edge_dim", "graph_dim", "out_dim"};
  return std::find(std::begin(keys), std::end(keys), key) != std::end(keys);
}

ModelConfig parse_config(const std::map<std::string, std::string>& entries, ModelConfig cfg) {
  for (const auto& [key, v] : entries) {
    if (key == "layers") cfg.layers = to_size(key, v);
    else if (key == "rel_dim") cfg.rel_dim = to_size(key, v);
    else if (key == "heads") cfg.heads = to_size(key, v);
    else if (key == "combine") {
      try {
        cfg.combine = attention::parse_combine(v);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "order") cfg.order = to_size(key, v);
    else if (key == "readout") cfg.readout = parse_readout(v);
    else if (key == "init_hidden") cfg.init_hidden = to_sizes(key, v);
    else if (key == "ffn_hidden") cfg.ffn_hidden = to_size(key, v);
    else if (key == "supernode") cfg.supernode = to_bool(key, v);
    else if (key == "seed") cfg.seed = to_size(key, v);
    else if (key == "kernel") cfg.kernel = parse_kernel(v);
    else if (key == "node_dim") cfg.node_dim = to_size(key, v);
    else if (key == "edge_dim") cfg.edge_dim = to_size(key, v);
    else if (key == "graph_dim") cfg.graph_dim = to_size(key, v);
    else if (key == "out_dim") cfg.out_dim = to_size(key, v);
    else throw ConfigError("unknown model config key '" + key + "'");
  }
  return cfg;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

ModelConfig load_config(const std::filesystem::path& path) {
  ModelConfig cfg = parse_config(read_key_values(path));
  cfg.validate();
  return cfg;
}

std::string format_config(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "layers=" << cfg.layers << "\n"
      << "rel_dim=" << cfg.rel_dim << "\n"
      << "heads=" << cfg.heads << "\n"
      << "combine=" << attention::combine_name(cfg.combine) << "\n"
      << "order=" << cfg.order << "\n"
      << "readout=" << readout_name(cfg.readout) << "\n"
      << "init_hidden=";
  const auto hidden = cfg.init_hidden_dims();
  for (std::size_t i = 0; i < hidden.size(); ++i) out << (i ? "," : "") << hidden[i];
  out << "\n"
      << "ffn_hidden=" << cfg.ffn_hidden_dim() << "\n"
      << "supernode=" << (cfg.supernode ? "true" : "false") << "\n"
      << "seed=" << cfg.seed << "\n"
      << "kernel=" << kernel_name(cfg.kernel) << "\n"
      << "node_dim=" << cfg.node_dim << "\n"
      << "edge_dim=" << cfg.edge_dim << "\n"
      << "graph_dim=" << cfg.graph_dim << "\n"
      << "out_dim=" << cfg.out_dim << "\n";
  return out.str();
}

void save_config(const std::filesystem::path& path, const ModelConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << format_config(cfg);
}

}  // namespace floydnet::model
