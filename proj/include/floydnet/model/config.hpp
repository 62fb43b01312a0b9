#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "floydnet/attention/pivotal.hpp"

namespace floydnet::model {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ReadoutLevel { kGraph, kNode, kEdge };
enum class KernelKind { kNaive, kStreamed };

ReadoutLevel parse_readout(const std::string& name);
const char* readout_name(ReadoutLevel level);
KernelKind parse_kernel(const std::string& name);
const char* kernel_name(KernelKind kind);

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t rel_dim = 16;
  std::size_t heads = 2;
  attention::CombineKind combine = attention::CombineKind::kAdditive;
  std::size_t order = 2;
  ReadoutLevel readout = ReadoutLevel::kGraph;
  std::vector<std::size_t> init_hidden;  // empty means {2 * rel_dim}
  std::size_t ffn_hidden = 0;            // 0 means 4 * rel_dim
  bool supernode = true;
  std::uint64_t seed = 0;
  KernelKind kernel = KernelKind::kNaive;  // used when order == 2
  std::size_t node_dim = 0;
  std::size_t edge_dim = 0;
  std::size_t graph_dim = 0;
  std::size_t out_dim = 1;

  std::vector<std::size_t> init_hidden_dims() const;
  std::size_t ffn_hidden_dim() const { return ffn_hidden ? ffn_hidden : 4 * rel_dim; }
  // Width of one pairwise segment: presence, diagonal, weight, edge features.
  std::size_t edge_segment_dim() const { return 3 + edge_dim; }
  std::size_t init_input_dim() const;

  // Throws ConfigError. layers == 0 is accepted (an empty block stack).
  void validate() const;
};

// Flat key=value text. Unknown keys are rejected; '#' starts a comment.
bool is_model_key(const std::string& key);
ModelConfig parse_config(const std::map<std::string, std::string>& entries, ModelConfig base = {});
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
ModelConfig load_config(const std::filesystem::path& path);
std::string format_config(const ModelConfig& cfg);
void save_config(const std::filesystem::path& path, const ModelConfig& cfg);

}  // namespace floydnet::model
