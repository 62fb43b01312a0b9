#include "floydnet/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace floydnet::nn {
namespace {

constexpr const char* kMagic = "floydnet-checkpoint";

void write_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  os.write(bytes, 8);
}

double read_le(const char* bytes) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

struct Entry {
  Shape shape;
  std::size_t offset = 0;
  std::size_t length = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamRefs& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os << kMagic << " 1\n";
  os << "params " << params.size() << "\n";
  std::size_t offset = 0;
  for (const Parameter* p : params) {
    const std::size_t bytes = p->value.size() * sizeof(double);
    os << p->name << " " << p->value.rank();
    for (std::size_t d : p->value.shape()) os << " " << d;
    os << " " << offset << " " << bytes << "\n";
    offset += bytes;
  }
  os << "data " << offset << "\n";
  for (const Parameter* p : params) {
    for (double v : p->value.values()) write_le(os, v);
  }
  if (!os) throw CheckpointError("write failed for " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, const ParamRefs& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());

  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) throw CheckpointError(std::string("truncated checkpoint: expected ") + what);
    return std::istringstream(line);
  };

  {
    auto ls = next_line("header");
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kMagic || version != 1) throw CheckpointError("not a floydnet checkpoint: " + path.string());
  }
  std::size_t count = 0;
  {
    auto ls = next_line("param count");
    std::string tag;
    ls >> tag >> count;
    if (tag != "params" || !ls) throw CheckpointError("malformed params line");
  }
  std::map<std::string, Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    auto ls = next_line("param entry");
    std::string name;
    std::size_t rank = 0;
    ls >> name >> rank;
    Entry e;
    e.shape.resize(rank);
    for (auto& d : e.shape) ls >> d;
    ls >> e.offset >> e.length;
    if (!ls) throw CheckpointError("malformed entry: " + line);
    entries.emplace(name, std::move(e));
  }
  std::size_t total = 0;
  {
    auto ls = next_line("data marker");
    std::string tag;
    ls >> tag >> total;
    if (tag != "data" || !ls) throw CheckpointError("malformed data line");
  }
  std::string blob(total, '\0');
  is.read(blob.data(), static_cast<std::streamsize>(total));
  if (static_cast<std::size_t>(is.gcount()) != total) throw CheckpointError("truncated binary section");

  if (entries.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(entries.size()) + " params, model expects " +
                          std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end()) throw CheckpointError("missing parameter " + p->name);
    const Entry& e = it->second;
    if (e.shape != p->value.shape()) {
      throw CheckpointError("shape mismatch for " + p->name + ": file " + shape_string(e.shape) + ", model " +
                            shape_string(p->value.shape()));
    }
    if (e.length != p->value.size() * sizeof(double) || e.offset + e.length > total) {
      throw CheckpointError("bad extent for " + p->name);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = read_le(blob.data() + e.offset + 8 * i);
  }
}

}  // namespace floydnet::nn
