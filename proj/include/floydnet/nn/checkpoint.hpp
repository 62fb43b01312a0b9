#pragma once

#include <filesystem>
#include <stdexcept>

#include "floydnet/nn/ops.hpp"

namespace floydnet::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// On-disk layout:
//
//   floydnet-checkpoint 1
//   params <count>
//   <name> <rank> <d0> .. <d{rank-1}> <byte_offset> <byte_length>   (one per param)
//   data <total_bytes>
//   <total_bytes of little-endian IEEE-754 binary64, params back to back>
//
// Offsets are relative to the start of the binary section.
void save_checkpoint(const std::filesystem::path& path, const ParamRefs& params);

// Loads values into `params`, matching by name. Every parameter must be
// present with an identical shape; extra entries in the file are an error.
void load_checkpoint(const std::filesystem::path& path, const ParamRefs& params);

}  // namespace floydnet::nn
