#pragma once

// Parameter checkpoints.
//
//   DBMCKPT\n
//   version 1\n
//   count <n>\n
//   <name> <d0>x<d1>... <f64|f32>\n      (n manifest lines)
//   end\n
//   <raw little-endian blocks, manifest order; 8 bytes per f64, 4 per f32>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dbm/tensor.hpp"

namespace dbm {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  Precision precision = Precision::f64;
  std::vector<double> values;
};

void write_checkpoint(std::ostream& os, const ParameterSet& params);
std::vector<CheckpointEntry> read_checkpoint(std::istream& is);

void save_checkpoint(const std::string& path, const ParameterSet& params);
// Loads values into an existing parameter set; every name and shape must match.
void load_checkpoint(const std::string& path, ParameterSet& params);
void apply_checkpoint(const std::vector<CheckpointEntry>& entries, ParameterSet& params);

}  // namespace dbm
