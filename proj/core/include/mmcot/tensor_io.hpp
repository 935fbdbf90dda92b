#pragma once

// Plain-text tensor files.
//
//   shape: d1 d2 ...
//   v v v ...        (one line per row, row-major)
//
// Values use the shortest round-trip decimal form, so save -> load is
// bit-identical. A parameter file is a sequence of named sections:
//
//   name: fusion.hop0.gate.w
//   shape: 8 4
//   ...

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mmcot/tensor.hpp"

namespace mmcot {

using NamedTensor = std::pair<std::string, Tensor>;

std::string format_double(double value);

void write_tensor(std::ostream& out, const Tensor& tensor);
// Reads one tensor (header + values). The result does not track gradients.
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

void write_parameters(std::ostream& out, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> read_parameters(std::istream& in);
void save_parameters(const std::filesystem::path& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_parameters(const std::filesystem::path& path);

// Copies values from `source` into the same-named tensors of `target`.
// Every target name must be present with an identical shape.
void assign_parameters(const std::vector<NamedTensor>& target, const std::vector<NamedTensor>& source);

}  // namespace mmcot
