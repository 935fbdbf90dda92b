#include "mmcot/tensor_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mmcot/error.hpp"

namespace mmcot {

namespace {

bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    return true;
  }
  return false;
}

double parse_double(const std::string& token) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw FormatError("tensor file: bad value '" + token + "'");
  }
  return value;
}

Shape parse_shape(const std::string& line) {
  const std::string prefix = "shape:";
  if (line.rfind(prefix, 0) != 0) throw FormatError("tensor file: expected 'shape:' header, got '" + line + "'");
  std::istringstream fields(line.substr(prefix.size()));
  Shape shape;
  std::string token;
  while (fields >> token) {
    std::size_t dim = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), dim);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      throw FormatError("tensor file: bad dimension '" + token + "'");
    }
    shape.push_back(dim);
  }
  return shape;
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  if (ec != std::errc()) throw FormatError("format_double: conversion failed");
  return std::string(buffer, ptr);
}

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out << "shape:";
  for (std::size_t d : tensor.shape()) out << ' ' << d;
  out << '\n';
  const std::size_t width = tensor.rank() == 0 ? 1 : tensor.shape().back();
  const auto values = tensor.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << format_double(values[i]);
    out << ((width == 0 || (i + 1) % width == 0) ? '\n' : ' ');
  }
}

Tensor read_tensor(std::istream& in) {
  std::string line;
  if (!next_content_line(in, line)) throw FormatError("tensor file: missing 'shape:' header");
  Shape shape = parse_shape(line);
  const std::size_t count = shape_numel(shape);
  std::vector<double> values;
  values.reserve(count);
  std::string token;
  while (values.size() < count) {
    if (!(in >> token)) {
      throw FormatError("tensor file: expected " + std::to_string(count) + " values, found " +
                        std::to_string(values.size()));
    }
    values.push_back(parse_double(token));
  }
  try {
    return Tensor::from(std::move(shape), std::move(values));
  } catch (const NonFiniteError&) {
    throw FormatError("tensor file: non-finite value");
  }
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_tensor(out, tensor);
  if (!out) throw FormatError("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  Tensor t = read_tensor(in);
  std::string extra;
  if (in >> extra) throw FormatError(path.string() + ": trailing data after tensor values");
  return t;
}

void write_parameters(std::ostream& out, const std::vector<NamedTensor>& params) {
  for (const auto& [name, tensor] : params) {
    out << "name: " << name << '\n';
    write_tensor(out, tensor);
  }
}

std::vector<NamedTensor> read_parameters(std::istream& in) {
  std::vector<NamedTensor> params;
  std::string line;
  while (next_content_line(in, line)) {
    const std::string prefix = "name:";
    if (line.rfind(prefix, 0) != 0) throw FormatError("parameter file: expected 'name:' line, got '" + line + "'");
    auto start = line.find_first_not_of(' ', prefix.size());
    if (start == std::string::npos) throw FormatError("parameter file: empty name");
    std::string name = line.substr(start);
    params.emplace_back(std::move(name), read_tensor(in));
  }
  return params;
}

void save_parameters(const std::filesystem::path& path, const std::vector<NamedTensor>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_parameters(out, params);
  if (!out) throw FormatError("write failed: " + path.string());
}

std::vector<NamedTensor> load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_parameters(in);
}

void assign_parameters(const std::vector<NamedTensor>& target, const std::vector<NamedTensor>& source) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, tensor] : source) by_name.emplace(name, &tensor);
  for (const auto& [name, tensor] : target) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("parameter '" + name + "' missing from file");
    if (it->second->shape() != tensor.shape()) {
      throw DimensionError("parameter '" + name + "' shape " + shape_to_string(it->second->shape()) +
                           " does not match model " + shape_to_string(tensor.shape()));
    }
    Tensor dst = tensor;
    std::copy(it->second->data().begin(), it->second->data().end(), dst.mutable_data().begin());
  }
  if (by_name.size() != target.size()) throw FormatError("parameter file holds unexpected entries");
}

}  // namespace mmcot
