#include "mmcot/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mmcot/error.hpp"
#include "mmcot/tensor_io.hpp"

namespace mmcot {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParameterError("config: bad value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ParameterError("config: bad boolean '" + std::string(text) + "' for key '" + std::string(key) + "'");
}

std::string_view stages_name(ContrastiveStages s) {
  switch (s) {
    case ContrastiveStages::both: return "both";
    case ContrastiveStages::rationale: return "rationale";
    case ContrastiveStages::answer: return "answer";
    case ContrastiveStages::none: return "none";
  }
  return "both";
}

}  // namespace

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{"epochs",
                                          "batch_size",
                                          "lr",
                                          "grad_clip",
                                          "lambda",
                                          "tau",
                                          "hops",
                                          "heads",
                                          "d",
                                          "ff_width",
                                          "seed",
                                          "threshold_rationale",
                                          "threshold_answer",
                                          "max_steps",
                                          "patience",
                                          "tolerance",
                                          "eval_every",
                                          "share_stages",
                                          "contrastive_stages",
                                          "symmetric_contrastive",
                                          "gate_bias",
                                          "init_scale",
                                          "max_decode",
                                          "max_vocab",
                                          "bleu_order",
                                          "threads"};
  return k;
}

void TrainConfig::set(std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "grad_clip") grad_clip = parse_number<double>(key, value);
  else if (key == "lambda") lambda = parse_number<double>(key, value);
  else if (key == "tau") tau = parse_number<double>(key, value);
  else if (key == "hops") hops = parse_number<std::size_t>(key, value);
  else if (key == "heads") heads = parse_number<std::size_t>(key, value);
  else if (key == "d") d = parse_number<std::size_t>(key, value);
  else if (key == "ff_width") ff_width = parse_number<std::size_t>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "threshold_rationale") threshold_rationale = parse_number<double>(key, value);
  else if (key == "threshold_answer") threshold_answer = parse_number<double>(key, value);
  else if (key == "max_steps") max_steps = parse_number<std::size_t>(key, value);
  else if (key == "patience") patience = parse_number<std::size_t>(key, value);
  else if (key == "tolerance") tolerance = parse_number<double>(key, value);
  else if (key == "eval_every") eval_every = parse_number<std::size_t>(key, value);
  else if (key == "share_stages") share_stages = parse_bool(key, value);
  else if (key == "contrastive_stages") {
    if (value == "both") contrastive_stages = ContrastiveStages::both;
    else if (value == "rationale") contrastive_stages = ContrastiveStages::rationale;
    else if (value == "answer") contrastive_stages = ContrastiveStages::answer;
    else if (value == "none") contrastive_stages = ContrastiveStages::none;
    else throw ParameterError("config: contrastive_stages must be both|rationale|answer|none");
  } else if (key == "symmetric_contrastive") symmetric_contrastive = parse_bool(key, value);
  else if (key == "gate_bias") gate_bias = parse_bool(key, value);
  else if (key == "init_scale") init_scale = parse_number<double>(key, value);
  else if (key == "max_decode") max_decode = parse_number<std::size_t>(key, value);
  else if (key == "max_vocab") max_vocab = parse_number<std::size_t>(key, value);
  else if (key == "bleu_order") bleu_order = parse_number<std::size_t>(key, value);
  else if (key == "threads") threads = parse_number<std::size_t>(key, value);
  else throw ParameterError("config: unknown key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {{"epochs", std::to_string(epochs)},
          {"batch_size", std::to_string(batch_size)},
          {"lr", format_double(lr)},
          {"grad_clip", format_double(grad_clip)},
          {"lambda", format_double(lambda)},
          {"tau", format_double(tau)},
          {"hops", std::to_string(hops)},
          {"heads", std::to_string(heads)},
          {"d", std::to_string(d)},
          {"ff_width", std::to_string(ff_width)},
          {"seed", std::to_string(seed)},
          {"threshold_rationale", format_double(threshold_rationale)},
          {"threshold_answer", format_double(threshold_answer)},
          {"max_steps", std::to_string(max_steps)},
          {"patience", std::to_string(patience)},
          {"tolerance", format_double(tolerance)},
          {"eval_every", std::to_string(eval_every)},
          {"share_stages", b(share_stages)},
          {"contrastive_stages", std::string(stages_name(contrastive_stages))},
          {"symmetric_contrastive", b(symmetric_contrastive)},
          {"gate_bias", b(gate_bias)},
          {"init_scale", format_double(init_scale)},
          {"max_decode", std::to_string(max_decode)},
          {"max_vocab", std::to_string(max_vocab)},
          {"bleu_order", std::to_string(bleu_order)},
          {"threads", std::to_string(threads)}};
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : entries()) out << k << " = " << v << '\n';
  return out.str();
}

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    cfg.set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void TrainConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write config " + path.string());
  out << to_text();
}

void TrainConfig::apply_environment(const std::string& prefix) {
  for (const auto& key : keys()) {
    std::string name = prefix + key;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
    if (const char* value = std::getenv(name.c_str())) set(key, value);
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ParameterError("config: batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ParameterError("config: lr must be >= 0");
  if (!(grad_clip >= 0.0)) throw ParameterError("config: grad_clip must be >= 0");
  if (!(lambda >= 0.0)) throw ParameterError("config: lambda must be >= 0");
  if (!(tau > 0.0)) throw ParameterError("config: tau must be > 0");
  if (heads == 0 || d == 0 || d % heads != 0) throw ParameterError("config: d must be a positive multiple of heads");
  if (ff_width == 0) throw ParameterError("config: ff_width must be >= 1");
  if (!(tolerance >= 0.0)) throw ParameterError("config: tolerance must be >= 0");
  if (!(init_scale > 0.0)) throw ParameterError("config: init_scale must be > 0");
  if (bleu_order == 0) throw ParameterError("config: bleu_order must be >= 1");
  if (threads == 0) throw ParameterError("config: threads must be >= 1");
  for (double t : {threshold_rationale, threshold_answer}) {
    if (!(t >= 0.0 && t <= 1.0)) throw ParameterError("config: thresholds must lie in [0, 1]");
  }
}

}  // namespace mmcot
