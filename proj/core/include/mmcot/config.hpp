#pragma once

// Training/evaluation configuration as a plain `key = value` text file.
// Every key can be overridden from the environment as MMCOT_<KEY> (upper case).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mmcot {

enum class ContrastiveStages { both, rationale, answer, none };

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 5e-5;
  double grad_clip = 1.0;  // global-norm cap; 0 disables
  double lambda = 0.1;
  double tau = 0.1;
  std::size_t hops = 2;
  std::size_t heads = 2;
  std::size_t d = 16;
  std::size_t ff_width = 32;
  std::uint64_t seed = 42;
  double threshold_rationale = 0.5;
  double threshold_answer = 0.8;
  std::size_t max_steps = 0;   // 0: no step cap
  std::size_t patience = 3;
  double tolerance = 1e-4;     // relative change counted as "stable"
  std::size_t eval_every = 0;  // 0: validate once per epoch
  bool share_stages = false;
  ContrastiveStages contrastive_stages = ContrastiveStages::both;
  bool symmetric_contrastive = false;
  bool gate_bias = true;
  double init_scale = 0.1;
  std::size_t max_decode = 48;
  std::size_t max_vocab = 256;
  std::size_t bleu_order = 4;
  std::size_t threads = 1;  // evaluation workers

  // Throws ParameterError on out-of-range values.
  void validate() const;

  // Applies one key; throws ParameterError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  // Ordered key/value pairs; serialising then parsing is the identity.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Overrides from MMCOT_<KEY> environment variables.
  void apply_environment(const std::string& prefix = "MMCOT_");

  static const std::vector<std::string>& keys();
};

}  // namespace mmcot
