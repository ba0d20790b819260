#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedintent/model.hpp"
#include "pedintent/preprocess.hpp"
#include "pedintent/training.hpp"

namespace pedintent::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct RunConfig {
  ModelSpec model = named_config("ours6_bboxes");
  TrainConfig train;
  std::filesystem::path annotations;
  std::filesystem::path frames;  // only needed by visual branches
  WindowConfig window;
  bool balance = false;
  ImageSize clip_size;
  double enlarge_ratio = 1.5;
  std::filesystem::path out;

  ClipConfig clip_config() const;
  void validate() const;  // throws ConfigError
};

// Relative paths resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

// Runs one subcommand; never throws. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace pedintent::cli
