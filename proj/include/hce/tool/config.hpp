#pragma once

// JSON run configurations. Unknown keys and out-of-range values are
// rejected with a ValidationError naming the field.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hce/lm/lm.hpp"
#include "hce/pron/train.hpp"

namespace hce::tool {

/// Input files. Relative paths resolve against the config file's directory.
struct DataPaths {
  std::string rules;     // IDS rule table
  std::string unify;     // optional variant unification pairs
  std::string readings;  // Unihan readings
  std::string variants;  // Unihan variants
  std::string split;     // prepared split CSV

  nlohmann::json to_json() const;
};

inline constexpr double kMinLr = 1e-4;
inline constexpr double kMaxLr = 3e-2;
inline constexpr double kMaxDropout = 0.5;

struct PronSpec {
  pron::RunConfig run;
  DataPaths data;
  std::optional<pron::Grid> grid;
};

struct MatrixSpec {
  std::vector<pron::RunConfig> cells;
  DataPaths data;
  std::map<int, std::string> splits;  // scenario -> split CSV
  std::optional<pron::Grid> grid;
};

struct LmSpec {
  lm::LmConfig config;
  std::string train;
  std::string valid;
  std::string test;
  std::string rules;
  std::string unify;
};

/// Throws IoError when unreadable and ParseError on malformed JSON.
nlohmann::json read_json_file(const std::filesystem::path& path);

PronSpec parse_pron_config(const nlohmann::json& j, const std::filesystem::path& base = {});
MatrixSpec parse_matrix_config(const nlohmann::json& j, const std::filesystem::path& base = {});
LmSpec parse_lm_config(const nlohmann::json& j, const std::filesystem::path& base = {});

PronSpec load_pron_config(const std::filesystem::path& path);
MatrixSpec load_matrix_config(const std::filesystem::path& path);
LmSpec load_lm_config(const std::filesystem::path& path);

}  // namespace hce::tool
