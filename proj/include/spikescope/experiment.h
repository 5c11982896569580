// Copyright 2026 The Spikescope Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPIKESCOPE_EXPERIMENT_H_
#define SPIKESCOPE_EXPERIMENT_H_

#include <string>
#include <vector>

#include "json.hpp"

namespace spikescope {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitGateFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

std::vector<std::string> recipe_names();

// Every configurable field with its default value.
nlohmann::json default_config();

// Overlays `overrides` onto `base`. Unknown fields and type mismatches throw
// ConfigError naming the dotted field path.
void merge_config(nlohmann::json& base, const nlohmann::json& overrides,
                  const std::string& path = "");

// Sets one dotted field from command-line text. The text is parsed as JSON
// when possible (numbers, booleans, arrays) and otherwise taken as a string.
void apply_override(nlohmann::json& config, const std::string& dotted,
                    const std::string& text);

// Range checks across the resolved config; throws ConfigError.
void validate_config(const nlohmann::json& config);

struct Gate {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct RecipeOutcome {
  std::vector<Gate> gates;
  int exit_code = kExitOk;
  nlohmann::json summary;  // recipe-specific metrics, also written to summary.json
};

// Runs one recipe with a resolved config. Writes every artifact under
// config["output_dir"] atomically, echoes the config to config.json and
// lists all outputs with SHA-256 checksums in manifest.json.
RecipeOutcome run_recipe(const std::string& recipe, const nlohmann::json& config);

// Assembles report.md and table CSVs from the manifests found in `dir` and
// its immediate subdirectories. Returns kExitOk, or kExitRuntime when a
// manifest lists missing artifacts.
int write_report(const std::string& dir, std::vector<std::string>* missing = nullptr);

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& bytes);

}  // namespace spikescope

#endif  // SPIKESCOPE_EXPERIMENT_H_
