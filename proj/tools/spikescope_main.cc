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

// Command-line entry point: spikescope <recipe> [--config FILE] [--key.path=value ...]
//                           spikescope report <dir>

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spikescope/errors.h"
#include "spikescope/experiment.h"

namespace {

using nlohmann::json;
using namespace spikescope;

const std::map<std::string, std::string>& aliases() {
  static const std::map<std::string, std::string> kAliases = {
      {"model-a", "models.a"}, {"model-b", "models.b"}, {"n", "cka.n"},
      {"stage", "time_sensitivity.stage"}, {"t", "time_sensitivity.t"},
      {"out", "output_dir"}};
  return kAliases;
}

// Applies "--key.path=value" and "--key.path value" tokens in order.
void apply_overrides(json& config, const std::vector<std::string>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    if (tok.rfind("--", 0) != 0 || tok.size() == 2) {
      throw ConfigError("unexpected argument '" + tok + "'");
    }
    std::string key = tok.substr(2), value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= tokens.size()) throw ConfigError("missing value for '" + tok + "'");
      value = tokens[++i];
    }
    const auto alias = aliases().find(key);
    if (alias != aliases().end()) key = alias->second;
    apply_override(config, key, value);
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty() && args[0] == "run") args.erase(args.begin());

  CLI::App app{"Representation analysis of spiking and artificial networks"};
  app.allow_extras();
  std::string recipe, config_path;
  std::string names = "report";
  for (const auto& r : recipe_names()) names += " | " + r;
  app.add_option("recipe", recipe, names)->required();
  app.add_option("--config", config_path, "JSON config file");
  std::vector<std::string> rest;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    rest = app.remaining();
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (recipe == "report") {
      if (rest.size() != 1) throw ConfigError("usage: spikescope report <dir>");
      std::vector<std::string> missing;
      const int code = write_report(rest[0], &missing);
      for (const auto& m : missing) std::cerr << "missing artifact: " << m << "\n";
      std::cout << "report written to " << rest[0] << "/report.md\n";
      return code;
    }
    json config = default_config();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file " + config_path);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("config file " + config_path + ": " + e.what());
      }
      merge_config(config, file);
    }
    apply_overrides(config, rest);
    config["recipe"] = recipe;
    validate_config(config);
    const RecipeOutcome outcome = run_recipe(recipe, config);
    std::cout << outcome.summary.dump(2) << "\n";
    for (const auto& g : outcome.gates) {
      std::cout << (g.passed ? "PASS " : "FAIL ") << g.name << ": " << g.detail << "\n";
    }
    return outcome.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
