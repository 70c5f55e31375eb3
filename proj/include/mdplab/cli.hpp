/*
   Copyright 2026 The mdplab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace mdplab::cli {

using Json = nlohmann::ordered_json;

/// Configuration failure; maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

const std::vector<std::string>& commands();

struct RunConfig {
  std::string command;
  Json model;       // resolved: name plus every parameter
  Json experiment;  // resolved: name plus every parameter
  std::uint64_t seed = 0;
  std::optional<std::size_t> threads;  // empty means auto
  std::string out_dir = ".";
};

/// Strict parse: unknown keys are rejected by name and defaults are filled in.
/// Accepts provenance sidecars, which carry `version` and `command`.
RunConfig parse_config(const std::string& text, const std::string& command);

/// Everything needed to reproduce an output; excludes threads and out_dir.
Json provenance(const RunConfig& config);

struct OutputFile {
  std::string name;
  std::string text;
  std::size_t rows = 0;
};

using Job = std::function<std::vector<OutputFile>()>;

/// Validates every parameter and returns the job that runs the experiment.
/// Throws ConfigError on invalid parameters; nothing is simulated.
Job plan(const RunConfig& config);

/// Writes outputs and their `.meta.json` sidecars into out_dir through
/// temporary files. On failure every file of this run is removed.
std::vector<std::string> write_outputs(const RunConfig& config,
                                       const std::vector<OutputFile>& outputs);

/// Parses "auto" or a positive integer.
std::optional<std::size_t> parse_threads(const std::string& text);

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mdplab::cli
