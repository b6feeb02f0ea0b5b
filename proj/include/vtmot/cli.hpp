// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. parse_cli turns arguments into a CliConfig (or a
// help text / usage error); execute runs one command and returns its exit
// code. Exit 0 means the command succeeded semantically, 1 any failure
// during execution, 2 a usage error.
#pragma once

#include "vtmot/harness.hpp"
#include "vtmot/metrics.hpp"
#include "vtmot/pfm/fusion.hpp"
#include "vtmot/tracker.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vtmot {

enum class Command { Validate, Stats, Evaluate, Track, PfmDemo, GradCheck, Gen };
enum class OutputFormat { Table, Machine };

std::string_view to_string(Command c);

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable holding the default --jobs value.
inline constexpr const char* kJobsEnv = "VTMOT_JOBS";

struct CliConfig {
  Command command = Command::Validate;
  OutputFormat format = OutputFormat::Table;
  unsigned jobs = 1;

  std::filesystem::path dataset;  // validate, stats, track, evaluate (--gt)
  std::filesystem::path results;  // evaluate (--res), track and gen (--out)
  std::filesystem::path output;   // pfm-demo: where to write the stage arrays
  std::filesystem::path fixture;  // pfm-demo

  // stats from aggregate counts, used when no dataset is given
  std::size_t n_videos = 0;
  std::size_t n_frames = 0;
  std::size_t n_tracks = 0;
  std::size_t n_boxes = 0;
  double frame_rate = 25.0;

  Protocol protocol;
  TrackerConfig tracker;

  pfm::PfmConfig pfm = pfm::PfmConfig::gradcheck();
  std::uint64_t seed = 1;
  bool quick = false;       // gradcheck: skip the composed forward pass
  bool init_fixture = false;  // pfm-demo: write a random fixture first
  bool check_fixture = false; // pfm-demo: gradient check at the fixture

  ScenarioSpec scenario;
  int n_sequences = 1;
  std::vector<Platform> platform_cycle;  // gen: platforms assigned in turn
  std::filesystem::path oracle_results;  // gen: perfect-identity result files
};

struct ParseOutcome {
  std::optional<CliConfig> config;  // set when a command should run
  int exit_code = kExitOk;          // meaningful when config is empty
  std::string out;                  // help text
  std::string err;                  // usage error message
};

/// Arguments exclude the program name. Unknown flags, missing required
/// paths and malformed values give exit code 2 with a message in `err`.
ParseOutcome parse_cli(std::span<const std::string> args);

/// Full help: every command with every flag.
std::string help_text();

int execute(const CliConfig& cfg, std::ostream& out, std::ostream& err);

/// parse_cli followed by execute.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace vtmot
