#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tetherkit/sim.hpp"

namespace tetherkit::cli {

using sim::FilterMode;

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kInvalidConfig = 2,
  kNumericalFailure = 3,
};

struct SimulateArgs {
  std::string scenario;
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::string filter = "do_esekf";
};

struct TableArgs {
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<int> samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;  // .csv or .json
};

struct NeesArgs {
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err);
int cmd_observability_table(const TableArgs& args, std::ostream& out, std::ostream& err);
int cmd_check(const std::string& suite, std::ostream& out, std::ostream& err);
int cmd_nees(const NeesArgs& args, std::ostream& out, std::ostream& err);
/// Re-runs the simulate invocation recorded in a manifest into `out_dir`.
int cmd_replay(const std::string& manifest_path, const std::string& out_dir, std::ostream& out,
               std::ostream& err);

/// Full command line entry point.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

std::string trace_header();
void write_trace_csv(const std::string& path, const sim::Trace& trace, FilterMode mode);

/// Loads the optional config file, then applies key=value overrides.
Config resolve_config(const std::optional<std::string>& path,
                      const std::vector<std::string>& overrides);

std::string version();

}  // namespace tetherkit::cli
