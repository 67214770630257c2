// Command-line front end: validate | estimate | simulate | select-t0.
// Exit codes: 0 ok, 1 domain finding (invalid data, failed fit), 2 usage or I/O error.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "survsurrogate/config.hpp"
#include "survsurrogate/core_data.hpp"

namespace survsurrogate {

inline constexpr const char* kVersion = "0.1.0";

// Truth seed shared by every simulate run so cached truths are reused.
inline constexpr std::uint64_t kOracleSeed = 20240611;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Subcommand bodies on an already parsed configuration.
int cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_estimate(const RunConfig& config, int threads, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& config, int threads, std::ostream& out, std::ostream& err);
int cmd_select_t0(const RunConfig& config, int threads, std::ostream& out, std::ostream& err);

/// results.json content for a dataset (already validated) and configuration.
std::string estimate_json(const LongitudinalDataset& data, const RunConfig& config, int threads);

}  // namespace survsurrogate
