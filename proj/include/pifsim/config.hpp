#pragma once

// Run configuration for the command-line driver: defaults, presets,
// config-file overlays and the JSON form echoed into meta.json.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pifsim/strategies.hpp"

namespace pifsim::cli {

/// Bad flags, keys or value combinations (exit code 2).
class UsageError : public InvalidArgument {
  public:
    using InvalidArgument::InvalidArgument;
};

struct RunConfig {
    std::string benchmark = "landau";
    std::string strategy = "serial";
    int modes = 256;
    int ppm = 10;
    double dt = 0.003125;
    long steps = 768;  // 6144 for st
    double eps_fine = 1e-7;
    int ranks_space = 1;
    int ranks_time = 1;
    std::string coarse = "pif";  // landau: pif, penning: pic
    double eps_coarse = 1e-3;
    double dt_coarse = 0.05;     // penning: dt
    int nc_coarse = 256;         // pic grid, defaults to modes
    int blocks = 1;              // penning: 16
    double tol_parareal = 1e-8;
    int max_iters = 50;
    std::uint64_t seed = 42;
    int diag_every = 1;
    std::string shape = "delta";
    std::string out_dir = "pifsim_out";
    bool log_comm = false;
    bool overwrite = false;
    long watchdog_ms = 60000;

    bool operator==(const RunConfig&) const = default;
};

/// Raw key -> value settings; later layers override earlier ones.
using Settings = std::map<std::string, std::string>;

/// All recognised configuration keys, in output order.
const std::vector<std::string>& config_keys();

/// Settings of a named preset ("desk-landau", "desk-penning").
Settings preset(const std::string& name);

/// Parses a config file body: a flat JSON object or key=value lines
/// ('#' starts a comment). Keys may use '-' or '_'.
Settings parse_settings(const std::string& text);

/// Applies settings over the defaults and resolves benchmark-dependent
/// defaults for keys that were not set. Throws UsageError.
RunConfig make_config(const Settings& s);

std::string to_json(const RunConfig& c);
RunConfig config_from_json(const std::string& json);

/// Converts to a simulation request; throws UsageError on invalid combinations.
RunRequest to_request(const RunConfig& c);

/// Runs the driver with the given arguments (without the program name).
/// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pifsim::cli
