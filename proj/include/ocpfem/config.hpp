#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ocpfem/verify.hpp"

namespace ocpfem {

/// Invalid configuration: unknown key, malformed or out-of-range value.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Command { solve, study, lod_study, check_theorems, dump_mesh };

struct RunConfig {
    Command command = Command::study;

    double gamma = 1.0;
    double bound = 0.5;
    double contrast = 100.0;
    double period = 0.03125;

    std::vector<int> schedule{8, 16, 32, 64};
    int n = 16;  // single-mesh commands
    ControlRule control = ControlRule::same;
    int control_n = 8;

    std::vector<int> coarse_n{4, 8, 16};
    int fine_n = 128;
    int layers = 0;  // 0: ceil(c_loc log2(1/H))
    double c_loc = 1.0;

    double tol = 1e-10;
    int max_iter = 50;
    std::uint64_t seed = 42;

    std::string output;     // CSV table, stdout when empty
    std::string json;       // JSON summary
    std::string fields;     // prefix of per-field CSV files (solve)
    std::string dump_mesh;  // mesh dump path
};

using Setting = std::pair<std::string, std::string>;

/// Parses whitespace-separated key=value pairs ('#' starts a comment), then
/// applies `overrides` in order, then validates. Keys may use '-' or '_'.
/// Throws ConfigError naming the offending key.
RunConfig parse_config(const std::string& text, const std::vector<Setting>& overrides = {});

/// Applies one setting without validating the whole configuration.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Range and consistency checks; throws ConfigError.
void validate(const RunConfig& cfg);

/// Names accepted by apply_setting, in canonical (dashed) form.
const std::vector<std::string>& config_keys();

Command parse_command(const std::string& name);
std::string command_name(Command c);
std::string control_rule_name(ControlRule r);

/// Resolved configuration as canonical key=value lines.
std::vector<std::string> format_config(const RunConfig& cfg);

}  // namespace ocpfem
