#include "ocpfem/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace ocpfem {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string canonical(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

long long to_integer(const std::string& key, const std::string& v) {
    long long x = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return x;
}

int to_int(const std::string& key, const std::string& v) {
    const long long x = to_integer(key, v);
    if (x < -1000000000LL || x > 1000000000LL) throw ConfigError(key + ": value out of range");
    return static_cast<int>(x);
}

std::vector<int> to_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of integers");
    return out;
}

std::string fmt(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

std::string fmt_list(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

void require_increasing(const std::string& key, const std::vector<int>& v) {
    if (v.empty()) throw ConfigError(key + " must not be empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 1) throw ConfigError(key + " entries must be >= 1");
        if (i > 0 && v[i] <= v[i - 1]) throw ConfigError(key + " must be strictly increasing");
    }
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "command", "gamma",  "bound",  "contrast", "period", "schedule", "n",      "control",   "control-n",
        "coarse-n", "fine-n", "layers", "c-loc",    "tol",    "max-iter", "seed",   "output",    "json",
        "fields",  "dump-mesh"};
    return keys;
}

Command parse_command(const std::string& name) {
    if (name == "solve") return Command::solve;
    if (name == "study") return Command::study;
    if (name == "lod-study") return Command::lod_study;
    if (name == "check-theorems") return Command::check_theorems;
    if (name == "dump-mesh") return Command::dump_mesh;
    throw ConfigError("command must be one of solve, study, lod-study, check-theorems, dump-mesh");
}

std::string command_name(Command c) {
    switch (c) {
        case Command::solve: return "solve";
        case Command::study: return "study";
        case Command::lod_study: return "lod-study";
        case Command::check_theorems: return "check-theorems";
        case Command::dump_mesh: return "dump-mesh";
    }
    return {};
}

std::string control_rule_name(ControlRule r) {
    switch (r) {
        case ControlRule::same: return "same";
        case ControlRule::h_squared: return "h-squared";
        case ControlRule::fixed_n: return "fixed-n";
        case ControlRule::variational: return "variational";
    }
    return {};
}

void apply_setting(RunConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
    const std::string key = canonical(trim(raw_key));
    const std::string v = trim(raw_value);
    if (key == "command") cfg.command = parse_command(v);
    else if (key == "gamma") cfg.gamma = to_double(key, v);
    else if (key == "bound") cfg.bound = to_double(key, v);
    else if (key == "contrast") cfg.contrast = to_double(key, v);
    else if (key == "period") cfg.period = to_double(key, v);
    else if (key == "schedule") cfg.schedule = to_list(key, v);
    else if (key == "n") cfg.n = to_int(key, v);
    else if (key == "control") {
        if (v == "same") cfg.control = ControlRule::same;
        else if (v == "h-squared" || v == "h_squared") cfg.control = ControlRule::h_squared;
        else if (v == "fixed-n" || v == "fixed_n") cfg.control = ControlRule::fixed_n;
        else if (v == "variational") cfg.control = ControlRule::variational;
        else throw ConfigError("control must be one of same, h-squared, fixed-n, variational");
    } else if (key == "control-n") cfg.control_n = to_int(key, v);
    else if (key == "coarse-n") cfg.coarse_n = to_list(key, v);
    else if (key == "fine-n") cfg.fine_n = to_int(key, v);
    else if (key == "layers") cfg.layers = to_int(key, v);
    else if (key == "c-loc") cfg.c_loc = to_double(key, v);
    else if (key == "tol") cfg.tol = to_double(key, v);
    else if (key == "max-iter") cfg.max_iter = to_int(key, v);
    else if (key == "seed") {
        const long long s = to_integer(key, v);
        if (s < 0) throw ConfigError("seed must be >= 0");
        cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "output") cfg.output = v;
    else if (key == "json") cfg.json = v;
    else if (key == "fields") cfg.fields = v;
    else if (key == "dump-mesh") cfg.dump_mesh = v;
    else throw ConfigError("unknown key '" + raw_key + "'");
}

void validate(const RunConfig& cfg) {
    if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must be in (0,1]");
    if (!(cfg.bound > 0.0) || !std::isfinite(cfg.bound)) throw ConfigError("bound must be in (0,inf)");
    if (!(cfg.contrast > 0.0) || !std::isfinite(cfg.contrast)) throw ConfigError("contrast must be in (0,inf)");
    if (!(cfg.period > 0.0 && cfg.period <= 1.0)) throw ConfigError("period must be in (0,1]");
    require_increasing("schedule", cfg.schedule);
    require_increasing("coarse-n", cfg.coarse_n);
    if (cfg.n < 1) throw ConfigError("n must be >= 1");
    if (cfg.control_n < 1) throw ConfigError("control-n must be >= 1");
    if (cfg.fine_n < cfg.coarse_n.back()) throw ConfigError("fine-n must be >= the largest coarse-n");
    if (cfg.layers < 0) throw ConfigError("layers must be >= 0 (0 selects ceil(c-loc*log2(1/H)))");
    if (!(cfg.c_loc > 0.0) || !std::isfinite(cfg.c_loc)) throw ConfigError("c-loc must be in (0,inf)");
    if (!(cfg.tol > 0.0 && cfg.tol < 1.0)) throw ConfigError("tol must be in (0,1)");
    if (cfg.max_iter < 1) throw ConfigError("max-iter must be >= 1");
}

RunConfig parse_config(const std::string& text, const std::vector<Setting>& overrides) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::istringstream tokens(line);
        std::string token;
        while (tokens >> token) {
            const auto eq = token.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + token + "'");
            apply_setting(cfg, token.substr(0, eq), token.substr(eq + 1));
        }
    }
    for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
    validate(cfg);
    return cfg;
}

std::vector<std::string> format_config(const RunConfig& cfg) {
    return {
        "command=" + command_name(cfg.command),
        "gamma=" + fmt(cfg.gamma),
        "bound=" + fmt(cfg.bound),
        "contrast=" + fmt(cfg.contrast),
        "period=" + fmt(cfg.period),
        "schedule=" + fmt_list(cfg.schedule),
        "n=" + std::to_string(cfg.n),
        "control=" + control_rule_name(cfg.control),
        "control-n=" + std::to_string(cfg.control_n),
        "coarse-n=" + fmt_list(cfg.coarse_n),
        "fine-n=" + std::to_string(cfg.fine_n),
        "layers=" + std::to_string(cfg.layers),
        "c-loc=" + fmt(cfg.c_loc),
        "tol=" + fmt(cfg.tol),
        "max-iter=" + std::to_string(cfg.max_iter),
        "seed=" + std::to_string(cfg.seed),
        "output=" + cfg.output,
        "json=" + cfg.json,
        "fields=" + cfg.fields,
        "dump-mesh=" + cfg.dump_mesh,
    };
}

}  // namespace ocpfem
