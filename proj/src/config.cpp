#include "legend/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace legend {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& value) {
    if (value == "inf") return 1e300;
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: '" + value + "'");
    }
}

long parse_long(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

}  // namespace

PlannerParams ExperimentConfig::planner_params() const {
    PlannerParams p;
    p.num_layers = num_layers;
    p.rank_budget = rank_budget;
    p.rank_step = rank_step;
    p.waiting_threshold = waiting_threshold;
    p.depth_rule = depth_rule;
    // Budget costs in the same units the profiles use: c is per rank-unit
    // compute, b per rank-unit payload bytes.
    p.compute_cost_per_rank = 1.0;
    p.fixed_forward_cost = 0.0;
    p.comm_cost_per_rank = 1.0;
    return p;
}

int ExperimentConfig::resolved_fedlora_rank() const {
    return fedlora_rank > 0 ? fedlora_rank : std::max(1, rank_budget / num_layers);
}

int ExperimentConfig::resolved_hetlora_rank_max() const {
    return hetlora_rank_max > 0 ? hetlora_rank_max : std::max(1, rank_budget / num_layers);
}

std::vector<DeviceProfile> hetero10_profile() {
    std::vector<DeviceProfile> devices;
    for (int i = 0; i < 10; ++i) {
        DeviceProfile d;
        d.device_id = i;
        // 10x spread in per-layer backprop cost, Jetson-style mode set.
        d.base_compute_per_layer = 0.4 * (1.0 + i);
        d.base_upload_per_rank = 0.0;
        d.forward_time = 2.0;
        d.compute_modes = {1.0, 1.5, 2.0};
        d.bandwidth_lo_mbps = 1.0;
        d.bandwidth_hi_mbps = 30.0;
        devices.push_back(d);
    }
    return devices;
}

namespace {

void validate(const ExperimentConfig& c) {
    if (c.rounds < 0) throw ConfigError("experiment.rounds: must be >= 0");
    if (c.num_layers < 1) throw ConfigError("model.layers: must be >= 1");
    if (c.dim < 1) throw ConfigError("model.dim: must be >= 1");
    if (c.num_classes < 1) throw ConfigError("model.classes: must be >= 1");
    if (c.rank_step < 0) throw ConfigError("planner.lambda: must be >= 0");
    if (c.rank_budget < c.num_layers) {
        throw ConfigError("planner.psi: must be >= layers so every rank can be >= 1");
    }
    if (c.smoothing < 0.0 || c.smoothing > 1.0) {
        throw ConfigError("planner.rho: must be in [0, 1]");
    }
    if (c.batch_size < 1) throw ConfigError("trainer.batch_size: must be >= 1");
    if (c.base_lr < 0.0) throw ConfigError("trainer.lr: must be >= 0");
    if (c.train_samples < 1) throw ConfigError("dataset.samples: must be >= 1");
    if (c.eval_samples < 0) throw ConfigError("dataset.eval_samples: must be >= 0");
    if (c.dirichlet_alpha <= 0.0) throw ConfigError("dataset.alpha: must be > 0");
    if (c.mode_period < 1) throw ConfigError("sim.mode_period: must be >= 1");
    if (c.adapted_linears < 1) throw ConfigError("sim.adapted_linears: must be >= 1");
    if (c.devices.empty()) throw ConfigError("no device table: set experiment.preset or [device.N] sections");
    for (const auto& d : c.devices) {
        if (d.base_compute_per_layer < 0 || d.base_upload_per_rank < 0 || d.forward_time < 0) {
            throw ConfigError("device." + std::to_string(d.device_id) + ": negative time");
        }
        if (d.bandwidth_lo_mbps > d.bandwidth_hi_mbps) {
            throw ConfigError("device." + std::to_string(d.device_id) + ": bw_lo > bw_hi");
        }
        for (double m : d.compute_modes) {
            if (m <= 0) throw ConfigError("device." + std::to_string(d.device_id) +
                                          ".modes: multipliers must be > 0");
        }
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::map<int, DeviceProfile> explicit_devices;
    bool preset_set_explicitly = false;

    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) +
                                                   ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const std::string path = section.empty() ? key : section + "." + key;

        if (section.rfind("device.", 0) == 0) {
            const int id = static_cast<int>(parse_long(section, section.substr(7)));
            DeviceProfile& d = explicit_devices[id];
            d.device_id = id;
            if (key == "mu") d.base_compute_per_layer = parse_double(path, value);
            else if (key == "beta") d.base_upload_per_rank = parse_double(path, value);
            else if (key == "forward") d.forward_time = parse_double(path, value);
            else if (key == "modes") d.compute_modes = parse_double_list(path, value);
            else if (key == "bw_lo") d.bandwidth_lo_mbps = parse_double(path, value);
            else if (key == "bw_hi") d.bandwidth_hi_mbps = parse_double(path, value);
            else if (key == "compute_budget") d.budget.compute = parse_double(path, value);
            else if (key == "comm_budget") d.budget.comm = parse_double(path, value);
            else throw ConfigError(path + ": unknown key");
            continue;
        }

        if (path == "experiment.seed") c.seed = static_cast<std::uint64_t>(parse_long(path, value));
        else if (path == "experiment.rounds") c.rounds = static_cast<int>(parse_long(path, value));
        else if (path == "experiment.planner") {
            if (value == "legend") c.planner = PlannerKind::Legend;
            else if (value == "fedlora") c.planner = PlannerKind::FedLora;
            else if (value == "hetlora") c.planner = PlannerKind::HetLora;
            else throw ConfigError(path + ": expected legend|fedlora|hetlora");
        } else if (path == "experiment.preset") {
            c.preset = value;
            preset_set_explicitly = true;
        } else if (path == "experiment.out_dir") c.out_dir = value;
        else if (path == "model.layers") c.num_layers = static_cast<int>(parse_long(path, value));
        else if (path == "model.dim") c.dim = static_cast<int>(parse_long(path, value));
        else if (path == "model.classes") c.num_classes = static_cast<int>(parse_long(path, value));
        else if (path == "planner.psi") c.rank_budget = static_cast<int>(parse_long(path, value));
        else if (path == "planner.lambda") c.rank_step = static_cast<int>(parse_long(path, value));
        else if (path == "planner.epsilon") c.waiting_threshold = parse_double(path, value);
        else if (path == "planner.rho") c.smoothing = parse_double(path, value);
        else if (path == "planner.depth_rule") {
            if (value == "endpoint_normalized") c.depth_rule = DepthRule::EndpointNormalized;
            else if (value == "paper_literal") c.depth_rule = DepthRule::Literal;
            else throw ConfigError(path + ": expected endpoint_normalized|paper_literal");
        } else if (path == "planner.fedlora_rank") c.fedlora_rank = static_cast<int>(parse_long(path, value));
        else if (path == "planner.hetlora_rank_min") c.hetlora_rank_min = static_cast<int>(parse_long(path, value));
        else if (path == "planner.hetlora_rank_max") c.hetlora_rank_max = static_cast<int>(parse_long(path, value));
        else if (path == "trainer.optimizer") {
            if (value == "adamw") c.optimizer = OptimizerKind::AdamW;
            else if (value == "sgd") c.optimizer = OptimizerKind::Sgd;
            else throw ConfigError(path + ": expected adamw|sgd");
        } else if (path == "trainer.lr") c.base_lr = parse_double(path, value);
        else if (path == "trainer.batch_size") c.batch_size = static_cast<int>(parse_long(path, value));
        else if (path == "trainer.reset_optimizer_per_round") c.reset_optimizer_per_round = parse_bool(path, value);
        else if (path == "trainer.init_std") c.init_std = parse_double(path, value);
        else if (path == "dataset.samples") c.train_samples = static_cast<int>(parse_long(path, value));
        else if (path == "dataset.eval_samples") c.eval_samples = static_cast<int>(parse_long(path, value));
        else if (path == "dataset.alpha") c.dirichlet_alpha = parse_double(path, value);
        else if (path == "sim.noise") c.noise = parse_bool(path, value);
        else if (path == "sim.mode_period") c.mode_period = static_cast<int>(parse_long(path, value));
        else if (path == "sim.adapted_linears") c.adapted_linears = static_cast<int>(parse_long(path, value));
        else throw ConfigError(path + ": unknown key");
    }

    if (!explicit_devices.empty()) {
        if (preset_set_explicitly && c.preset != "none") {
            throw ConfigError("experiment.preset: cannot combine a preset with [device.N] sections");
        }
        c.preset = "none";
        for (auto& [id, d] : explicit_devices) c.devices.push_back(d);
    } else if (c.preset == "hetero10") {
        c.devices = hetero10_profile();
    } else if (c.preset == "none") {
        // validated below as missing device table
    } else {
        throw ConfigError("experiment.preset: unknown preset '" + c.preset + "'");
    }

    validate(c);
    return c;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace {

std::string fmt(double v) {
    if (v >= 1e300) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string config_echo(const ExperimentConfig& c) {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "seed = " << c.seed << "\n";
    out << "rounds = " << c.rounds << "\n";
    out << "planner = "
        << (c.planner == PlannerKind::Legend    ? "legend"
            : c.planner == PlannerKind::FedLora ? "fedlora"
                                                : "hetlora")
        << "\n";
    out << "out_dir = " << c.out_dir << "\n";
    out << "[model]\n";
    out << "layers = " << c.num_layers << "\n";
    out << "dim = " << c.dim << "\n";
    out << "classes = " << c.num_classes << "\n";
    out << "[planner]\n";
    out << "psi = " << c.rank_budget << "\n";
    out << "lambda = " << c.rank_step << "\n";
    out << "epsilon = " << fmt(c.waiting_threshold) << "\n";
    out << "rho = " << fmt(c.smoothing) << "\n";
    out << "depth_rule = "
        << (c.depth_rule == DepthRule::EndpointNormalized ? "endpoint_normalized"
                                                          : "paper_literal")
        << "\n";
    out << "fedlora_rank = " << c.fedlora_rank << "\n";
    out << "hetlora_rank_min = " << c.hetlora_rank_min << "\n";
    out << "hetlora_rank_max = " << c.hetlora_rank_max << "\n";
    out << "[trainer]\n";
    out << "optimizer = " << (c.optimizer == OptimizerKind::AdamW ? "adamw" : "sgd") << "\n";
    out << "lr = " << fmt(c.base_lr) << "\n";
    out << "batch_size = " << c.batch_size << "\n";
    out << "reset_optimizer_per_round = " << (c.reset_optimizer_per_round ? "true" : "false")
        << "\n";
    out << "init_std = " << fmt(c.init_std) << "\n";
    out << "[dataset]\n";
    out << "samples = " << c.train_samples << "\n";
    out << "eval_samples = " << c.eval_samples << "\n";
    out << "alpha = " << fmt(c.dirichlet_alpha) << "\n";
    out << "[sim]\n";
    out << "noise = " << (c.noise ? "true" : "false") << "\n";
    out << "mode_period = " << c.mode_period << "\n";
    out << "adapted_linears = " << c.adapted_linears << "\n";
    for (const auto& d : c.devices) {
        out << "[device." << d.device_id << "]\n";
        out << "mu = " << fmt(d.base_compute_per_layer) << "\n";
        out << "beta = " << fmt(d.base_upload_per_rank) << "\n";
        out << "forward = " << fmt(d.forward_time) << "\n";
        out << "modes = ";
        for (std::size_t i = 0; i < d.compute_modes.size(); ++i) {
            if (i) out << ",";
            out << fmt(d.compute_modes[i]);
        }
        out << "\n";
        out << "bw_lo = " << fmt(d.bandwidth_lo_mbps) << "\n";
        out << "bw_hi = " << fmt(d.bandwidth_hi_mbps) << "\n";
        out << "compute_budget = " << fmt(d.budget.compute) << "\n";
        out << "comm_budget = " << fmt(d.budget.comm) << "\n";
    }
    return out.str();
}

}  // namespace legend
