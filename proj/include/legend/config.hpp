#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "legend/baselines.hpp"
#include "legend/planner.hpp"
#include "legend/trainer.hpp"

namespace legend {

// Ground-truth timing behavior of one simulated device.
struct DeviceProfile {
    int device_id = 0;
    double base_compute_per_layer = 1.0;  // mu, seconds/layer
    double base_upload_per_rank = 0.0;    // beta fallback when no bandwidth range
    double forward_time = 1.0;            // t-hat, seconds
    std::vector<double> compute_modes = {1.0};
    double bandwidth_lo_mbps = 0.0;  // 0/0 disables the bandwidth model
    double bandwidth_hi_mbps = 0.0;
    DeviceBudget budget{1e300, 1e300};
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    int rounds = 100;          // H
    PlannerKind planner = PlannerKind::Legend;
    std::string preset = "hetero10";
    std::string out_dir = "out";

    int num_layers = 12;  // L
    int dim = 16;         // m = q for every layer
    int num_classes = 2;

    int rank_budget = 96;       // psi
    int rank_step = 1;          // lambda
    double waiting_threshold = 5.0;  // epsilon
    double smoothing = 0.8;     // rho
    DepthRule depth_rule = DepthRule::EndpointNormalized;
    int fedlora_rank = 0;   // 0 -> psi / L
    int hetlora_rank_min = 1;
    int hetlora_rank_max = 0;  // 0 -> psi / L

    OptimizerKind optimizer = OptimizerKind::AdamW;
    double base_lr = 0.002;
    int batch_size = 4;
    bool reset_optimizer_per_round = true;
    double init_std = 0.02;

    int train_samples = 1000;
    int eval_samples = 200;
    double dirichlet_alpha = 10.0;

    bool noise = true;
    int mode_period = 20;
    int adapted_linears = 1;  // per-block linear count, traffic accounting only

    std::vector<DeviceProfile> devices;

    PlannerParams planner_params() const;
    int resolved_fedlora_rank() const;
    int resolved_hetlora_rank_max() const;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parse the sectioned key=value config file; unknown keys are rejected with
// their full section.key path. Empty file yields all defaults with the
// hetero10 preset device table.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Resolved-config echo; parse(echo(parse(f))) == parse(f).
std::string config_echo(const ExperimentConfig& config);

// 10 devices spanning 10x compute heterogeneity with 1-30 Mb/s bandwidth.
std::vector<DeviceProfile> hetero10_profile();

}  // namespace legend
