#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "legend/aggregator.hpp"
#include "legend/capacity.hpp"
#include "legend/config.hpp"
#include "legend/planner.hpp"
#include "legend/trainer.hpp"

namespace legend {

// Actual per-round timing conditions drawn from a device profile.
struct RoundConditions {
    double compute_per_layer = 0.0;  // actual mu this round
    double upload_per_rank = 0.0;    // actual beta this round
};

// Persistent per-device condition state (current mode, bandwidth walk).
struct ConditionState {
    double mode_multiplier = 1.0;
    double bandwidth_mbps = 0.0;
};

struct DeviceRoundMetrics {
    int device_id = 0;
    int depth = 0;
    int rank_sum = 0;
    double completion_time = 0.0;  // t_i^h
    std::uint64_t upload_bytes = 0;
    std::uint64_t download_bytes = 0;
    double train_loss = 0.0;
    bool budget_infeasible = false;
};

struct RoundReport {
    int round = 0;
    std::vector<DeviceRoundMetrics> devices;
    double round_time = 0.0;   // t^h = max t_i^h
    double avg_waiting = 0.0;  // W^h
    bool waiting_violated = false;
    std::uint64_t upload_bytes = 0;
    std::uint64_t download_bytes = 0;
    double eval_loss = 0.0;
    double eval_accuracy = 0.0;
    double train_accuracy = 0.0;
};

struct ExperimentLog {
    std::vector<RoundReport> rounds;
    double cumulative_time = 0.0;
    std::uint64_t cumulative_bytes = 0;
    // Independent counter bumped at every send/receive site; must equal
    // cumulative_bytes exactly.
    std::uint64_t traffic_meter = 0;
    std::vector<std::map<int, LoraConfig>> plans;
};

// Full mutable simulation state across rounds.
struct SimState {
    ExperimentConfig config;
    LayerStack backbone;  // frozen layers, no adapters, no head
    GlobalLoraState global;
    SyntheticDataset train_set;
    SyntheticDataset eval_set;
    std::vector<SyntheticDataset> shards;
    std::map<int, CapacityEstimate> estimates;
    std::map<int, LoraConfig> prev_configs;
    std::map<int, ConditionState> conditions;
    std::map<int, SeededRng> device_rngs;      // training streams
    std::map<int, SeededRng> condition_rngs;   // timing streams
    std::map<int, OptimizerState> optimizers;  // kept across rounds when configured
    std::uint64_t backbone_fingerprint = 0;
    int round = 0;
};

// Mode multiplier re-sampled every mode_period rounds; bandwidth follows a
// bounded random walk (step <= 20% of range); mu gets +-5% jitter. With
// config.noise == false everything collapses to profile constants.
RoundConditions sample_round_conditions(const DeviceProfile& profile, ConditionState& state,
                                        SeededRng& rng, int round, int mode_period,
                                        bool noise, double payload_bytes_per_rank);

// Adapter payload: rank_sum * (m+q) * adapted_linears * 4 bytes, 32-bit wire
// encoding; head bytes added on top.
std::uint64_t payload_bytes(const LoraConfig& config, int m, int q, int adapted_linears);
std::uint64_t head_bytes(int classes, int m);
double payload_bytes_per_rank_unit(int m, int q, int adapted_linears);

// t-hat + depth * mu + rank_sum * beta (upload only; download excluded).
double completion_time(const DeviceProfile& profile, const RoundConditions& actual,
                       const LoraConfig& config);

SimState init_state(const ExperimentConfig& config);

RoundReport simulate_round(SimState& state, ExperimentLog& log);

ExperimentLog run_experiment(const ExperimentConfig& config);

// CSV with the fixed column order: round, device_id, depth, rank_sum, t_i,
// t_round, avg_wait, wait_violation, up_bytes, down_bytes, cum_time,
// cum_bytes, eval_loss, eval_acc. One row per device plus a summary row per
// round with device_id "-".
std::string log_to_csv(const ExperimentLog& log);
std::string summary_to_csv(const ExperimentLog& log);

}  // namespace legend
