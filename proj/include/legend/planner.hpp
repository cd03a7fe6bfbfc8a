#pragma once

#include <map>
#include <vector>

#include "legend/capacity.hpp"
#include "legend/lora.hpp"

namespace legend {

enum class DepthRule {
    // Gap term normalized by (t_max - t_min): fastest device lands exactly
    // on depth L, slowest on L - k.
    EndpointNormalized,
    // Gap term normalized by t_max.
    Literal,
};

struct PlannerParams {
    int num_layers = 12;          // L
    int rank_budget = 96;         // psi
    int rank_step = 1;            // lambda, common difference of R
    double waiting_threshold = 0.0;  // epsilon, reported only
    double compute_cost_per_rank = 1.0;   // c
    double fixed_forward_cost = 0.0;      // c-hat
    double comm_cost_per_rank = 1.0;      // b
    DepthRule depth_rule = DepthRule::EndpointNormalized;
};

struct DeviceBudget {
    double compute = 0.0;  // C_i^h
    double comm = 0.0;     // B_i^h
};

constexpr double kUnlimitedBudget = 1e300;

struct DevicePlan {
    LoraConfig config;
    double predicted_completion = 0.0;
    bool budget_infeasible = false;  // even depth 1 violates a budget
};

struct Plan {
    std::map<int, DevicePlan> devices;
    std::vector<int> global_ranks;  // R, one rank per layer
    int depth_gap = 0;              // k^h after clamping
    double round_time = 0.0;        // max predicted completion
    double avg_waiting = 0.0;       // W^h predicted
    bool waiting_violated = false;  // W^h > epsilon
};

// t-hat + k * mu + (sum of ranks) * beta.
double predict_completion(const CapacityEstimate& estimate, double forward_time,
                          const LoraConfig& config);

// (1/n) * sum(max - t_i).
double avg_waiting(const std::vector<double>& times);

// k^h = ceil(L * (t_max - t_min) / t_max), clamped to L-1 so the slowest
// device keeps at least one adapted layer.
int depth_gap(const std::vector<double>& times, int num_layers);

// Depth per device: (L - k^h) plus a gap term scaled by how far the device
// sits from the slowest; clamped to [1, L].
std::map<int, int> device_depths(const std::map<int, double>& times, int num_layers,
                                 int gap, DepthRule rule);

// Arithmetic sequence r_l = r0 + lambda*l with r0 = floor((psi -
// lambda*L(L-1)/2) / L). Throws when r0 < 1, naming the minimum feasible psi.
std::vector<int> global_rank_distribution(int num_layers, int rank_budget, int rank_step);

struct BudgetedDepth {
    int depth = 1;
    bool infeasible = false;
};

// Largest depth <= requested whose deepest slice of R fits both budgets.
BudgetedDepth enforce_budgets(const std::vector<int>& global_ranks, int requested_depth,
                              const PlannerParams& params, const DeviceBudget& budget);

// Algorithm wrapper: completion prediction from previous configs, depth gap,
// per-device depths, global rank distribution, budget enforcement.
Plan configure(const std::map<int, CapacityEstimate>& estimates,
               const std::map<int, double>& forward_times, const PlannerParams& params,
               const std::map<int, DeviceBudget>& budgets,
               const std::map<int, LoraConfig>& previous_configs);

// Uniform depth-L plan over the global distribution, budget-enforced; used
// for the cold-start round and by the FedLoRA-style comparisons.
Plan uniform_plan(const std::map<int, CapacityEstimate>& estimates,
                  const std::map<int, double>& forward_times, const PlannerParams& params,
                  const std::map<int, DeviceBudget>& budgets);

// Config holding the deepest `depth` entries of R.
LoraConfig slice_config(const std::vector<int>& global_ranks, int depth);

}  // namespace legend
