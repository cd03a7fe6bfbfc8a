#include "legend/planner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace legend {

double predict_completion(const CapacityEstimate& estimate, double forward_time,
                          const LoraConfig& config) {
    return forward_time + config.depth * estimate.compute_time_per_layer +
           config.rank_sum() * estimate.upload_time_per_rank;
}

double avg_waiting(const std::vector<double>& times) {
    if (times.empty()) throw std::invalid_argument("avg_waiting: empty time list");
    const double t_max = *std::max_element(times.begin(), times.end());
    double total = 0.0;
    for (double t : times) total += t_max - t;
    return total / static_cast<double>(times.size());
}

int depth_gap(const std::vector<double>& times, int num_layers) {
    if (times.empty()) throw std::invalid_argument("depth_gap: empty time list");
    for (double t : times) {
        if (t <= 0.0) throw std::invalid_argument("depth_gap: completion times must be > 0");
    }
    const double t_max = *std::max_element(times.begin(), times.end());
    const double t_min = *std::min_element(times.begin(), times.end());
    const int gap = static_cast<int>(
        std::ceil(static_cast<double>(num_layers) * (t_max - t_min) / t_max));
    return std::min(gap, num_layers - 1);
}

std::map<int, int> device_depths(const std::map<int, double>& times, int num_layers,
                                 int gap, DepthRule rule) {
    if (gap > num_layers - 1) {
        throw std::invalid_argument("device_depths: gap must be <= L-1 after clamping");
    }
    double t_max = 0.0, t_min = 1e300;
    for (const auto& [id, t] : times) {
        t_max = std::max(t_max, t);
        t_min = std::min(t_min, t);
    }
    std::map<int, int> depths;
    for (const auto& [id, t] : times) {
        double gap_term = 0.0;
        if (rule == DepthRule::EndpointNormalized) {
            if (t_max > t_min) {
                gap_term = std::ceil(gap * (t_max - t) / (t_max - t_min));
            }
        } else {
            gap_term = std::ceil(gap * (t_max - t) / t_max);
        }
        const int depth = (num_layers - gap) + static_cast<int>(gap_term);
        depths[id] = std::clamp(depth, 1, num_layers);
    }
    return depths;
}

std::vector<int> global_rank_distribution(int num_layers, int rank_budget, int rank_step) {
    if (num_layers < 1) throw std::invalid_argument("global_rank_distribution: L >= 1");
    if (rank_step < 0) throw std::invalid_argument("global_rank_distribution: lambda >= 0");
    const long ramp = static_cast<long>(rank_step) * num_layers * (num_layers - 1) / 2;
    const long base = (rank_budget - ramp) / num_layers;
    if (rank_budget - ramp < 0 || base < 1) {
        const long min_psi = num_layers + ramp;
        throw std::invalid_argument(
            "global_rank_distribution: budget " + std::to_string(rank_budget) +
            " infeasible for L=" + std::to_string(num_layers) + ", lambda=" +
            std::to_string(rank_step) + "; minimum feasible budget is " +
            std::to_string(min_psi));
    }
    std::vector<int> ranks(num_layers);
    for (int l = 0; l < num_layers; ++l) {
        ranks[l] = static_cast<int>(base) + rank_step * l;
    }
    return ranks;
}

LoraConfig slice_config(const std::vector<int>& global_ranks, int depth) {
    const int L = static_cast<int>(global_ranks.size());
    if (depth < 0 || depth > L) throw std::invalid_argument("slice_config: bad depth");
    LoraConfig config;
    config.depth = depth;
    config.ranks.assign(global_ranks.end() - depth, global_ranks.end());
    return config;
}

BudgetedDepth enforce_budgets(const std::vector<int>& global_ranks, int requested_depth,
                              const PlannerParams& params, const DeviceBudget& budget) {
    if (requested_depth < 1) throw std::invalid_argument("enforce_budgets: depth >= 1");
    auto fits = [&](int depth) {
        long rank_sum = 0;
        for (int j = 0; j < depth; ++j) {
            rank_sum += global_ranks[global_ranks.size() - 1 - j];
        }
        const double compute = params.fixed_forward_cost +
                               rank_sum * params.compute_cost_per_rank;
        const double comm = rank_sum * params.comm_cost_per_rank;
        return compute <= budget.compute && comm <= budget.comm;
    };
    for (int depth = requested_depth; depth >= 1; --depth) {
        if (fits(depth)) return {depth, false};
    }
    return {1, true};
}

namespace {

Plan finish_plan(std::map<int, DevicePlan> devices, std::vector<int> global_ranks,
                 int gap, double epsilon) {
    Plan plan;
    plan.devices = std::move(devices);
    plan.global_ranks = std::move(global_ranks);
    plan.depth_gap = gap;
    std::vector<double> times;
    for (const auto& [id, dp] : plan.devices) times.push_back(dp.predicted_completion);
    plan.round_time = *std::max_element(times.begin(), times.end());
    plan.avg_waiting = avg_waiting(times);
    plan.waiting_violated = plan.avg_waiting > epsilon;
    return plan;
}

}  // namespace

Plan configure(const std::map<int, CapacityEstimate>& estimates,
               const std::map<int, double>& forward_times, const PlannerParams& params,
               const std::map<int, DeviceBudget>& budgets,
               const std::map<int, LoraConfig>& previous_configs) {
    if (estimates.empty()) throw std::invalid_argument("configure: no device estimates");
    const std::vector<int> R =
        global_rank_distribution(params.num_layers, params.rank_budget, params.rank_step);

    std::map<int, double> times;
    std::vector<double> time_list;
    for (const auto& [id, est] : estimates) {
        const auto prev = previous_configs.find(id);
        if (prev == previous_configs.end()) {
            throw std::invalid_argument("configure: no previous config for device " +
                                        std::to_string(id));
        }
        const double t = predict_completion(est, forward_times.at(id), prev->second);
        times[id] = t;
        time_list.push_back(t);
    }

    const int gap = depth_gap(time_list, params.num_layers);
    const std::map<int, int> depths =
        device_depths(times, params.num_layers, gap, params.depth_rule);

    std::map<int, DevicePlan> devices;
    for (const auto& [id, est] : estimates) {
        const BudgetedDepth bd = enforce_budgets(R, depths.at(id), params, budgets.at(id));
        DevicePlan dp;
        dp.config = slice_config(R, bd.depth);
        dp.budget_infeasible = bd.infeasible;
        dp.predicted_completion = predict_completion(est, forward_times.at(id), dp.config);
        devices[id] = dp;
    }
    return finish_plan(std::move(devices), R, gap, params.waiting_threshold);
}

Plan uniform_plan(const std::map<int, CapacityEstimate>& estimates,
                  const std::map<int, double>& forward_times, const PlannerParams& params,
                  const std::map<int, DeviceBudget>& budgets) {
    if (estimates.empty()) throw std::invalid_argument("uniform_plan: no devices");
    const std::vector<int> R =
        global_rank_distribution(params.num_layers, params.rank_budget, params.rank_step);
    std::map<int, DevicePlan> devices;
    for (const auto& [id, est] : estimates) {
        const BudgetedDepth bd =
            enforce_budgets(R, params.num_layers, params, budgets.at(id));
        DevicePlan dp;
        dp.config = slice_config(R, bd.depth);
        dp.budget_infeasible = bd.infeasible;
        dp.predicted_completion = predict_completion(est, forward_times.at(id), dp.config);
        devices[id] = dp;
    }
    return finish_plan(std::move(devices), R, 0, params.waiting_threshold);
}

}  // namespace legend
