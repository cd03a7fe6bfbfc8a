#include "legend/simkernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace legend {

namespace {

// Stream layout: server-side streams are small constants, device streams
// are offset by device id.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kPartitionStream = 3;
constexpr std::uint64_t kConditionStreamBase = 1000;
constexpr std::uint64_t kTrainStreamBase = 2000;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

std::uint64_t head_bytes(int classes, int m) {
    return static_cast<std::uint64_t>(classes) * static_cast<std::uint64_t>(m) * 4;
}

double payload_bytes_per_rank_unit(int m, int q, int adapted_linears) {
    return static_cast<double>(m + q) * adapted_linears * 4.0;
}

std::uint64_t payload_bytes(const LoraConfig& config, int m, int q, int adapted_linears) {
    return static_cast<std::uint64_t>(config.rank_sum()) *
           static_cast<std::uint64_t>(m + q) * static_cast<std::uint64_t>(adapted_linears) * 4;
}

RoundConditions sample_round_conditions(const DeviceProfile& profile, ConditionState& state,
                                        SeededRng& rng, int round, int mode_period,
                                        bool noise, double bytes_per_rank) {
    if (round % mode_period == 0) {
        state.mode_multiplier =
            noise ? profile.compute_modes[rng.next_below(profile.compute_modes.size())]
                  : profile.compute_modes.front();
    }
    RoundConditions out;
    const double jitter = noise ? rng.uniform(-0.05, 0.05) : 0.0;
    out.compute_per_layer = profile.base_compute_per_layer * state.mode_multiplier *
                            (1.0 + jitter);

    if (profile.bandwidth_hi_mbps > 0.0) {
        const double lo = profile.bandwidth_lo_mbps;
        const double hi = profile.bandwidth_hi_mbps;
        if (noise && hi > lo) {
            const double step = rng.uniform(-1.0, 1.0) * 0.2 * (hi - lo);
            state.bandwidth_mbps = std::clamp(state.bandwidth_mbps + step, lo, hi);
        } else if (!noise) {
            state.bandwidth_mbps = 0.5 * (lo + hi);
        }
        const double bytes_per_second = state.bandwidth_mbps * 1e6 / 8.0;
        out.upload_per_rank = bytes_per_rank / bytes_per_second;
    } else {
        out.upload_per_rank = profile.base_upload_per_rank;
    }
    return out;
}

double completion_time(const DeviceProfile& profile, const RoundConditions& actual,
                       const LoraConfig& config) {
    return profile.forward_time + config.depth * actual.compute_per_layer +
           config.rank_sum() * actual.upload_per_rank;
}

namespace {

std::vector<int> global_ranks_for(const ExperimentConfig& c) {
    switch (c.planner) {
        case PlannerKind::Legend:
            return global_rank_distribution(c.num_layers, c.rank_budget, c.rank_step);
        case PlannerKind::FedLora:
            return std::vector<int>(c.num_layers, c.resolved_fedlora_rank());
        case PlannerKind::HetLora:
            return std::vector<int>(c.num_layers, c.resolved_hetlora_rank_max());
    }
    throw std::logic_error("unreachable");
}

}  // namespace

SimState init_state(const ExperimentConfig& config) {
    SimState state;
    state.config = config;

    SeededRng init_rng(config.seed, kInitStream);
    const std::size_t dim = static_cast<std::size_t>(config.dim);
    // Frozen backbone: square tanh layers with 1/sqrt(dim) weights so
    // activations stay in the responsive part of tanh.
    for (int l = 0; l < config.num_layers; ++l) {
        BackboneLayer layer;
        layer.weight = gaussian_matrix(init_rng, dim, dim, 1.0 / std::sqrt(config.dim));
        layer.activation = Activation::Tanh;
        state.backbone.layers.push_back(std::move(layer));
    }
    state.backbone_fingerprint = backbone_checksum(state.backbone);

    const std::vector<int> ranks = global_ranks_for(config);
    for (int l = 0; l < config.num_layers; ++l) {
        state.global.layers.push_back(
            init_adapter(init_rng, l, ranks[l], dim, dim, config.init_std));
    }
    state.global.contribution_counts.assign(config.num_layers, 0);
    state.global.head =
        gaussian_matrix(init_rng, static_cast<std::size_t>(config.num_classes), dim,
                        config.init_std);

    SeededRng data_rng(config.seed, kDataStream);
    SyntheticDataset full = make_synthetic(data_rng, config.train_samples + config.eval_samples,
                                           config.dim, config.num_classes);
    state.train_set.num_classes = config.num_classes;
    state.eval_set.num_classes = config.num_classes;
    for (int i = 0; i < config.train_samples; ++i) {
        state.train_set.samples.push_back(full.samples[i]);
    }
    for (int i = config.train_samples; i < config.train_samples + config.eval_samples; ++i) {
        state.eval_set.samples.push_back(full.samples[i]);
    }

    SeededRng part_rng(config.seed, kPartitionStream);
    state.shards = dirichlet_partition(part_rng, state.train_set,
                                       static_cast<int>(config.devices.size()),
                                       config.dirichlet_alpha);

    for (std::size_t i = 0; i < config.devices.size(); ++i) {
        const DeviceProfile& d = config.devices[i];
        ConditionState cond;
        cond.bandwidth_mbps = 0.5 * (d.bandwidth_lo_mbps + d.bandwidth_hi_mbps);
        state.conditions[d.device_id] = cond;
        state.device_rngs.emplace(d.device_id,
                                  SeededRng(config.seed, kTrainStreamBase + d.device_id));
        state.condition_rngs.emplace(d.device_id,
                                     SeededRng(config.seed, kConditionStreamBase + d.device_id));
    }
    return state;
}

namespace {

std::map<int, LoraConfig> plan_round(SimState& state, ExperimentLog& log) {
    const ExperimentConfig& c = state.config;
    const PlannerParams params = c.planner_params();
    std::map<int, LoraConfig> configs;

    if (c.planner == PlannerKind::FedLora) {
        for (const auto& d : c.devices) {
            configs[d.device_id] = fedlora_config(c.num_layers, c.resolved_fedlora_rank());
        }
        return configs;
    }
    if (c.planner == PlannerKind::HetLora) {
        if (state.estimates.empty()) {
            for (const auto& d : c.devices) {
                configs[d.device_id] =
                    fedlora_config(c.num_layers, c.resolved_hetlora_rank_max());
            }
            return configs;
        }
        return hetlora_config(state.estimates, c.num_layers, c.hetlora_rank_min,
                              c.resolved_hetlora_rank_max());
    }

    const std::vector<int> R =
        global_rank_distribution(c.num_layers, c.rank_budget, c.rank_step);
    if (state.estimates.empty()) {
        // Cold start: uniform depth L sliced from R, budget-enforced.
        for (const auto& d : c.devices) {
            const BudgetedDepth bd = enforce_budgets(R, c.num_layers, params, d.budget);
            configs[d.device_id] = slice_config(R, bd.depth);
        }
        return configs;
    }
    std::map<int, double> forward_times;
    std::map<int, DeviceBudget> budgets;
    std::map<int, LoraConfig> reference;
    for (const auto& d : c.devices) {
        forward_times[d.device_id] = d.forward_time;
        budgets[d.device_id] = d.budget;
        // Capability comparison at a common reference depth L; feeding back
        // the previous heterogeneous configs would oscillate.
        reference[d.device_id] = slice_config(R, c.num_layers);
    }
    const Plan plan =
        configure(state.estimates, forward_times, params, budgets, reference);
    (void)log;
    for (const auto& [id, dp] : plan.devices) configs[id] = dp.config;
    return configs;
}

}  // namespace

RoundReport simulate_round(SimState& state, ExperimentLog& log) {
    const ExperimentConfig& c = state.config;
    const int h = state.round;
    RoundReport report;
    report.round = h;

    const std::map<int, LoraConfig> configs = plan_round(state, log);
    log.plans.push_back(configs);

    const double bytes_per_rank =
        payload_bytes_per_rank_unit(c.dim, c.dim, c.adapted_linears);
    const std::uint64_t hb = head_bytes(c.num_classes, c.dim);
    const double lr = cosine_lr(c.base_lr, h, std::max(1, c.rounds));

    std::vector<DeviceUpdate> updates;
    for (std::size_t i = 0; i < c.devices.size(); ++i) {
        const DeviceProfile& prof = c.devices[i];
        const LoraConfig& cfg = configs.at(prof.device_id);

        DeviceRoundMetrics metrics;
        metrics.device_id = prof.device_id;
        metrics.depth = cfg.depth;
        metrics.rank_sum = cfg.rank_sum();

        // Download of assigned layers + head.
        metrics.download_bytes =
            payload_bytes(cfg, c.dim, c.dim, c.adapted_linears) + hb;
        log.traffic_meter += metrics.download_bytes;

        LayerStack stack = state.backbone;
        if (c.planner == PlannerKind::HetLora) {
            const int L = state.global.num_layers();
            for (int j = 0; j < cfg.depth; ++j) {
                const int l = L - cfg.depth + j;
                stack.adapters[l] = truncate_adapter(state.global.layers[l], cfg.ranks[j]);
            }
        } else {
            stack.adapters = assign(state.global, cfg);
        }
        stack.head = state.global.head;

        OptimizerState opt;
        opt.kind = c.optimizer;
        if (!c.reset_optimizer_per_round) {
            auto prev_opt = state.optimizers.find(prof.device_id);
            // Moment state only carries over while the parameter shapes
            // still line up with this round's config.
            if (prev_opt != state.optimizers.end()) {
                std::size_t n_params = 2 * stack.adapters.size() + 1;
                bool compatible = prev_opt->second.m.size() == n_params;
                if (compatible) {
                    std::size_t k = 0;
                    for (const auto& [l, ad] : stack.adapters) {
                        compatible = compatible && prev_opt->second.m[k].same_shape(ad.B) &&
                                     prev_opt->second.m[k + 1].same_shape(ad.A);
                        k += 2;
                    }
                }
                if (compatible) opt = prev_opt->second;
            }
        }
        FinetuneResult result = local_finetune(stack, state.shards[i], opt, c.batch_size, lr,
                                               state.device_rngs.at(prof.device_id));
        if (!c.reset_optimizer_per_round) state.optimizers[prof.device_id] = opt;
        metrics.train_loss = result.mean_loss;

        const RoundConditions actual = sample_round_conditions(
            prof, state.conditions.at(prof.device_id),
            state.condition_rngs.at(prof.device_id), h, c.mode_period, c.noise,
            bytes_per_rank);
        metrics.completion_time = completion_time(prof, actual, cfg);

        metrics.upload_bytes = payload_bytes(cfg, c.dim, c.dim, c.adapted_linears) + hb;
        log.traffic_meter += metrics.upload_bytes;

        DeviceStatus status;
        status.device_id = prof.device_id;
        status.round = h;
        status.backprop_time_per_layer = actual.compute_per_layer;
        status.upload_time_per_rank = actual.upload_per_rank;
        status.forward_time = prof.forward_time;
        auto it = state.estimates.find(prof.device_id);
        if (it == state.estimates.end()) {
            CapacityEstimate fresh;
            fresh.smoothing = c.smoothing;
            state.estimates[prof.device_id] = update_estimate(fresh, status);
        } else {
            it->second = update_estimate(it->second, status);
        }

        DeviceUpdate upd;
        upd.device_id = prof.device_id;
        upd.adapters = result.stack.adapters;
        upd.head = result.stack.head;
        updates.push_back(std::move(upd));

        report.devices.push_back(metrics);
        report.upload_bytes += metrics.upload_bytes;
        report.download_bytes += metrics.download_bytes;
    }

    if (c.planner == PlannerKind::HetLora) {
        state.global = hetlora_pad_aggregate(updates, state.global);
    } else {
        state.global = layerwise_aggregate(updates, state.global);
    }

    if (backbone_checksum(state.backbone) != state.backbone_fingerprint) {
        throw std::logic_error("simulate_round: frozen backbone was mutated");
    }

    std::vector<double> times;
    for (const auto& m : report.devices) times.push_back(m.completion_time);
    report.round_time = *std::max_element(times.begin(), times.end());
    report.avg_waiting = avg_waiting(times);
    report.waiting_violated = report.avg_waiting > c.waiting_threshold;

    LayerStack eval_stack = state.backbone;
    for (int l = 0; l < state.global.num_layers(); ++l) {
        eval_stack.adapters[l] = state.global.layers[l];
    }
    eval_stack.head = state.global.head;
    if (!state.eval_set.samples.empty()) {
        report.eval_loss = evaluate_loss(eval_stack, state.eval_set);
        report.eval_accuracy = evaluate_accuracy(eval_stack, state.eval_set);
    }
    report.train_accuracy = evaluate_accuracy(eval_stack, state.train_set);

    state.prev_configs = configs;
    state.round += 1;
    return report;
}

ExperimentLog run_experiment(const ExperimentConfig& config) {
    SimState state = init_state(config);
    ExperimentLog log;
    for (int h = 0; h < config.rounds; ++h) {
        RoundReport report = simulate_round(state, log);
        log.cumulative_time += report.round_time;
        log.cumulative_bytes += report.upload_bytes + report.download_bytes;
        log.rounds.push_back(std::move(report));
    }
    return log;
}

namespace {

const char* kCsvHeader =
    "round,device_id,depth,rank_sum,t_i,t_round,avg_wait,wait_violation,"
    "up_bytes,down_bytes,cum_time,cum_bytes,eval_loss,eval_acc\n";

void append_summary_row(std::ostringstream& out, const RoundReport& r, double cum_time,
                        std::uint64_t cum_bytes) {
    int depth_max = 0;
    int rank_sum = 0;
    for (const auto& m : r.devices) {
        depth_max = std::max(depth_max, m.depth);
        rank_sum += m.rank_sum;
    }
    out << r.round << ",-," << depth_max << "," << rank_sum << "," << fmt(r.round_time) << ","
        << fmt(r.round_time) << "," << fmt(r.avg_waiting) << "," << (r.waiting_violated ? 1 : 0)
        << "," << r.upload_bytes << "," << r.download_bytes << "," << fmt(cum_time) << ","
        << cum_bytes << "," << fmt(r.eval_loss) << "," << fmt(r.eval_accuracy) << "\n";
}

}  // namespace

std::string log_to_csv(const ExperimentLog& log) {
    std::ostringstream out;
    out << kCsvHeader;
    double cum_time = 0.0;
    std::uint64_t cum_bytes = 0;
    for (const RoundReport& r : log.rounds) {
        cum_time += r.round_time;
        cum_bytes += r.upload_bytes + r.download_bytes;
        for (const auto& m : r.devices) {
            out << r.round << "," << m.device_id << "," << m.depth << "," << m.rank_sum << ","
                << fmt(m.completion_time) << "," << fmt(r.round_time) << ","
                << fmt(r.avg_waiting) << "," << (r.waiting_violated ? 1 : 0) << ","
                << m.upload_bytes << "," << m.download_bytes << "," << fmt(cum_time) << ","
                << cum_bytes << "," << fmt(r.eval_loss) << "," << fmt(r.eval_accuracy) << "\n";
        }
        append_summary_row(out, r, cum_time, cum_bytes);
    }
    return out.str();
}

std::string summary_to_csv(const ExperimentLog& log) {
    std::ostringstream out;
    out << kCsvHeader;
    double cum_time = 0.0;
    std::uint64_t cum_bytes = 0;
    for (const RoundReport& r : log.rounds) {
        cum_time += r.round_time;
        cum_bytes += r.upload_bytes + r.download_bytes;
        append_summary_row(out, r, cum_time, cum_bytes);
    }
    return out.str();
}

}  // namespace legend
