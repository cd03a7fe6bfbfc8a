#include "legend/capacity.hpp"

#include <stdexcept>
#include <string>

namespace legend {

CapacityEstimate update_estimate(const CapacityEstimate& prev, const DeviceStatus& obs) {
    if (obs.backprop_time_per_layer < 0.0 || obs.upload_time_per_rank < 0.0 ||
        obs.forward_time < 0.0) {
        throw std::invalid_argument("update_estimate: negative observation from device " +
                                    std::to_string(obs.device_id));
    }
    CapacityEstimate next = prev;
    next.initialized = true;
    if (!prev.initialized) {
        next.compute_time_per_layer = obs.backprop_time_per_layer;
        next.upload_time_per_rank = obs.upload_time_per_rank;
        return next;
    }
    const double rho = prev.smoothing;
    next.compute_time_per_layer =
        rho * prev.compute_time_per_layer + (1.0 - rho) * obs.backprop_time_per_layer;
    next.upload_time_per_rank =
        rho * prev.upload_time_per_rank + (1.0 - rho) * obs.upload_time_per_rank;
    return next;
}

std::map<int, CapacityEstimate> estimate_all(
    const std::map<int, std::vector<DeviceStatus>>& history, double smoothing) {
    std::map<int, CapacityEstimate> out;
    for (const auto& [device_id, observations] : history) {
        if (observations.empty()) {
            throw std::invalid_argument("estimate_all: no observations for device " +
                                        std::to_string(device_id));
        }
        CapacityEstimate est;
        est.smoothing = smoothing;
        for (const DeviceStatus& obs : observations) est = update_estimate(est, obs);
        out[device_id] = est;
    }
    return out;
}

}  // namespace legend
