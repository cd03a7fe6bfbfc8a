#pragma once

#include <map>
#include <optional>
#include <vector>

namespace legend {

// Timing observations uploaded by a device after local fine-tuning.
struct DeviceStatus {
    int device_id = 0;
    int round = 0;
    double backprop_time_per_layer = 0.0;  // observed seconds/layer
    double upload_time_per_rank = 0.0;     // observed seconds/rank-unit
    double forward_time = 0.0;             // seconds
};

// Server-side EMA of a device's compute and upload capability.
struct CapacityEstimate {
    double compute_time_per_layer = 0.0;  // smoothed mu
    double upload_time_per_rank = 0.0;    // smoothed beta
    double smoothing = 0.8;               // rho
    bool initialized = false;
};

// mu <- rho*mu + (1-rho)*obs, beta likewise. The first observation seeds
// the estimate directly. Throws on negative observations.
CapacityEstimate update_estimate(const CapacityEstimate& prev, const DeviceStatus& obs);

// Fold update_estimate over each device's history in round order.
std::map<int, CapacityEstimate> estimate_all(
    const std::map<int, std::vector<DeviceStatus>>& history, double smoothing);

}  // namespace legend
