#pragma once

#include <map>

#include "legend/capacity.hpp"
#include "legend/lora.hpp"

namespace legend {

enum class PlannerKind { Legend, FedLora, HetLora };

// Uniform baseline: every device gets depth L with the same rank everywhere.
LoraConfig fedlora_config(int num_layers, int uniform_rank);

// Simplified capacity-proportional HetLoRA: depth L for everyone; per-device
// uniform rank interpolated between r_min and r_max by estimated capacity
// 1 / (mu + beta * L). Homogeneous estimates all map to r_max.
std::map<int, LoraConfig> hetlora_config(const std::map<int, CapacityEstimate>& estimates,
                                         int num_layers, int r_min, int r_max);

}  // namespace legend
