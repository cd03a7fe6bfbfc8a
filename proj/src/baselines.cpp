#include "legend/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace legend {

LoraConfig fedlora_config(int num_layers, int uniform_rank) {
    if (uniform_rank < 1) throw std::invalid_argument("fedlora_config: rank >= 1");
    LoraConfig config;
    config.depth = num_layers;
    config.ranks.assign(num_layers, uniform_rank);
    return config;
}

std::map<int, LoraConfig> hetlora_config(const std::map<int, CapacityEstimate>& estimates,
                                         int num_layers, int r_min, int r_max) {
    if (r_min > r_max || r_min < 1) {
        throw std::invalid_argument("hetlora_config: need 1 <= r_min <= r_max");
    }
    double cap_min = 1e300, cap_max = 0.0;
    std::map<int, double> caps;
    for (const auto& [id, est] : estimates) {
        const double cap = 1.0 / (est.compute_time_per_layer +
                                  est.upload_time_per_rank * num_layers);
        caps[id] = cap;
        cap_min = std::min(cap_min, cap);
        cap_max = std::max(cap_max, cap);
    }
    std::map<int, LoraConfig> out;
    for (const auto& [id, cap] : caps) {
        int rank = r_max;  // degenerate capacity range maps everyone to the top
        if (cap_max > cap_min) {
            rank = r_min + static_cast<int>(std::lround(
                               (r_max - r_min) * (cap - cap_min) / (cap_max - cap_min)));
        }
        out[id] = fedlora_config(num_layers, rank);
    }
    return out;
}

}  // namespace legend
