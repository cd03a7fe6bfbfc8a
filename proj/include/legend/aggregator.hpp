#pragma once

#include <map>
#include <vector>

#include "legend/lora.hpp"
#include "legend/matrix.hpp"

namespace legend {

// One device's upload after local fine-tuning.
struct DeviceUpdate {
    int device_id = 0;
    std::map<int, LoraAdapter> adapters;  // layer index -> adapter
    Matrix head;
};

// Server-held global adapters, one per layer at the global rank, plus the
// averaged head and per-layer contribution counts from the last aggregation.
struct GlobalLoraState {
    std::vector<LoraAdapter> layers;  // index l in [0, L-1]
    std::vector<int> contribution_counts;
    Matrix head;

    int num_layers() const { return static_cast<int>(layers.size()); }
};

// Per-layer arithmetic mean over the devices contributing that layer (B and
// A averaged separately); layers nobody visited keep the previous global
// value. Head averaged over all devices. Summation order is ascending
// device id. Throws on rank mismatch at a layer.
GlobalLoraState layerwise_aggregate(const std::vector<DeviceUpdate>& updates,
                                    const GlobalLoraState& previous);

// Value-copy of the deepest config.depth global layers for one device.
std::map<int, LoraAdapter> assign(const GlobalLoraState& global, const LoraConfig& config);

// HetLoRA-style aggregation: all depths L but ranks may differ; B is
// zero-padded to the max rank column-wise and A row-wise before averaging.
// The result is stored at the max rank; assignment truncates.
GlobalLoraState hetlora_pad_aggregate(const std::vector<DeviceUpdate>& updates,
                                      const GlobalLoraState& previous);

// Truncate an adapter to a smaller target rank (keep leading columns/rows).
LoraAdapter truncate_adapter(const LoraAdapter& adapter, int target_rank);

}  // namespace legend
