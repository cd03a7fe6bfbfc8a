#include "legend/aggregator.hpp"

#include <algorithm>
#include <stdexcept>

namespace legend {

namespace {

std::vector<DeviceUpdate> sorted_by_id(std::vector<DeviceUpdate> updates) {
    std::sort(updates.begin(), updates.end(),
              [](const DeviceUpdate& a, const DeviceUpdate& b) {
                  return a.device_id < b.device_id;
              });
    return updates;
}

Matrix mean_head(const std::vector<DeviceUpdate>& updates) {
    Matrix head = updates[0].head;
    for (std::size_t i = 1; i < updates.size(); ++i) {
        head = axpy(1.0, updates[i].head, head);
    }
    for (double& v : head.data()) v /= static_cast<double>(updates.size());
    return head;
}

}  // namespace

GlobalLoraState layerwise_aggregate(const std::vector<DeviceUpdate>& updates,
                                    const GlobalLoraState& previous) {
    if (updates.empty()) throw std::invalid_argument("layerwise_aggregate: no updates");
    const auto ordered = sorted_by_id(updates);
    GlobalLoraState next = previous;
    next.contribution_counts.assign(previous.layers.size(), 0);

    for (int l = 0; l < previous.num_layers(); ++l) {
        Matrix sum_b, sum_a;
        int count = 0;
        for (const DeviceUpdate& upd : ordered) {
            auto it = upd.adapters.find(l);
            if (it == upd.adapters.end()) continue;
            const LoraAdapter& ad = it->second;
            if (ad.rank != previous.layers[l].rank) {
                throw std::runtime_error(
                    "layerwise_aggregate: device " + std::to_string(upd.device_id) +
                    " submitted rank " + std::to_string(ad.rank) + " at layer " +
                    std::to_string(l) + ", global rank is " +
                    std::to_string(previous.layers[l].rank));
            }
            if (count == 0) {
                sum_b = ad.B;
                sum_a = ad.A;
            } else {
                sum_b = axpy(1.0, ad.B, sum_b);
                sum_a = axpy(1.0, ad.A, sum_a);
            }
            ++count;
        }
        next.contribution_counts[l] = count;
        if (count == 0) continue;  // keep previous global value
        for (double& v : sum_b.data()) v /= static_cast<double>(count);
        for (double& v : sum_a.data()) v /= static_cast<double>(count);
        next.layers[l].B = std::move(sum_b);
        next.layers[l].A = std::move(sum_a);
    }
    next.head = mean_head(ordered);
    return next;
}

std::map<int, LoraAdapter> assign(const GlobalLoraState& global, const LoraConfig& config) {
    const int L = global.num_layers();
    if (config.depth < 0 || config.depth > L) {
        throw std::invalid_argument("assign: config depth out of range");
    }
    std::map<int, LoraAdapter> out;
    for (int j = 0; j < config.depth; ++j) {
        const int l = L - config.depth + j;
        if (global.layers[l].rank != config.ranks[j]) {
            throw std::invalid_argument("assign: config rank " +
                                        std::to_string(config.ranks[j]) + " at layer " +
                                        std::to_string(l) + " does not match global rank " +
                                        std::to_string(global.layers[l].rank));
        }
        out[l] = global.layers[l];
    }
    return out;
}

LoraAdapter truncate_adapter(const LoraAdapter& adapter, int target_rank) {
    if (target_rank < 1 || target_rank > adapter.rank) {
        throw std::invalid_argument("truncate_adapter: bad target rank");
    }
    LoraAdapter out;
    out.layer_index = adapter.layer_index;
    out.rank = target_rank;
    out.B = Matrix(adapter.B.rows(), target_rank);
    out.A = Matrix(target_rank, adapter.A.cols());
    for (std::size_t i = 0; i < out.B.rows(); ++i)
        for (int j = 0; j < target_rank; ++j) out.B(i, j) = adapter.B(i, j);
    for (int i = 0; i < target_rank; ++i)
        for (std::size_t j = 0; j < out.A.cols(); ++j) out.A(i, j) = adapter.A(i, j);
    return out;
}

GlobalLoraState hetlora_pad_aggregate(const std::vector<DeviceUpdate>& updates,
                                      const GlobalLoraState& previous) {
    if (updates.empty()) throw std::invalid_argument("hetlora_pad_aggregate: no updates");
    const auto ordered = sorted_by_id(updates);
    GlobalLoraState next = previous;
    next.contribution_counts.assign(previous.layers.size(), 0);

    for (int l = 0; l < previous.num_layers(); ++l) {
        int max_rank = 0;
        int count = 0;
        for (const DeviceUpdate& upd : ordered) {
            auto it = upd.adapters.find(l);
            if (it == upd.adapters.end()) continue;
            max_rank = std::max(max_rank, it->second.rank);
            ++count;
        }
        next.contribution_counts[l] = count;
        if (count == 0) continue;
        // Keep the global slot wide enough for later assignments even when
        // no device submitted the top rank this round.
        max_rank = std::max(max_rank, previous.layers[l].rank);

        const std::size_t m = previous.layers[l].B.rows();
        const std::size_t q = previous.layers[l].A.cols();
        Matrix sum_b(m, static_cast<std::size_t>(max_rank));
        Matrix sum_a(static_cast<std::size_t>(max_rank), q);
        for (const DeviceUpdate& upd : ordered) {
            auto it = upd.adapters.find(l);
            if (it == upd.adapters.end()) continue;
            const LoraAdapter& ad = it->second;
            for (std::size_t i = 0; i < m; ++i)
                for (int j = 0; j < ad.rank; ++j) sum_b(i, j) += ad.B(i, j);
            for (int i = 0; i < ad.rank; ++i)
                for (std::size_t j = 0; j < q; ++j) sum_a(i, j) += ad.A(i, j);
        }
        for (double& v : sum_b.data()) v /= static_cast<double>(count);
        for (double& v : sum_a.data()) v /= static_cast<double>(count);
        next.layers[l].rank = max_rank;
        next.layers[l].B = std::move(sum_b);
        next.layers[l].A = std::move(sum_a);
    }
    next.head = mean_head(ordered);
    return next;
}

}  // namespace legend
