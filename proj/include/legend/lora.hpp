#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "legend/matrix.hpp"
#include "legend/rng.hpp"

namespace legend {

enum class Activation { Tanh, Identity };

// One frozen linear block of the backbone.
struct BackboneLayer {
    Matrix weight;  // m x q, never mutated after construction
    Activation activation = Activation::Tanh;
};

// Low-rank pair injected beside a frozen weight: delta = B * A.
struct LoraAdapter {
    int layer_index = 0;
    int rank = 0;
    Matrix B;  // m x rank
    Matrix A;  // rank x q
};

// A device's plan: adapt the deepest `depth` layers with the given ranks.
// ranks[j] belongs to layer L - depth + j and must be nondecreasing.
struct LoraConfig {
    int depth = 0;
    std::vector<int> ranks;

    int rank_sum() const;
    // Throws std::invalid_argument on decreasing ranks, nonpositive rank,
    // depth out of [0, num_layers], or rank sum above the budget.
    void validate(int num_layers, int budget) const;
};

// Frozen backbone stack plus injected adapters and a trainable head.
// Adapter keys form a contiguous index range; planner-produced stacks
// always use the deepest suffix [L-k, L-1].
struct LayerStack {
    std::vector<BackboneLayer> layers;
    std::map<int, LoraAdapter> adapters;
    Matrix head;  // classes x m_last, trainable

    int num_layers() const { return static_cast<int>(layers.size()); }
};

// Cache of per-layer inputs and pre-activations captured by forward().
struct ForwardCache {
    std::vector<Matrix> inputs;          // x fed into each layer
    std::vector<Matrix> preactivations;  // M x + B A x per layer
    Matrix last_output;                  // input of the head
};

// Gradients for everything trainable: adapters on the adapted range + head.
struct AdapterGrads {
    std::map<int, Matrix> dB;
    std::map<int, Matrix> dA;
    Matrix dHead;
};

// B = 0, A ~ N(0, std^2): the adapter starts as an exact no-op.
LoraAdapter init_adapter(SeededRng& rng, int layer_index, int rank, std::size_t m,
                         std::size_t q, double stddev);

// Place adapters on the deepest config.depth layers. Backbone untouched.
LayerStack inject(const LayerStack& stack, const LoraConfig& config, SeededRng& rng,
                  double init_std = 0.02);

// Contiguous-window variant used by the position micro-study; no suffix or
// rank-monotonicity requirement.
LayerStack inject_window(const LayerStack& stack, int first_layer, int last_layer,
                         int rank, SeededRng& rng, double init_std = 0.02);

// Per layer: y = act(M x + B A x); logits = head * y_last.
Matrix forward(const LayerStack& stack, const Matrix& x, ForwardCache* cache = nullptr);

// Truncated backprop: gradients for adapters and head only; propagation
// stops below the shallowest adapted layer.
AdapterGrads backward(const LayerStack& stack, const ForwardCache& cache,
                      const Matrix& grad_logits);

// Fold B*A into the frozen weights; returns an adapter-free stack.
LayerStack merge(const LayerStack& stack);

// Stable fingerprint of the backbone weights; used by freeze-contract tests.
std::uint64_t backbone_checksum(const LayerStack& stack);

}  // namespace legend
