#include "legend/lora.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace legend {

namespace {

Matrix apply_activation(const Matrix& z, Activation act) {
    if (act == Activation::Identity) return z;
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = std::tanh(z.data()[i]);
    return out;
}

// d act(z) / dz evaluated at cached pre-activation z.
Matrix activation_grad(const Matrix& z, Activation act) {
    Matrix out(z.rows(), z.cols());
    if (act == Activation::Identity) {
        for (double& v : out.data()) v = 1.0;
    } else {
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double t = std::tanh(z.data()[i]);
            out.data()[i] = 1.0 - t * t;
        }
    }
    return out;
}

int lowest_adapted_layer(const LayerStack& stack) {
    return stack.adapters.empty() ? stack.num_layers() : stack.adapters.begin()->first;
}

}  // namespace

int LoraConfig::rank_sum() const {
    int s = 0;
    for (int r : ranks) s += r;
    return s;
}

void LoraConfig::validate(int num_layers, int budget) const {
    if (depth < 0 || depth > num_layers) {
        throw std::invalid_argument("LoraConfig: depth " + std::to_string(depth) +
                                    " out of [0, " + std::to_string(num_layers) + "]");
    }
    if (static_cast<int>(ranks.size()) != depth) {
        throw std::invalid_argument("LoraConfig: ranks length " +
                                    std::to_string(ranks.size()) + " != depth " +
                                    std::to_string(depth));
    }
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (ranks[i] < 1) throw std::invalid_argument("LoraConfig: rank must be >= 1");
        if (i > 0 && ranks[i] < ranks[i - 1]) {
            throw std::invalid_argument("LoraConfig: ranks must be nondecreasing with depth");
        }
    }
    if (rank_sum() > budget) {
        throw std::invalid_argument("LoraConfig: rank sum " + std::to_string(rank_sum()) +
                                    " exceeds budget " + std::to_string(budget));
    }
}

LoraAdapter init_adapter(SeededRng& rng, int layer_index, int rank, std::size_t m,
                         std::size_t q, double stddev) {
    const int max_rank = static_cast<int>(std::min(m, q));
    if (rank < 1 || rank > max_rank) {
        throw std::invalid_argument("init_adapter: rank " + std::to_string(rank) +
                                    " out of [1, " + std::to_string(max_rank) + "]");
    }
    LoraAdapter ad;
    ad.layer_index = layer_index;
    ad.rank = rank;
    ad.B = Matrix(m, static_cast<std::size_t>(rank));  // zero, so B*A = 0 at start
    ad.A = gaussian_matrix(rng, static_cast<std::size_t>(rank), q, stddev);
    return ad;
}

LayerStack inject(const LayerStack& stack, const LoraConfig& config, SeededRng& rng,
                  double init_std) {
    const int L = stack.num_layers();
    config.validate(L, /*budget=*/INT32_MAX);
    LayerStack out = stack;
    out.adapters.clear();
    for (int j = 0; j < config.depth; ++j) {
        const int l = L - config.depth + j;
        const Matrix& w = stack.layers[l].weight;
        out.adapters[l] = init_adapter(rng, l, config.ranks[j], w.rows(), w.cols(), init_std);
    }
    return out;
}

LayerStack inject_window(const LayerStack& stack, int first_layer, int last_layer,
                         int rank, SeededRng& rng, double init_std) {
    const int L = stack.num_layers();
    if (first_layer < 0 || last_layer >= L || first_layer > last_layer) {
        throw std::invalid_argument("inject_window: bad range [" +
                                    std::to_string(first_layer) + ", " +
                                    std::to_string(last_layer) + "]");
    }
    LayerStack out = stack;
    out.adapters.clear();
    for (int l = first_layer; l <= last_layer; ++l) {
        const Matrix& w = stack.layers[l].weight;
        out.adapters[l] = init_adapter(rng, l, rank, w.rows(), w.cols(), init_std);
    }
    return out;
}

Matrix forward(const LayerStack& stack, const Matrix& x, ForwardCache* cache) {
    Matrix cur = x;
    if (cache) {
        cache->inputs.clear();
        cache->preactivations.clear();
    }
    for (int l = 0; l < stack.num_layers(); ++l) {
        const BackboneLayer& layer = stack.layers[l];
        if (layer.weight.cols() != cur.rows()) {
            throw std::invalid_argument("forward: layer " + std::to_string(l) + " expects " +
                                        std::to_string(layer.weight.cols()) + " rows, got " +
                                        cur.shape_str());
        }
        Matrix z = matmul(layer.weight, cur);
        auto it = stack.adapters.find(l);
        if (it != stack.adapters.end()) {
            z = axpy(1.0, matmul(it->second.B, matmul(it->second.A, cur)), z);
        }
        if (cache) {
            cache->inputs.push_back(cur);
            cache->preactivations.push_back(z);
        }
        cur = apply_activation(z, layer.activation);
    }
    if (cache) cache->last_output = cur;
    if (stack.head.empty()) return cur;
    return matmul(stack.head, cur);
}

AdapterGrads backward(const LayerStack& stack, const ForwardCache& cache,
                      const Matrix& grad_logits) {
    const int L = stack.num_layers();
    if (static_cast<int>(cache.inputs.size()) != L) {
        throw std::invalid_argument("backward: cache holds " +
                                    std::to_string(cache.inputs.size()) + " layers, stack has " +
                                    std::to_string(L));
    }
    AdapterGrads grads;
    grads.dHead = matmul(grad_logits, transpose(cache.last_output));
    Matrix grad_y = matmul(transpose(stack.head), grad_logits);

    const int stop = lowest_adapted_layer(stack);
    for (int l = L - 1; l >= stop; --l) {
        const BackboneLayer& layer = stack.layers[l];
        const Matrix& x_l = cache.inputs[l];
        Matrix grad_z = hadamard(grad_y, activation_grad(cache.preactivations[l],
                                                         layer.activation));
        auto it = stack.adapters.find(l);
        if (it != stack.adapters.end()) {
            const LoraAdapter& ad = it->second;
            grads.dB[l] = matmul(grad_z, transpose(matmul(ad.A, x_l)));
            grads.dA[l] = matmul(transpose(ad.B), matmul(grad_z, transpose(x_l)));
        }
        if (l > stop) {
            Matrix effective = layer.weight;
            if (it != stack.adapters.end()) {
                effective = axpy(1.0, matmul(it->second.B, it->second.A), effective);
            }
            grad_y = matmul(transpose(effective), grad_z);
        }
    }
    return grads;
}

LayerStack merge(const LayerStack& stack) {
    LayerStack out = stack;
    for (const auto& [l, ad] : stack.adapters) {
        out.layers[l].weight = axpy(1.0, matmul(ad.B, ad.A), stack.layers[l].weight);
    }
    out.adapters.clear();
    return out;
}

std::uint64_t backbone_checksum(const LayerStack& stack) {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a over weight bit patterns
    auto mix = [&h](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    };
    for (const auto& layer : stack.layers) {
        for (double v : layer.weight.data()) mix(v);
    }
    return h;
}

}  // namespace legend
