#include "legend/micro.hpp"

#include <algorithm>
#include <sstream>

#include "legend/lora.hpp"
#include "legend/trainer.hpp"

namespace legend {

namespace {

constexpr int kLayers = 6;
constexpr int kDim = 16;
constexpr int kClasses = 2;
constexpr int kSamples = 400;
constexpr int kEpochs = 5;
constexpr int kBatch = 8;
constexpr double kLr = 0.005;

// Nominal timing constants for the simulated latency column.
constexpr double kForwardSec = 0.05;
constexpr double kBackpropPerLayerSec = 0.02;
constexpr double kUploadPerRankSec = 0.004;

LayerStack make_backbone(SeededRng& rng) {
    LayerStack stack;
    for (int l = 0; l < kLayers; ++l) {
        BackboneLayer layer;
        layer.weight = gaussian_matrix(rng, kDim, kDim, 1.0 / 4.0);
        layer.activation = Activation::Tanh;
        stack.layers.push_back(std::move(layer));
    }
    stack.head = gaussian_matrix(rng, kClasses, kDim, 0.02);
    return stack;
}

double train_centrally(LayerStack stack, const SyntheticDataset& data, SeededRng& rng) {
    OptimizerState opt;
    opt.kind = OptimizerKind::AdamW;
    double loss = 0.0;
    for (int e = 0; e < kEpochs; ++e) {
        FinetuneResult r = local_finetune(stack, data, opt, kBatch, kLr, rng);
        stack = std::move(r.stack);
        loss = r.mean_loss;
    }
    return loss;
}

std::string to_csv(const std::string& study, const std::vector<MicroResult>& rows) {
    std::ostringstream out;
    out << "study,variant,tag,final_loss,latency_s\n";
    for (const auto& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g", r.final_loss);
        out << study << "," << r.variant << ",qualitative," << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.12g", r.latency);
        out << buf << "\n";
    }
    return out.str();
}

}  // namespace

std::vector<MicroResult> run_position_study(std::uint64_t seed) {
    SeededRng init_rng(seed, 2);
    SeededRng data_rng(seed, 1);
    const LayerStack base = make_backbone(init_rng);
    const SyntheticDataset data = make_synthetic(data_rng, kSamples, kDim, kClasses);

    struct Window {
        const char* name;
        int first, last;
    };
    const Window windows[] = {
        {"layers_a", 0, kLayers - 1},
        {"layers_s", 0, 1},
        {"layers_m", 2, 3},
        {"layers_d", kLayers - 2, kLayers - 1},
    };
    std::vector<MicroResult> results;
    for (const Window& w : windows) {
        SeededRng adapter_rng(seed, 10 + w.first);
        SeededRng train_rng(seed, 20 + w.first);
        LayerStack stack = inject_window(base, w.first, w.last, 4, adapter_rng);
        MicroResult r;
        r.variant = w.name;
        r.final_loss = train_centrally(stack, data, train_rng);
        // Backprop must reach down to the shallowest adapted layer.
        const int backprop_layers = kLayers - w.first;
        const int rank_units = 4 * (w.last - w.first + 1);
        r.latency = kForwardSec + backprop_layers * kBackpropPerLayerSec +
                    rank_units * kUploadPerRankSec;
        results.push_back(std::move(r));
    }
    return results;
}

std::vector<MicroResult> run_depth_study(std::uint64_t seed) {
    SeededRng init_rng(seed, 2);
    SeededRng data_rng(seed, 1);
    const LayerStack base = make_backbone(init_rng);
    const SyntheticDataset data = make_synthetic(data_rng, kSamples, kDim, kClasses);

    std::vector<MicroResult> results;
    for (int k = 1; k <= kLayers; ++k) {
        LoraConfig config;
        config.depth = k;
        config.ranks.assign(k, 4);
        SeededRng adapter_rng(seed, 10 + k);
        SeededRng train_rng(seed, 20 + k);
        LayerStack stack = inject(base, config, adapter_rng);
        MicroResult r;
        r.variant = "depth_" + std::to_string(k);
        r.final_loss = train_centrally(stack, data, train_rng);
        r.latency = kForwardSec + k * kBackpropPerLayerSec +
                    config.rank_sum() * kUploadPerRankSec;
        results.push_back(std::move(r));
    }
    return results;
}

std::vector<std::vector<int>> rankdist_layouts(std::uint64_t seed) {
    // Four layouts over 6 layers, all summing to a budget of 24.
    const std::vector<int> inc = {1, 2, 3, 4, 6, 8};
    std::vector<int> dec(inc.rbegin(), inc.rend());
    const std::vector<int> avg(kLayers, 4);
    std::vector<int> rand_layout = inc;
    SeededRng rng(seed, 30);
    for (std::size_t i = rand_layout.size(); i > 1; --i) {
        std::swap(rand_layout[i - 1], rand_layout[rng.next_below(i)]);
    }
    return {inc, dec, avg, rand_layout};
}

std::vector<MicroResult> run_rankdist_study(std::uint64_t seed) {
    SeededRng init_rng(seed, 2);
    SeededRng data_rng(seed, 1);
    const LayerStack base = make_backbone(init_rng);
    const SyntheticDataset data = make_synthetic(data_rng, kSamples, kDim, kClasses);

    const auto layouts = rankdist_layouts(seed);
    const char* names[] = {"inc", "dec", "avg", "rand"};
    std::vector<MicroResult> results;
    for (std::size_t v = 0; v < layouts.size(); ++v) {
        // Dec and Rand are not nondecreasing, so adapters are placed
        // directly instead of through a LoraConfig.
        LayerStack stack = base;
        SeededRng adapter_rng(seed, 40 + v);
        int rank_units = 0;
        for (int l = 0; l < kLayers; ++l) {
            stack.adapters[l] =
                init_adapter(adapter_rng, l, layouts[v][l], kDim, kDim, 0.02);
            rank_units += layouts[v][l];
        }
        SeededRng train_rng(seed, 50 + v);
        MicroResult r;
        r.variant = names[v];
        r.final_loss = train_centrally(stack, data, train_rng);
        r.latency = kForwardSec + kLayers * kBackpropPerLayerSec +
                    rank_units * kUploadPerRankSec;
        results.push_back(std::move(r));
    }
    return results;
}

std::string micro_position_study(std::uint64_t seed) {
    return to_csv("position", run_position_study(seed));
}

std::string micro_depth_study(std::uint64_t seed) {
    return to_csv("depth", run_depth_study(seed));
}

std::string micro_rankdist_study(std::uint64_t seed) {
    return to_csv("rankdist", run_rankdist_study(seed));
}

}  // namespace legend
