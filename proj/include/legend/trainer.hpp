#pragma once

#include <utility>
#include <vector>

#include "legend/lora.hpp"
#include "legend/matrix.hpp"
#include "legend/rng.hpp"

namespace legend {

struct Sample {
    Matrix features;  // q0 x 1
    int label = 0;
};

struct SyntheticDataset {
    std::vector<Sample> samples;
    int num_classes = 0;
};

enum class OptimizerKind { Sgd, AdamW };

// Per-parameter-list optimizer; moments are lazily shaped on first step.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::AdamW;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::vector<Matrix> m;  // first moments (adamw)
    std::vector<Matrix> v;  // second moments (adamw)
};

// Class-conditional Gaussian clusters with well-separated fixed means.
SyntheticDataset make_synthetic(SeededRng& rng, int n_samples, int feature_dim,
                                int num_classes);

// Non-i.i.d. split: per-class device proportions drawn Dir(alpha). Every
// sample lands on exactly one device; empty shards are topped up from the
// largest shard.
std::vector<SyntheticDataset> dirichlet_partition(SeededRng& rng,
                                                  const SyntheticDataset& dataset,
                                                  int n_devices, double alpha);

// Mean softmax cross-entropy over logit columns and its gradient
// (softmax - onehot) / batch_size.
std::pair<double, Matrix> softmax_xent(const Matrix& logits, const std::vector<int>& labels);

// Forward the batch through the stack, returning loss and logit gradient.
// The cache from the forward pass is written into `cache` for backward().
std::pair<double, Matrix> loss_and_grad(const LayerStack& stack,
                                        const std::vector<Sample>& batch,
                                        ForwardCache& cache);

// Apply one optimizer step in place. params and grads are parallel lists.
void step(OptimizerState& opt, std::vector<Matrix*> params,
          const std::vector<const Matrix*>& grads, double lr);

// base_lr * 0.5 * (1 + cos(pi h / H)).
double cosine_lr(double base_lr, int round, int total_rounds);

struct FinetuneResult {
    LayerStack stack;
    double mean_loss = 0.0;
};

// One local epoch: shuffled mini-batches, updating only adapters and head.
FinetuneResult local_finetune(const LayerStack& stack, const SyntheticDataset& shard,
                              OptimizerState& opt, int batch_size, double lr,
                              SeededRng& rng);

// Accuracy of argmax predictions over a dataset.
double evaluate_accuracy(const LayerStack& stack, const SyntheticDataset& dataset);
double evaluate_loss(const LayerStack& stack, const SyntheticDataset& dataset,
                     int batch_size = 64);

// Batch a sample list into a feature matrix (q0 x s) and label vector.
std::pair<Matrix, std::vector<int>> batch_features(const std::vector<Sample>& batch);

}  // namespace legend
