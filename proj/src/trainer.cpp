#include "legend/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace legend {

SyntheticDataset make_synthetic(SeededRng& rng, int n_samples, int feature_dim,
                                int num_classes) {
    if (n_samples <= 0 || feature_dim <= 0 || num_classes <= 0) {
        throw std::invalid_argument("make_synthetic: all arguments must be positive");
    }
    // Fixed unit-direction class means scaled apart; cluster noise is small
    // relative to the separation, keeping the task linearly separable.
    const double mean_scale = 4.0;
    const double noise_std = 0.5;
    std::vector<Matrix> means;
    means.reserve(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        Matrix mu = gaussian_matrix(rng, feature_dim, 1, 1.0);
        const double norm = frobenius_norm(mu);
        for (double& v : mu.data()) v = v / (norm > 0 ? norm : 1.0) * mean_scale;
        means.push_back(std::move(mu));
    }
    SyntheticDataset ds;
    ds.num_classes = num_classes;
    ds.samples.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        const int label = static_cast<int>(rng.next_below(num_classes));
        Matrix x = means[label];
        for (double& v : x.data()) v += rng.gaussian(noise_std);
        ds.samples.push_back({std::move(x), label});
    }
    return ds;
}

std::vector<SyntheticDataset> dirichlet_partition(SeededRng& rng,
                                                  const SyntheticDataset& dataset,
                                                  int n_devices, double alpha) {
    if (n_devices < 1) throw std::invalid_argument("dirichlet_partition: n_devices >= 1");
    if (alpha <= 0.0) throw std::invalid_argument("dirichlet_partition: alpha > 0");
    if (static_cast<int>(dataset.samples.size()) < n_devices) {
        throw std::invalid_argument("dirichlet_partition: dataset smaller than device count");
    }
    std::vector<SyntheticDataset> shards(n_devices);
    for (auto& s : shards) s.num_classes = dataset.num_classes;

    // Per class: draw device proportions Dir(alpha) and deal the class's
    // samples out contiguously by cumulative share.
    for (int c = 0; c < dataset.num_classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
            if (dataset.samples[i].label == c) idx.push_back(i);
        }
        if (idx.empty()) continue;
        std::vector<double> w(n_devices);
        double total = 0.0;
        for (double& v : w) {
            v = rng.gamma(alpha);
            total += v;
        }
        std::size_t assigned = 0;
        double cum = 0.0;
        for (int d = 0; d < n_devices; ++d) {
            cum += w[d] / total;
            std::size_t upto = (d == n_devices - 1)
                                   ? idx.size()
                                   : static_cast<std::size_t>(std::llround(cum * idx.size()));
            upto = std::min(upto, idx.size());
            for (; assigned < upto; ++assigned) {
                shards[d].samples.push_back(dataset.samples[idx[assigned]]);
            }
        }
    }

    // Top up empty shards from the current largest one.
    for (int d = 0; d < n_devices; ++d) {
        if (!shards[d].samples.empty()) continue;
        int largest = 0;
        for (int j = 1; j < n_devices; ++j) {
            if (shards[j].samples.size() > shards[largest].samples.size()) largest = j;
        }
        if (shards[largest].samples.size() <= 1) {
            throw std::invalid_argument("dirichlet_partition: not enough samples to fill shards");
        }
        shards[d].samples.push_back(shards[largest].samples.back());
        shards[largest].samples.pop_back();
    }
    return shards;
}

std::pair<Matrix, std::vector<int>> batch_features(const std::vector<Sample>& batch) {
    if (batch.empty()) throw std::invalid_argument("batch_features: empty batch");
    const std::size_t q0 = batch[0].features.rows();
    Matrix x(q0, batch.size());
    std::vector<int> labels(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        if (batch[j].features.rows() != q0 || batch[j].features.cols() != 1) {
            throw std::invalid_argument("batch_features: inconsistent sample shape");
        }
        for (std::size_t i = 0; i < q0; ++i) x(i, j) = batch[j].features(i, 0);
        labels[j] = batch[j].label;
    }
    return {std::move(x), std::move(labels)};
}

std::pair<double, Matrix> softmax_xent(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t classes = logits.rows();
    const std::size_t s = logits.cols();
    if (labels.size() != s) {
        throw std::invalid_argument("softmax_xent: label count != logit columns");
    }
    Matrix grad(classes, s);
    double loss = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
        if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= classes) {
            throw std::invalid_argument("softmax_xent: label " + std::to_string(labels[j]) +
                                        " out of range for " + std::to_string(classes) +
                                        " classes");
        }
        double maxv = logits(0, j);
        for (std::size_t c = 1; c < classes; ++c) maxv = std::max(maxv, logits(c, j));
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits(c, j) - maxv);
        const double log_denom = std::log(denom);
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(logits(c, j) - maxv) / denom;
            grad(c, j) = p / static_cast<double>(s);
        }
        grad(labels[j], j) -= 1.0 / static_cast<double>(s);
        loss += -(logits(labels[j], j) - maxv - log_denom);
    }
    return {loss / static_cast<double>(s), std::move(grad)};
}

std::pair<double, Matrix> loss_and_grad(const LayerStack& stack,
                                        const std::vector<Sample>& batch,
                                        ForwardCache& cache) {
    auto [x, labels] = batch_features(batch);
    Matrix logits = forward(stack, x, &cache);
    return softmax_xent(logits, labels);
}

void step(OptimizerState& opt, std::vector<Matrix*> params,
          const std::vector<const Matrix*>& grads, double lr) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("step: params/grads count mismatch");
    }
    if (opt.kind == OptimizerKind::AdamW && opt.m.empty()) {
        for (const Matrix* p : params) {
            opt.m.emplace_back(p->rows(), p->cols());
            opt.v.emplace_back(p->rows(), p->cols());
        }
    }
    if (opt.kind == OptimizerKind::AdamW && opt.m.size() != params.size()) {
        throw std::invalid_argument("step: optimizer state sized for a different param list");
    }
    opt.step_count += 1;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = *grads[k];
        if (!p.same_shape(g)) {
            throw std::invalid_argument("step: param/grad shape mismatch " + p.shape_str() +
                                        " vs " + g.shape_str());
        }
        if (opt.kind == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] -= lr * g.data()[i];
            continue;
        }
        Matrix& m = opt.m[k];
        Matrix& v = opt.v[k];
        const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
        const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data()[i] = opt.beta1 * m.data()[i] + (1.0 - opt.beta1) * g.data()[i];
            v.data()[i] = opt.beta2 * v.data()[i] + (1.0 - opt.beta2) * g.data()[i] * g.data()[i];
            const double mhat = m.data()[i] / bc1;
            const double vhat = v.data()[i] / bc2;
            // Decoupled weight decay, applied beside the adaptive step.
            p.data()[i] -= lr * (mhat / (std::sqrt(vhat) + opt.eps) +
                                 opt.weight_decay * p.data()[i]);
        }
    }
}

double cosine_lr(double base_lr, int round, int total_rounds) {
    if (round < 0 || round > total_rounds || total_rounds <= 0) {
        throw std::invalid_argument("cosine_lr: need 0 <= round <= total_rounds");
    }
    return base_lr * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(round) /
                           static_cast<double>(total_rounds)));
}

namespace {

// Trainable parameter pointers in a stable order: adapters by layer, then head.
std::vector<Matrix*> trainable_params(LayerStack& stack) {
    std::vector<Matrix*> out;
    for (auto& [l, ad] : stack.adapters) {
        out.push_back(&ad.B);
        out.push_back(&ad.A);
    }
    out.push_back(&stack.head);
    return out;
}

}  // namespace

FinetuneResult local_finetune(const LayerStack& stack, const SyntheticDataset& shard,
                              OptimizerState& opt, int batch_size, double lr,
                              SeededRng& rng) {
    if (shard.samples.empty()) throw std::invalid_argument("local_finetune: empty shard");
    if (batch_size < 1) throw std::invalid_argument("local_finetune: batch_size >= 1");
    FinetuneResult result;
    result.stack = stack;

    std::vector<std::size_t> order(shard.samples.size());
    std::iota(order.begin(), order.end(), 0);
    // Fisher-Yates from the device stream, one shuffle per epoch.
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.next_below(i)]);
    }

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::vector<Sample> batch;
        for (std::size_t j = start; j < std::min(order.size(), start + batch_size); ++j) {
            batch.push_back(shard.samples[order[j]]);
        }
        ForwardCache cache;
        auto [loss, grad_logits] = loss_and_grad(result.stack, batch, cache);
        loss_sum += loss;
        ++n_batches;
        AdapterGrads grads = backward(result.stack, cache, grad_logits);
        std::vector<Matrix*> params;
        std::vector<const Matrix*> gptrs;
        for (auto& [l, ad] : result.stack.adapters) {
            params.push_back(&ad.B);
            gptrs.push_back(&grads.dB.at(l));
            params.push_back(&ad.A);
            gptrs.push_back(&grads.dA.at(l));
        }
        params.push_back(&result.stack.head);
        gptrs.push_back(&grads.dHead);
        step(opt, params, gptrs, lr);
    }
    result.mean_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
    return result;
}

double evaluate_accuracy(const LayerStack& stack, const SyntheticDataset& dataset) {
    if (dataset.samples.empty()) return 0.0;
    auto [x, labels] = batch_features(dataset.samples);
    Matrix logits = forward(stack, x);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.rows(); ++c) {
            if (logits(c, j) > logits(best, j)) best = c;
        }
        if (static_cast<int>(best) == labels[j]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.cols());
}

double evaluate_loss(const LayerStack& stack, const SyntheticDataset& dataset,
                     int batch_size) {
    if (dataset.samples.empty()) return 0.0;
    double loss_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < dataset.samples.size();
         start += static_cast<std::size_t>(batch_size)) {
        std::vector<Sample> batch(
            dataset.samples.begin() + start,
            dataset.samples.begin() +
                std::min(dataset.samples.size(), start + static_cast<std::size_t>(batch_size)));
        auto [x, labels] = batch_features(batch);
        Matrix logits = forward(stack, x);
        loss_sum += softmax_xent(logits, labels).first * batch.size();
        count += batch.size();
    }
    return loss_sum / static_cast<double>(count);
}

}  // namespace legend
