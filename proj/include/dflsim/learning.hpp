#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dflsim/param_math.hpp"
#include "dflsim/rng.hpp"

namespace dflsim {

/// Row-major feature matrix plus class labels in {0..K-1}.
struct Dataset {
    std::vector<double> features;  // size() == size * num_features
    std::size_t num_features = 0;
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return labels.size(); }

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * num_features, num_features};
    }
};

/// One-hidden-layer dense classifier: ReLU hidden activation, softmax output,
/// mean cross-entropy loss. Parameter vector packs W1 (hidden x input,
/// row-major), b1, W2 (classes x hidden, row-major), b2.
struct ModelSpec {
    std::size_t input_dim = 20;
    std::size_t hidden_dim = 32;
    std::size_t classes = 4;
    double learning_rate = 0.1;
    std::size_t batch_size = 5;
    std::size_t local_epochs = 3;

    std::size_t param_count() const {
        return input_dim * hidden_dim + hidden_dim + hidden_dim * classes + classes;
    }

    void validate() const {
        if (input_dim == 0 || hidden_dim == 0 || classes == 0 || batch_size == 0 ||
            local_epochs == 0) {
            throw std::invalid_argument("ModelSpec: all sizes must be positive");
        }
        if (learning_rate < 0.0) {
            throw std::invalid_argument("ModelSpec: learning rate must be >= 0");
        }
    }
};

struct GradEval {
    double loss = 0.0;
    ParamVector grad;
};

struct FederatedData {
    std::vector<Dataset> shards;
    Dataset test;
};

/// Gaussian-mixture classification pool (one component per class), shuffled
/// and partitioned without replacement into equal client shards plus a
/// disjoint test set. imbalance > 0 gives class 0 that prior and splits the
/// remainder evenly; 0 keeps priors uniform. class_sep scales the component
/// means against unit feature noise.
inline FederatedData make_federated_data(std::uint64_t seed, std::size_t n_clients,
                                         std::size_t per_client, std::size_t input_dim,
                                         std::size_t classes, double imbalance,
                                         double class_sep = 0.5,
                                         std::size_t test_size = 1000) {
    if (n_clients == 0 || per_client == 0 || input_dim == 0 || classes == 0) {
        throw std::invalid_argument("make_federated_data: sizes must be positive");
    }
    if (imbalance < 0.0 || imbalance >= 1.0) {
        throw std::invalid_argument("make_federated_data: imbalance must be in [0, 1)");
    }
    Rng rng(mix_seed(seed, "data"));

    std::vector<double> means(classes * input_dim);
    for (double& m : means) m = class_sep * rng.gaussian();

    std::vector<double> priors(classes, 1.0 / static_cast<double>(classes));
    if (imbalance > 0.0 && classes > 1) {
        priors[0] = imbalance;
        for (std::size_t c = 1; c < classes; ++c) {
            priors[c] = (1.0 - imbalance) / static_cast<double>(classes - 1);
        }
    }

    const std::size_t pool = n_clients * per_client + test_size;
    std::vector<std::uint32_t> labels(pool);
    std::vector<double> feats(pool * input_dim);
    for (std::size_t i = 0; i < pool; ++i) {
        double u = rng.uniform01();
        std::uint32_t c = 0;
        double acc = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            acc += priors[k];
            if (u < acc || k + 1 == classes) {
                c = static_cast<std::uint32_t>(k);
                break;
            }
        }
        labels[i] = c;
        for (std::size_t j = 0; j < input_dim; ++j) {
            feats[i * input_dim + j] = means[c * input_dim + j] + rng.gaussian();
        }
    }

    std::vector<std::size_t> order(pool);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    auto take = [&](std::size_t begin, std::size_t count) {
        Dataset d;
        d.num_features = input_dim;
        d.labels.reserve(count);
        d.features.reserve(count * input_dim);
        for (std::size_t i = begin; i < begin + count; ++i) {
            std::size_t src = order[i];
            d.labels.push_back(labels[src]);
            d.features.insert(d.features.end(), feats.begin() + src * input_dim,
                              feats.begin() + (src + 1) * input_dim);
        }
        return d;
    };

    FederatedData out;
    out.shards.reserve(n_clients);
    for (std::size_t c = 0; c < n_clients; ++c) out.shards.push_back(take(c * per_client, per_client));
    out.test = take(n_clients * per_client, test_size);
    return out;
}

namespace detail {

struct ParamView {
    const double* w1;
    const double* b1;
    const double* w2;
    const double* b2;
};

inline ParamView split_params(const ParamVector& theta, const ModelSpec& spec) {
    if (theta.size() != spec.param_count()) {
        throw std::invalid_argument("parameter vector does not match model spec");
    }
    ParamView v;
    v.w1 = theta.data();
    v.b1 = v.w1 + spec.input_dim * spec.hidden_dim;
    v.w2 = v.b1 + spec.hidden_dim;
    v.b2 = v.w2 + spec.hidden_dim * spec.classes;
    return v;
}

// Forward pass for one sample; returns the softmax class probabilities and
// fills the hidden pre-activations.
inline void forward(const ParamView& p, const ModelSpec& spec, std::span<const double> x,
                    std::vector<double>& hidden_pre, std::vector<double>& probs) {
    const std::size_t h = spec.hidden_dim;
    const std::size_t k = spec.classes;
    const std::size_t f = spec.input_dim;
    hidden_pre.resize(h);
    for (std::size_t i = 0; i < h; ++i) {
        double z = p.b1[i];
        const double* row = p.w1 + i * f;
        for (std::size_t j = 0; j < f; ++j) z += row[j] * x[j];
        hidden_pre[i] = z;
    }
    probs.resize(k);
    double max_logit = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
        double z = p.b2[c];
        const double* row = p.w2 + c * h;
        for (std::size_t i = 0; i < h; ++i) {
            double a = hidden_pre[i] > 0.0 ? hidden_pre[i] : 0.0;
            z += row[i] * a;
        }
        probs[c] = z;
        if (z > max_logit) max_logit = z;
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        probs[c] = std::exp(probs[c] - max_logit);
        denom += probs[c];
    }
    for (std::size_t c = 0; c < k; ++c) probs[c] /= denom;
}

}  // namespace detail

/// Mean cross-entropy loss and its exact analytic gradient over the listed
/// sample indices.
inline GradEval loss_and_grad_on(const ParamVector& theta, const Dataset& data,
                                 std::span<const std::size_t> indices,
                                 const ModelSpec& spec) {
    spec.validate();
    if (indices.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    if (data.num_features != spec.input_dim) {
        throw std::invalid_argument("loss_and_grad: feature width mismatch");
    }
    auto p = detail::split_params(theta, spec);
    const std::size_t f = spec.input_dim;
    const std::size_t h = spec.hidden_dim;
    const std::size_t k = spec.classes;

    GradEval out;
    out.grad.assign(theta.size(), 0.0);
    double* gw1 = out.grad.data();
    double* gb1 = gw1 + f * h;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + h * k;

    std::vector<double> hidden_pre, probs, dz2(k), da1(h);
    double loss_sum = 0.0;
    for (std::size_t idx : indices) {
        auto x = data.row(idx);
        std::uint32_t y = data.labels[idx];
        if (y >= k) throw std::invalid_argument("loss_and_grad: label out of range");
        detail::forward(p, spec, x, hidden_pre, probs);
        loss_sum += -std::log(probs[y] > 1e-300 ? probs[y] : 1e-300);

        for (std::size_t c = 0; c < k; ++c) dz2[c] = probs[c] - (c == y ? 1.0 : 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            double* grow = gw2 + c * h;
            for (std::size_t i = 0; i < h; ++i) {
                double a = hidden_pre[i] > 0.0 ? hidden_pre[i] : 0.0;
                grow[i] += dz2[c] * a;
            }
            gb2[c] += dz2[c];
        }
        for (std::size_t i = 0; i < h; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += p.w2[c * h + i] * dz2[c];
            da1[i] = hidden_pre[i] > 0.0 ? s : 0.0;
        }
        for (std::size_t i = 0; i < h; ++i) {
            double* grow = gw1 + i * f;
            for (std::size_t j = 0; j < f; ++j) grow[j] += da1[i] * x[j];
            gb1[i] += da1[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    out.loss = loss_sum * inv;
    for (double& g : out.grad) g *= inv;
    return out;
}

inline GradEval loss_and_grad(const ParamVector& theta, const Dataset& data,
                              const ModelSpec& spec) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    return loss_and_grad_on(theta, data, all, spec);
}

/// Seeded mini-batch SGD skeleton. step(theta, batch_indices) is applied to
/// consecutive shuffled chunks; a short final chunk is kept. Honest training
/// and the poisoned variants share this loop.
template <typename StepFn>
ParamVector sgd_loop(ParamVector theta, const Dataset& data, const ModelSpec& spec,
                     std::uint64_t seed, StepFn&& step) {
    spec.validate();
    if (data.size() == 0) throw std::invalid_argument("sgd_loop: empty dataset");
    Rng rng(mix_seed(seed, "sgd"));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < spec.local_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += spec.batch_size) {
            std::size_t len = std::min(spec.batch_size, order.size() - begin);
            step(theta, std::span<const std::size_t>(order.data() + begin, len));
        }
    }
    return theta;
}

/// Local SGD from theta0: theta <- theta - eta * grad per mini-batch.
inline ParamVector local_train(const ParamVector& theta0, const Dataset& data,
                               const ModelSpec& spec, std::uint64_t seed) {
    return sgd_loop(theta0, data, spec, seed,
                    [&](ParamVector& theta, std::span<const std::size_t> batch) {
                        GradEval e = loss_and_grad_on(theta, data, batch, spec);
                        add_scaled_in_place(theta, e.grad, -spec.learning_rate);
                    });
}

/// Fraction of argmax-correct predictions; ties resolve to the lowest class id.
inline double evaluate(const ParamVector& theta, const Dataset& test, const ModelSpec& spec) {
    spec.validate();
    if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    auto p = detail::split_params(theta, spec);
    std::vector<double> hidden_pre, probs;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        detail::forward(p, spec, test.row(i), hidden_pre, probs);
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.size(); ++c) {
            if (probs[c] > probs[best]) best = c;
        }
        if (best == test.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

/// Seeded random initial parameters, scaled for stable early training.
inline ParamVector initial_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, "init"));
    ParamVector theta(spec.param_count());
    double scale1 = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
    double scale2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim));
    std::size_t w1_end = spec.input_dim * spec.hidden_dim + spec.hidden_dim;
    std::size_t w2_end = w1_end + spec.hidden_dim * spec.classes;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (i < w1_end) {
            theta[i] = i < spec.input_dim * spec.hidden_dim ? scale1 * rng.gaussian() : 0.0;
        } else {
            theta[i] = i < w2_end ? scale2 * rng.gaussian() : 0.0;
        }
    }
    return theta;
}

}  // namespace dflsim
