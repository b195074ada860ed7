#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "dflsim/learning.hpp"
#include "dflsim/param_math.hpp"
#include "dflsim/rng.hpp"

namespace dflsim {

enum class AttackKind { none, label_flip, sign_flip, grad_manip, tom };

enum class AttackSurface { client_side, aggregator_side, both };

inline bool targets_clients(AttackSurface s) {
    return s == AttackSurface::client_side || s == AttackSurface::both;
}
inline bool targets_aggregator(AttackSurface s) {
    return s == AttackSurface::aggregator_side || s == AttackSurface::both;
}

struct AttackConfig {
    AttackKind kind = AttackKind::none;
    double gamma = 1.0;          // label flip probability
    double noise_mean = 0.1;     // grad_manip
    double noise_std = 0.1;      // grad_manip
    double zeta = 0.1;           // tom penalty scale
    double byzantine_ratio = 0.0;
    AttackSurface surface = AttackSurface::both;
    bool literal_negation = false;  // sign_flip: train with +eta*grad instead

    void validate() const {
        if (gamma < 0.0 || gamma > 1.0) {
            throw std::invalid_argument("AttackConfig: gamma must be in [0, 1]");
        }
        if (noise_std < 0.0) throw std::invalid_argument("AttackConfig: noise_std must be >= 0");
        if (zeta < 0.0) throw std::invalid_argument("AttackConfig: zeta must be >= 0");
        if (byzantine_ratio < 0.0 || byzantine_ratio > 1.0) {
            throw std::invalid_argument("AttackConfig: byzantine_ratio must be in [0, 1]");
        }
    }
};

/// Each label independently, with probability gamma, becomes a uniformly
/// random different class. Features are untouched.
inline Dataset flip_labels(const Dataset& data, double gamma, std::size_t classes,
                           std::uint64_t seed) {
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("flip_labels: bad gamma");
    if (classes < 2) throw std::invalid_argument("flip_labels: need at least 2 classes");
    Dataset out = data;
    Rng rng(mix_seed(seed, "labelflip"));
    for (auto& y : out.labels) {
        if (rng.uniform01() < gamma) {
            std::uint32_t other =
                static_cast<std::uint32_t>(rng.uniform_below(classes - 1));
            if (other >= y) ++other;
            y = other;
        }
    }
    return out;
}

/// One poisoned descent step: theta - eta * sign(grad), with sign(0) = 0.
inline ParamVector sign_flip_update(const ParamVector& theta, const ParamVector& grad,
                                    double eta) {
    if (theta.size() != grad.size()) {
        throw std::invalid_argument("sign_flip_update: dimension mismatch");
    }
    ParamVector out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        out[i] = theta[i] - eta * s;
    }
    return out;
}

/// Additive Gaussian noise on a parameter vector, i.i.d. per coordinate.
inline ParamVector gradient_manipulation(const ParamVector& theta_bar, double mean,
                                         double stddev, std::uint64_t seed) {
    if (stddev < 0.0) throw std::invalid_argument("gradient_manipulation: stddev must be >= 0");
    ParamVector out = theta_bar;
    Rng rng(mix_seed(seed, "gm"));
    for (double& v : out) v += rng.gaussian(mean, stddev);
    return out;
}

/// Corrupted objective L + 4*zeta*|grad L|^2 for any differentiable base
/// loss. The penalty gradient is taken by coordinate-wise central differences
/// of g(theta) = |grad L(theta)|^2; grad_fn must return the base gradient.
template <typename GradFn>
GradEval tom_corrupt(GradFn&& grad_fn, const ParamVector& theta, double zeta,
                     double fd_step = 1e-4) {
    if (zeta < 0.0) throw std::invalid_argument("tom_corrupt: zeta must be >= 0");
    GradEval base = grad_fn(theta);
    double grad_norm_sq = dot(base.grad, base.grad);

    GradEval out;
    out.loss = base.loss + 4.0 * zeta * grad_norm_sq;
    out.grad = base.grad;
    if (zeta == 0.0) return out;

    ParamVector probe = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + fd_step;
        GradEval plus = grad_fn(probe);
        probe[j] = theta[j] - fd_step;
        GradEval minus = grad_fn(probe);
        probe[j] = theta[j];
        double d = (dot(plus.grad, plus.grad) - dot(minus.grad, minus.grad)) / (2.0 * fd_step);
        out.grad[j] += 4.0 * zeta * d;
    }
    return out;
}

/// Corrupted loss/gradient over a full dataset batch.
inline GradEval tom_loss_and_grad(const ParamVector& theta, const Dataset& batch,
                                  const ModelSpec& spec, double zeta) {
    return tom_corrupt(
        [&](const ParamVector& t) { return loss_and_grad(t, batch, spec); }, theta, zeta);
}

/// Seeded choice of floor(ratio * n) distinct node ids, fixed per run.
inline std::set<std::uint32_t> assign_byzantine(std::size_t n, double ratio,
                                                std::uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("assign_byzantine: bad ratio");
    std::size_t count = static_cast<std::size_t>(ratio * static_cast<double>(n));
    std::vector<std::uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    Rng rng(mix_seed(seed, "byzantine"));
    std::set<std::uint32_t> chosen;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(n - i));
        std::swap(ids[i], ids[j]);
        chosen.insert(ids[i]);
    }
    return chosen;
}

/// Local training where every honest step is replaced by the signed step
/// (or, with literal_negation, by ascent along the gradient).
inline ParamVector local_train_sign_flip(const ParamVector& theta0, const Dataset& data,
                                         const ModelSpec& spec, std::uint64_t seed,
                                         bool literal_negation = false) {
    return sgd_loop(theta0, data, spec, seed,
                    [&](ParamVector& theta, std::span<const std::size_t> batch) {
                        GradEval e = loss_and_grad_on(theta, data, batch, spec);
                        if (literal_negation) {
                            add_scaled_in_place(theta, e.grad, spec.learning_rate);
                        } else {
                            theta = sign_flip_update(theta, e.grad, spec.learning_rate);
                        }
                    });
}

/// Local training against the corrupted objective.
inline ParamVector local_train_tom(const ParamVector& theta0, const Dataset& data,
                                   const ModelSpec& spec, std::uint64_t seed, double zeta) {
    return sgd_loop(theta0, data, spec, seed,
                    [&](ParamVector& theta, std::span<const std::size_t> batch) {
                        GradEval e = tom_corrupt(
                            [&](const ParamVector& t) {
                                return loss_and_grad_on(t, data, batch, spec);
                            },
                            theta, zeta);
                        add_scaled_in_place(theta, e.grad, -spec.learning_rate);
                    });
}

}  // namespace dflsim
