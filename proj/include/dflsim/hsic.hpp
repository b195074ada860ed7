#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dflsim/param_math.hpp"

namespace dflsim {

/// Kernel used on both sides of the dependence estimate. bandwidth applies to
/// the rbf kind only; nullopt selects the median heuristic at call time.
struct KernelSpec {
    enum class Kind { linear, rbf };
    Kind kind = Kind::rbf;
    std::optional<double> bandwidth;  // rbf only; nullopt = median heuristic

    void validate() const {
        if (bandwidth && *bandwidth <= 0.0) {
            throw std::invalid_argument("KernelSpec: explicit bandwidth must be > 0");
        }
    }
};

/// Bounded FIFO of the most recent dependence values; oldest evicted first.
class HsicWindow {
public:
    explicit HsicWindow(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("HsicWindow: capacity must be >= 1");
    }

    void push(double v) {
        if (values_.size() == capacity_) values_.pop_front();
        values_.push_back(v);
    }

    std::size_t size() const { return values_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return values_.empty(); }
    std::vector<double> values() const { return {values_.begin(), values_.end()}; }

private:
    std::size_t capacity_;
    std::deque<double> values_;
};

namespace detail {

// Even-stride coordinate subsampling, starting at index 0. Stride is fixed so
// the retained set depends only on (d, cap), never on a seed.
inline std::vector<double> retained_coordinates(const ParamVector& v, std::size_t cap) {
    if (v.size() <= cap) return v;
    std::size_t stride = (v.size() + cap - 1) / cap;
    std::vector<double> out;
    out.reserve(v.size() / stride + 1);
    for (std::size_t i = 0; i < v.size(); i += stride) out.push_back(v[i]);
    return out;
}

// tr(FA H FB H) via double-centering of FA; both Grams are symmetric.
inline double centered_trace(const std::vector<double>& fa, const std::vector<double>& fb,
                             std::size_t n) {
    std::vector<double> row_mean(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += fa[i * n + j];
        row_mean[i] = s / static_cast<double>(n);
        total += s;
    }
    total /= static_cast<double>(n) * static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double centered = fa[i * n + j] - row_mean[i] - row_mean[j] + total;
            acc += centered * fb[i * n + j];
        }
    }
    return acc;
}

inline std::vector<double> rbf_gram(const std::vector<double>& x, double bandwidth) {
    const std::size_t n = x.size();
    std::vector<double> gram(n * n);
    const double denom = 2.0 * bandwidth * bandwidth;
    for (std::size_t i = 0; i < n; ++i) {
        gram[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double diff = x[i] - x[j];
            double k = std::exp(-(diff * diff) / denom);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    return gram;
}

}  // namespace detail

/// Median of pairwise absolute differences over the pooled retained
/// coordinates of both inputs; falls back to 1.0 when that median is zero.
inline double median_bandwidth(const ParamVector& a, const ParamVector& b,
                               std::size_t sample_cap = 2048) {
    std::vector<double> pooled = detail::retained_coordinates(a, sample_cap);
    {
        std::vector<double> rb = detail::retained_coordinates(b, sample_cap);
        pooled.insert(pooled.end(), rb.begin(), rb.end());
    }
    const std::size_t m = pooled.size();
    if (m < 2) return 1.0;
    std::vector<double> diffs;
    diffs.reserve(m * (m - 1) / 2);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            diffs.push_back(std::abs(pooled[i] - pooled[j]));
        }
    }
    double med = median_of(std::move(diffs));
    return med > 0.0 ? med : 1.0;
}

/// Empirical dependence between two parameter vectors whose coordinates are
/// treated as paired scalar samples: tr(FA H FB H) / (n-1)^2 with
/// H = I - (1/n) 11^T. Dimensions above sample_cap are reduced by even-stride
/// subsampling so the Gram path stays bounded and seed-independent. The
/// linear kernel uses the algebraically equal centered-product form.
inline double hsic(const ParamVector& a, const ParamVector& b, const KernelSpec& kernel,
                   std::size_t sample_cap = 2048) {
    if (a.size() != b.size()) throw std::invalid_argument("hsic: dimension mismatch");
    if (a.size() < 2) throw std::invalid_argument("hsic: need dimension >= 2");
    if (sample_cap < 2) throw std::invalid_argument("hsic: sample_cap must be >= 2");
    if (!all_finite(a) || !all_finite(b)) throw std::invalid_argument("hsic: non-finite entries");
    kernel.validate();

    std::vector<double> xs = detail::retained_coordinates(a, sample_cap);
    std::vector<double> ys = detail::retained_coordinates(b, sample_cap);
    const std::size_t n = xs.size();
    const double scale = static_cast<double>(n - 1) * static_cast<double>(n - 1);

    double value = 0.0;
    if (kernel.kind == KernelSpec::Kind::linear) {
        // F = x x^T, so tr(FA H FB H) = (x~ . y~)^2 with mean-centered copies.
        double mx = compensated_sum(xs) / static_cast<double>(n);
        double my = compensated_sum(ys) / static_cast<double>(n);
        double inner = 0.0;
        double comp = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double term = (xs[i] - mx) * (ys[i] - my);
            double t = inner + term;
            if (std::abs(inner) >= std::abs(term)) {
                comp += (inner - t) + term;
            } else {
                comp += (term - t) + inner;
            }
            inner = t;
        }
        inner += comp;
        value = (inner * inner) / scale;
    } else {
        double bw = kernel.bandwidth ? *kernel.bandwidth : median_bandwidth(a, b, sample_cap);
        std::vector<double> fa = detail::rbf_gram(xs, bw);
        std::vector<double> fb = detail::rbf_gram(ys, bw);
        value = detail::centered_trace(fa, fb, n) / scale;
    }
    return value < 0.0 ? 0.0 : value;
}

/// Dynamic approval threshold: min(window) - lambda * sigma, sigma being the
/// population standard deviation of the window. Not ready below 2 entries.
inline std::optional<double> threshold(const HsicWindow& window, double lambda) {
    if (window.size() < 2) return std::nullopt;
    std::vector<double> vs = window.values();
    double mean = compensated_sum(vs) / static_cast<double>(vs.size());
    double var = 0.0;
    for (double v : vs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vs.size());
    double lo = *std::min_element(vs.begin(), vs.end());
    return lo - lambda * std::sqrt(var);
}

}  // namespace dflsim
