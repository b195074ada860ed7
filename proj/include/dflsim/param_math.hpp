#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dflsim {

/// Flat vector of model parameters. Every update, aggregate and attack in a
/// run shares one fixed dimension; entries admitted to the ledger are finite.
using ParamVector = std::vector<double>;

/// Thrown by cosine_similarity when one side has no direction. `which` is 0
/// for the first argument, 1 for the second, so callers can decide a fallback.
class zero_norm_error : public std::domain_error {
public:
    explicit zero_norm_error(int which)
        : std::domain_error("cosine similarity undefined: argument " +
                            std::to_string(which) + " has zero norm"),
          which_(which) {}
    int which() const noexcept { return which_; }

private:
    int which_;
};

inline bool all_finite(const ParamVector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Neumaier-compensated sum. Fixed accumulation order keeps results
/// reproducible no matter how callers batch their work.
inline double compensated_sum(const double* data, std::size_t n) {
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double t = sum + data[i];
        if (std::abs(sum) >= std::abs(data[i])) {
            comp += (sum - t) + data[i];
        } else {
            comp += (data[i] - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

inline double compensated_sum(const std::vector<double>& v) {
    return compensated_sum(v.data(), v.size());
}

inline double dot(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot: dimension mismatch");
    }
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double x = a[i] * b[i];
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

inline double l2_norm(const ParamVector& a) {
    double sum = 0.0;
    double comp = 0.0;
    for (double x : a) {
        double sq = x * x;
        double t = sum + sq;
        if (sum >= sq) {
            comp += (sum - t) + sq;
        } else {
            comp += (sq - t) + sum;
        }
        sum = t;
    }
    return std::sqrt(sum + comp);
}

/// (a.b)/(|a||b|), clamped to [-1, 1] against rounding overshoot.
/// Throws zero_norm_error if either argument has no direction.
inline double cosine_similarity(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    }
    double na = l2_norm(a);
    if (na == 0.0) throw zero_norm_error(0);
    double nb = l2_norm(b);
    if (nb == 0.0) throw zero_norm_error(1);
    double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

/// Per-coordinate median; even counts average the two middle values.
inline ParamVector elementwise_median(const std::vector<ParamVector>& vs) {
    if (vs.empty()) {
        throw std::invalid_argument("elementwise_median: empty input");
    }
    const std::size_t d = vs[0].size();
    for (const auto& v : vs) {
        if (v.size() != d) {
            throw std::invalid_argument("elementwise_median: dimension mismatch");
        }
    }
    const std::size_t r = vs.size();
    ParamVector out(d);
    std::vector<double> column(r);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < r; ++i) column[i] = vs[i][j];
        auto mid = column.begin() + static_cast<std::ptrdiff_t>(r / 2);
        std::nth_element(column.begin(), mid, column.end());
        if (r % 2 == 1) {
            out[j] = *mid;
        } else {
            double hi = *mid;
            double lo = *std::max_element(column.begin(), mid);
            out[j] = lo + (hi - lo) / 2.0;
        }
    }
    return out;
}

// Small helpers shared by training and attacks.

inline void add_scaled_in_place(ParamVector& dst, const ParamVector& src, double scale) {
    if (dst.size() != src.size()) {
        throw std::invalid_argument("add_scaled_in_place: dimension mismatch");
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

inline double median_of(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median_of: empty input");
    auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
    std::nth_element(xs.begin(), mid, xs.end());
    if (xs.size() % 2 == 1) return *mid;
    double hi = *mid;
    double lo = *std::max_element(xs.begin(), mid);
    return lo + (hi - lo) / 2.0;
}

}  // namespace dflsim
