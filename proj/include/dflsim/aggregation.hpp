#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "dflsim/param_math.hpp"

namespace dflsim {

struct AggregatorSpec {
    enum class Kind { trimmed_mean, mean, coordinate_median };
    Kind kind = Kind::trimmed_mean;
    double trim_fraction = 0.2;  // per side; floor(beta * r) values trimmed

    void validate() const {
        if (trim_fraction < 0.0 || trim_fraction >= 0.5) {
            throw std::invalid_argument("AggregatorSpec: trim_fraction must be in [0, 0.5)");
        }
    }
};

/// Coordinate-wise robust aggregation of one round's updates. TrimmedMean
/// sorts each coordinate, drops floor(beta*r) values at both ends and
/// averages the rest; mean is the beta=0 case.
inline ParamVector aggregate(const std::vector<ParamVector>& updates,
                             const AggregatorSpec& spec) {
    spec.validate();
    if (updates.empty()) throw std::invalid_argument("aggregate: empty input");
    const std::size_t d = updates[0].size();
    for (const auto& u : updates) {
        if (u.size() != d) throw std::invalid_argument("aggregate: dimension mismatch");
    }
    if (spec.kind == AggregatorSpec::Kind::coordinate_median) {
        return elementwise_median(updates);
    }
    const std::size_t r = updates.size();
    const std::size_t trim = spec.kind == AggregatorSpec::Kind::mean
                                 ? 0
                                 : static_cast<std::size_t>(spec.trim_fraction *
                                                            static_cast<double>(r));
    if (2 * trim >= r) throw std::invalid_argument("aggregate: trim leaves no values");

    ParamVector out(d);
    std::vector<double> column(r);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < r; ++i) column[i] = updates[i][j];
        std::sort(column.begin(), column.end());
        out[j] = compensated_sum(column.data() + trim, r - 2 * trim) /
                 static_cast<double>(r - 2 * trim);
    }
    return out;
}

}  // namespace dflsim
