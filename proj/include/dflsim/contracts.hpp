#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dflsim/hsic.hpp"
#include "dflsim/ledger.hpp"
#include "dflsim/param_math.hpp"

namespace dflsim {

class miners_exhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrustParams {
    std::size_t q = 15;              // score / hsic window length, rounds
    double alpha = 0.9;              // decay rate in (0, 1]
    // Threshold scale. The synthetic workload produces a far tighter honest
    // hsic band than benchmark datasets, so the cushion below min(h) is wider
    // than the protocol value 0.5; at 0.5 honest dips trigger rejection
    // cascades that ban the whole miner pool.
    double lambda = 3.0;
    std::uint64_t ban_duration = 15; // rounds a rejected aggregator sits out
    std::uint64_t warmup_rounds = 50;

    std::vector<std::string> validate() const {
        if (q < 1) throw std::invalid_argument("TrustParams: q must be >= 1");
        if (alpha <= 0.0 || alpha > 1.0) {
            throw std::invalid_argument("TrustParams: alpha must be in (0, 1]");
        }
        if (lambda < 0.0) throw std::invalid_argument("TrustParams: lambda must be >= 0");
        if (ban_duration < 1) {
            throw std::invalid_argument("TrustParams: ban_duration must be >= 1");
        }
        std::vector<std::string> warnings;
        if (warmup_rounds < q) {
            warnings.push_back("warmup_rounds < q: the hsic window will not be full "
                               "when auditing starts");
        }
        return warnings;
    }
};

struct NodeState {
    NodeId node_id = 0;
    double score = 0.0;
    std::optional<Round> banned_until;  // banned while t < banned_until
    bool is_miner = false;

    bool banned_at(Round t) const { return banned_until && t < *banned_until; }
};

/// Decayed drift score per candidate miner:
///   S_i = sum_{j=t-q+1..t} alpha^(t-j) * CosSim(update_i(j-1), aggregate(j)).
/// Terms whose update or aggregate is missing on-chain contribute 0, so nodes
/// whose uploads were dropped or absent score lower. Zero-norm vectors also
/// contribute 0 rather than erroring; attackers may upload zeros.
inline std::map<NodeId, double> pse_scores(const Chain& chain, const std::set<NodeId>& miners,
                                           Round t, const TrustParams& params) {
    if (t < 2) throw std::invalid_argument("pse_scores: needs t >= 2");
    std::map<NodeId, double> scores;
    Round j_begin = t >= params.q ? t - params.q + 1 : 1;
    for (NodeId miner : miners) {
        double s = 0.0;
        for (Round j = j_begin; j <= t; ++j) {
            auto agg = chain.aggregate_for_round(j);
            if (!agg) continue;
            const ParamVector* upd = chain.update_of(j - 1, miner);
            if (!upd) continue;
            double cos = 0.0;
            try {
                cos = cosine_similarity(*upd, *agg->params);
            } catch (const zero_norm_error&) {
                cos = 0.0;
            }
            s += std::pow(params.alpha, static_cast<double>(t - j)) * cos;
        }
        scores[miner] = s;
    }
    return scores;
}

/// Unbanned miner with the maximal score; ties break to the smallest id.
inline NodeId select_aggregator(const std::map<NodeId, double>& scores,
                                const std::map<NodeId, NodeState>& states, Round t) {
    bool found = false;
    NodeId best_id = 0;
    double best_score = 0.0;
    for (const auto& [id, score] : scores) {
        auto st = states.find(id);
        if (st != states.end() && st->second.banned_at(t)) continue;
        if (!found || score > best_score) {
            found = true;
            best_id = id;
            best_score = score;
        }
    }
    if (!found) throw miners_exhausted("select_aggregator: every candidate is banned");
    return best_id;
}

struct AuditVerdict {
    bool approved = false;
    double hsic_value = 0.0;
    std::optional<double> tau;  // absent during bootstrap
};

/// Post-aggregation audit: dependence between the median of this round's
/// updates and the proposed aggregate must reach the dynamic threshold.
/// Rounds inside the warm-up, or with fewer than two recorded values, approve
/// unconditionally to bootstrap the window.
inline AuditVerdict paa_audit(const Chain& chain, const ParamVector& proposed, Round t,
                              const TrustParams& params, const KernelSpec& kernel,
                              std::size_t sample_cap = 2048) {
    auto updates = chain.updates_for_round(t);
    if (updates.empty()) {
        throw std::invalid_argument("paa_audit: no updates on-chain for this round");
    }
    std::vector<ParamVector> vs;
    vs.reserve(updates.size());
    for (auto& [id, params_vec] : updates) vs.push_back(std::move(params_vec));
    ParamVector median = elementwise_median(vs);

    AuditVerdict verdict;
    verdict.hsic_value = hsic(median, proposed, kernel, sample_cap);
    if (t <= params.warmup_rounds) {
        verdict.approved = true;
        return verdict;
    }
    HsicWindow window = chain.recent_hsic(params.q);
    std::optional<double> tau = threshold(window, params.lambda);
    if (!tau) {
        verdict.approved = true;
        return verdict;
    }
    verdict.tau = tau;
    verdict.approved = verdict.hsic_value >= *tau;
    return verdict;
}

/// Ban the rejected aggregator until t + ban_duration. Returns the updated
/// states; the caller re-runs selection, which now skips the banned node.
inline std::map<NodeId, NodeState> on_reject(std::map<NodeId, NodeState> states, NodeId c_a,
                                             Round t, const TrustParams& params) {
    NodeState& st = states[c_a];
    st.node_id = c_a;
    st.banned_until = t + params.ban_duration;
    return states;
}

/// Push an approved aggregate carrying the audited hsic value (and the score
/// snapshot), so future recent_hsic windows see exactly the audited value.
inline void record_hsic(Chain& chain, Round t, double hsic_value, ParamVector aggregate_params,
                        NodeId author, std::vector<std::pair<NodeId, double>> scores = {}) {
    chain.append_aggregate(t, author, std::move(aggregate_params), hsic_value,
                           std::move(scores));
}

}  // namespace dflsim
