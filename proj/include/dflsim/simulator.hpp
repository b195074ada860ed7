#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dflsim/aggregation.hpp"
#include "dflsim/attacks.hpp"
#include "dflsim/config.hpp"
#include "dflsim/contracts.hpp"
#include "dflsim/ledger.hpp"
#include "dflsim/learning.hpp"

namespace dflsim {

/// One simulated round as observed from outside: the round's first selection
/// and first audit. retries counts the extra selections forced by rejections.
struct RoundRecord {
    Round round = 0;
    std::optional<NodeId> selected_aggregator;  // absent if selection exhausted
    bool aggregator_was_malicious = false;      // first selection is a Byzantine node
    std::optional<bool> approved;               // first audit verdict; absent when unaudited
    std::optional<double> hsic_value;
    std::optional<double> tau;
    std::size_t retries = 0;
    double accuracy = 0.0;
    std::vector<std::pair<NodeId, double>> miner_scores;
};

struct MetricsSummary {
    double final_accuracy = 0.0;
    double mean_accuracy = 0.0;
    std::optional<double> pse_precision;
    std::optional<double> paa_precision;
    std::size_t rejection_count = 0;
    std::size_t ban_events = 0;
};

struct RunResult {
    std::vector<RoundRecord> records;
    MetricsSummary summary;
    Chain chain;
    // Ground truth per round: the first-selected aggregator pushed a poisoned
    // aggregate. Drives the audit-precision metric.
    std::vector<char> poisoned_push;
};

/// Share of post-warmup rounds whose first-selected aggregator was benign.
inline std::optional<double> compute_pse_precision(const std::vector<RoundRecord>& records,
                                                   Round warmup_rounds) {
    std::size_t total = 0;
    std::size_t benign = 0;
    for (const auto& r : records) {
        if (r.round <= warmup_rounds) continue;
        ++total;
        if (r.selected_aggregator && !r.aggregator_was_malicious) ++benign;
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(benign) / static_cast<double>(total);
}

/// Share of post-warmup audited rounds decided correctly: poisoned pushes
/// rejected, honest pushes approved.
inline std::optional<double> compute_paa_precision(const std::vector<RoundRecord>& records,
                                                   const std::vector<char>& poisoned_push,
                                                   Round warmup_rounds) {
    std::size_t total = 0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.approved || r.round <= warmup_rounds) continue;
        ++total;
        bool poisoned = i < poisoned_push.size() && poisoned_push[i];
        if (poisoned ? !*r.approved : *r.approved) ++correct;
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(total);
}

namespace detail {

struct ClientPool {
    const RunConfig& cfg;
    const FederatedData& fed;
    const std::set<NodeId>& byzantine;
    std::map<NodeId, Dataset> flipped;  // lazily built per Byzantine node

    const Dataset& flipped_shard(NodeId i) {
        auto it = flipped.find(i);
        if (it == flipped.end()) {
            it = flipped
                     .emplace(i, flip_labels(fed.shards[i], cfg.attack.gamma,
                                             cfg.model.classes,
                                             mix_seed(cfg.seed, "flipdata", i)))
                     .first;
        }
        return it->second;
    }
};

inline bool attack_active(const RunConfig& cfg, Round t) {
    return cfg.attack.kind != AttackKind::none && t > cfg.trust.warmup_rounds;
}

inline ParamVector client_update(ClientPool& pool, NodeId i, Round t,
                                 const ParamVector& global) {
    const RunConfig& cfg = pool.cfg;
    std::uint64_t seed = mix_seed(cfg.seed, "client", i, t);
    bool poisons = pool.byzantine.count(i) && attack_active(cfg, t) &&
                   targets_clients(cfg.attack.surface);
    if (!poisons) return local_train(global, pool.fed.shards[i], cfg.model, seed);
    switch (cfg.attack.kind) {
        case AttackKind::label_flip:
            return local_train(global, pool.flipped_shard(i), cfg.model, seed);
        case AttackKind::sign_flip:
            return local_train_sign_flip(global, pool.fed.shards[i], cfg.model, seed,
                                         cfg.attack.literal_negation);
        case AttackKind::grad_manip:
            return gradient_manipulation(
                local_train(global, pool.fed.shards[i], cfg.model, seed),
                cfg.attack.noise_mean, cfg.attack.noise_std,
                mix_seed(cfg.seed, "gm-client", i, t));
        case AttackKind::tom:
            return local_train_tom(global, pool.fed.shards[i], cfg.model, seed,
                                   cfg.attack.zeta);
        case AttackKind::none: break;
    }
    return local_train(global, pool.fed.shards[i], cfg.model, seed);
}

// A malicious aggregator bypasses the robust stage: it pushes its own poisoned
// derivation of the honest aggregate instead of the aggregate itself. Noise
// injection perturbs the aggregate directly; the training-based attacks start
// their corrupted local run from it.
inline ParamVector poisoned_aggregate(ClientPool& pool, NodeId author, Round t,
                                      const ParamVector& honest) {
    const RunConfig& cfg = pool.cfg;
    std::uint64_t seed = mix_seed(cfg.seed, "agg-attack", author, t);
    switch (cfg.attack.kind) {
        case AttackKind::grad_manip:
            return gradient_manipulation(honest, cfg.attack.noise_mean, cfg.attack.noise_std,
                                         seed);
        case AttackKind::label_flip:
            return local_train(honest, pool.flipped_shard(author), cfg.model, seed);
        case AttackKind::sign_flip:
            return local_train_sign_flip(honest, pool.fed.shards[author], cfg.model, seed,
                                         cfg.attack.literal_negation);
        case AttackKind::tom:
            return local_train_tom(honest, pool.fed.shards[author], cfg.model, seed,
                                   cfg.attack.zeta);
        case AttackKind::none: break;
    }
    return honest;
}

inline void parallel_for(std::size_t n, std::size_t threads, auto&& body) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> workers;
    std::size_t used = std::min(threads, n);
    std::size_t chunk = (n + used - 1) / used;
    std::vector<std::exception_ptr> errors(used);
    for (std::size_t w = 0; w < used; ++w) {
        workers.emplace_back([&, w] {
            try {
                std::size_t begin = w * chunk;
                std::size_t end = std::min(n, begin + chunk);
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : workers) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

/// Execute one full simulation: per round, clients train from the current
/// global model and upload; an aggregator is chosen by mode (fixed honest /
/// trust-scored / uniform random); the robust aggregate is pushed, audited
/// when the mode audits, and evaluated. Fully deterministic given the config.
inline RunResult run(const RunConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.n_clients;
    const Round T = cfg.rounds;

    FederatedData fed = make_federated_data(cfg.seed, n, cfg.data.per_client_samples,
                                            cfg.model.input_dim, cfg.model.classes,
                                            cfg.data.imbalance, cfg.data.class_sep,
                                            cfg.data.test_samples);
    std::set<NodeId> byzantine;
    if (cfg.attack.kind != AttackKind::none) {
        byzantine = assign_byzantine(n, cfg.attack.byzantine_ratio, cfg.seed);
    }
    std::set<NodeId> miners;
    for (std::size_t i = 0; i < cfg.k_miners; ++i) miners.insert(static_cast<NodeId>(i));

    std::map<NodeId, NodeState> states;
    for (NodeId m : miners) {
        NodeState st;
        st.node_id = m;
        st.is_miner = true;
        states[m] = st;
    }

    // Benign mode pins the lowest-id non-Byzantine node as aggregator.
    NodeId benign_aggregator = 0;
    while (byzantine.count(benign_aggregator) && benign_aggregator + 1 < n) {
        ++benign_aggregator;
    }

    // Block 0 is the bootstrap state shared by every mode; its author is
    // fixed so attack configuration cannot perturb the pre-attack chain.
    Chain chain{KeyRegistry(cfg.seed)};
    ParamVector global = initial_params(cfg.model, cfg.seed);
    chain.append_aggregate(0, 0, global);

    detail::ClientPool pool{cfg, fed, byzantine, {}};
    std::size_t threads = cfg.threads ? cfg.threads
                                      : std::max<std::size_t>(1, std::thread::hardware_concurrency());

    RunResult result{.records = {}, .summary = {}, .chain = std::move(chain), .poisoned_push = {}};
    result.records.reserve(T);
    double last_accuracy = 0.0;
    bool have_accuracy = false;

    for (Round t = 1; t <= T; ++t) {
        std::vector<ParamVector> updates(n);
        detail::parallel_for(
            n, threads, [&](std::size_t i) {
                updates[i] = detail::client_update(pool, static_cast<NodeId>(i), t, global);
            });
        for (std::size_t i = 0; i < n; ++i) {
            result.chain.append_update(t, static_cast<NodeId>(i), updates[i]);
        }
        ParamVector honest_agg = aggregate(updates, cfg.aggregator);

        RoundRecord rec;
        rec.round = t;
        bool first_push_poisoned = false;

        auto malicious_aggregator = [&](NodeId id) {
            return byzantine.count(id) && detail::attack_active(cfg, t) &&
                   targets_aggregator(cfg.attack.surface);
        };
        auto finish_round = [&](const ParamVector& pushed) {
            global = pushed;
            last_accuracy = evaluate(global, fed.test, cfg.model);
            have_accuracy = true;
            rec.accuracy = last_accuracy;
        };
        auto carry_forward = [&] {
            if (!have_accuracy) {
                last_accuracy = evaluate(global, fed.test, cfg.model);
                have_accuracy = true;
            }
            rec.accuracy = last_accuracy;
        };

        if (cfg.mode == Mode::benign) {
            NodeId author = benign_aggregator;
            rec.selected_aggregator = author;
            rec.aggregator_was_malicious = byzantine.count(author) > 0;
            result.chain.append_aggregate(t, author, honest_agg);
            finish_round(honest_agg);
        } else if (cfg.mode == Mode::unprotected) {
            Rng pick(mix_seed(cfg.seed, "uniform-agg", t));
            auto it = miners.begin();
            std::advance(it, static_cast<std::ptrdiff_t>(pick.uniform_below(miners.size())));
            NodeId author = *it;
            rec.selected_aggregator = author;
            rec.aggregator_was_malicious = byzantine.count(author) > 0;
            ParamVector push = honest_agg;
            if (malicious_aggregator(author)) {
                push = detail::poisoned_aggregate(pool, author, t, honest_agg);
                first_push_poisoned = true;
            }
            result.chain.append_aggregate(t, author, push);
            finish_round(push);
        } else {
            // Trust-scored selection, audit, and recording.
            std::map<NodeId, double> scores;
            if (t >= 2) scores = pse_scores(result.chain, miners, t, cfg.trust);
            else for (NodeId m : miners) scores[m] = 0.0;
            bool no_history = std::all_of(scores.begin(), scores.end(),
                                          [](const auto& kv) { return kv.second == 0.0; });
            for (const auto& [id, s] : scores) rec.miner_scores.emplace_back(id, s);

            Rng fallback(mix_seed(cfg.seed, "fallback-select", t));
            auto pick_aggregator = [&]() -> std::optional<NodeId> {
                if (!no_history) {
                    try {
                        return select_aggregator(scores, states, t);
                    } catch (const miners_exhausted&) {
                        return std::nullopt;
                    }
                }
                std::vector<NodeId> unbanned;
                for (NodeId m : miners) {
                    if (!states[m].banned_at(t)) unbanned.push_back(m);
                }
                if (unbanned.empty()) return std::nullopt;
                return unbanned[fallback.uniform_below(unbanned.size())];
            };

            bool recorded_first = false;
            bool done = false;
            std::size_t attempts = 0;
            const std::size_t max_attempts = cfg.k_miners;  // first + (k-1) retries
            while (!done && attempts < max_attempts) {
                std::optional<NodeId> author = pick_aggregator();
                if (!author) break;
                ++attempts;
                ParamVector push = honest_agg;
                bool poisoned = false;
                if (malicious_aggregator(*author)) {
                    push = detail::poisoned_aggregate(pool, *author, t, honest_agg);
                    poisoned = true;
                }
                AuditVerdict verdict =
                    paa_audit(result.chain, push, t, cfg.trust, cfg.kernel, cfg.sample_cap);
                if (!recorded_first) {
                    recorded_first = true;
                    rec.selected_aggregator = *author;
                    rec.aggregator_was_malicious = byzantine.count(*author) > 0;
                    rec.approved = verdict.approved;
                    rec.hsic_value = verdict.hsic_value;
                    rec.tau = verdict.tau;
                    first_push_poisoned = poisoned;
                }
                if (verdict.approved) {
                    record_hsic(result.chain, t, verdict.hsic_value, push, *author,
                                rec.miner_scores);
                    finish_round(push);
                    done = true;
                } else {
                    ++result.summary.rejection_count;
                    states = on_reject(std::move(states), *author, t, cfg.trust);
                    ++result.summary.ban_events;
                }
            }
            if (!done) carry_forward();  // exhausted: previous model stands
            rec.retries = attempts > 0 ? attempts - 1 : 0;
        }

        result.records.push_back(std::move(rec));
        result.poisoned_push.push_back(first_push_poisoned ? 1 : 0);
    }

    result.summary.final_accuracy = result.records.back().accuracy;
    double acc_sum = 0.0;
    for (const auto& r : result.records) acc_sum += r.accuracy;
    result.summary.mean_accuracy = acc_sum / static_cast<double>(result.records.size());
    if (cfg.mode == Mode::trustchain) {
        result.summary.pse_precision =
            compute_pse_precision(result.records, cfg.trust.warmup_rounds);
        result.summary.paa_precision = compute_paa_precision(
            result.records, result.poisoned_push, cfg.trust.warmup_rounds);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Output writers. Doubles are printed with %.17g so reruns are byte-identical.

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_rounds_csv(const std::vector<RoundRecord>& records, std::ostream& os) {
    os << "round,selected_aggregator_id,aggregator_was_malicious,verdict,hsic_value,tau,"
          "retries,accuracy,miner_scores\n";
    for (const auto& r : records) {
        os << r.round << ',';
        if (r.selected_aggregator) os << *r.selected_aggregator;
        os << ',' << (r.aggregator_was_malicious ? 1 : 0) << ',';
        if (r.approved) os << (*r.approved ? "approved" : "rejected");
        os << ',';
        if (r.hsic_value) os << format_double(*r.hsic_value);
        os << ',';
        if (r.tau) os << format_double(*r.tau);
        os << ',' << r.retries << ',' << format_double(r.accuracy) << ',';
        for (std::size_t i = 0; i < r.miner_scores.size(); ++i) {
            if (i) os << ';';
            os << r.miner_scores[i].first << ':' << format_double(r.miner_scores[i].second);
        }
        os << '\n';
    }
}

inline nlohmann::json summary_to_json(const MetricsSummary& s, const RunConfig& cfg) {
    nlohmann::json j;
    j["final_accuracy"] = s.final_accuracy;
    j["mean_accuracy"] = s.mean_accuracy;
    j["pse_precision"] = s.pse_precision ? nlohmann::json(*s.pse_precision)
                                         : nlohmann::json(nullptr);
    j["paa_precision"] = s.paa_precision ? nlohmann::json(*s.paa_precision)
                                         : nlohmann::json(nullptr);
    j["rejection_count"] = s.rejection_count;
    j["ban_events"] = s.ban_events;
    j["config"] = config_to_json(cfg);
    return j;
}

// ---------------------------------------------------------------------------
// Parameter sweep: cartesian product of (attack, ratio) cells x modes, with
// seeds derived per (cell, repetition) and shared across modes so mode
// comparisons are paired.

struct SweepRow {
    std::string attack;
    double ratio = 0.0;
    std::string mode;
    std::size_t rep = 0;
    bool failed = false;
    double final_accuracy = 0.0;
    std::optional<double> pse_precision;
    std::optional<double> paa_precision;
};

inline std::vector<SweepRow> sweep(const RunConfig& base, const std::vector<double>& ratios,
                                   const std::vector<AttackKind>& attacks,
                                   const std::vector<Mode>& modes, std::size_t reps,
                                   std::ostream* progress = nullptr) {
    std::vector<SweepRow> rows;
    std::size_t cell = 0;
    for (AttackKind attack : attacks) {
        for (double ratio : ratios) {
            for (std::size_t rep = 0; rep < reps; ++rep) {
                std::uint64_t seed = mix_seed(base.seed, "sweep", cell, rep);
                for (Mode mode : modes) {
                    RunConfig cfg = base;
                    cfg.seed = seed;
                    cfg.mode = mode;
                    cfg.attack.kind = attack;
                    cfg.attack.byzantine_ratio = ratio;
                    SweepRow row;
                    row.attack = attack_name(attack);
                    row.ratio = ratio;
                    row.mode = mode_name(mode);
                    row.rep = rep;
                    try {
                        RunResult res = run(cfg);
                        row.final_accuracy = res.summary.final_accuracy;
                        row.pse_precision = res.summary.pse_precision;
                        row.paa_precision = res.summary.paa_precision;
                    } catch (const std::exception& e) {
                        row.failed = true;
                        if (progress) {
                            *progress << "sweep cell failed (" << row.attack << ", " << ratio
                                      << ", " << row.mode << ", rep " << rep
                                      << "): " << e.what() << '\n';
                        }
                    }
                    rows.push_back(std::move(row));
                    if (progress) {
                        *progress << "completed " << rows.size() << " runs\r" << std::flush;
                    }
                }
            }
            ++cell;
        }
    }
    if (progress && !rows.empty()) *progress << '\n';
    return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
    os << "attack,ratio,mode,rep,final_accuracy,pse_precision,paa_precision\n";
    for (const auto& r : rows) {
        os << r.attack << ',' << format_double(r.ratio) << ',' << r.mode << ',' << r.rep << ',';
        if (!r.failed) os << format_double(r.final_accuracy);
        os << ',';
        if (r.pse_precision) os << format_double(*r.pse_precision);
        os << ',';
        if (r.paa_precision) os << format_double(*r.paa_precision);
        os << '\n';
    }
}

}  // namespace dflsim
