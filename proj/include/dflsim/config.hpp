#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dflsim/aggregation.hpp"
#include "dflsim/attacks.hpp"
#include "dflsim/contracts.hpp"
#include "dflsim/hsic.hpp"
#include "dflsim/learning.hpp"

namespace dflsim {

class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Mode { benign, trustchain, unprotected };

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::benign: return "benign";
        case Mode::trustchain: return "trustchain";
        case Mode::unprotected: return "unprotected";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "benign") return Mode::benign;
    if (s == "trustchain") return Mode::trustchain;
    if (s == "unprotected") return Mode::unprotected;
    throw config_error("unknown mode: " + s);
}

inline std::string attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::none: return "none";
        case AttackKind::label_flip: return "labelflip";
        case AttackKind::sign_flip: return "signflip";
        case AttackKind::grad_manip: return "gm";
        case AttackKind::tom: return "tom";
    }
    return "?";
}

inline AttackKind parse_attack(const std::string& s) {
    if (s == "none") return AttackKind::none;
    if (s == "labelflip") return AttackKind::label_flip;
    if (s == "signflip") return AttackKind::sign_flip;
    if (s == "gm") return AttackKind::grad_manip;
    if (s == "tom") return AttackKind::tom;
    throw config_error("unknown attack: " + s);
}

inline std::string surface_name(AttackSurface s) {
    switch (s) {
        case AttackSurface::client_side: return "client";
        case AttackSurface::aggregator_side: return "aggregator";
        case AttackSurface::both: return "both";
    }
    return "?";
}

inline AttackSurface parse_surface(const std::string& s) {
    if (s == "client") return AttackSurface::client_side;
    if (s == "aggregator") return AttackSurface::aggregator_side;
    if (s == "both") return AttackSurface::both;
    throw config_error("unknown surface: " + s);
}

inline std::string aggregator_name(AggregatorSpec::Kind k) {
    switch (k) {
        case AggregatorSpec::Kind::trimmed_mean: return "trimmed_mean";
        case AggregatorSpec::Kind::mean: return "mean";
        case AggregatorSpec::Kind::coordinate_median: return "median";
    }
    return "?";
}

inline AggregatorSpec::Kind parse_aggregator(const std::string& s) {
    if (s == "trimmed_mean") return AggregatorSpec::Kind::trimmed_mean;
    if (s == "mean") return AggregatorSpec::Kind::mean;
    if (s == "median") return AggregatorSpec::Kind::coordinate_median;
    throw config_error("unknown aggregator: " + s);
}

inline std::string kernel_name(KernelSpec::Kind k) {
    return k == KernelSpec::Kind::linear ? "linear" : "rbf";
}

inline KernelSpec::Kind parse_kernel(const std::string& s) {
    if (s == "linear") return KernelSpec::Kind::linear;
    if (s == "rbf") return KernelSpec::Kind::rbf;
    throw config_error("unknown kernel: " + s);
}

/// Synthetic-data shape shared by all clients.
struct DataParams {
    std::size_t per_client_samples = 50;
    std::size_t test_samples = 1000;
    // Calibrated so the honest run plateaus near 0.87, leaving headroom for
    // attack damage to register.
    double class_sep = 0.5;
    double imbalance = 0.4;
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::uint64_t rounds = 200;
    std::size_t n_clients = 100;
    std::size_t k_miners = 20;
    Mode mode = Mode::trustchain;
    TrustParams trust;
    ModelSpec model;
    DataParams data;
    AttackConfig attack;
    AggregatorSpec aggregator;
    KernelSpec kernel;
    std::size_t sample_cap = 2048;
    std::size_t threads = 0;  // 0 = hardware concurrency

    std::vector<std::string> validate() const {
        if (n_clients == 0) throw config_error("n_clients must be >= 1");
        if (k_miners == 0 || k_miners > n_clients) {
            throw config_error("k_miners must be in [1, n_clients]");
        }
        if (rounds < trust.warmup_rounds) {
            throw config_error("rounds must be >= warmup_rounds");
        }
        model.validate();
        attack.validate();
        aggregator.validate();
        kernel.validate();
        if (data.imbalance < 0.0 || data.imbalance >= 1.0) {
            throw config_error("imbalance must be in [0, 1)");
        }
        if (attack.kind == AttackKind::label_flip && model.classes < 2) {
            throw config_error("label flipping needs at least 2 classes");
        }
        return trust.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream iss(value);
    T out;
    iss >> out;
    if (iss.fail() || !iss.eof()) {
        throw config_error("bad numeric value for '" + key + "': " + value);
    }
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw config_error("bad boolean value for '" + key + "': " + value);
}

}  // namespace detail

/// Flat key = value config text. '#' starts a comment, blank lines are
/// skipped, unknown or repeated keys are errors. Omitted keys keep defaults.
inline RunConfig parse_config_text(std::istream& is) {
    RunConfig cfg;
    std::map<std::string, bool> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw config_error("line " + std::to_string(line_no) + ": empty key or value");
        }
        if (seen[key]) throw config_error("duplicate key: " + key);
        seen[key] = true;

        if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(key, value);
        else if (key == "rounds") cfg.rounds = detail::parse_number<std::uint64_t>(key, value);
        else if (key == "n_clients") cfg.n_clients = detail::parse_number<std::size_t>(key, value);
        else if (key == "k_miners") cfg.k_miners = detail::parse_number<std::size_t>(key, value);
        else if (key == "mode") cfg.mode = parse_mode(value);
        else if (key == "q") cfg.trust.q = detail::parse_number<std::size_t>(key, value);
        else if (key == "alpha") cfg.trust.alpha = detail::parse_number<double>(key, value);
        else if (key == "lambda") cfg.trust.lambda = detail::parse_number<double>(key, value);
        else if (key == "ban_duration") cfg.trust.ban_duration = detail::parse_number<std::uint64_t>(key, value);
        else if (key == "warmup_rounds") cfg.trust.warmup_rounds = detail::parse_number<std::uint64_t>(key, value);
        else if (key == "input_dim") cfg.model.input_dim = detail::parse_number<std::size_t>(key, value);
        else if (key == "hidden_dim") cfg.model.hidden_dim = detail::parse_number<std::size_t>(key, value);
        else if (key == "classes") cfg.model.classes = detail::parse_number<std::size_t>(key, value);
        else if (key == "learning_rate") cfg.model.learning_rate = detail::parse_number<double>(key, value);
        else if (key == "batch_size") cfg.model.batch_size = detail::parse_number<std::size_t>(key, value);
        else if (key == "local_epochs") cfg.model.local_epochs = detail::parse_number<std::size_t>(key, value);
        else if (key == "per_client_samples") cfg.data.per_client_samples = detail::parse_number<std::size_t>(key, value);
        else if (key == "test_samples") cfg.data.test_samples = detail::parse_number<std::size_t>(key, value);
        else if (key == "class_sep") cfg.data.class_sep = detail::parse_number<double>(key, value);
        else if (key == "imbalance") cfg.data.imbalance = detail::parse_number<double>(key, value);
        else if (key == "attack") cfg.attack.kind = parse_attack(value);
        else if (key == "gamma") cfg.attack.gamma = detail::parse_number<double>(key, value);
        else if (key == "noise_mean") cfg.attack.noise_mean = detail::parse_number<double>(key, value);
        else if (key == "noise_std") cfg.attack.noise_std = detail::parse_number<double>(key, value);
        else if (key == "zeta") cfg.attack.zeta = detail::parse_number<double>(key, value);
        else if (key == "byzantine_ratio") cfg.attack.byzantine_ratio = detail::parse_number<double>(key, value);
        else if (key == "surface") cfg.attack.surface = parse_surface(value);
        else if (key == "literal_negation") cfg.attack.literal_negation = detail::parse_bool(key, value);
        else if (key == "aggregator") cfg.aggregator.kind = parse_aggregator(value);
        else if (key == "trim_fraction") cfg.aggregator.trim_fraction = detail::parse_number<double>(key, value);
        else if (key == "kernel") cfg.kernel.kind = parse_kernel(value);
        else if (key == "bandwidth") {
            if (value == "auto") cfg.kernel.bandwidth.reset();
            else cfg.kernel.bandwidth = detail::parse_number<double>(key, value);
        }
        else if (key == "sample_cap") cfg.sample_cap = detail::parse_number<std::size_t>(key, value);
        else if (key == "threads") cfg.threads = detail::parse_number<std::size_t>(key, value);
        else throw config_error("unknown key: " + key);
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config file: " + path);
    return parse_config_text(is);
}

/// Fully resolved configuration, for summary.json. The digest field makes the
/// ledger format self-describing.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["rounds"] = cfg.rounds;
    j["n_clients"] = cfg.n_clients;
    j["k_miners"] = cfg.k_miners;
    j["mode"] = mode_name(cfg.mode);
    j["q"] = cfg.trust.q;
    j["alpha"] = cfg.trust.alpha;
    j["lambda"] = cfg.trust.lambda;
    j["ban_duration"] = cfg.trust.ban_duration;
    j["warmup_rounds"] = cfg.trust.warmup_rounds;
    j["input_dim"] = cfg.model.input_dim;
    j["hidden_dim"] = cfg.model.hidden_dim;
    j["classes"] = cfg.model.classes;
    j["learning_rate"] = cfg.model.learning_rate;
    j["batch_size"] = cfg.model.batch_size;
    j["local_epochs"] = cfg.model.local_epochs;
    j["per_client_samples"] = cfg.data.per_client_samples;
    j["test_samples"] = cfg.data.test_samples;
    j["class_sep"] = cfg.data.class_sep;
    j["imbalance"] = cfg.data.imbalance;
    j["attack"] = attack_name(cfg.attack.kind);
    j["gamma"] = cfg.attack.gamma;
    j["noise_mean"] = cfg.attack.noise_mean;
    j["noise_std"] = cfg.attack.noise_std;
    j["zeta"] = cfg.attack.zeta;
    j["byzantine_ratio"] = cfg.attack.byzantine_ratio;
    j["surface"] = surface_name(cfg.attack.surface);
    j["literal_negation"] = cfg.attack.literal_negation;
    j["aggregator"] = aggregator_name(cfg.aggregator.kind);
    j["trim_fraction"] = cfg.aggregator.trim_fraction;
    j["kernel"] = kernel_name(cfg.kernel.kind);
    if (cfg.kernel.bandwidth) j["bandwidth"] = *cfg.kernel.bandwidth;
    else j["bandwidth"] = "auto";
    j["sample_cap"] = cfg.sample_cap;
    j["threads"] = cfg.threads;
    j["digest"] = "sha256";
    return j;
}

}  // namespace dflsim
