#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/errors.hpp"
#include "flsim/learning.hpp"
#include "flsim/rng.hpp"

namespace flsim {

enum class StrategyKind {
    none,             // adversary absent / acting benign
    data_poison,      // train on trigger-poisoned data
    scaled_data_poison,
    multi_backdoor,   // disjoint triggers split across malicious clients
    model_alignment,  // per-client randomized pdr to bridge the benign gap
    obfuscate,        // data poison plus additive Gaussian noise on the update
    untargeted_random // random model at the global's norm scale
};

struct AdversaryConfig {
    double pmr = 0.0;
    StrategyKind strategy = StrategyKind::none;
    std::vector<TriggerSpec> triggers;
    double pdr = 0.5;
    std::pair<double, double> pdr_range{0.05, 0.20};
    double scale_factor = 1.0;    // gamma
    double obfuscation_std = 0.034;
    int num_backdoors = 1;
    std::uint64_t seed = 0;
    // Byzantine window: the adversary attacks in rounds [attack_from, attack_until)
    // and acts benign outside it
    int attack_from = 0;
    int attack_until = std::numeric_limits<int>::max();

    bool in_contract() const { return pmr < 0.5; } // pmr >= 0.5 only for failure-mode sweeps

    void validate() const {
        if (pmr < 0.0 || pmr >= 1.0) throw std::domain_error("pmr must be in [0,1)");
        if (pdr < 0.0 || pdr > 1.0) throw std::domain_error("pdr must be in [0,1]");
        if (scale_factor < 0.0) throw std::domain_error("scale_factor must be >= 0");
        if (obfuscation_std < 0.0) throw std::domain_error("obfuscation_std must be >= 0");
        if (num_backdoors < 1) throw std::domain_error("num_backdoors must be >= 1");
    }
};

// Exactly floor(pmr * K) clients, a pure function of (seed, K, pmr).
inline std::vector<int> select_malicious(std::uint64_t seed, int k, double pmr) {
    const int m = static_cast<int>(std::floor(pmr * k));
    Rng rng(derive_seed(seed, "malicious-selection"));
    auto picks = rng.sample_without_replacement(k, m);
    std::vector<int> out(picks.begin(), picks.end());
    std::sort(out.begin(), out.end());
    return out;
}

inline Model scale_update(const Model& update, const Model& global, double gamma) {
    detail::require_same_arch(update, global);
    Model out = global;
    for (std::size_t i = 0; i < out.params.size(); ++i)
        out.params[i] = global.params[i] + gamma * (update.params[i] - global.params[i]);
    return out;
}

// Malicious clients split into m near-equal groups (sizes differ by <= 1);
// group g gets triggers[g].
inline std::map<int, int> assign_backdoors(const std::vector<int>& malicious,
                                           const std::vector<TriggerSpec>& triggers, int m) {
    if (m < 1) throw std::domain_error("need at least one backdoor");
    if (m > static_cast<int>(triggers.size()))
        throw std::domain_error("fewer triggers than requested backdoors");
    if (m > static_cast<int>(malicious.size()))
        throw std::domain_error("more backdoors than malicious clients");
    const int total = static_cast<int>(malicious.size());
    std::map<int, int> out;
    int pos = 0;
    for (int g = 0; g < m; ++g) {
        int count = total / m + (g < total % m ? 1 : 0);
        for (int i = 0; i < count; ++i) out[malicious[pos++]] = g;
    }
    return out;
}

inline std::map<int, double> align_pdrs(const std::vector<int>& malicious,
                                        std::pair<double, double> range, std::uint64_t seed) {
    if (!(range.first > 0.0 && range.second <= 1.0 && range.first <= range.second))
        throw std::domain_error("pdr range must satisfy 0 < lo <= hi <= 1");
    Rng rng(derive_seed(seed, "align-pdrs"));
    std::map<int, double> out;
    for (int c : malicious) out[c] = rng.uniform(range.first, range.second);
    return out;
}

inline Model obfuscate(const Model& update, double stddev, std::uint64_t seed) {
    if (stddev < 0.0) throw std::domain_error("obfuscation std must be >= 0");
    Model out = update;
    if (stddev == 0.0) return out;
    Rng rng(seed);
    for (double& p : out.params) p += rng.gaussian(0.0, stddev);
    return out;
}

inline Model random_model_like(const Model& global, std::uint64_t seed) {
    Model out = global;
    Rng rng(seed);
    double norm2 = 0.0;
    for (double& p : out.params) {
        p = rng.gaussian();
        norm2 += p * p;
    }
    const double target = l2_norm(global.params);
    const double scale = norm2 > 0.0 ? target / std::sqrt(norm2) : 0.0;
    for (double& p : out.params) p *= scale;
    return out;
}

// Precomputed per-run adversary plan: who is malicious and with which trigger
// and pdr. Keeps craft_update a pure function of (round, client).
struct AdversaryPlan {
    AdversaryConfig cfg;
    std::vector<int> malicious;
    std::map<int, int> trigger_of;    // client -> index into cfg.triggers
    std::map<int, double> pdr_of;     // client -> pdr (model alignment)

    bool is_malicious(int client) const {
        return std::binary_search(malicious.begin(), malicious.end(), client);
    }
    bool attacks_in_round(int round) const {
        return cfg.strategy != StrategyKind::none && round >= cfg.attack_from &&
               round < cfg.attack_until;
    }
    const TriggerSpec& trigger_for(int client) const {
        auto it = trigger_of.find(client);
        return cfg.triggers.at(it == trigger_of.end() ? 0 : it->second);
    }
    double pdr_for(int client) const {
        auto it = pdr_of.find(client);
        return it == pdr_of.end() ? cfg.pdr : it->second;
    }
};

inline AdversaryPlan plan_adversary(const AdversaryConfig& cfg, int k) {
    cfg.validate();
    AdversaryPlan plan;
    plan.cfg = cfg;
    if (cfg.strategy == StrategyKind::none || cfg.pmr == 0.0) return plan;
    plan.malicious = select_malicious(cfg.seed, k, cfg.pmr);
    if (plan.malicious.empty()) return plan;
    if (cfg.strategy == StrategyKind::multi_backdoor)
        plan.trigger_of = assign_backdoors(plan.malicious, cfg.triggers, cfg.num_backdoors);
    if (cfg.strategy == StrategyKind::model_alignment)
        plan.pdr_of = align_pdrs(plan.malicious, cfg.pdr_range, cfg.seed);
    return plan;
}

// One poisoned update. The train seed must equal the one a benign run of this
// client would use, so pdr = 0 degenerates to exactly the benign update.
inline Model craft_update(const AdversaryPlan& plan, const Model& global,
                          const LabeledDataset& benign_data, const TrainConfig& train_cfg,
                          int client, int round) {
    const AdversaryConfig& cfg = plan.cfg;
    if (!plan.is_malicious(client)) throw std::logic_error("craft_update on benign client");
    const std::uint64_t poison_seed = derive_seed(cfg.seed, "poison", round, client);
    switch (cfg.strategy) {
        case StrategyKind::none:
            return local_train(global, benign_data, train_cfg);
        case StrategyKind::data_poison:
        case StrategyKind::multi_backdoor: {
            auto poisoned =
                poison_dataset(benign_data, plan.trigger_for(client), cfg.pdr, poison_seed);
            return local_train(global, poisoned, train_cfg);
        }
        case StrategyKind::model_alignment: {
            auto poisoned = poison_dataset(benign_data, plan.trigger_for(client),
                                           plan.pdr_for(client), poison_seed);
            return local_train(global, poisoned, train_cfg);
        }
        case StrategyKind::scaled_data_poison: {
            auto poisoned =
                poison_dataset(benign_data, plan.trigger_for(client), cfg.pdr, poison_seed);
            Model trained = local_train(global, poisoned, train_cfg);
            return scale_update(trained, global, cfg.scale_factor);
        }
        case StrategyKind::obfuscate: {
            auto poisoned =
                poison_dataset(benign_data, plan.trigger_for(client), cfg.pdr, poison_seed);
            Model trained = local_train(global, poisoned, train_cfg);
            return obfuscate(trained, cfg.obfuscation_std,
                             derive_seed(cfg.seed, "obfuscate", round, client));
        }
        case StrategyKind::untargeted_random:
            return random_model_like(global, derive_seed(cfg.seed, "untargeted", round, client));
    }
    throw std::logic_error("unknown strategy");
}

} // namespace flsim
