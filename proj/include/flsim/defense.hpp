#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flsim/clustering.hpp"
#include "flsim/errors.hpp"
#include "flsim/learning.hpp"
#include "flsim/linalg.hpp"
#include "flsim/rng.hpp"

namespace flsim {

enum class ClipMode {
    delta,  // scale W - G_prev, bounding the post-clip distance by S
    literal // scale W itself by min(1, S/e)
};

enum class MedianScope { admitted, all };

struct DefenseConfig {
    double lambda = 0.001;
    ClipMode clip_mode = ClipMode::delta;
    MedianScope median_scope = MedianScope::admitted;
    std::optional<HdbscanParams> clustering; // default: mcs = ms = floor(K/2)+1
    std::uint64_t noise_seed = 0;
    // layer toggles for the ablation experiments
    bool filtering = true;
    bool smoothing = true;

    void validate() const {
        if (lambda < 0.0) throw std::domain_error("lambda must be >= 0");
    }
};

struct RoundOutcome {
    Model global;
    std::vector<int> admitted;
    double s_t = 0.0;
    double sigma = 0.0;
    std::set<std::string> flags;
};

inline Model fedavg(const std::vector<Model>& updates) {
    if (updates.empty()) throw dimension_error("fedavg of empty update set");
    for (const auto& u : updates) detail::require_same_arch(updates.front(), u);
    Model out = updates.front();
    const double inv = 1.0 / static_cast<double>(updates.size());
    for (std::size_t k = 0; k < out.params.size(); ++k) {
        double acc = 0.0;
        for (const auto& u : updates) acc += u.params[k];
        out.params[k] = acc * inv;
    }
    return out;
}

inline std::vector<double> euclid_to_global(const Model& g_prev,
                                            const std::vector<Model>& updates) {
    std::vector<double> e;
    e.reserve(updates.size());
    for (const auto& u : updates) {
        detail::require_same_arch(g_prev, u);
        e.push_back(l2_distance(g_prev.params, u.params));
    }
    return e;
}

inline Model clip_update(const Model& w, const Model& g_prev, double s,
                         ClipMode mode = ClipMode::delta) {
    detail::require_same_arch(w, g_prev);
    if (s < 0.0) throw std::domain_error("clipping bound must be >= 0");
    const double e = l2_distance(g_prev.params, w.params);
    const double f = e > 0.0 ? std::min(1.0, s / e) : 1.0;
    Model out = w;
    if (f >= 1.0) return out;
    if (mode == ClipMode::delta) {
        for (std::size_t k = 0; k < out.params.size(); ++k)
            out.params[k] = g_prev.params[k] + f * (w.params[k] - g_prev.params[k]);
    } else {
        for (double& p : out.params) p *= f;
    }
    return out;
}

inline Model add_noise(const Model& g, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::domain_error("sigma must be >= 0");
    Model out = g;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (double& p : out.params) p += rng.gaussian(0.0, sigma);
    return out;
}

namespace detail {

inline std::vector<int> all_indices(int k) {
    std::vector<int> v(k);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// clip + average + noise over an already-decided admitted set; shared by the
// standard round and the secret-shared pipeline's plaintext twin
inline RoundOutcome smooth_and_aggregate(const Model& g_prev, const std::vector<Model>& updates,
                                         std::vector<int> admitted, const std::vector<double>& e,
                                         const DefenseConfig& cfg) {
    RoundOutcome out;
    out.admitted = std::move(admitted);
    std::vector<double> scope_e;
    if (cfg.median_scope == MedianScope::admitted && !out.admitted.empty()) {
        for (int i : out.admitted) scope_e.push_back(e[i]);
    } else {
        scope_e = e;
    }
    out.s_t = median(scope_e);
    out.sigma = cfg.smoothing ? cfg.lambda * out.s_t : 0.0;
    if (out.admitted.empty()) {
        out.flags.insert("empty-admission");
        out.global = g_prev;
        return out;
    }
    std::vector<Model> kept;
    kept.reserve(out.admitted.size());
    for (int i : out.admitted)
        kept.push_back(cfg.smoothing ? clip_update(updates[i], g_prev, out.s_t, cfg.clip_mode)
                                     : updates[i]);
    Model aggregated = fedavg(kept);
    out.global = cfg.smoothing
                     ? add_noise(aggregated, out.sigma, cfg.noise_seed)
                     : std::move(aggregated);
    return out;
}

} // namespace detail

// One aggregation round: cosine distances -> density clustering -> majority
// admission -> adaptive clip at the median distance -> average -> adaptive
// noise sigma = lambda * S_t.
inline RoundOutcome flguard_round(const Model& g_prev, const std::vector<Model>& updates,
                                  const DefenseConfig& cfg) {
    cfg.validate();
    const int k = static_cast<int>(updates.size());
    if (k < 3) throw std::domain_error("need at least 3 updates");
    for (const auto& u : updates) detail::require_same_arch(g_prev, u);

    std::vector<int> admitted;
    std::set<std::string> flags;
    if (cfg.filtering) {
        std::vector<ParameterVector> params;
        params.reserve(k);
        for (const auto& u : updates) params.push_back(u.params);
        // zero-norm updates get the maximal distance so they are pushed out as noise
        DistanceMatrix d = pairwise_cosine(params, ZeroNormPolicy::max_distance);
        HdbscanParams hp = cfg.clustering.value_or(HdbscanParams{k / 2 + 1, k / 2 + 1});
        Labeling lab = hdbscan(d, hp);
        AdmissionResult adm = majority_admission(lab, k);
        admitted = std::move(adm.admitted);
        if (!adm.majority) flags.insert("no-majority");
    } else {
        admitted = detail::all_indices(k);
    }

    std::vector<double> e = euclid_to_global(g_prev, updates);
    RoundOutcome out = detail::smooth_and_aggregate(g_prev, updates, std::move(admitted), e, cfg);
    out.flags.insert(flags.begin(), flags.end());
    return out;
}

// Static clip-and-noise baseline; S = 1.0, sigma = 0.01 by default.
inline RoundOutcome static_dp_round(const Model& g_prev, const std::vector<Model>& updates,
                                    double s_fixed = 1.0, double sigma_fixed = 0.01,
                                    std::uint64_t seed = 0) {
    if (updates.empty()) throw dimension_error("empty update set");
    RoundOutcome out;
    out.admitted = detail::all_indices(static_cast<int>(updates.size()));
    out.s_t = s_fixed;
    out.sigma = sigma_fixed;
    std::vector<Model> clipped;
    clipped.reserve(updates.size());
    for (const auto& u : updates) clipped.push_back(clip_update(u, g_prev, s_fixed));
    out.global = add_noise(fedavg(clipped), sigma_fixed, seed);
    return out;
}

// K-means split, smaller cluster dropped (tie keeps the lower id), then the
// static clip-and-noise stage.
inline RoundOutcome kmeans_filter_round(const Model& g_prev, const std::vector<Model>& updates,
                                        double s_fixed = 1.0, double sigma_fixed = 0.01,
                                        std::uint64_t seed = 0) {
    const int k = static_cast<int>(updates.size());
    if (k < 2) throw dimension_error("need at least 2 updates");
    std::vector<ParameterVector> params;
    params.reserve(k);
    for (const auto& u : updates) params.push_back(u.params);
    Labeling lab = kmeans2(params, seed);
    auto sizes = lab.cluster_sizes();
    const int keep = sizes[1] > sizes[0] ? 1 : 0;
    RoundOutcome out;
    out.admitted = lab.members(keep);
    out.s_t = s_fixed;
    out.sigma = sigma_fixed;
    std::vector<Model> clipped;
    for (int i : out.admitted) clipped.push_back(clip_update(updates[i], g_prev, s_fixed));
    out.global = add_noise(fedavg(clipped), sigma_fixed, derive_seed(seed, "noise"));
    return out;
}

// Picks the update with the smallest sum of squared distances to its
// K - f - 2 nearest neighbours.
inline RoundOutcome krum_round(const Model& g_prev, const std::vector<Model>& updates,
                               int n_malicious_bound) {
    const int k = static_cast<int>(updates.size());
    const int neighbours = k - n_malicious_bound - 2;
    if (neighbours < 1) throw std::domain_error("krum needs K - f - 2 >= 1");
    for (const auto& u : updates) detail::require_same_arch(g_prev, u);
    int best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<double> dists;
    for (int i = 0; i < k; ++i) {
        dists.clear();
        for (int j = 0; j < k; ++j) {
            if (j == i) continue;
            double d = l2_distance(updates[i].params, updates[j].params);
            dists.push_back(d * d);
        }
        std::partial_sort(dists.begin(), dists.begin() + neighbours, dists.end());
        double score = 0.0;
        for (int t = 0; t < neighbours; ++t) score += dists[t];
        if (score < best_score) {
            best_score = score;
            best = i;
        }
    }
    RoundOutcome out;
    out.global = updates[best];
    out.admitted = {best};
    return out;
}

} // namespace flsim
