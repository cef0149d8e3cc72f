#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "flsim/errors.hpp"
#include "flsim/linalg.hpp"
#include "flsim/rng.hpp"

namespace flsim {

// Per-model cluster assignment; kNoise marks models outside every cluster.
struct Labeling {
    static constexpr int kNoise = -1;
    std::vector<int> labels;
    int num_clusters = 0;

    int size() const { return static_cast<int>(labels.size()); }

    std::vector<std::size_t> cluster_sizes() const {
        std::vector<std::size_t> s(num_clusters, 0);
        for (int l : labels)
            if (l >= 0) ++s[l];
        return s;
    }

    std::vector<int> members(int cluster) const {
        std::vector<int> out;
        for (int i = 0; i < size(); ++i)
            if (labels[i] == cluster) out.push_back(i);
        return out;
    }
};

struct HdbscanParams {
    int min_cluster_size = 2;
    int min_samples = 1;
};

struct DbscanParams {
    double epsilon = 0.0;
    int min_pts = 1;
};

namespace detail {

inline void require_distance_matrix(const DistanceMatrix& d) {
    const int n = d.size();
    if (n < 2) throw dimension_error("distance matrix must be at least 2x2");
    for (int i = 0; i < n; ++i) {
        if (d.at(i, i) != 0.0) throw dimension_error("distance matrix diagonal must be zero");
        for (int j = i + 1; j < n; ++j) {
            const double v = d.at(i, j);
            if (!std::isfinite(v) || v < 0.0)
                throw dimension_error("distance matrix entries must be finite and nonnegative");
            if (v != d.at(j, i)) throw dimension_error("distance matrix must be symmetric");
        }
    }
}

// Relabels an arbitrary cluster-id assignment to contiguous ids ordered by each
// cluster's lowest member index. Noise stays noise.
inline Labeling normalize_labels(std::vector<int> raw) {
    Labeling out;
    out.labels.assign(raw.size(), Labeling::kNoise);
    std::vector<int> order; // raw ids in order of first appearance
    for (int i = 0; i < static_cast<int>(raw.size()); ++i) {
        if (raw[i] < 0) continue;
        if (std::find(order.begin(), order.end(), raw[i]) == order.end()) order.push_back(raw[i]);
    }
    for (int i = 0; i < static_cast<int>(raw.size()); ++i) {
        if (raw[i] < 0) continue;
        out.labels[i] = static_cast<int>(
            std::find(order.begin(), order.end(), raw[i]) - order.begin());
    }
    out.num_clusters = static_cast<int>(order.size());
    return out;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

// ---- HDBSCAN internals -----------------------------------------------------
//
// Pipeline on a precomputed matrix: core distances -> mutual reachability ->
// MST (Kruskal, ties by lexicographic (i,j)) -> single-linkage merge tree ->
// condensed tree at min_cluster_size -> stability -> excess-of-mass selection.
// The root is always a selectable cluster, so an attack-free round can come
// back as one cluster instead of being force-split.

struct CondensedTree {
    // one row per point: the cluster it fell out of and at which lambda
    std::vector<int> point_parent;
    std::vector<double> point_lambda;
    // cluster hierarchy rows
    struct ClusterRow {
        int parent;
        int child;
        double lambda;
        int child_size;
    };
    std::vector<ClusterRow> cluster_rows;
    int num_clusters = 0; // ids 0..num_clusters-1, 0 is the root
};

inline double dist_to_lambda(double d) {
    return d > 0.0 ? 1.0 / d : std::numeric_limits<double>::infinity();
}

struct SingleLinkageTree {
    // binary merge nodes; node ids: 0..n-1 points, n..2n-2 merges
    std::vector<int> left, right;
    std::vector<double> dist;
    std::vector<int> size;
    int n = 0;

    int root() const { return n + static_cast<int>(left.size()) - 1; }
    bool is_leaf(int node) const { return node < n; }
    int node_size(int node) const { return node < n ? 1 : size[node - n]; }
};

inline SingleLinkageTree build_single_linkage(const std::vector<std::vector<double>>& mr, int n) {
    // Kruskal over all pairs; (distance, i, j) order makes the MST and the
    // merge sequence bitwise deterministic
    std::vector<std::tuple<double, int, int>> edges;
    edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) edges.emplace_back(mr[i][j], i, j);
    std::sort(edges.begin(), edges.end());

    SingleLinkageTree t;
    t.n = n;
    UnionFind uf(n);
    std::vector<int> comp_node(n); // current tree node representing each component
    std::iota(comp_node.begin(), comp_node.end(), 0);
    for (const auto& [d, i, j] : edges) {
        const int ri = uf.find(i);
        const int rj = uf.find(j);
        if (ri == rj) continue;
        const int node = n + static_cast<int>(t.left.size());
        t.left.push_back(comp_node[ri]);
        t.right.push_back(comp_node[rj]);
        t.dist.push_back(d);
        t.size.push_back(t.node_size(comp_node[ri]) + t.node_size(comp_node[rj]));
        uf.unite(ri, rj);
        comp_node[uf.find(ri)] = node;
        if (static_cast<int>(t.left.size()) == n - 1) break;
    }
    return t;
}

inline void collect_points(const SingleLinkageTree& t, int node, std::vector<int>& out) {
    if (t.is_leaf(node)) {
        out.push_back(node);
        return;
    }
    collect_points(t, t.left[node - t.n], out);
    collect_points(t, t.right[node - t.n], out);
}

inline CondensedTree condense_tree(const SingleLinkageTree& t, int min_cluster_size) {
    CondensedTree c;
    c.point_parent.assign(t.n, 0);
    c.point_lambda.assign(t.n, std::numeric_limits<double>::infinity());
    c.num_clusters = 1;

    if (t.left.empty()) { // n == 1 cannot happen (validated), defensive
        return c;
    }

    // walk down from the root; (sl node, condensed cluster id)
    std::vector<std::pair<int, int>> stack{{t.root(), 0}};
    std::vector<int> pts;
    while (!stack.empty()) {
        auto [node, cluster] = stack.back();
        stack.pop_back();
        // descend through single points splitting off while the remaining side
        // keeps the cluster alive
        while (true) {
            const int l = t.left[node - t.n];
            const int r = t.right[node - t.n];
            const double lambda = dist_to_lambda(t.dist[node - t.n]);
            const int nl = t.node_size(l);
            const int nr = t.node_size(r);
            if (nl >= min_cluster_size && nr >= min_cluster_size) {
                // true split: two new clusters born here
                const int cl = c.num_clusters++;
                const int cr = c.num_clusters++;
                c.cluster_rows.push_back({cluster, cl, lambda, nl});
                c.cluster_rows.push_back({cluster, cr, lambda, nr});
                if (t.is_leaf(l))
                    throw std::logic_error("cluster child cannot be a leaf"); // mcs >= 2
                if (t.is_leaf(r)) throw std::logic_error("cluster child cannot be a leaf");
                stack.emplace_back(l, cl);
                stack.emplace_back(r, cr);
                break;
            }
            if (nl < min_cluster_size && nr < min_cluster_size) {
                // cluster evaporates: every remaining point leaves at this lambda
                pts.clear();
                collect_points(t, node, pts);
                for (int p : pts) {
                    c.point_parent[p] = cluster;
                    c.point_lambda[p] = lambda;
                }
                break;
            }
            // one side too small: its points fall out, the big side carries on
            const int small = nl < min_cluster_size ? l : r;
            const int big = nl < min_cluster_size ? r : l;
            pts.clear();
            collect_points(t, small, pts);
            for (int p : pts) {
                c.point_parent[p] = cluster;
                c.point_lambda[p] = lambda;
            }
            if (t.is_leaf(big)) {
                // cannot happen while big >= mcs >= 2; defensive
                c.point_parent[big] = cluster;
                c.point_lambda[big] = lambda;
                break;
            }
            node = big;
        }
    }
    return c;
}

struct StabilityInfo {
    std::vector<double> birth;
    std::vector<double> stability;
    std::vector<std::vector<int>> children;
};

inline StabilityInfo compute_stability(const CondensedTree& c) {
    StabilityInfo s;
    s.birth.assign(c.num_clusters, 0.0);
    s.stability.assign(c.num_clusters, 0.0);
    s.children.assign(c.num_clusters, {});
    for (const auto& row : c.cluster_rows) {
        s.birth[row.child] = row.lambda;
        s.children[row.parent].push_back(row.child);
    }
    auto add = [&](int cluster, double lambda, int size) {
        double delta = lambda - s.birth[cluster];
        if (std::isnan(delta)) delta = 0.0; // inf - inf: births at distance zero
        s.stability[cluster] += delta * size;
    };
    for (int p = 0; p < static_cast<int>(c.point_parent.size()); ++p)
        add(c.point_parent[p], c.point_lambda[p], 1);
    for (const auto& row : c.cluster_rows) add(row.parent, row.lambda, row.child_size);
    return s;
}

} // namespace detail

// Full HDBSCAN on a precomputed distance matrix. Points in no selected cluster
// are labeled noise; a single all-encompassing cluster is a legal outcome.
inline Labeling hdbscan(const DistanceMatrix& d, const HdbscanParams& params) {
    detail::require_distance_matrix(d);
    if (params.min_cluster_size < 2) throw std::domain_error("min_cluster_size must be >= 2");
    if (params.min_samples < 1) throw std::domain_error("min_samples must be >= 1");
    const int n = d.size();

    // core distance: min_samples-th nearest neighbour (row sorted with the
    // self-zero occupying slot 0; clamped for tiny n)
    const int ms = std::min(params.min_samples, n - 1);
    std::vector<double> core(n);
    std::vector<double> row(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) row[j] = d.at(i, j);
        std::nth_element(row.begin(), row.begin() + ms, row.end());
        core[i] = row[ms];
    }

    std::vector<std::vector<double>> mr(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            mr[i][j] = mr[j][i] = std::max({core[i], core[j], d.at(i, j)});

    auto slt = detail::build_single_linkage(mr, n);
    auto tree = detail::condense_tree(slt, params.min_cluster_size);
    auto info = detail::compute_stability(tree);

    // excess of mass, bottom-up; the root competes like any other cluster
    std::vector<double> sel_stab(tree.num_clusters, 0.0);
    std::vector<char> selected(tree.num_clusters, 0);
    for (int cid = tree.num_clusters - 1; cid >= 0; --cid) {
        if (info.children[cid].empty()) {
            sel_stab[cid] = info.stability[cid];
            selected[cid] = 1;
            continue;
        }
        double subtree = 0.0;
        for (int ch : info.children[cid]) subtree += sel_stab[ch];
        if (subtree > info.stability[cid]) {
            sel_stab[cid] = subtree;
            selected[cid] = 0;
        } else {
            sel_stab[cid] = info.stability[cid];
            selected[cid] = 1;
        }
    }
    // highest selected antichain
    std::vector<int> chosen;
    std::vector<int> dfs{0};
    while (!dfs.empty()) {
        int cid = dfs.back();
        dfs.pop_back();
        if (selected[cid]) {
            chosen.push_back(cid);
            continue;
        }
        for (int ch : info.children[cid]) dfs.push_back(ch);
    }

    // point labels: nearest chosen ancestor of the cluster each point fell from
    std::vector<int> parent_of(tree.num_clusters, -1);
    for (const auto& rowc : tree.cluster_rows) parent_of[rowc.child] = rowc.parent;
    std::vector<char> is_chosen(tree.num_clusters, 0);
    for (int cid : chosen) is_chosen[cid] = 1;

    const bool only_root = chosen.size() == 1 && chosen[0] == 0;
    double root_cut = 0.0;
    if (only_root) {
        // single-cluster mode keeps the members that persist to the last level
        // the root reaches; earlier departures stay outliers
        for (const auto& rowc : tree.cluster_rows)
            if (rowc.parent == 0) root_cut = std::max(root_cut, rowc.lambda);
        for (int p = 0; p < n; ++p)
            if (tree.point_parent[p] == 0) root_cut = std::max(root_cut, tree.point_lambda[p]);
    }

    std::vector<int> raw(n, Labeling::kNoise);
    for (int p = 0; p < n; ++p) {
        int cid = tree.point_parent[p];
        while (cid >= 0 && !is_chosen[cid]) cid = parent_of[cid];
        if (cid < 0) continue;
        if (only_root && cid == 0) {
            if (tree.point_lambda[p] >= root_cut) raw[p] = 0;
        } else {
            raw[p] = cid;
        }
    }
    return detail::normalize_labels(std::move(raw));
}

// Classic DBSCAN over the precomputed matrix: core iff >= min_pts neighbours
// within epsilon (self included); clusters are connected components of core
// points; border points go to the lowest-index claiming core.
inline Labeling dbscan(const DistanceMatrix& d, const DbscanParams& params) {
    detail::require_distance_matrix(d);
    if (!(params.epsilon >= 0.0) || !std::isfinite(params.epsilon))
        throw std::domain_error("epsilon must be finite and nonnegative");
    if (params.min_pts < 1) throw std::domain_error("min_pts must be >= 1");
    const int n = d.size();

    std::vector<char> core(n, 0);
    for (int i = 0; i < n; ++i) {
        int cnt = 0;
        for (int j = 0; j < n; ++j)
            if (d.at(i, j) <= params.epsilon) ++cnt;
        core[i] = cnt >= params.min_pts;
    }
    detail::UnionFind uf(n);
    for (int i = 0; i < n; ++i) {
        if (!core[i]) continue;
        for (int j = i + 1; j < n; ++j)
            if (core[j] && d.at(i, j) <= params.epsilon) uf.unite(i, j);
    }
    std::vector<int> raw(n, Labeling::kNoise);
    for (int i = 0; i < n; ++i)
        if (core[i]) raw[i] = uf.find(i);
    for (int i = 0; i < n; ++i) {
        if (core[i]) continue;
        for (int j = 0; j < n; ++j) {
            if (core[j] && d.at(i, j) <= params.epsilon) {
                raw[i] = uf.find(j); // lowest-index claiming core wins
                break;
            }
        }
    }
    return detail::normalize_labels(std::move(raw));
}

struct EpsilonSearchResult {
    double epsilon = 0.0;
    Labeling labeling;
    int leak_bits = 2; // whether a target-size cluster exists + whether bounds moved
};

// Bisects epsilon until some cluster has exactly target_size members; on
// non-termination falls back to the labeling whose largest cluster is closest
// to the target from above.
inline EpsilonSearchResult binary_search_epsilon(const DistanceMatrix& d, int target_size,
                                                 int min_pts, int max_iters = 32) {
    detail::require_distance_matrix(d);
    const int n = d.size();
    if (target_size < 1 || target_size > n)
        throw std::domain_error("target_size must be in [1, K]");
    const double max_d = d.max_entry();
    if (target_size == n) {
        EpsilonSearchResult r;
        r.epsilon = max_d;
        r.labeling = dbscan(d, {max_d, min_pts});
        return r;
    }
    double lo = 0.0, hi = max_d;
    std::optional<EpsilonSearchResult> best_above; // smallest max-cluster >= target
    std::size_t best_size = 0;
    EpsilonSearchResult last;
    const int iters = std::max(1, max_iters); // midpoint evaluated at least once
    for (int it = 0; it < iters; ++it) {
        const double mid = 0.5 * (lo + hi);
        Labeling lab = dbscan(d, {mid, min_pts});
        auto sizes = lab.cluster_sizes();
        std::size_t largest = 0;
        for (std::size_t s : sizes) largest = std::max(largest, s);
        for (std::size_t s : sizes) {
            if (s == static_cast<std::size_t>(target_size)) {
                EpsilonSearchResult r;
                r.epsilon = mid;
                r.labeling = std::move(lab);
                return r;
            }
        }
        EpsilonSearchResult r;
        r.epsilon = mid;
        r.labeling = lab;
        if (largest >= static_cast<std::size_t>(target_size) &&
            (!best_above || largest < best_size)) {
            best_above = r;
            best_size = largest;
        }
        last = std::move(r);
        if (largest > static_cast<std::size_t>(target_size))
            hi = mid;
        else
            lo = mid;
        if (max_iters == 0) break;
    }
    return best_above ? *best_above : last;
}

// Lloyd's algorithm with k=2 and seeded farthest-point initialization; both
// clusters come back nonempty and ids are ordered by lowest member index.
inline Labeling kmeans2(const std::vector<ParameterVector>& models, std::uint64_t seed) {
    const int n = static_cast<int>(models.size());
    if (n < 2) throw dimension_error("kmeans2 requires at least 2 models");
    Rng rng(seed);
    const int first = static_cast<int>(rng.uniform_index(n));
    int second = -1;
    double far = -1.0;
    for (int i = 0; i < n; ++i) {
        if (i == first) continue;
        double dd = l2_distance(models[i], models[first]);
        if (dd > far) {
            far = dd;
            second = i;
        }
    }
    std::vector<ParameterVector> centers{models[first], models[second]};
    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            double d0 = l2_distance(models[i], centers[0]);
            double d1 = l2_distance(models[i], centers[1]);
            int a = d1 < d0 ? 1 : 0;
            if (a != assign[i]) {
                assign[i] = a;
                changed = true;
            }
        }
        // keep both clusters populated: donate the point farthest from its center
        for (int c = 0; c < 2; ++c) {
            if (std::count(assign.begin(), assign.end(), c) > 0) continue;
            int donor = -1;
            double worst = -1.0;
            for (int i = 0; i < n; ++i) {
                double dd = l2_distance(models[i], centers[assign[i]]);
                if (dd > worst) {
                    worst = dd;
                    donor = i;
                }
            }
            assign[donor] = c;
            changed = true;
        }
        for (int c = 0; c < 2; ++c) {
            ParameterVector mean(models[0].size(), 0.0);
            int cnt = 0;
            for (int i = 0; i < n; ++i) {
                if (assign[i] != c) continue;
                for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += models[i][k];
                ++cnt;
            }
            for (double& v : mean) v /= cnt;
            centers[c] = std::move(mean);
        }
        if (!changed) break;
    }
    Labeling out = detail::normalize_labels(std::move(assign));
    out.num_clusters = 2;
    return out;
}

// Members of the largest cluster when it holds a strict majority; otherwise the
// largest cluster anyway, flagged by the caller via the bool.
struct AdmissionResult {
    std::vector<int> admitted;
    bool majority = false;
};

inline AdmissionResult majority_admission(const Labeling& labeling, int k) {
    AdmissionResult res;
    if (labeling.size() != k) throw dimension_error("labeling size does not match K");
    auto sizes = labeling.cluster_sizes();
    if (sizes.empty()) return res; // all noise: empty admission
    int best = 0;
    for (int c = 1; c < static_cast<int>(sizes.size()); ++c)
        if (sizes[c] > sizes[best]) best = c; // ties keep the lowest id
    res.admitted = labeling.members(best);
    res.majority = sizes[best] >= static_cast<std::size_t>(k / 2 + 1);
    return res;
}

} // namespace flsim
