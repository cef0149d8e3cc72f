#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "flsim/errors.hpp"
#include "flsim/rng.hpp"

namespace flsim {

struct LabeledDataset {
    int feature_dim = 0;
    int num_classes = 0;
    std::vector<std::vector<double>> x;
    std::vector<int> y;

    std::size_t size() const { return x.size(); }
    bool empty() const { return x.empty(); }

    void push(std::vector<double> features, int label) {
        x.push_back(std::move(features));
        y.push_back(label);
    }
};

struct TriggerSpec {
    std::vector<int> feature_indices;
    std::vector<double> trigger_values; // one per index
    int target_label = 0;

    void validate(int d) const {
        if (feature_indices.size() != trigger_values.size())
            throw dimension_error("trigger indices/values length mismatch");
        std::vector<int> sorted = feature_indices;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] < 0 || sorted[i] >= d)
                throw std::out_of_range("trigger feature index out of range");
            if (i > 0 && sorted[i] == sorted[i - 1])
                throw std::invalid_argument("duplicate trigger feature index");
        }
    }
};

struct PartitionSpec {
    int clients = 2;
    double deg_niid = 0.0; // 0 = IID, 1 = designated class only
    std::uint64_t seed = 0;
};

// half-away-from-zero, platform independent
inline long round_half_away(double x) {
    return static_cast<long>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

// Gaussian class blobs around well-separated seeded centers, balanced labels.
inline LabeledDataset generate_task(std::uint64_t seed, int num_classes, int d, int n,
                                    double separation = 6.0) {
    if (num_classes < 2) throw std::domain_error("need at least 2 classes");
    if (d < num_classes) throw std::domain_error("need d >= num_classes");
    if (n < num_classes) throw std::domain_error("need n >= num_classes");
    Rng rng(seed);
    // random unit directions scaled out; near-orthogonal for d >> classes
    std::vector<std::vector<double>> centers(num_classes, std::vector<double>(d));
    for (auto& c : centers) {
        double norm2 = 0.0;
        for (double& v : c) {
            v = rng.gaussian();
            norm2 += v * v;
        }
        const double scale = separation / std::sqrt(norm2);
        for (double& v : c) v *= scale;
    }
    // balanced counts: first (n mod classes) classes get one extra
    std::vector<int> labels;
    labels.reserve(n);
    for (int c = 0; c < num_classes; ++c) {
        int count = n / num_classes + (c < n % num_classes ? 1 : 0);
        labels.insert(labels.end(), count, c);
    }
    rng.shuffle(labels);
    LabeledDataset ds;
    ds.feature_dim = d;
    ds.num_classes = num_classes;
    for (int i = 0; i < n; ++i) {
        std::vector<double> xi(d);
        for (int k = 0; k < d; ++k) xi[k] = centers[labels[i]][k] + rng.gaussian();
        ds.push(std::move(xi), labels[i]);
    }
    return ds;
}

// Clients grouped round-robin by designated class (client k -> class k mod C).
// Each client gets floor(deg_niid * quota) samples of its designated class and
// the remainder uniformly at random from what is left; the partition is a
// disjoint cover of the input.
inline std::vector<LabeledDataset> partition_noniid(const LabeledDataset& data,
                                                    const PartitionSpec& spec) {
    const int k = spec.clients;
    const std::size_t n = data.size();
    if (k < 2) throw std::domain_error("need at least 2 clients");
    if (static_cast<std::size_t>(k) > n) throw std::domain_error("more clients than samples");
    if (spec.deg_niid < 0.0 || spec.deg_niid > 1.0)
        throw std::domain_error("deg_niid must be in [0,1]");

    Rng rng(spec.seed);
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[data.y[i]].push_back(i);
    for (auto& pool : by_class) rng.shuffle(pool);

    std::vector<std::size_t> quota(k, n / k);
    for (std::size_t i = 0; i < n % k; ++i) ++quota[i];

    std::vector<std::vector<std::size_t>> assigned(k);
    std::vector<std::size_t> cursor(data.num_classes, 0);
    for (int c = 0; c < k; ++c) {
        const int cls = c % data.num_classes;
        std::size_t want = static_cast<std::size_t>(std::floor(spec.deg_niid * quota[c]));
        std::size_t avail = by_class[cls].size() - cursor[cls];
        std::size_t take = std::min(want, avail);
        for (std::size_t t = 0; t < take; ++t) assigned[c].push_back(by_class[cls][cursor[cls]++]);
    }
    // leftovers dealt uniformly at random
    std::vector<std::size_t> rest;
    for (int cls = 0; cls < data.num_classes; ++cls)
        for (std::size_t i = cursor[cls]; i < by_class[cls].size(); ++i)
            rest.push_back(by_class[cls][i]);
    rng.shuffle(rest);
    std::size_t pos = 0;
    for (int c = 0; c < k; ++c)
        while (assigned[c].size() < quota[c]) assigned[c].push_back(rest[pos++]);

    std::vector<LabeledDataset> out(k);
    for (int c = 0; c < k; ++c) {
        out[c].feature_dim = data.feature_dim;
        out[c].num_classes = data.num_classes;
        for (std::size_t i : assigned[c]) out[c].push(data.x[i], data.y[i]);
    }
    return out;
}

inline std::vector<double> apply_trigger(const std::vector<double>& x, const TriggerSpec& trig) {
    trig.validate(static_cast<int>(x.size()));
    std::vector<double> out = x;
    for (std::size_t i = 0; i < trig.feature_indices.size(); ++i)
        out[trig.feature_indices[i]] = trig.trigger_values[i];
    return out;
}

// Exactly round(pdr * n) seeded-random samples get the trigger and the target
// label; everything else, including sample order, is untouched.
inline LabeledDataset poison_dataset(const LabeledDataset& data, const TriggerSpec& trig,
                                     double pdr, std::uint64_t seed) {
    if (pdr < 0.0 || pdr > 1.0) throw std::domain_error("pdr must be in [0,1]");
    const std::size_t n = data.size();
    const std::size_t m = static_cast<std::size_t>(round_half_away(pdr * static_cast<double>(n)));
    LabeledDataset out = data;
    if (m == 0) return out;
    Rng rng(seed);
    for (std::size_t i : rng.sample_without_replacement(n, m)) {
        out.x[i] = apply_trigger(data.x[i], trig);
        out.y[i] = trig.target_label;
    }
    return out;
}

// Header f0..f{d-1},label; values printed with enough digits to round-trip.
inline void dataset_to_csv(const LabeledDataset& data, std::ostream& os) {
    for (int k = 0; k < data.feature_dim; ++k) os << 'f' << k << ',';
    os << "label\n";
    char buf[40];
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (int k = 0; k < data.feature_dim; ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.x[i][k]);
            os << buf << ',';
        }
        os << data.y[i] << '\n';
    }
}

inline LabeledDataset dataset_from_csv(std::istream& is) {
    LabeledDataset ds;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty csv");
    ds.feature_dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
    int max_label = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> xi;
        xi.reserve(ds.feature_dim);
        for (int k = 0; k < ds.feature_dim; ++k) {
            std::getline(ss, cell, ',');
            xi.push_back(std::stod(cell));
        }
        std::getline(ss, cell, ',');
        int label = std::stoi(cell);
        max_label = std::max(max_label, label);
        ds.push(std::move(xi), label);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

} // namespace flsim
