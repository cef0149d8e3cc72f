#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flsim/errors.hpp"

namespace flsim {

// Flat model parameters; the currency every module trades in.
using ParameterVector = std::vector<double>;

enum class DistanceKind { cosine, euclidean };

enum class ZeroNormPolicy {
    error,        // reject zero-norm inputs
    max_distance, // substitute the maximal cosine distance 2.0 (defense-side fail-safe)
};

// Symmetric K x K matrix with zero diagonal, stored dense row-major.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    DistanceMatrix(int n, DistanceKind kind)
        : n_(n), kind_(kind), entries_(static_cast<std::size_t>(n) * n, 0.0) {}

    int size() const { return n_; }
    DistanceKind kind() const { return kind_; }

    double at(int i, int j) const { return entries_[static_cast<std::size_t>(i) * n_ + j]; }
    void set(int i, int j, double v) {
        entries_[static_cast<std::size_t>(i) * n_ + j] = v;
        entries_[static_cast<std::size_t>(j) * n_ + i] = v;
    }

    double max_entry() const {
        double m = 0.0;
        for (double v : entries_) m = std::max(m, v);
        return m;
    }

    const std::vector<double>& raw() const { return entries_; }

private:
    int n_ = 0;
    DistanceKind kind_ = DistanceKind::cosine;
    std::vector<double> entries_;
};

namespace detail {

inline void require_same_length(const ParameterVector& a, const ParameterVector& b) {
    if (a.size() != b.size())
        throw dimension_error("vector length mismatch: " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
}

inline void require_finite(const ParameterVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::domain_error("non-finite entry in parameter vector");
}

// long double accumulation; p can reach 1e5 and the sums feed distance ratios
inline long double dot_acc(const ParameterVector& a, const ParameterVector& b) {
    long double acc = 0.0L;
    for (std::size_t k = 0; k < a.size(); ++k) acc += static_cast<long double>(a[k]) * b[k];
    return acc;
}

inline long double sumsq_acc(const ParameterVector& a) {
    long double acc = 0.0L;
    for (double x : a) acc += static_cast<long double>(x) * x;
    return acc;
}

} // namespace detail

inline double l2_distance(const ParameterVector& a, const ParameterVector& b) {
    detail::require_same_length(a, b);
    detail::require_finite(a);
    detail::require_finite(b);
    long double acc = 0.0L;
    for (std::size_t k = 0; k < a.size(); ++k) {
        long double d = static_cast<long double>(a[k]) - b[k];
        acc += d * d;
    }
    return std::sqrt(static_cast<double>(acc));
}

inline double l2_norm(const ParameterVector& a) {
    return std::sqrt(static_cast<double>(detail::sumsq_acc(a)));
}

inline double cosine_distance(const ParameterVector& a, const ParameterVector& b,
                              ZeroNormPolicy policy = ZeroNormPolicy::error) {
    detail::require_same_length(a, b);
    detail::require_finite(a);
    detail::require_finite(b);
    long double na2 = detail::sumsq_acc(a);
    long double nb2 = detail::sumsq_acc(b);
    if (na2 == 0.0L || nb2 == 0.0L) {
        if (policy == ZeroNormPolicy::max_distance) return 2.0;
        throw degenerate_input_error("cosine distance of zero-norm vector");
    }
    long double c = detail::dot_acc(a, b) / (std::sqrt(na2) * std::sqrt(nb2));
    double d = 1.0 - static_cast<double>(c);
    return std::clamp(d, 0.0, 2.0);
}

inline DistanceMatrix pairwise_cosine(const std::vector<ParameterVector>& models,
                                      ZeroNormPolicy policy = ZeroNormPolicy::error) {
    const int k = static_cast<int>(models.size());
    if (k < 2) throw dimension_error("pairwise_cosine requires at least 2 models");
    for (int i = 1; i < k; ++i) detail::require_same_length(models[0], models[i]);
    DistanceMatrix d(k, DistanceKind::cosine);
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            try {
                d.set(i, j, cosine_distance(models[i], models[j], policy));
            } catch (const degenerate_input_error& e) {
                throw degenerate_input_error(std::string(e.what()) + " at pair (" +
                                             std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
    return d;
}

// Even count: mean of the two middle order statistics.
inline double median(std::vector<double> values) {
    if (values.empty()) throw std::domain_error("median of empty sequence");
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double hi = values[mid];
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(values.begin(), values.begin() + mid);
    return 0.5 * (lo + hi);
}

} // namespace flsim
