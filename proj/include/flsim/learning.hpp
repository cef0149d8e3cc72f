#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/errors.hpp"
#include "flsim/linalg.hpp"
#include "flsim/rng.hpp"

namespace flsim {

enum class Activation { relu, identity };

struct ModelArch {
    std::vector<int> layer_sizes; // input dim ... output classes
    Activation activation = Activation::relu;

    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }

    // per layer: weight matrix (out x in, row-major) then bias
    int param_count() const {
        int p = 0;
        for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l)
            p += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
        return p;
    }

    void validate() const {
        if (layer_sizes.size() < 2) throw dimension_error("arch needs at least 2 layers");
        if (layer_sizes.back() < 2) throw dimension_error("arch needs at least 2 output classes");
        for (int s : layer_sizes)
            if (s <= 0) throw dimension_error("arch layer sizes must be positive");
    }

    bool operator==(const ModelArch& o) const {
        return layer_sizes == o.layer_sizes && activation == o.activation;
    }
};

struct Model {
    ModelArch arch;
    ParameterVector params;
};

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 1;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate >= 0.0 && learning_rate < 10.0))
            throw std::domain_error("learning_rate out of sane range [0,10)");
        if (epochs < 0) throw std::domain_error("epochs must be nonnegative");
        if (batch_size <= 0) throw std::domain_error("batch_size must be positive");
    }
};

namespace detail {

inline void require_same_arch(const Model& a, const Model& b) {
    if (!(a.arch == b.arch)) throw dimension_error("model architecture mismatch");
}

// offset of layer l's weights within the flat vector
inline int layer_offset(const ModelArch& arch, int l) {
    int off = 0;
    for (int i = 0; i < l; ++i)
        off += arch.layer_sizes[i] * arch.layer_sizes[i + 1] + arch.layer_sizes[i + 1];
    return off;
}

} // namespace detail

// Fan-in scaled symmetric init, zero biases. Deterministic in seed.
inline Model init_model(const ModelArch& arch, std::uint64_t seed) {
    arch.validate();
    Model m{arch, ParameterVector(static_cast<std::size_t>(arch.param_count()), 0.0)};
    Rng rng(seed);
    int off = 0;
    for (int l = 0; l + 1 < static_cast<int>(arch.layer_sizes.size()); ++l) {
        const int in = arch.layer_sizes[l];
        const int out = arch.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (int k = 0; k < in * out; ++k) m.params[off + k] = rng.uniform(-bound, bound);
        off += in * out + out; // biases stay zero
    }
    return m;
}

namespace detail {

struct ForwardTrace {
    // activations[0] is the input; activations[l+1] the output of layer l (post-activation)
    std::vector<std::vector<double>> activations;
    std::vector<double> logits;
};

inline ForwardTrace forward(const Model& m, const std::vector<double>& x) {
    const auto& sz = m.arch.layer_sizes;
    const int layers = m.arch.num_layers();
    ForwardTrace t;
    t.activations.resize(layers + 1);
    t.activations[0] = x;
    int off = 0;
    for (int l = 0; l < layers; ++l) {
        const int in = sz[l];
        const int out = sz[l + 1];
        const double* w = m.params.data() + off;
        const double* b = m.params.data() + off + in * out;
        const std::vector<double>& a = t.activations[l];
        std::vector<double> z(out);
        for (int o = 0; o < out; ++o) {
            double acc = b[o];
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) acc += row[i] * a[i];
            z[o] = acc;
        }
        if (l + 1 < layers && m.arch.activation == Activation::relu)
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        t.activations[l + 1] = std::move(z);
        off += in * out + out;
    }
    t.logits = t.activations.back();
    return t;
}

// log-sum-exp stabilized cross-entropy; returns loss, fills dlogits
inline double softmax_ce(const std::vector<double>& logits, int label,
                         std::vector<double>* dlogits) {
    const int c = static_cast<int>(logits.size());
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    if (dlogits) {
        dlogits->resize(c);
        for (int j = 0; j < c; ++j) (*dlogits)[j] = std::exp(logits[j] - lse);
        (*dlogits)[label] -= 1.0;
    }
    return lse - logits[label];
}

} // namespace detail

inline void require_data_matches(const Model& m, const LabeledDataset& data) {
    if (data.empty()) throw std::domain_error("empty dataset");
    if (data.feature_dim != m.arch.input_dim())
        throw dimension_error("dataset feature dim " + std::to_string(data.feature_dim) +
                              " does not match model input " + std::to_string(m.arch.input_dim()));
    if (data.num_classes > m.arch.output_dim())
        throw dimension_error("dataset has more classes than model outputs");
}

// Mean cross-entropy over the given sample indices (all samples if empty span semantics
// are not needed; callers pass explicit index lists for batches).
inline double mean_loss(const Model& m, const LabeledDataset& data,
                        const std::vector<std::size_t>& idx) {
    double acc = 0.0;
    for (std::size_t s : idx) {
        auto t = detail::forward(m, data.x[s]);
        acc += detail::softmax_ce(t.logits, data.y[s], nullptr);
    }
    return acc / static_cast<double>(idx.size());
}

inline double mean_loss(const Model& m, const LabeledDataset& data) {
    require_data_matches(m, data);
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    return mean_loss(m, data, idx);
}

// Gradient of the mean cross-entropy over the index batch. Exposed so tests can
// check it against central finite differences.
inline ParameterVector gradient(const Model& m, const LabeledDataset& data,
                                const std::vector<std::size_t>& idx, double* loss_out = nullptr) {
    const auto& sz = m.arch.layer_sizes;
    const int layers = m.arch.num_layers();
    ParameterVector grad(m.params.size(), 0.0);
    double loss_acc = 0.0;
    std::vector<double> dlogits;
    for (std::size_t s : idx) {
        auto t = detail::forward(m, data.x[s]);
        loss_acc += detail::softmax_ce(t.logits, data.y[s], &dlogits);
        // backprop
        std::vector<double> delta = dlogits;
        for (int l = layers - 1; l >= 0; --l) {
            const int in = sz[l];
            const int out = sz[l + 1];
            const int off = detail::layer_offset(m.arch, l);
            const double* w = m.params.data() + off;
            const std::vector<double>& a = t.activations[l];
            double* gw = grad.data() + off;
            double* gb = grad.data() + off + in * out;
            for (int o = 0; o < out; ++o) {
                const double d = delta[o];
                double* grow = gw + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) grow[i] += d * a[i];
                gb[o] += d;
            }
            if (l > 0) {
                std::vector<double> prev(in, 0.0);
                for (int o = 0; o < out; ++o) {
                    const double d = delta[o];
                    const double* row = w + static_cast<std::size_t>(o) * in;
                    for (int i = 0; i < in; ++i) prev[i] += d * row[i];
                }
                if (m.arch.activation == Activation::relu)
                    for (int i = 0; i < in; ++i)
                        if (t.activations[l][i] <= 0.0) prev[i] = 0.0;
                delta = std::move(prev);
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (double& g : grad) g *= inv;
    if (loss_out) *loss_out = loss_acc * inv;
    return grad;
}

// Mini-batch SGD from the given starting point; seeded Fisher-Yates shuffle per
// epoch, so the result is a pure function of (global, data, cfg).
inline Model local_train(const Model& global, const LabeledDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    require_data_matches(global, data);
    Model m = global;
    if (cfg.epochs == 0) return m;
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> batch;
    for (int e = 0; e < cfg.epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            batch.assign(order.begin() + start, order.begin() + stop);
            double loss = 0.0;
            ParameterVector g = gradient(m, data, batch, &loss);
            if (!std::isfinite(loss)) throw divergence_error("non-finite training loss");
            for (std::size_t k = 0; k < m.params.size(); ++k)
                m.params[k] -= cfg.learning_rate * g[k];
        }
    }
    return m;
}

// argmax over logits, ties broken by lowest class index
inline int predict(const Model& m, const std::vector<double>& x) {
    auto t = detail::forward(m, x);
    int best = 0;
    for (int j = 1; j < static_cast<int>(t.logits.size()); ++j)
        if (t.logits[j] > t.logits[best]) best = j;
    return best;
}

inline double evaluate(const Model& m, const LabeledDataset& data) {
    require_data_matches(m, data);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < data.size(); ++s)
        if (predict(m, data.x[s]) == data.y[s]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

// canonical flattening helpers: the params vector *is* the flat form, these
// check shape agreement for round-trips
inline ParameterVector flatten(const Model& m) { return m.params; }

inline Model unflatten(const ModelArch& arch, const ParameterVector& v) {
    if (static_cast<int>(v.size()) != arch.param_count())
        throw dimension_error("flat vector length does not match architecture");
    return Model{arch, v};
}

} // namespace flsim
