#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "deferlab/error.hpp"
#include "deferlab/estimators.hpp"
#include "deferlab/oracle.hpp"
#include "deferlab/rng.hpp"
#include "deferlab/surrogates.hpp"
#include "deferlab/types.hpp"

namespace deferlab {

enum class Arch { linear, mlp };

inline const char* to_string(Arch a) { return a == Arch::linear ? "linear" : "mlp"; }

inline Arch arch_from_string(const std::string& s) {
    if (s == "linear") return Arch::linear;
    if (s == "mlp") return Arch::mlp;
    throw InvalidInputError("unknown architecture '" + s + "' (expected linear|mlp)");
}

/// Scorer mapping features to K+M scores: a single affine map, or
/// affine -> rectifier -> affine when hidden > 0.
struct ScorerModel {
    Arch arch = Arch::linear;
    int input_dim = 0;
    int num_classes = 0;
    int num_experts = 0;
    int hidden = 0;  // width of the rectifier layer; 0 for linear

    Matrix w1;                // linear: (K+M) x d, mlp: hidden x d
    std::vector<double> b1;   // linear: K+M,       mlp: hidden
    Matrix w2;                // mlp only: (K+M) x hidden
    std::vector<double> b2;   // mlp only: K+M

    int output_dim() const { return num_classes + num_experts; }

    std::size_t parameter_count() const {
        std::size_t n = w1.data.size() + b1.size() + w2.data.size() + b2.size();
        return n;
    }
};

/// Fan-in-scaled uniform initialization, zero biases; deterministic per
/// seed.
inline ScorerModel init_model(Arch arch, int input_dim, int num_classes, int num_experts,
                              std::uint64_t seed, int hidden = 0) {
    if (input_dim < 1 || num_classes < 2 || num_experts < 1)
        throw InvalidInputError("init_model: dimensions must be positive (K >= 2, M >= 1)");
    if (arch == Arch::mlp && hidden < 1)
        throw InvalidInputError("init_model: mlp requires a positive hidden width");
    ScorerModel model;
    model.arch = arch;
    model.input_dim = input_dim;
    model.num_classes = num_classes;
    model.num_experts = num_experts;
    model.hidden = arch == Arch::mlp ? hidden : 0;

    Rng rng(seed);
    auto fill = [&](Matrix& w, int rows, int cols) {
        w = Matrix(rows, cols);
        const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
        for (double& v : w.data) v = rng.uniform(-scale, scale);
    };
    const int out = model.output_dim();
    if (arch == Arch::linear) {
        fill(model.w1, out, input_dim);
        model.b1.assign(out, 0.0);
    } else {
        fill(model.w1, hidden, input_dim);
        model.b1.assign(hidden, 0.0);
        fill(model.w2, out, hidden);
        model.b2.assign(out, 0.0);
    }
    return model;
}

namespace detail {

inline void affine(const Matrix& w, std::span<const double> b, std::span<const double> x,
                   std::vector<double>& out) {
    out.assign(w.rows, 0.0);
    for (int r = 0; r < w.rows; ++r) {
        double acc = b[r];
        const double* row = w.data.data() + static_cast<std::size_t>(r) * w.cols;
        for (int c = 0; c < w.cols; ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
}

}  // namespace detail

inline ScoreVector forward(const ScorerModel& model, std::span<const double> features) {
    if (static_cast<int>(features.size()) != model.input_dim)
        throw InvalidInputError("forward: feature dimension " +
                                std::to_string(features.size()) + " != " +
                                std::to_string(model.input_dim));
    std::vector<double> out;
    if (model.arch == Arch::linear) {
        detail::affine(model.w1, model.b1, features, out);
    } else {
        std::vector<double> h;
        detail::affine(model.w1, model.b1, features, h);
        for (double& v : h) v = std::max(v, 0.0);
        detail::affine(model.w2, model.b2, h, out);
    }
    return ScoreVector(std::move(out), model.num_classes, model.num_experts);
}

/// Parameter gradients, laid out like the model.
struct ModelGrad {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    explicit ModelGrad(const ScorerModel& m)
        : w1(m.w1.rows, m.w1.cols),
          b1(m.b1.size(), 0.0),
          w2(m.w2.rows, m.w2.cols),
          b2(m.b2.size(), 0.0) {}
};

/// Accumulate d(loss)/d(params) for one sample given d(loss)/d(scores).
inline void backward(const ScorerModel& model, std::span<const double> features,
                     std::span<const double> score_grad, ModelGrad& grads) {
    if (model.arch == Arch::linear) {
        for (int r = 0; r < model.w1.rows; ++r) {
            const double g = score_grad[r];
            grads.b1[r] += g;
            double* row = grads.w1.data.data() + static_cast<std::size_t>(r) * model.w1.cols;
            for (int c = 0; c < model.w1.cols; ++c) row[c] += g * features[c];
        }
        return;
    }
    std::vector<double> pre;
    detail::affine(model.w1, model.b1, features, pre);
    std::vector<double> act(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) act[i] = std::max(pre[i], 0.0);

    std::vector<double> hidden_grad(model.hidden, 0.0);
    for (int r = 0; r < model.w2.rows; ++r) {
        const double g = score_grad[r];
        grads.b2[r] += g;
        const double* wrow = model.w2.data.data() + static_cast<std::size_t>(r) * model.w2.cols;
        double* grow = grads.w2.data.data() + static_cast<std::size_t>(r) * model.w2.cols;
        for (int c = 0; c < model.w2.cols; ++c) {
            grow[c] += g * act[c];
            hidden_grad[c] += g * wrow[c];
        }
    }
    for (int r = 0; r < model.hidden; ++r) {
        if (pre[r] <= 0.0) continue;  // rectifier gate; subgradient 0 at the kink
        const double g = hidden_grad[r];
        grads.b1[r] += g;
        double* row = grads.w1.data.data() + static_cast<std::size_t>(r) * model.w1.cols;
        for (int c = 0; c < model.w1.cols; ++c) row[c] += g * features[c];
    }
}

enum class Optimizer { sgd_cosine, adam };

inline const char* to_string(Optimizer o) {
    return o == Optimizer::sgd_cosine ? "sgd_cosine" : "adam";
}

inline Optimizer optimizer_from_string(const std::string& s) {
    if (s == "sgd_cosine") return Optimizer::sgd_cosine;
    if (s == "adam") return Optimizer::adam;
    throw InvalidInputError("unknown optimizer '" + s + "' (expected sgd_cosine|adam)");
}

struct TrainConfig {
    LossKind loss = LossKind::asym_softmax;
    Optimizer optimizer = Optimizer::sgd_cosine;
    double learning_rate = 0.1;
    int epochs = 1;
    int batch_size = 128;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate >= 0.0))
            throw InvalidInputError("train config: learning rate must be >= 0");
        if (epochs < 1) throw InvalidInputError("train config: epochs must be >= 1");
        if (batch_size < 1) throw InvalidInputError("train config: batch size must be >= 1");
        if (weight_decay < 0.0)
            throw InvalidInputError("train config: weight decay must be >= 0");
    }
};

struct TrainResult {
    ScorerModel model;
    std::vector<double> history;  // mean training loss per epoch
};

namespace detail {

/// Adam state per parameter tensor.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
};

struct OptimizerState {
    AdamState w1, b1, w2, b2;
    long step = 0;

    explicit OptimizerState(const ScorerModel& model) {
        w1.m.assign(model.w1.data.size(), 0.0);
        w1.v.assign(model.w1.data.size(), 0.0);
        b1.m.assign(model.b1.size(), 0.0);
        b1.v.assign(model.b1.size(), 0.0);
        w2.m.assign(model.w2.data.size(), 0.0);
        w2.v.assign(model.w2.data.size(), 0.0);
        b2.m.assign(model.b2.size(), 0.0);
        b2.v.assign(model.b2.size(), 0.0);
    }
};

inline void apply_update(std::vector<double>& params, std::span<const double> grad,
                         AdamState& adam, const TrainConfig& cfg, double lr, long step,
                         bool decay) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double update;
        if (cfg.optimizer == Optimizer::adam) {
            adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * grad[i];
            adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double mhat = adam.m[i] / (1.0 - std::pow(beta1, static_cast<double>(step)));
            const double vhat = adam.v[i] / (1.0 - std::pow(beta2, static_cast<double>(step)));
            update = mhat / (std::sqrt(vhat) + eps);
        } else {
            update = grad[i];
        }
        // decoupled weight decay: applied to the parameter directly, not
        // folded into the gradient; biases are not decayed
        if (decay && cfg.weight_decay > 0.0) params[i] -= lr * cfg.weight_decay * params[i];
        params[i] -= lr * update;
    }
}

}  // namespace detail

/// Cosine-annealed step size over `total_steps` batch updates.
inline double cosine_lr(double base, long step, long total_steps) {
    if (total_steps <= 0) return base;
    return base * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                           static_cast<double>(total_steps)));
}

/// Minibatch first-order training. Deterministic per (cfg.seed, data
/// order): epoch shuffles use a seed derived from (seed, epoch), batches
/// are visited and reduced sequentially.
inline TrainResult train(ScorerModel model, std::span<const LabeledSample> data,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw InvalidInputError("train: empty dataset");
    const bool multi = cfg.loss == LossKind::asym_softmax_multi;
    if (!multi && model.num_experts != 1)
        throw InvalidInputError("train: single-expert loss on a multi-expert model");
    for (const auto& s : data)
        if (static_cast<int>(s.features.size()) != model.input_dim ||
            static_cast<int>(s.expert_preds.size()) != model.num_experts)
            throw InvalidInputError("train: sample dimensions do not match the model");

    const int n = static_cast<int>(data.size());
    const long batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = batches_per_epoch * cfg.epochs;

    detail::OptimizerState opt(model);
    std::vector<int> order(n);
    std::vector<double> scratch;
    std::vector<double> hidden_scratch;

    TrainResult result;
    result.history.reserve(cfg.epochs);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch));
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        for (int start = 0, batch_index = 0; start < n;
             start += cfg.batch_size, ++batch_index) {
            const int rows = std::min(cfg.batch_size, n - start);
            Matrix scores(rows, model.output_dim());
            std::vector<int> labels(rows);
            std::vector<std::vector<int>> experts(rows);
            bool finite = true;
            for (int r = 0; r < rows; ++r) {
                const LabeledSample& s = data[order[start + r]];
                if (model.arch == Arch::linear) {
                    detail::affine(model.w1, model.b1, s.features, scratch);
                } else {
                    detail::affine(model.w1, model.b1, s.features, hidden_scratch);
                    for (double& v : hidden_scratch) v = std::max(v, 0.0);
                    detail::affine(model.w2, model.b2, hidden_scratch, scratch);
                }
                for (int c = 0; c < scores.cols; ++c) {
                    scores(r, c) = scratch[c];
                    finite = finite && std::isfinite(scratch[c]);
                }
                labels[r] = s.label;
                experts[r] = s.expert_preds;
            }
            if (!finite)
                throw DivergedError("train: non-finite scores at epoch " +
                                        std::to_string(epoch) + ", batch " +
                                        std::to_string(batch_index),
                                    epoch, batch_index);
            const BatchLossGrad bg =
                batch_loss_and_grad(cfg.loss, scores, model.num_classes, labels, experts);
            if (!std::isfinite(bg.mean_loss))
                throw DivergedError("train: non-finite loss at epoch " +
                                        std::to_string(epoch) + ", batch " +
                                        std::to_string(batch_index),
                                    epoch, batch_index);
            epoch_loss_sum += bg.mean_loss * rows;

            ModelGrad grads(model);
            for (int r = 0; r < rows; ++r)
                backward(model, data[order[start + r]].features, bg.score_grad.row(r), grads);

            const double lr = cfg.optimizer == Optimizer::sgd_cosine
                                  ? cosine_lr(cfg.learning_rate, step, total_steps)
                                  : cfg.learning_rate;
            ++step;
            detail::apply_update(model.w1.data, grads.w1.data, opt.w1, cfg, lr, step, true);
            detail::apply_update(model.b1, grads.b1, opt.b1, cfg, lr, step, false);
            if (model.arch == Arch::mlp) {
                detail::apply_update(model.w2.data, grads.w2.data, opt.w2, cfg, lr, step, true);
                detail::apply_update(model.b2, grads.b2, opt.b2, cfg, lr, step, false);
            }
        }
        result.history.push_back(epoch_loss_sum / n);
    }
    result.model = std::move(model);
    return result;
}

/// Estimator paired to the loss a model was trained with: bounded
/// estimators pass through, unbounded ones are clipped into [0,1].
inline ProbEstimate estimate_for_loss(LossKind kind, const ScoreVector& u) {
    switch (kind) {
        case LossKind::asym_softmax: return asym_softmax(u);
        case LossKind::asym_softmax_multi: return asym_softmax_multi(u);
        case LossKind::sym_softmax: return clip_estimate(estimate_ssm(u));
        case LossKind::asym_ova: return estimate_ova(u);
        case LossKind::sym_ova: return clip_estimate(estimate_sova(u));
    }
    throw InvalidInputError("estimate_for_loss: unknown loss kind");
}

struct Evaluation {
    std::vector<Decision> decisions;
    std::vector<ProbEstimate> estimates;
    std::vector<int> deferral_losses;  // 0/1 per sample
};

inline Evaluation evaluate(const ScorerModel& model, std::span<const LabeledSample> data,
                           LossKind kind) {
    Evaluation out;
    out.decisions.reserve(data.size());
    out.estimates.reserve(data.size());
    out.deferral_losses.reserve(data.size());
    for (const auto& s : data) {
        const ScoreVector u = forward(model, s.features);
        const Decision d = decide(u);
        out.decisions.push_back(d);
        out.estimates.push_back(estimate_for_loss(kind, u));
        out.deferral_losses.push_back(deferral_loss(d, s.label, s.expert_preds));
    }
    return out;
}

}  // namespace deferlab
