#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "deferlab/error.hpp"
#include "deferlab/estimators.hpp"
#include "deferlab/rng.hpp"
#include "deferlab/surrogates.hpp"
#include "deferlab/types.hpp"

namespace deferlab {

/// Optimal rule at a known conditional point: defer to the best expert
/// exactly when that expert beats the best class posterior; ties go to
/// predicting.
inline Decision bayes_decision(const ConditionalPoint& c) {
    c.validate();
    const int best_class = argmax(c.eta);
    const int best_expert = argmax(c.expert_acc);
    if (c.eta[best_class] < c.expert_acc[best_expert]) return Decision::defer(best_expert);
    return Decision::predict(best_class);
}

/// Decision induced by a score vector: defer iff the best expert score
/// strictly exceeds every class score.
inline Decision decide(const ScoreVector& u) {
    u.validate();
    const int best_class = argmax(u.class_block());
    const int best_expert = argmax(u.expert_block());
    if (u.expert_score(best_expert) > u.values[best_class]) return Decision::defer(best_expert);
    return Decision::predict(best_class);
}

/// 0-1 deferral loss: one when the kept prediction is wrong or the
/// consulted expert is wrong.
inline int deferral_loss(const Decision& d, int label, std::span<const int> experts) {
    if (d.is_defer()) {
        if (d.index < 0 || d.index >= static_cast<int>(experts.size()))
            throw InvalidInputError("deferral_loss: expert index out of range");
        return experts[d.index] != label ? 1 : 0;
    }
    return d.index != label ? 1 : 0;
}

inline int deferral_loss(const Decision& d, int label, int expert_pred) {
    const int m[1] = {expert_pred};
    return deferral_loss(d, label, std::span<const int>(m, 1));
}

namespace detail {

/// Expectation of f(y, m) over the expert panel at a conditional point,
/// for f affine in the per-expert correctness indicators (all shipped
/// losses are: each expert contributes an additive term switching on
/// [m_j == y]). Evaluates f at "all experts wrong" plus one flip per
/// expert instead of all 2^M patterns.
template <typename F>
double expert_expectation(const ConditionalPoint& c, int label, F&& f) {
    const int k = static_cast<int>(c.eta.size());
    const int m = static_cast<int>(c.expert_acc.size());
    std::vector<int> preds(m, (label + 1) % k);
    double value = f(std::span<const int>(preds));
    const double base = value;
    for (int j = 0; j < m; ++j) {
        preds[j] = label;
        value += c.expert_acc[j] * (f(std::span<const int>(preds)) - base);
        preds[j] = (label + 1) % k;
    }
    return value;
}

}  // namespace detail

/// Pointwise surrogate risk  sum_y eta_y E_{m|y}[loss(kind, u, y, m)].
/// The expert marginal is class-independent: expert j is correct with
/// probability c.expert_acc[j] regardless of y, and the losses depend on
/// m only through correctness, so the expectation is exact.
inline double conditional_risk(LossKind kind, const ScoreVector& u,
                               const ConditionalPoint& c) {
    c.validate();
    if (c.num_classes() != u.num_classes || c.num_experts() != u.num_experts)
        throw InvalidDimensionError("conditional_risk: point/score dimension mismatch");
    double risk = 0.0;
    for (int y = 0; y < u.num_classes; ++y)
        risk += c.eta[y] * detail::expert_expectation(
                               c, y, [&](std::span<const int> m) { return loss(kind, u, y, m); });
    return risk;
}

/// Gradient of conditional_risk with respect to the scores.
inline std::vector<double> conditional_risk_grad(LossKind kind, const ScoreVector& u,
                                                 const ConditionalPoint& c) {
    std::vector<double> g(u.values.size(), 0.0);
    for (int y = 0; y < u.num_classes; ++y) {
        std::vector<int> preds(u.num_experts, (y + 1) % u.num_classes);
        const std::vector<double> base = grad(kind, u, y, preds);
        std::vector<double> expect = base;
        for (int j = 0; j < u.num_experts; ++j) {
            preds[j] = y;
            const std::vector<double> flipped = grad(kind, u, y, preds);
            for (std::size_t i = 0; i < g.size(); ++i)
                expect[i] += c.expert_acc[j] * (flipped[i] - base[i]);
            preds[j] = (y + 1) % u.num_classes;
        }
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.eta[y] * expect[i];
    }
    return g;
}

struct MinimizeOptions {
    double step = 0.5;
    int max_iters = 10000;
    double grad_tol = 1e-6;   // stationarity requirement on exit
    double early_tol = 1e-8;  // stop iterating once this tight
};

namespace detail {

inline void check_interior(const ConditionalPoint& c) {
    for (double e : c.eta)
        if (e <= 0.0)
            throw BoundaryError("minimize_conditional: class posterior at 0, minimizer diverges");
    for (double p : c.expert_acc)
        if (p <= 0.0 || p >= 1.0)
            throw BoundaryError("minimize_conditional: expert accuracy at {0,1}, "
                                "minimizer diverges");
}

inline bool shift_invariant(LossKind kind) {
    return kind == LossKind::asym_softmax || kind == LossKind::asym_softmax_multi ||
           kind == LossKind::sym_softmax;
}

}  // namespace detail

/// Closed-form minimizer of the asymmetric-softmax conditional risk:
/// class scores ln eta_y, expert scores ln(p_j (1 - max eta) / (1 - p_j)).
/// Feeding the result back through asym_softmax recovers (eta, p).
inline ScoreVector minimize_conditional_closed_form(const ConditionalPoint& c) {
    c.validate();
    detail::check_interior(c);
    const int k = c.num_classes();
    const int m = c.num_experts();
    std::vector<double> u(k + m);
    double eta_max = 0.0;
    for (int y = 0; y < k; ++y) {
        u[y] = std::log(c.eta[y]);
        eta_max = std::max(eta_max, c.eta[y]);
    }
    for (int j = 0; j < m; ++j) {
        const double p = c.expert_acc[j];
        u[k + j] = std::log(p * (1.0 - eta_max) / (1.0 - p));
    }
    return ScoreVector(std::move(u), k, m);
}

/// Plain gradient descent on the conditional risk from zero scores.
/// For losses invariant under a common shift of all scores the result is
/// moved to the canonical gauge where the class-block exponentials sum
/// to 1, making it directly comparable to the closed form.
inline ScoreVector minimize_conditional_numeric(LossKind kind, const ConditionalPoint& c,
                                                const MinimizeOptions& opts = {}) {
    c.validate();
    detail::check_interior(c);
    const int k = c.num_classes();
    const int m = c.num_experts();
    ScoreVector u(std::vector<double>(k + m, 0.0), k, m);
    double norm = 0.0;
    for (int it = 0; it < opts.max_iters; ++it) {
        const std::vector<double> g = conditional_risk_grad(kind, u, c);
        norm = 0.0;
        for (double x : g) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < opts.early_tol) break;
        for (std::size_t i = 0; i < g.size(); ++i) u.values[i] -= opts.step * g[i];
    }
    if (!(norm < opts.grad_tol))
        throw ConvergenceError("minimize_conditional: gradient norm " + std::to_string(norm) +
                                   " after " + std::to_string(opts.max_iters) + " iterations",
                               norm);
    if (detail::shift_invariant(kind)) {
        const double shift = detail::log_sum_exp(u.class_block());
        for (double& x : u.values) x -= shift;
    }
    return u;
}

/// Minimizer of the pointwise surrogate risk: closed form for the
/// asymmetric softmax, gradient descent for every other kind.
inline ScoreVector minimize_conditional(LossKind kind, const ConditionalPoint& c,
                                        const MinimizeOptions& opts = {}) {
    if (kind == LossKind::asym_softmax || kind == LossKind::asym_softmax_multi)
        return minimize_conditional_closed_form(c);
    return minimize_conditional_numeric(kind, c, opts);
}

struct RegretCheck {
    double lhs = 0.0;    // worst pointwise 0-1 excess (classifier, deferral)
    double rhs = 0.0;    // sqrt(2 * surrogate excess)
    bool holds = false;  // lhs <= rhs + 1e-9
};

/// Pointwise regret-transfer check for the asymmetric-softmax loss: both
/// the classifier's 0-1 excess and the full deferral 0-1 excess must be
/// covered by sqrt(2 * (R(u) - R(u*))).
inline RegretCheck check_regret_bound(const ScoreVector& u, const ConditionalPoint& c) {
    c.validate();
    const LossKind kind =
        u.num_experts == 1 ? LossKind::asym_softmax : LossKind::asym_softmax_multi;
    const double eta_max = c.eta[argmax(c.eta)];
    const double acc_max = c.expert_acc[argmax(c.expert_acc)];

    const double classifier_excess = eta_max - c.eta[argmax(u.class_block())];
    const Decision d = decide(u);
    const double decision_accuracy =
        d.is_defer() ? c.expert_acc[d.index] : c.eta[d.index];
    const double deferral_excess = std::max(eta_max, acc_max) - decision_accuracy;

    const ScoreVector best = minimize_conditional(kind, c);
    const double excess_risk =
        std::max(0.0, conditional_risk(kind, u, c) - conditional_risk(kind, best, c));

    RegretCheck r;
    r.lhs = std::max(classifier_excess, deferral_excess);
    r.rhs = std::sqrt(2.0 * excess_risk);
    r.holds = r.lhs <= r.rhs + 1e-9;
    return r;
}

/// One synthetic expert: accurate with probability `strong_accuracy` on
/// the first `strong_classes` labels, uniformly random elsewhere.
struct ExpertSpec {
    int strong_classes = 1;        // k
    double strong_accuracy = 1.0;  // p
};

/// Isotropic Gaussian mixture with uniform class priors; posteriors are
/// available in closed form, which is what lets calibration be scored
/// against ground truth.
struct SyntheticSpec {
    int k_classes = 2;
    int feature_dim = 1;
    std::vector<std::vector<double>> class_means;  // K x d
    double sigma = 1.0;
    std::vector<ExpertSpec> experts;
    int n = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (k_classes < 2) throw InvalidInputError("synthetic spec: k_classes must be >= 2");
        if (feature_dim < 1) throw InvalidInputError("synthetic spec: feature_dim must be >= 1");
        if (!(sigma > 0.0)) throw InvalidInputError("synthetic spec: sigma must be > 0");
        if (n < 1) throw InvalidInputError("synthetic spec: n must be >= 1");
        if (experts.empty()) throw InvalidInputError("synthetic spec: need at least one expert");
        if (class_means.size() != static_cast<std::size_t>(k_classes))
            throw InvalidInputError("synthetic spec: need one mean vector per class");
        for (const auto& mu : class_means) {
            if (mu.size() != static_cast<std::size_t>(feature_dim))
                throw InvalidInputError("synthetic spec: mean vector dimension mismatch");
            for (double v : mu)
                if (!std::isfinite(v))
                    throw InvalidInputError("synthetic spec: non-finite class mean");
        }
        for (const auto& e : experts) {
            if (e.strong_classes < 1 || e.strong_classes > k_classes)
                throw InvalidInputError("synthetic spec: expert k outside {1..K}");
            if (!(e.strong_accuracy >= 0.0 && e.strong_accuracy <= 1.0))
                throw InvalidInputError("synthetic spec: expert p outside [0,1]");
        }
    }
};

struct SyntheticData {
    std::vector<LabeledSample> samples;
    std::vector<ConditionalPoint> truth;  // one per sample
    double bayes_risk = 0.0;              // mean pointwise risk of the optimal rule
};

/// Ground-truth conditional point for a feature vector under a sampling
/// spec.
inline ConditionalPoint synthetic_truth(const SyntheticSpec& spec,
                                        std::span<const double> x) {
    std::vector<double> log_density(spec.k_classes);
    for (int c = 0; c < spec.k_classes; ++c) {
        double sq = 0.0;
        for (int f = 0; f < spec.feature_dim; ++f) {
            const double d = x[f] - spec.class_means[c][f];
            sq += d * d;
        }
        log_density[c] = -sq / (2.0 * spec.sigma * spec.sigma);
    }
    ConditionalPoint point;
    point.eta = softmax(log_density);  // uniform priors cancel
    point.expert_acc.resize(spec.experts.size());
    for (std::size_t j = 0; j < spec.experts.size(); ++j) {
        double acc = 0.0;
        for (int y = 0; y < spec.k_classes; ++y) {
            const double class_acc = y < spec.experts[j].strong_classes
                                         ? spec.experts[j].strong_accuracy
                                         : 1.0 / spec.k_classes;
            acc += point.eta[y] * class_acc;
        }
        point.expert_acc[j] = acc;
    }
    return point;
}

/// Draw a labeled dataset with per-sample ground truth. Deterministic
/// given spec.seed: a single stream, fixed draw order per sample
/// (label, features, then each expert).
inline SyntheticData sample_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SyntheticData data;
    data.samples.reserve(spec.n);
    data.truth.reserve(spec.n);
    double risk_sum = 0.0;
    for (int i = 0; i < spec.n; ++i) {
        LabeledSample s;
        s.label = rng.uniform_int(spec.k_classes);
        s.features.resize(spec.feature_dim);
        for (int f = 0; f < spec.feature_dim; ++f)
            s.features[f] = rng.normal(spec.class_means[s.label][f], spec.sigma);
        s.expert_preds.resize(spec.experts.size());
        for (std::size_t j = 0; j < spec.experts.size(); ++j) {
            const ExpertSpec& e = spec.experts[j];
            if (s.label < e.strong_classes) {
                if (rng.uniform() < e.strong_accuracy) {
                    s.expert_preds[j] = s.label;
                } else {
                    // uniform over the K-1 wrong labels, so accuracy on
                    // strong classes is exactly p
                    const int w = rng.uniform_int(spec.k_classes - 1);
                    s.expert_preds[j] = w >= s.label ? w + 1 : w;
                }
            } else {
                s.expert_preds[j] = rng.uniform_int(spec.k_classes);
            }
        }
        ConditionalPoint truth = synthetic_truth(spec, s.features);
        const double eta_max = truth.eta[argmax(truth.eta)];
        const double acc_max = truth.expert_acc[argmax(truth.expert_acc)];
        risk_sum += 1.0 - std::max(eta_max, acc_max);
        data.samples.push_back(std::move(s));
        data.truth.push_back(std::move(truth));
    }
    data.bayes_risk = risk_sum / spec.n;
    return data;
}

}  // namespace deferlab
