#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "deferlab/error.hpp"
#include "deferlab/types.hpp"

namespace deferlab {

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

/// log(sum_i exp(v_i)) over all i != skip. Needs at least two entries.
inline double log_sum_exp_excluding(std::span<const double> v, int skip) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(v.size()); ++i)
        if (i != skip) mx = std::max(mx, v[i]);
    double acc = 0.0;
    for (int i = 0; i < static_cast<int>(v.size()); ++i)
        if (i != skip) acc += std::exp(v[i] - mx);
    return mx + std::log(acc);
}

inline double log_add_exp(double a, double b) {
    const double mx = std::max(a, b);
    return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

/// ln(1 + e^x) without overflow.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

/// Max-shifted softmax over an arbitrary finite vector.
inline std::vector<double> softmax(std::span<const double> u) {
    if (u.size() < 2) throw InvalidDimensionError("softmax: need at least 2 entries");
    double mx = u[0];
    for (double x : u) {
        if (!std::isfinite(x)) throw InvalidInputError("softmax: non-finite entry");
        mx = std::max(mx, x);
    }
    std::vector<double> out(u.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        out[i] = std::exp(u[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

/// Asymmetric softmax over K classes and M experts.
///
/// The class block is an ordinary softmax. Each expert dimension is
/// normalized independently against the class block with the top class
/// removed:
///
///   acc_j = exp(u_{K+j}) / (exp(u_{K+j}) + sum_{y<=K} exp(u_y) - max_{y<=K} exp(u_y))
///
/// which keeps every expert estimate inside [0,1] while preserving the
/// argmax across all K+M dimensions. Computed entirely in shifted
/// log space; the subtraction in the denominator is realized as a
/// log-sum-exp over the non-top class entries, never as a difference of
/// exponentials.
inline ProbEstimate asym_softmax_multi(const ScoreVector& u) {
    u.validate();
    const auto cls = u.class_block();
    const int top = argmax(cls);
    const double lse_class = detail::log_sum_exp(cls);
    const double lse_rest = detail::log_sum_exp_excluding(cls, top);

    ProbEstimate out;
    out.bounded = true;
    out.class_probs.resize(cls.size());
    double sum = 0.0;
    for (std::size_t y = 0; y < cls.size(); ++y) {
        out.class_probs[y] = std::exp(cls[y] - lse_class);
        sum += out.class_probs[y];
    }
    for (double& p : out.class_probs) p /= sum;

    out.expert_acc.resize(u.num_experts);
    for (int j = 0; j < u.num_experts; ++j) {
        const double a = u.expert_score(j);
        const double log_denom = detail::log_add_exp(a, lse_rest);
        out.expert_acc[j] = std::exp(a - log_denom);
    }
    return out;
}

/// Single-expert asymmetric softmax.
inline ProbEstimate asym_softmax(const ScoreVector& u) {
    if (u.num_experts != 1)
        throw InvalidDimensionError("asym_softmax: expected exactly 1 expert dimension");
    return asym_softmax_multi(u);
}

/// Fractional-transform estimator induced by the symmetric softmax loss:
/// a plain softmax over all K+1 dimensions followed by division by
/// (1 - psi_{K+1}). The expert estimate is unbounded above.
inline ProbEstimate estimate_ssm(const ScoreVector& u) {
    if (u.num_experts != 1)
        throw InvalidDimensionError("estimate_ssm: expected exactly 1 expert dimension");
    u.validate();
    const std::vector<double> psi = softmax(u.values);
    double class_sum = 0.0;  // exact complement of psi_{K+1}
    for (int y = 0; y < u.num_classes; ++y) class_sum += psi[y];
    const double expert = psi[u.num_classes] / class_sum;
    if (class_sum == 0.0 || !std::isfinite(expert))
        throw OverflowError("estimate_ssm: softmax saturated on the expert dimension");
    ProbEstimate out;
    out.bounded = false;
    out.class_probs.resize(u.num_classes);
    for (int y = 0; y < u.num_classes; ++y) out.class_probs[y] = psi[y] / class_sum;
    out.expert_acc = {expert};
    return out;
}

/// One-vs-all estimator: every dimension independently through the
/// logistic inverse link. The raw sigmoids are retained (they are the
/// per-dimension probability estimates); class_probs carries the
/// renormalized simplex for reporting. Renormalization happens in log
/// space so deeply negative scores cannot produce 0/0.
inline ProbEstimate estimate_ova(const ScoreVector& u) {
    u.validate();
    ProbEstimate out;
    out.bounded = true;
    out.raw_class.resize(u.num_classes);
    std::vector<double> log_sig(u.num_classes);
    for (int y = 0; y < u.num_classes; ++y) {
        out.raw_class[y] = detail::sigmoid(u.values[y]);
        log_sig[y] = -detail::softplus(-u.values[y]);
    }
    const double lse = detail::log_sum_exp(log_sig);
    out.class_probs.resize(u.num_classes);
    for (int y = 0; y < u.num_classes; ++y) out.class_probs[y] = std::exp(log_sig[y] - lse);
    out.expert_acc.resize(u.num_experts);
    for (int j = 0; j < u.num_experts; ++j)
        out.expert_acc[j] = detail::sigmoid(u.expert_score(j));
    return out;
}

/// Fractional-transform estimator induced by the symmetric one-vs-all
/// loss: per-dimension sigmoids divided by (1 - sigmoid(u_{K+1})).
/// Unbounded above, like estimate_ssm.
inline ProbEstimate estimate_sova(const ScoreVector& u) {
    if (u.num_experts != 1)
        throw InvalidDimensionError("estimate_sova: expected exactly 1 expert dimension");
    u.validate();
    const double s_expert = detail::sigmoid(u.values[u.num_classes]);
    const double complement = detail::sigmoid(-u.values[u.num_classes]);
    if (complement == 0.0 || !std::isfinite(s_expert / complement))
        throw OverflowError("estimate_sova: sigmoid saturated on the expert dimension");
    ProbEstimate out = estimate_ova(u);  // reuse sigmoids + simplex renormalization
    out.bounded = false;
    out.expert_acc = {s_expert / complement};
    return out;
}

/// Clamp expert-accuracy estimates into [0,1]; class probabilities are
/// left untouched.
inline ProbEstimate clip_estimate(ProbEstimate e) {
    for (double& p : e.expert_acc) p = std::clamp(p, 0.0, 1.0);
    e.bounded = true;
    return e;
}

}  // namespace deferlab
