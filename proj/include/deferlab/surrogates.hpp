#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "deferlab/error.hpp"
#include "deferlab/estimators.hpp"
#include "deferlab/types.hpp"

namespace deferlab {

/// The surrogate-loss family. Prefixes: asym_* losses pair with bounded
/// estimators, sym_* losses with the unbounded fractional-transform ones.
/// The one-vs-all kinds use the logistic binary loss throughout.
enum class LossKind {
    asym_softmax,        // cross-entropy on the asymmetric softmax
    sym_softmax,         // softmax cross-entropy over K+1 dimensions
    asym_ova,            // one-vs-all with sign-flipped deferral slot
    sym_ova,             // plain one-vs-all over K+1 dimensions
    asym_softmax_multi,  // multi-expert extension of asym_softmax
};

/// Multiclass losses pluggable into the generic deferral formulation
///   L(u, y, m) = phi(u, y) + [m == y] * phi(u, K+1).
enum class MulticlassLoss {
    ce_symmetric,       // softmax cross-entropy; symmetric in all dims
    phi_asym_softmax,   // asymmetric loss recovering LossKind::asym_softmax
    phi_asym_ova,       // asymmetric loss recovering LossKind::asym_ova
};

inline const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::asym_softmax: return "asm";
        case LossKind::sym_softmax: return "ssm";
        case LossKind::asym_ova: return "aova";
        case LossKind::sym_ova: return "sova";
        case LossKind::asym_softmax_multi: return "asm_multi";
    }
    return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "asm") return LossKind::asym_softmax;
    if (s == "ssm") return LossKind::sym_softmax;
    if (s == "aova") return LossKind::asym_ova;
    if (s == "sova") return LossKind::sym_ova;
    if (s == "asm_multi") return LossKind::asym_softmax_multi;
    throw InvalidInputError("unknown loss kind '" + s +
                            "' (expected asm|ssm|aova|sova|asm_multi)");
}

namespace detail {

inline void check_labels(const ScoreVector& u, int label, std::span<const int> experts,
                         bool multi_expert) {
    if (!multi_expert && u.num_experts != 1)
        throw InvalidDimensionError("loss: this loss kind is single-expert (M=1)");
    if (static_cast<int>(experts.size()) != u.num_experts)
        throw InvalidInputError("loss: got " + std::to_string(experts.size()) +
                                " expert predictions for M=" + std::to_string(u.num_experts));
    if (label < 0 || label >= u.num_classes)
        throw InvalidInputError("loss: label " + std::to_string(label) + " outside {0.." +
                                std::to_string(u.num_classes - 1) + "}");
    for (int m : experts)
        if (m < 0 || m >= u.num_classes)
            throw InvalidInputError("loss: expert prediction " + std::to_string(m) +
                                    " outside {0.." + std::to_string(u.num_classes - 1) + "}");
}

/// Shared log-space quantities of the asymmetric softmax.
struct AsymParts {
    int top;           // argmax of the class block (ties to smallest index)
    double lse_class;  // log sum_{y<=K} exp(u_y)
    double lse_rest;   // log (sum_{y<=K} exp(u_y) - exp(u_top))
};

inline AsymParts asym_parts(const ScoreVector& u) {
    const auto cls = u.class_block();
    AsymParts p;
    p.top = argmax(cls);
    p.lse_class = log_sum_exp(cls);
    p.lse_rest = log_sum_exp_excluding(cls, p.top);
    return p;
}

inline double asym_loss(const ScoreVector& u, int label, std::span<const int> experts) {
    const AsymParts p = asym_parts(u);
    double total = p.lse_class - u.values[label];
    for (int j = 0; j < u.num_experts; ++j) {
        const double a = u.expert_score(j);
        const double log_denom = log_add_exp(a, p.lse_rest);
        // -log acc_j when the expert is right, -log(1 - acc_j) otherwise
        total += (experts[j] == label) ? (log_denom - a) : (log_denom - p.lse_rest);
    }
    return total;
}

inline std::vector<double> asym_grad(const ScoreVector& u, int label,
                                     std::span<const int> experts) {
    const AsymParts p = asym_parts(u);
    std::vector<double> g(u.values.size(), 0.0);
    for (int i = 0; i < u.num_classes; ++i)
        g[i] = std::exp(u.values[i] - p.lse_class) - (i == label ? 1.0 : 0.0);
    for (int j = 0; j < u.num_experts; ++j) {
        const double a = u.expert_score(j);
        const double log_denom = log_add_exp(a, p.lse_rest);
        const double acc = std::exp(a - log_denom);
        const double comp = std::exp(p.lse_rest - log_denom);  // 1 - acc, stably
        if (experts[j] == label) {
            g[u.num_classes + j] = -comp;
            for (int i = 0; i < u.num_classes; ++i)
                if (i != p.top) g[i] += std::exp(u.values[i] - log_denom);
        } else {
            g[u.num_classes + j] = acc;
            for (int i = 0; i < u.num_classes; ++i)
                if (i != p.top) g[i] -= std::exp(u.values[i] - p.lse_rest) * acc;
        }
    }
    return g;
}

}  // namespace detail

/// Evaluate the multiclass loss phi(u, dim) over the K+1 augmented
/// dimensions of a single-expert score vector; dim == K addresses the
/// deferral slot.
inline double multiclass_phi(MulticlassLoss phi, const ScoreVector& u, int dim) {
    if (u.num_experts != 1)
        throw InvalidDimensionError("multiclass_phi: defined on K+1 dims (M=1)");
    const int k = u.num_classes;
    if (dim < 0 || dim > k) throw InvalidInputError("multiclass_phi: dim outside {0..K}");
    switch (phi) {
        case MulticlassLoss::ce_symmetric:
            return detail::log_sum_exp(u.values) - u.values[dim];
        case MulticlassLoss::phi_asym_softmax: {
            const detail::AsymParts p = detail::asym_parts(u);
            const double a = u.expert_score(0);
            const double log_denom = detail::log_add_exp(a, p.lse_rest);
            if (dim < k) return (p.lse_class - u.values[dim]) + (log_denom - p.lse_rest);
            return (log_denom - a) + (p.lse_rest - log_denom);
        }
        case MulticlassLoss::phi_asym_ova: {
            const double xi = detail::softplus(-u.values[dim]);
            if (dim == k) return xi - detail::softplus(u.values[dim]);
            double total = xi;
            for (int i = 0; i <= k; ++i)
                if (i != dim) total += detail::softplus(u.values[i]);
            return total;
        }
    }
    throw InvalidInputError("multiclass_phi: unknown loss tag");
}

/// Deferral surrogate loss for one sample.
inline double loss(LossKind kind, const ScoreVector& u, int label,
                   std::span<const int> experts) {
    u.validate();
    detail::check_labels(u, label, experts, kind == LossKind::asym_softmax_multi);
    switch (kind) {
        case LossKind::asym_softmax:
        case LossKind::asym_softmax_multi:
            return detail::asym_loss(u, label, experts);
        case LossKind::sym_softmax: {
            const double lse = detail::log_sum_exp(u.values);
            double total = lse - u.values[label];
            if (experts[0] == label) total += lse - u.values[u.num_classes];
            return total;
        }
        case LossKind::asym_ova: {
            double total = detail::softplus(-u.values[label]);
            for (int i = 0; i <= u.num_classes; ++i)
                if (i != label) total += detail::softplus(u.values[i]);
            if (experts[0] == label)
                total += detail::softplus(-u.values[u.num_classes]) -
                         detail::softplus(u.values[u.num_classes]);
            return total;
        }
        case LossKind::sym_ova: {
            auto phi = [&](int dim) {
                double t = detail::softplus(-u.values[dim]);
                for (int i = 0; i <= u.num_classes; ++i)
                    if (i != dim) t += detail::softplus(u.values[i]);
                return t;
            };
            double total = phi(label);
            if (experts[0] == label) total += phi(u.num_classes);
            return total;
        }
    }
    throw InvalidInputError("loss: unknown loss kind");
}

inline double loss(LossKind kind, const ScoreVector& u, int label, int expert_pred) {
    const int m[1] = {expert_pred};
    return loss(kind, u, label, std::span<const int>(m, 1));
}

/// Generic deferral formulation phi(u,y) + [m==y] phi(u,K+1).
inline double loss_general(MulticlassLoss phi, const ScoreVector& u, int label,
                           int expert_pred) {
    u.validate();
    const int m[1] = {expert_pred};
    detail::check_labels(u, label, std::span<const int>(m, 1), false);
    double total = multiclass_phi(phi, u, label);
    if (expert_pred == label) total += multiclass_phi(phi, u, u.num_classes);
    return total;
}

/// Analytic gradient of loss() with respect to the scores.
inline std::vector<double> grad(LossKind kind, const ScoreVector& u, int label,
                                std::span<const int> experts) {
    u.validate();
    detail::check_labels(u, label, experts, kind == LossKind::asym_softmax_multi);
    const int k = u.num_classes;
    switch (kind) {
        case LossKind::asym_softmax:
        case LossKind::asym_softmax_multi:
            return detail::asym_grad(u, label, experts);
        case LossKind::sym_softmax: {
            const std::vector<double> p = softmax(u.values);
            const double w = (experts[0] == label) ? 2.0 : 1.0;
            std::vector<double> g(u.values.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = w * p[i];
            g[label] -= 1.0;
            if (experts[0] == label) g[k] -= 1.0;
            return g;
        }
        case LossKind::asym_ova: {
            std::vector<double> g(u.values.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = detail::sigmoid(u.values[i]);
            g[label] -= 1.0;
            if (experts[0] == label) g[k] -= 1.0;
            return g;
        }
        case LossKind::sym_ova: {
            const double w = (experts[0] == label) ? 2.0 : 1.0;
            std::vector<double> g(u.values.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = w * detail::sigmoid(u.values[i]);
            g[label] -= 1.0;
            if (experts[0] == label) g[k] -= 1.0;
            return g;
        }
    }
    throw InvalidInputError("grad: unknown loss kind");
}

inline std::vector<double> grad(LossKind kind, const ScoreVector& u, int label,
                                int expert_pred) {
    const int m[1] = {expert_pred};
    return grad(kind, u, label, std::span<const int>(m, 1));
}

struct BatchLossGrad {
    double mean_loss = 0.0;
    Matrix score_grad;  // n x (K+M); gradient of the mean loss w.r.t. scores
};

/// Mean loss over a batch and the gradient of that mean with respect to
/// every score entry. Rows are accumulated sequentially in order so the
/// result is independent of threading decisions elsewhere.
inline BatchLossGrad batch_loss_and_grad(LossKind kind, const Matrix& scores,
                                         int num_classes, std::span<const int> labels,
                                         std::span<const std::vector<int>> experts) {
    if (scores.rows == 0) throw InvalidInputError("batch_loss_and_grad: empty batch");
    if (static_cast<int>(labels.size()) != scores.rows ||
        static_cast<int>(experts.size()) != scores.rows)
        throw InvalidInputError("batch_loss_and_grad: row count mismatch");
    const int m = scores.cols - num_classes;
    BatchLossGrad out;
    out.score_grad = Matrix(scores.rows, scores.cols);
    const double inv_n = 1.0 / scores.rows;
    for (int i = 0; i < scores.rows; ++i) {
        const auto row = scores.row(i);
        ScoreVector u(std::vector<double>(row.begin(), row.end()), num_classes, m);
        out.mean_loss += loss(kind, u, labels[i], experts[i]);
        const std::vector<double> g = grad(kind, u, labels[i], experts[i]);
        for (int c = 0; c < scores.cols; ++c) out.score_grad(i, c) = g[c] * inv_n;
    }
    out.mean_loss *= inv_n;
    return out;
}

}  // namespace deferlab
