#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deferlab/error.hpp"

namespace deferlab {

/// Raw scorer output over K class dimensions followed by M expert
/// dimensions. Entries must be finite and the length must equal K+M.
struct ScoreVector {
    std::vector<double> values;
    int num_classes = 0;  // K >= 2
    int num_experts = 0;  // M >= 1

    ScoreVector() = default;

    ScoreVector(std::vector<double> v, int k_classes, int m_experts)
        : values(std::move(v)), num_classes(k_classes), num_experts(m_experts) {
        validate();
    }

    /// Single-expert score vector; K is inferred as length-1.
    static ScoreVector single_expert(std::vector<double> v) {
        const int k = static_cast<int>(v.size()) - 1;
        return ScoreVector(std::move(v), k, 1);
    }

    void validate() const {
        if (num_classes < 2)
            throw InvalidDimensionError("ScoreVector: need at least 2 classes, got " +
                                        std::to_string(num_classes));
        if (num_experts < 1)
            throw InvalidDimensionError("ScoreVector: need at least 1 expert, got " +
                                        std::to_string(num_experts));
        if (values.size() != static_cast<std::size_t>(num_classes + num_experts))
            throw InvalidDimensionError(
                "ScoreVector: length " + std::to_string(values.size()) + " != K+M = " +
                std::to_string(num_classes + num_experts));
        for (double v : values)
            if (!std::isfinite(v))
                throw InvalidInputError("ScoreVector: non-finite entry");
    }

    std::span<const double> class_block() const {
        return {values.data(), static_cast<std::size_t>(num_classes)};
    }
    std::span<const double> expert_block() const {
        return {values.data() + num_classes, static_cast<std::size_t>(num_experts)};
    }
    double expert_score(int j) const { return values[num_classes + j]; }
};

/// Estimated class posteriors plus per-expert accuracy estimates.
///
/// `bounded` records whether the producing estimator guarantees the range
/// simplex x [0,1]^M; estimators derived from symmetric losses set it false
/// and may emit expert accuracies above 1.
struct ProbEstimate {
    std::vector<double> class_probs;  // length K, on the simplex
    std::vector<double> expert_acc;   // length M
    bool bounded = false;
    // Per-dimension sigmoid outputs, kept only by the one-vs-all estimator
    // (the class entries do not sum to 1; class_probs holds the
    // renormalized simplex).
    std::vector<double> raw_class;
};

/// One labeled observation with the expert panel's predictions.
struct LabeledSample {
    std::vector<double> features;
    int label = 0;                  // in {0..K-1}
    std::vector<int> expert_preds;  // each in {0..K-1}
};

/// A pointwise description of the data distribution: true class
/// posteriors and true per-expert accuracies at one input.
struct ConditionalPoint {
    std::vector<double> eta;         // length K, simplex
    std::vector<double> expert_acc;  // length M, entries in [0,1]

    void validate() const {
        if (eta.size() < 2)
            throw InvalidDimensionError("ConditionalPoint: need at least 2 classes");
        if (expert_acc.empty())
            throw InvalidDimensionError("ConditionalPoint: need at least 1 expert");
        double sum = 0.0;
        for (double e : eta) {
            if (!(e >= 0.0))
                throw InvalidInputError("ConditionalPoint: negative class posterior");
            sum += e;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw InvalidInputError("ConditionalPoint: class posteriors sum to " +
                                    std::to_string(sum) + ", expected 1");
        for (double p : expert_acc)
            if (!(p >= 0.0 && p <= 1.0))
                throw InvalidInputError("ConditionalPoint: expert accuracy outside [0,1]");
    }

    int num_classes() const { return static_cast<int>(eta.size()); }
    int num_experts() const { return static_cast<int>(expert_acc.size()); }
};

/// Either answer with a class or route the input to one expert.
struct Decision {
    enum class Kind { predict, defer };
    Kind kind = Kind::predict;
    int index = 0;  // class index for predict, expert index for defer

    static Decision predict(int class_index) { return {Kind::predict, class_index}; }
    static Decision defer(int expert_index) { return {Kind::defer, expert_index}; }

    bool is_defer() const { return kind == Kind::defer; }
    bool operator==(const Decision&) const = default;
};

/// Dense row-major matrix; just enough linear algebra for small scorers.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const {
        return data[static_cast<std::size_t>(r) * cols + c];
    }
    std::span<const double> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols,
                static_cast<std::size_t>(cols)};
    }
};

/// Smallest index attaining the maximum (ties break low).
inline int argmax(std::span<const double> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace deferlab
