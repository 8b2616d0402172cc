#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deferlab/error.hpp"
#include "deferlab/oracle.hpp"
#include "deferlab/types.hpp"

namespace deferlab {

/// Mean 0-1 deferral loss over a sample.
inline double system_error(std::span<const Decision> decisions, std::span<const int> labels,
                           std::span<const std::vector<int>> experts) {
    if (decisions.empty()) throw InvalidInputError("system_error: empty input");
    if (labels.size() != decisions.size() || experts.size() != decisions.size())
        throw InvalidInputError("system_error: length mismatch");
    long wrong = 0;
    for (std::size_t i = 0; i < decisions.size(); ++i)
        wrong += deferral_loss(decisions[i], labels[i], experts[i]);
    return static_cast<double>(wrong) / static_cast<double>(decisions.size());
}

/// Fraction of samples answered without deferring.
inline double coverage(std::span<const Decision> decisions) {
    if (decisions.empty()) throw InvalidInputError("coverage: empty input");
    long kept = 0;
    for (const Decision& d : decisions)
        if (!d.is_defer()) ++kept;
    return static_cast<double>(kept) / static_cast<double>(decisions.size());
}

/// Equal-width bin index on [0,1], right-inclusive with 1.0 in the top
/// bin: bin i covers (i/bins, (i+1)/bins], except bin 0 also contains 0.
inline int confidence_bin(double confidence, int bins) {
    const int idx = static_cast<int>(std::ceil(confidence * bins)) - 1;
    return std::clamp(idx, 0, bins - 1);
}

/// Neumaier-compensated accumulator; keeps bin means exact when a bin
/// holds many copies of the same confidence.
class CompensatedSum {
  public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Expected calibration error: bin-mass-weighted absolute gap between
/// mean confidence and mean accuracy. Empty bins contribute nothing.
inline double ece(std::span<const double> confidences, const std::vector<bool>& correct,
                  int bins = 15) {
    if (confidences.empty()) throw InvalidInputError("ece: empty input");
    if (correct.size() != confidences.size())
        throw InvalidInputError("ece: length mismatch");
    if (bins < 1) throw InvalidInputError("ece: bin count must be >= 1");
    std::vector<long> count(bins, 0);
    std::vector<CompensatedSum> conf_sum(bins);
    std::vector<long> correct_sum(bins, 0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const double c = confidences[i];
        if (!(c >= 0.0 && c <= 1.0))
            throw InvalidInputError("ece: confidence " + std::to_string(c) +
                                    " outside [0,1]; clip estimates upstream");
        const int b = confidence_bin(c, bins);
        ++count[b];
        conf_sum[b].add(c);
        if (correct[i]) ++correct_sum[b];
    }
    const double n = static_cast<double>(confidences.size());
    CompensatedSum total;
    for (int b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double mass = count[b] / n;
        const double mean_conf = conf_sum[b].value() / count[b];
        const double mean_acc = static_cast<double>(correct_sum[b]) / count[b];
        total.add(mass * std::abs(mean_conf - mean_acc));
    }
    return total.value();
}

/// System error after capping the deferral fraction at `budget`:
/// deferred samples are un-deferred in ascending order of their
/// estimated expert accuracy (ties to the smallest index), each replaced
/// by the class-block argmax prediction.
inline double budgeted_error(std::span<const Decision> decisions,
                             std::span<const ProbEstimate> estimates,
                             std::span<const int> labels,
                             std::span<const std::vector<int>> experts, double budget) {
    if (!(budget >= 0.0 && budget <= 1.0))
        throw InvalidInputError("budgeted_error: budget outside [0,1]");
    if (estimates.size() != decisions.size())
        throw InvalidInputError("budgeted_error: length mismatch");
    const int n = static_cast<int>(decisions.size());

    std::vector<int> deferred;
    for (int i = 0; i < n; ++i)
        if (decisions[i].is_defer()) deferred.push_back(i);

    // largest deferred count allowed by the budget; the epsilon absorbs
    // representation error in budget * n at exact multiples
    const long allowed = static_cast<long>(std::floor(budget * n + 1e-9));
    std::vector<Decision> adjusted(decisions.begin(), decisions.end());
    if (static_cast<long>(deferred.size()) > allowed) {
        std::stable_sort(deferred.begin(), deferred.end(), [&](int a, int b) {
            return estimates[a].expert_acc[decisions[a].index] <
                   estimates[b].expert_acc[decisions[b].index];
        });
        const long to_undefer = static_cast<long>(deferred.size()) - allowed;
        for (long r = 0; r < to_undefer; ++r) {
            const int i = deferred[r];
            adjusted[i] = Decision::predict(argmax(estimates[i].class_probs));
        }
    }
    return system_error(adjusted, labels, experts);
}

/// Binned counts of estimated (and, when available, true) expert
/// accuracy, with the bin edges they were computed against.
struct HistogramData {
    std::vector<double> bin_lo;
    std::vector<double> bin_hi;
    std::vector<long> count_estimated;
    std::vector<long> count_true;  // empty when no ground truth was supplied
};

inline HistogramData accuracy_histograms(std::span<const double> estimated,
                                         std::span<const double> truth, int bins) {
    if (bins < 1) throw InvalidInputError("accuracy_histograms: bin count must be >= 1");
    HistogramData h;
    h.bin_lo.resize(bins);
    h.bin_hi.resize(bins);
    for (int b = 0; b < bins; ++b) {
        h.bin_lo[b] = static_cast<double>(b) / bins;
        h.bin_hi[b] = static_cast<double>(b + 1) / bins;
    }
    h.count_estimated.assign(bins, 0);
    for (double e : estimated) {
        if (!(e >= 0.0 && e <= 1.0))
            throw InvalidInputError("accuracy_histograms: estimate outside [0,1]; "
                                    "clip unbounded estimators upstream");
        ++h.count_estimated[confidence_bin(e, bins)];
    }
    if (!truth.empty()) {
        h.count_true.assign(bins, 0);
        for (double t : truth) ++h.count_true[confidence_bin(t, bins)];
    }
    return h;
}

/// The evaluation statistics reported for one model/dataset pair.
struct EvalReport {
    double error = 0.0;
    double coverage = 0.0;
    double ece = 0.0;
    std::vector<std::pair<double, double>> budgeted_errors;  // (budget, error)
    HistogramData histogram;
};

/// Assemble the full report from a model evaluation. Expert-accuracy
/// confidences are the estimates for the first expert; correctness is
/// whether that expert matches the label.
inline EvalReport make_eval_report(std::span<const Decision> decisions,
                                   std::span<const ProbEstimate> estimates,
                                   std::span<const int> labels,
                                   std::span<const std::vector<int>> experts,
                                   std::span<const double> budgets, int ece_bins,
                                   std::span<const double> true_expert_acc = {}) {
    EvalReport report;
    report.error = system_error(decisions, labels, experts);
    report.coverage = coverage(decisions);

    std::vector<double> conf(decisions.size());
    std::vector<bool> correct(decisions.size());
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        conf[i] = estimates[i].expert_acc[0];
        correct[i] = experts[i][0] == labels[i];
    }
    report.ece = ece(conf, correct, ece_bins);

    for (double b : budgets)
        report.budgeted_errors.emplace_back(
            b, budgeted_error(decisions, estimates, labels, experts, b));

    report.histogram = accuracy_histograms(conf, true_expert_acc, ece_bins);
    return report;
}

}  // namespace deferlab
