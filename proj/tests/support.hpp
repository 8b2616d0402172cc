#pragma once

// Test-only oracles, independent of the library code paths they check.

#include <cstdint>
#include <vector>

#include "deferlab/metrics.hpp"
#include "deferlab/oracle.hpp"
#include "deferlab/rng.hpp"
#include "deferlab/types.hpp"

namespace testsupport {

/// A random evaluation instance for metric checks.
struct EvalInstance {
    std::vector<deferlab::Decision> decisions;
    std::vector<deferlab::ProbEstimate> estimates;
    std::vector<int> labels;
    std::vector<std::vector<int>> experts;
};

inline EvalInstance random_eval_instance(deferlab::Rng& rng, int n, int k,
                                         int max_deferred) {
    EvalInstance inst;
    int deferred = 0;
    for (int i = 0; i < n; ++i) {
        const bool defer = deferred < max_deferred && rng.uniform() < 0.5;
        if (defer) ++deferred;
        inst.decisions.push_back(defer ? deferlab::Decision::defer(0)
                                       : deferlab::Decision::predict(rng.uniform_int(k)));
        deferlab::ProbEstimate est;
        est.class_probs.resize(k);
        double sum = 0.0;
        for (double& p : est.class_probs) {
            p = 0.05 + rng.uniform();
            sum += p;
        }
        for (double& p : est.class_probs) p /= sum;
        // quantized estimates so ties actually occur
        est.expert_acc = {rng.uniform_int(5) / 4.0};
        est.bounded = true;
        inst.estimates.push_back(std::move(est));
        inst.labels.push_back(rng.uniform_int(k));
        inst.experts.push_back({rng.uniform_int(k)});
    }
    return inst;
}

/// Brute-force reference for budgeted_error: enumerate every subset of
/// the deferred samples with the required size, keep the unique one the
/// ascending-(estimate, index) rule selects, and score the adjusted
/// decisions directly.
inline double brute_force_budgeted_error(const EvalInstance& inst, double budget) {
    using deferlab::Decision;
    const int n = static_cast<int>(inst.decisions.size());
    std::vector<int> deferred;
    for (int i = 0; i < n; ++i)
        if (inst.decisions[i].is_defer()) deferred.push_back(i);
    const long allowed = static_cast<long>(std::floor(budget * n + 1e-9));
    const int undefer_count =
        static_cast<int>(std::max<long>(0, static_cast<long>(deferred.size()) - allowed));

    auto key = [&](int i) {
        return std::pair<double, int>(inst.estimates[i].expert_acc[inst.decisions[i].index],
                                      i);
    };
    std::vector<int> chosen;
    const int d = static_cast<int>(deferred.size());
    for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
        if (__builtin_popcount(mask) != undefer_count) continue;
        // the rule's subset: every member precedes every non-member in
        // (estimate, index) order
        bool matches = true;
        for (int a = 0; a < d && matches; ++a)
            for (int b = 0; b < d && matches; ++b)
                if ((mask >> a & 1) && !(mask >> b & 1) &&
                    key(deferred[b]) < key(deferred[a]))
                    matches = false;
        if (!matches) continue;
        chosen.clear();
        for (int a = 0; a < d; ++a)
            if (mask >> a & 1) chosen.push_back(deferred[a]);
        break;
    }

    std::vector<Decision> adjusted(inst.decisions);
    for (int i : chosen)
        adjusted[i] = Decision::predict(deferlab::argmax(inst.estimates[i].class_probs));
    long wrong = 0;
    for (int i = 0; i < n; ++i)
        wrong += deferlab::deferral_loss(adjusted[i], inst.labels[i], inst.experts[i]);
    return static_cast<double>(wrong) / n;
}

}  // namespace testsupport
