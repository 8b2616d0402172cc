#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "deferlab/estimators.hpp"
#include "deferlab/metrics.hpp"
#include "deferlab/oracle.hpp"
#include "deferlab/parallel.hpp"
#include "deferlab/rng.hpp"
#include "deferlab/surrogates.hpp"

namespace deferlab {

/// Outcome of one property sweep. `worst` is the check's headline
/// statistic (largest deviation seen); counterexamples hold dumps for the
/// first few failing inputs.
struct CheckResult {
    std::string name;
    long total = 0;
    long failures = 0;
    double worst = 0.0;
    std::vector<std::string> counterexamples;

    bool passed() const { return failures == 0; }
};

namespace verify_detail {

constexpr int kMaxCounterexamples = 5;

inline std::string dump_vector(std::span<const double> v) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << "]";
    return os.str();
}

/// Per-index verdicts are collected into slot arrays and reduced
/// sequentially, so the report is identical for any worker count.
struct SweepSlots {
    std::vector<char> failed;
    std::vector<double> stat;
    std::vector<std::string> detail;

    explicit SweepSlots(long n) : failed(n, 0), stat(n, 0.0), detail(n) {}

    CheckResult reduce(std::string name) const {
        CheckResult r;
        r.name = std::move(name);
        r.total = static_cast<long>(failed.size());
        for (long i = 0; i < r.total; ++i) {
            r.worst = i == 0 ? stat[i] : std::max(r.worst, stat[i]);
            if (failed[i]) {
                ++r.failures;
                if (static_cast<int>(r.counterexamples.size()) < kMaxCounterexamples)
                    r.counterexamples.push_back(detail[i]);
            }
        }
        return r;
    }
};

/// Random simplex vector with every entry in [floor, 1 - (K-1) floor].
inline std::vector<double> random_simplex(Rng& rng, int k, double floor) {
    std::vector<double> w(k);
    double sum = 0.0;
    for (double& x : w) {
        x = rng.uniform();
        sum += x;
    }
    const double free_mass = 1.0 - floor * k;
    for (double& x : w) x = floor + free_mass * (x / sum);
    return w;
}

inline ScoreVector random_scores(Rng& rng, int k, int m, double lo, double hi) {
    std::vector<double> u(k + m);
    for (double& x : u) x = rng.uniform(lo, hi);
    return ScoreVector(std::move(u), k, m);
}

}  // namespace verify_detail

/// Boundedness and argmax preservation of the asymmetric softmax:
/// class probabilities on the simplex, expert estimates in [0,1], and
/// the top dimension of the estimate matching the top score whenever the
/// maximum is unique.
inline CheckResult check_asym_softmax_properties(long samples, std::uint64_t seed,
                                                 int num_experts = 1) {
    verify_detail::SweepSlots slots(samples);
    parallel_for(samples, [&](long i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        const int k = 2 + rng.uniform_int(4);
        const ScoreVector u = verify_detail::random_scores(rng, k, num_experts, -50.0, 50.0);
        const ProbEstimate est =
            num_experts == 1 ? asym_softmax(u) : asym_softmax_multi(u);

        double sum = 0.0;
        for (double p : est.class_probs) sum += p;
        double err = std::abs(sum - 1.0);
        bool ok = err <= 1e-9;
        for (double p : est.class_probs) ok = ok && p >= 0.0;
        for (double a : est.expert_acc) {
            ok = ok && a >= 0.0 && a <= 1.0;
            if (a < 0.0) err = std::max(err, -a);
            if (a > 1.0) err = std::max(err, a - 1.0);
        }

        // Argmax preservation needs scores whose ordering stays
        // representable after rounding: near-1 outputs are separated by
        // roughly (1 - top output) * (score gap), which falls below one
        // ulp once gaps reach ~36 or the top two scores nearly tie. The
        // check therefore draws from [-12,12] and treats top-two gaps
        // under 0.01 as floating-point ties (worst separation is then
        // e^-24 * 0.01, more than three thousand ulps).
        ScoreVector probe = verify_detail::random_scores(rng, k, num_experts, -12.0, 12.0);
        const int top_score = argmax(probe.values);
        double second = -std::numeric_limits<double>::infinity();
        for (std::size_t d = 0; d < probe.values.size(); ++d)
            if (static_cast<int>(d) != top_score) second = std::max(second, probe.values[d]);
        if (probe.values[top_score] - second > 0.01) {
            const ProbEstimate probe_est =
                num_experts == 1 ? asym_softmax(probe) : asym_softmax_multi(probe);
            std::vector<double> full(probe_est.class_probs);
            full.insert(full.end(), probe_est.expert_acc.begin(), probe_est.expert_acc.end());
            ok = ok && argmax(full) == top_score;
            if (argmax(full) != top_score)
                slots.detail[i] = "argmax probe u=" + verify_detail::dump_vector(probe.values);
        }

        slots.stat[i] = err;
        if (!ok) {
            slots.failed[i] = 1;
            slots.detail[i] = "u=" + verify_detail::dump_vector(u.values);
        }
    });
    return slots.reduce(num_experts == 1 ? "asym softmax range + argmax (M=1)"
                                         : "asym softmax range + argmax (M=" +
                                               std::to_string(num_experts) + ")");
}

/// Estimator recovery at conditional-risk minimizers:
///  - the closed-form minimizer recovers (eta, p) through asym_softmax
///    within 1e-4;
///  - gradient descent reproduces the closed form within 1e-3;
///  - the symmetric-softmax and one-vs-all minimizers recover (eta, p)
///    through their own estimators within 1e-3.
inline CheckResult check_minimizer_recovery(int points, std::uint64_t seed,
                                            int num_experts = 1) {
    verify_detail::SweepSlots slots(points);
    const bool multi = num_experts > 1;
    parallel_for(points, [&](long i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        const int k = 2 + static_cast<int>(i % 3);
        ConditionalPoint c;
        c.eta = verify_detail::random_simplex(rng, k, 0.05);
        c.expert_acc.resize(num_experts);
        for (double& p : c.expert_acc) p = rng.uniform(0.05, 0.95);

        std::ostringstream why;
        double worst = 0.0;
        auto linf_vs_truth = [&](const ProbEstimate& est, std::span<const double> cls) {
            double e = 0.0;
            for (int y = 0; y < k; ++y) e = std::max(e, std::abs(cls[y] - c.eta[y]));
            for (int j = 0; j < num_experts; ++j)
                e = std::max(e, std::abs(est.expert_acc[j] - c.expert_acc[j]));
            return e;
        };

        const LossKind asym_kind =
            multi ? LossKind::asym_softmax_multi : LossKind::asym_softmax;
        const ScoreVector closed = minimize_conditional(asym_kind, c);
        const ProbEstimate closed_est =
            multi ? asym_softmax_multi(closed) : asym_softmax(closed);
        const double closed_err = linf_vs_truth(closed_est, closed_est.class_probs);
        worst = std::max(worst, closed_err);
        if (closed_err > 1e-4) why << "closed-form recovery error " << closed_err << "; ";

        const ScoreVector numeric = minimize_conditional_numeric(asym_kind, c);
        double numeric_err = 0.0;
        for (std::size_t d = 0; d < numeric.values.size(); ++d)
            numeric_err = std::max(numeric_err,
                                   std::abs(numeric.values[d] - closed.values[d]));
        worst = std::max(worst, numeric_err);
        if (numeric_err > 1e-3) why << "numeric vs closed form " << numeric_err << "; ";

        const ProbEstimate numeric_est =
            multi ? asym_softmax_multi(numeric) : asym_softmax(numeric);
        const double numeric_rec = linf_vs_truth(numeric_est, numeric_est.class_probs);
        worst = std::max(worst, numeric_rec);
        if (numeric_rec > 1e-3) why << "numeric recovery error " << numeric_rec << "; ";

        if (!multi) {
            const ScoreVector u_ssm = minimize_conditional(LossKind::sym_softmax, c);
            const ProbEstimate ssm = estimate_ssm(u_ssm);
            const double ssm_err = linf_vs_truth(ssm, ssm.class_probs);
            worst = std::max(worst, ssm_err);
            if (ssm_err > 1e-3) why << "ssm recovery error " << ssm_err << "; ";

            const ScoreVector u_ova = minimize_conditional(LossKind::asym_ova, c);
            const ProbEstimate ova = estimate_ova(u_ova);
            const double ova_err = linf_vs_truth(ova, ova.raw_class);
            worst = std::max(worst, ova_err);
            if (ova_err > 1e-3) why << "ova recovery error " << ova_err << "; ";
        }

        slots.stat[i] = worst;
        const std::string msg = why.str();
        if (!msg.empty()) {
            slots.failed[i] = 1;
            slots.detail[i] = "eta=" + verify_detail::dump_vector(c.eta) +
                              " p=" + verify_detail::dump_vector(c.expert_acc) + ": " + msg;
        }
    });
    return slots.reduce(multi ? "minimizer recovery (M=" + std::to_string(num_experts) + ")"
                              : "minimizer recovery");
}

/// The asymmetric multiclass losses plugged into the generic deferral
/// formulation reproduce their native losses exactly.
inline CheckResult check_generic_equivalence(long samples, std::uint64_t seed) {
    verify_detail::SweepSlots slots(samples);
    parallel_for(samples, [&](long i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        const int k = 2 + rng.uniform_int(4);
        const ScoreVector u = verify_detail::random_scores(rng, k, 1, -8.0, 8.0);
        const int y = rng.uniform_int(k);
        const int m = rng.uniform_int(k);
        const double d_asm = std::abs(loss_general(MulticlassLoss::phi_asym_softmax, u, y, m) -
                                      loss(LossKind::asym_softmax, u, y, m));
        const double d_ova = std::abs(loss_general(MulticlassLoss::phi_asym_ova, u, y, m) -
                                      loss(LossKind::asym_ova, u, y, m));
        slots.stat[i] = std::max(d_asm, d_ova);
        if (slots.stat[i] >= 1e-9) {
            slots.failed[i] = 1;
            slots.detail[i] = "u=" + verify_detail::dump_vector(u.values) +
                              " y=" + std::to_string(y) + " m=" + std::to_string(m);
        }
    });
    return slots.reduce("generic-formulation equivalence");
}

/// Pointwise regret transfer: 0-1 excess (classifier and deferral) is
/// covered by sqrt(2 * surrogate excess) on every sampled tuple.
inline CheckResult check_regret_transfer(long tuples, std::uint64_t seed) {
    verify_detail::SweepSlots slots(tuples);
    parallel_for(tuples, [&](long i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        const int k = 2 + static_cast<int>(i % 3);  // K in {2,3,4}
        ConditionalPoint c;
        c.eta = verify_detail::random_simplex(rng, k, 0.02);
        c.expert_acc = {rng.uniform(0.05, 0.95)};
        const ScoreVector u = verify_detail::random_scores(rng, k, 1, -10.0, 10.0);
        const RegretCheck r = check_regret_bound(u, c);
        slots.stat[i] = r.lhs - r.rhs;
        if (!r.holds) {
            slots.failed[i] = 1;
            slots.detail[i] = "eta=" + verify_detail::dump_vector(c.eta) +
                              " p=" + std::to_string(c.expert_acc[0]) +
                              " u=" + verify_detail::dump_vector(u.values) + " lhs=" +
                              std::to_string(r.lhs) + " rhs=" + std::to_string(r.rhs);
        }
    });
    return slots.reduce("regret transfer bound");
}

/// The symmetric-softmax estimator leaves the probability range on a
/// concrete score vector, and clipping truncates it back to 1.
inline CheckResult check_unboundedness_witness() {
    CheckResult r;
    r.name = "symmetric-loss unbounded estimator witness";
    r.total = 1;
    const ScoreVector u = ScoreVector::single_expert({0.0, 0.0, std::log(4.0)});
    const ProbEstimate est = estimate_ssm(u);
    const ProbEstimate clipped = clip_estimate(est);
    r.worst = est.expert_acc[0];
    if (est.expert_acc[0] != 2.0 || est.bounded || clipped.expert_acc[0] != 1.0 ||
        !clipped.bounded) {
        r.failures = 1;
        r.counterexamples.push_back("estimate_ssm((0,0,ln4)) expert accuracy = " +
                                    std::to_string(est.expert_acc[0]) + ", clipped = " +
                                    std::to_string(clipped.expert_acc[0]));
    }
    return r;
}

/// Analytic gradients versus central finite differences, every loss
/// kind, componentwise relative error below 1e-5 (unit floor).
inline CheckResult check_gradients(int cases_per_kind, std::uint64_t seed) {
    struct KindSpec {
        LossKind kind;
        int num_experts;
    };
    const KindSpec kinds[] = {{LossKind::asym_softmax, 1},
                              {LossKind::sym_softmax, 1},
                              {LossKind::asym_ova, 1},
                              {LossKind::sym_ova, 1},
                              {LossKind::asym_softmax_multi, 2}};
    const int k_choices[] = {2, 5, 10};
    const long total = static_cast<long>(std::size(kinds)) * cases_per_kind;
    verify_detail::SweepSlots slots(total);
    parallel_for(total, [&](long idx) {
        const KindSpec spec = kinds[idx / cases_per_kind];
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(idx));
        const int k = k_choices[idx % 3];
        ScoreVector u = verify_detail::random_scores(rng, k, spec.num_experts, -4.0, 4.0);
        const int y = rng.uniform_int(k);
        std::vector<int> m(spec.num_experts);
        for (int& mj : m) mj = rng.uniform_int(k);

        const std::vector<double> analytic = grad(spec.kind, u, y, m);
        const double h = 1e-5;
        double worst = 0.0;
        for (std::size_t d = 0; d < u.values.size(); ++d) {
            const double saved = u.values[d];
            u.values[d] = saved + h;
            const double up = loss(spec.kind, u, y, m);
            u.values[d] = saved - h;
            const double down = loss(spec.kind, u, y, m);
            u.values[d] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double rel = std::abs(analytic[d] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, rel);
        }
        slots.stat[idx] = worst;
        if (worst >= 1e-5) {
            slots.failed[idx] = 1;
            slots.detail[idx] = std::string(to_string(spec.kind)) +
                                " u=" + verify_detail::dump_vector(u.values) +
                                " y=" + std::to_string(y) + " rel_err=" + std::to_string(worst);
        }
    });
    return slots.reduce("analytic gradients vs finite differences");
}

}  // namespace deferlab
