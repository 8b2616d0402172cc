#include <doctest.h>

#include <cmath>
#include <vector>

#include "deferlab/estimators.hpp"
#include "deferlab/rng.hpp"

using namespace deferlab;

namespace {

ScoreVector sv(std::vector<double> v) { return ScoreVector::single_expert(std::move(v)); }

}  // namespace

TEST_CASE("softmax reference values") {
    const auto uniform = softmax(std::vector<double>{0.0, 0.0, 0.0});
    for (double p : uniform) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));

    // direct evaluation: exp(ln2)=2 against two units
    const auto skew = softmax(std::vector<double>{std::log(2.0), 0.0, 0.0});
    CHECK(skew[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(skew[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(skew[2] == doctest::Approx(0.25).epsilon(1e-12));

    const auto huge = softmax(std::vector<double>{1000.0, 0.0, 0.0});
    CHECK(std::abs(huge[0] - 1.0) < 1e-12);
    CHECK(huge[1] < 1e-12);
    CHECK(huge[2] < 1e-12);
    for (double p : huge) CHECK(std::isfinite(p));

    double sum = 0.0;
    for (double p : skew) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-9);

    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), InvalidInputError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0}), InvalidDimensionError);
}

TEST_CASE("asym_softmax reference values") {
    const ProbEstimate zero = asym_softmax(sv({0.0, 0.0, 0.0}));
    CHECK(zero.bounded);
    CHECK(zero.class_probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(zero.class_probs[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(zero.expert_acc[0] == doctest::Approx(0.5).epsilon(1e-12));

    // Denominator at (ln2,0,0): exp(0) + (2+1) - 2 = 2
    const ProbEstimate skew = asym_softmax(sv({std::log(2.0), 0.0, 0.0}));
    CHECK(skew.class_probs[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(skew.class_probs[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(skew.expert_acc[0] == doctest::Approx(0.5).epsilon(1e-12));

    const ProbEstimate confident = asym_softmax(sv({0.0, 0.0, 10.0}));
    const double expected = std::exp(10.0) / (std::exp(10.0) + 1.0);
    CHECK(confident.expert_acc[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(confident.expert_acc[0] == doctest::Approx(0.9999546).epsilon(1e-6));

    CHECK_THROWS_AS(asym_softmax(ScoreVector({0.0, 1.0}, 1, 1)), InvalidDimensionError);
    CHECK_THROWS_AS(asym_softmax(ScoreVector({0.0, 1.0, 2.0, 3.0}, 2, 2)),
                    InvalidDimensionError);
}

TEST_CASE("asym_softmax_multi reference values and reduction") {
    const ProbEstimate zero = asym_softmax_multi(ScoreVector({0.0, 0.0, 0.0, 0.0}, 2, 2));
    CHECK(zero.class_probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(zero.expert_acc[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(zero.expert_acc[1] == doctest::Approx(0.5).epsilon(1e-12));

    const ProbEstimate experts = asym_softmax_multi(ScoreVector({0.0, 0.0, 10.0, -10.0}, 2, 2));
    CHECK(experts.expert_acc[0] == doctest::Approx(0.9999546).epsilon(1e-6));
    CHECK(experts.expert_acc[1] == doctest::Approx(4.5398e-5).epsilon(1e-4));

    // M=1 must reduce to asym_softmax bit-for-bit
    Rng rng(11);
    for (int it = 0; it < 200; ++it) {
        std::vector<double> u(4);
        for (double& x : u) x = rng.uniform(-30.0, 30.0);
        const ScoreVector vec(u, 3, 1);
        const ProbEstimate a = asym_softmax(vec);
        const ProbEstimate b = asym_softmax_multi(vec);
        for (int y = 0; y < 3; ++y) CHECK(a.class_probs[y] == b.class_probs[y]);
        CHECK(a.expert_acc[0] == b.expert_acc[0]);
    }
}

TEST_CASE("estimate_ssm reference values and unboundedness") {
    const ProbEstimate zero = estimate_ssm(sv({0.0, 0.0, 0.0}));
    CHECK_FALSE(zero.bounded);
    CHECK(zero.class_probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(zero.expert_acc[0] == doctest::Approx(0.5).epsilon(1e-12));

    // softmax(0,0,ln2) = (1/4,1/4,1/2) -> classes renormalize, expert hits 1
    const ProbEstimate one = estimate_ssm(sv({0.0, 0.0, std::log(2.0)}));
    CHECK(one.class_probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(one.expert_acc[0] == doctest::Approx(1.0).epsilon(1e-12));

    // softmax(0,0,ln4) = (1/6,1/6,2/3) -> expert estimate leaves [0,1]
    const ProbEstimate two = estimate_ssm(sv({0.0, 0.0, std::log(4.0)}));
    CHECK(two.expert_acc[0] == 2.0);  // exact

    // expert softmax saturated at 1 -> the fraction has no finite value
    CHECK_THROWS_AS(estimate_ssm(sv({-700.0, -700.0, 700.0})), OverflowError);
}

TEST_CASE("estimate_ova reference values") {
    const ProbEstimate zero = estimate_ova(sv({0.0, 0.0, 0.0}));
    CHECK(zero.bounded);
    CHECK(zero.raw_class[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(zero.raw_class[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(zero.expert_acc[0] == doctest::Approx(0.5).epsilon(1e-12));

    const ProbEstimate skew = estimate_ova(sv({std::log(3.0), 0.0, 0.0}));
    CHECK(skew.raw_class[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(skew.raw_class[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(skew.expert_acc[0] == doctest::Approx(0.5).epsilon(1e-12));

    const ProbEstimate saturated = estimate_ova(sv({0.0, 0.0, -1000.0}));
    CHECK(saturated.expert_acc[0] < 1e-12);
    CHECK(std::isfinite(saturated.expert_acc[0]));

    // class_probs is the renormalized simplex over the raw sigmoids
    double sum = 0.0;
    for (double p : skew.class_probs) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(skew.class_probs[0] == doctest::Approx(0.75 / 1.25).epsilon(1e-12));
}

TEST_CASE("estimate_sova fractional transform") {
    // sigmoids (0.5, 0.5, 0.5): expert estimate 0.5/0.5 = 1
    const ProbEstimate zero = estimate_sova(sv({0.0, 0.0, 0.0}));
    CHECK_FALSE(zero.bounded);
    CHECK(zero.expert_acc[0] == doctest::Approx(1.0).epsilon(1e-12));

    // sigma(z)/sigma(-z) = e^z
    const ProbEstimate pos = estimate_sova(sv({0.0, 0.0, 1.0}));
    CHECK(pos.expert_acc[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    const ProbEstimate neg = estimate_sova(sv({0.0, 0.0, -2.0}));
    CHECK(neg.expert_acc[0] == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(estimate_sova(sv({0.0, 0.0, 800.0})), OverflowError);
}

TEST_CASE("clip_estimate clamps expert accuracies only") {
    ProbEstimate e;
    e.class_probs = {0.3, 0.7};
    e.expert_acc = {2.0, 0.7, -0.1};
    e.bounded = false;
    const ProbEstimate c = clip_estimate(e);
    CHECK(c.expert_acc[0] == 1.0);
    CHECK(c.expert_acc[1] == 0.7);
    CHECK(c.expert_acc[2] == 0.0);
    CHECK(c.class_probs[0] == 0.3);
    CHECK(c.class_probs[1] == 0.7);
    CHECK(c.bounded);
}

TEST_CASE("asym_softmax boundedness and argmax preservation (sampled)") {
    Rng rng(101);
    for (int it = 0; it < 5000; ++it) {
        const int k = 2 + rng.uniform_int(4);
        const int m = 1 + rng.uniform_int(2);
        std::vector<double> u(k + m);
        for (double& x : u) x = rng.uniform(-50.0, 50.0);
        const ScoreVector vec(u, k, m);
        const ProbEstimate est = asym_softmax_multi(vec);

        double sum = 0.0;
        for (double p : est.class_probs) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
        for (double a : est.expert_acc) {
            CHECK(a >= 0.0);
            CHECK(a <= 1.0);
        }

        // argmax is checked on the representable regime: outputs near 1
        // are separated by (1 - top) * gap, which drops below one ulp
        // for score gaps past ~36 or near-tied leaders
        std::vector<double> small(k + m);
        for (double& x : small) x = rng.uniform(-12.0, 12.0);
        const ScoreVector small_vec(small, k, m);
        const int top = argmax(small_vec.values);
        double second = -1e300;
        for (int d = 0; d < k + m; ++d)
            if (d != top) second = std::max(second, small[d]);
        if (small[top] - second > 0.01) {
            const ProbEstimate small_est = asym_softmax_multi(small_vec);
            std::vector<double> full(small_est.class_probs);
            full.insert(full.end(), small_est.expert_acc.begin(), small_est.expert_acc.end());
            CHECK(argmax(full) == top);
        }
    }
}

TEST_CASE("expert estimate is strictly increasing in the expert score") {
    Rng rng(7);
    for (int it = 0; it < 200; ++it) {
        const int k = 2 + rng.uniform_int(3);
        std::vector<double> cls(k);
        for (double& x : cls) x = rng.uniform(-5.0, 5.0);
        double prev = -1.0;
        for (double s = -6.0; s <= 6.0; s += 0.5) {
            std::vector<double> u(cls);
            u.push_back(s);
            const double acc = asym_softmax(ScoreVector(u, k, 1)).expert_acc[0];
            CHECK(acc > prev);
            prev = acc;
        }
    }
}

TEST_CASE("estimators stay finite across the double exp range") {
    Rng rng(23);
    for (int it = 0; it < 2000; ++it) {
        const int k = 2 + rng.uniform_int(3);
        std::vector<double> u(k + 1);
        for (double& x : u) x = rng.uniform(-700.0, 700.0);
        const ScoreVector vec(u, k, 1);

        const ProbEstimate a = asym_softmax(vec);
        for (double p : a.class_probs) CHECK(std::isfinite(p));
        for (double p : a.expert_acc) CHECK(std::isfinite(p));

        const ProbEstimate o = estimate_ova(vec);
        for (double p : o.class_probs) CHECK(std::isfinite(p));
        for (double p : o.expert_acc) CHECK(std::isfinite(p));

        // the fractional estimators may legitimately refuse saturated
        // inputs, but must never emit NaN/Inf
        try {
            const ProbEstimate s = estimate_ssm(vec);
            for (double p : s.class_probs) CHECK(std::isfinite(p));
            for (double p : s.expert_acc) CHECK(std::isfinite(p));
        } catch (const OverflowError&) {
        }
    }
}
