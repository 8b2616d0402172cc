#include <doctest.h>

#include <cmath>
#include <vector>

#include "deferlab/oracle.hpp"
#include "deferlab/rng.hpp"
#include "deferlab/surrogates.hpp"

using namespace deferlab;

namespace {

ScoreVector sv(std::vector<double> v) { return ScoreVector::single_expert(std::move(v)); }

const double kLn2 = std::log(2.0);
const double kLn3 = std::log(3.0);

}  // namespace

TEST_CASE("loss reference values at zero scores") {
    const ScoreVector u = sv({0.0, 0.0, 0.0});
    CHECK(loss(LossKind::asym_softmax, u, 0, 0) == doctest::Approx(2 * kLn2).epsilon(1e-12));
    CHECK(loss(LossKind::sym_softmax, u, 0, 0) == doctest::Approx(2 * kLn3).epsilon(1e-12));
    CHECK(loss(LossKind::sym_softmax, u, 0, 1) == doctest::Approx(kLn3).epsilon(1e-12));
    CHECK(loss(LossKind::asym_ova, u, 0, 1) == doctest::Approx(3 * kLn2).epsilon(1e-12));
    CHECK(loss(LossKind::sym_ova, u, 0, 0) == doctest::Approx(6 * kLn2).epsilon(1e-12));
}

TEST_CASE("loss input validation") {
    const ScoreVector u = sv({0.0, 0.0, 0.0});
    CHECK_THROWS_AS(loss(LossKind::asym_softmax, u, 2, 0), InvalidInputError);
    CHECK_THROWS_AS(loss(LossKind::asym_softmax, u, -1, 0), InvalidInputError);
    CHECK_THROWS_AS(loss(LossKind::asym_softmax, u, 0, 5), InvalidInputError);
    const ScoreVector multi({0.0, 0.0, 0.0, 0.0}, 2, 2);
    CHECK_THROWS_AS(loss(LossKind::asym_softmax, multi, 0, std::vector<int>{0, 1}),
                    InvalidDimensionError);
    CHECK_NOTHROW(loss(LossKind::asym_softmax_multi, multi, 0, std::vector<int>{0, 1}));
}

TEST_CASE("generic formulation matches the native losses") {
    const ScoreVector zero = sv({0.0, 0.0, 0.0});
    CHECK(loss_general(MulticlassLoss::ce_symmetric, zero, 0, 0) ==
          doctest::Approx(2 * kLn3).epsilon(1e-12));

    Rng rng(31);
    for (int it = 0; it < 2000; ++it) {
        const int k = 2 + rng.uniform_int(4);
        std::vector<double> u(k + 1);
        for (double& x : u) x = rng.uniform(-8.0, 8.0);
        const ScoreVector vec(u, k, 1);
        const int y = rng.uniform_int(k);
        const int m = rng.uniform_int(k);
        CHECK(std::abs(loss_general(MulticlassLoss::phi_asym_softmax, vec, y, m) -
                       loss(LossKind::asym_softmax, vec, y, m)) < 1e-9);
        CHECK(std::abs(loss_general(MulticlassLoss::phi_asym_ova, vec, y, m) -
                       loss(LossKind::asym_ova, vec, y, m)) < 1e-9);
        CHECK(std::abs(loss_general(MulticlassLoss::ce_symmetric, vec, y, m) -
                       loss(LossKind::sym_softmax, vec, y, m)) < 1e-9);
    }
}

TEST_CASE("ce is permutation-symmetric, the asymmetric phis are not") {
    Rng rng(47);
    int asym_softmax_witnessed = 0;
    int asym_ova_witnessed = 0;
    for (int it = 0; it < 50; ++it) {
        const int k = 2 + rng.uniform_int(3);
        std::vector<double> u(k + 1);
        for (double& x : u) x = rng.uniform(-3.0, 3.0);
        const ScoreVector vec(u, k, 1);

        // permutation swapping class dim 0 with the deferral dim K
        std::vector<int> perm(k + 1);
        for (int i = 0; i <= k; ++i) perm[i] = i;
        std::swap(perm[0], perm[k]);
        std::vector<double> pu(k + 1);
        for (int i = 0; i <= k; ++i) pu[i] = u[perm[i]];
        const ScoreVector pvec(pu, k, 1);

        for (int j = 0; j <= k; ++j) {
            CHECK(multiclass_phi(MulticlassLoss::ce_symmetric, pvec, j) ==
                  doctest::Approx(multiclass_phi(MulticlassLoss::ce_symmetric, vec, perm[j]))
                      .epsilon(1e-12));
            if (std::abs(multiclass_phi(MulticlassLoss::phi_asym_softmax, pvec, j) -
                         multiclass_phi(MulticlassLoss::phi_asym_softmax, vec, perm[j])) > 1e-6)
                ++asym_softmax_witnessed;
            if (std::abs(multiclass_phi(MulticlassLoss::phi_asym_ova, pvec, j) -
                         multiclass_phi(MulticlassLoss::phi_asym_ova, vec, perm[j])) > 1e-6)
                ++asym_ova_witnessed;
        }
    }
    CHECK(asym_softmax_witnessed > 0);
    CHECK(asym_ova_witnessed > 0);
}

TEST_CASE("losses are nonnegative") {
    Rng rng(53);
    const LossKind kinds[] = {LossKind::asym_softmax, LossKind::sym_softmax,
                              LossKind::asym_ova, LossKind::sym_ova};
    for (int it = 0; it < 2000; ++it) {
        const int k = 2 + rng.uniform_int(4);
        std::vector<double> u(k + 1);
        for (double& x : u) x = rng.uniform(-20.0, 20.0);
        const ScoreVector vec(u, k, 1);
        const int y = rng.uniform_int(k);
        const int m = rng.uniform_int(k);
        for (LossKind kind : kinds) {
            const double value = loss(kind, vec, y, m);
            CHECK(value >= 0.0);
            CHECK(std::isfinite(value));
        }
        std::vector<double> u2(k + 2);
        for (double& x : u2) x = rng.uniform(-20.0, 20.0);
        const ScoreVector multi(u2, k, 2);
        const std::vector<int> preds = {rng.uniform_int(k), rng.uniform_int(k)};
        const double value = loss(LossKind::asym_softmax_multi, multi, y, preds);
        CHECK(value >= 0.0);
        CHECK(std::isfinite(value));
    }
}

TEST_CASE("multi-expert loss reduces to the single-expert loss at M=1") {
    Rng rng(59);
    for (int it = 0; it < 500; ++it) {
        const int k = 2 + rng.uniform_int(4);
        std::vector<double> u(k + 1);
        for (double& x : u) x = rng.uniform(-10.0, 10.0);
        const ScoreVector vec(u, k, 1);
        const int y = rng.uniform_int(k);
        const int m = rng.uniform_int(k);
        CHECK(std::abs(loss(LossKind::asym_softmax_multi, vec, y, m) -
                       loss(LossKind::asym_softmax, vec, y, m)) < 1e-12);
        const auto ga = grad(LossKind::asym_softmax_multi, vec, y, m);
        const auto gb = grad(LossKind::asym_softmax, vec, y, m);
        for (std::size_t d = 0; d < ga.size(); ++d) CHECK(ga[d] == gb[d]);
    }
}

TEST_CASE("gradient reference value for the symmetric softmax loss") {
    const auto g = grad(LossKind::sym_softmax, sv({0.0, 0.0, 0.0}), 0, 1);
    CHECK(g[0] == doctest::Approx(-2.0 / 3).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(g[2] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(61);
    struct KindSpec {
        LossKind kind;
        int num_experts;
    };
    const KindSpec kinds[] = {{LossKind::asym_softmax, 1},
                              {LossKind::sym_softmax, 1},
                              {LossKind::asym_ova, 1},
                              {LossKind::sym_ova, 1},
                              {LossKind::asym_softmax_multi, 2}};
    for (const auto& spec : kinds) {
        for (int it = 0; it < 60; ++it) {
            const int k = 2 + rng.uniform_int(5);
            std::vector<double> u(k + spec.num_experts);
            for (double& x : u) x = rng.uniform(-4.0, 4.0);
            ScoreVector vec(u, k, spec.num_experts);
            const int y = rng.uniform_int(k);
            std::vector<int> m(spec.num_experts);
            for (int& mj : m) mj = rng.uniform_int(k);

            const auto analytic = grad(spec.kind, vec, y, m);
            const double h = 1e-5;
            for (std::size_t d = 0; d < vec.values.size(); ++d) {
                const double saved = vec.values[d];
                vec.values[d] = saved + h;
                const double up = loss(spec.kind, vec, y, m);
                vec.values[d] = saved - h;
                const double down = loss(spec.kind, vec, y, m);
                vec.values[d] = saved;
                const double fd = (up - down) / (2.0 * h);
                CHECK(std::abs(analytic[d] - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("conditional-risk gradient vanishes at the closed-form minimizer") {
    ConditionalPoint c;
    c.eta = {0.6, 0.4};
    c.expert_acc = {0.5};
    const ScoreVector best = minimize_conditional(LossKind::asym_softmax, c);
    const auto g = conditional_risk_grad(LossKind::asym_softmax, best, c);
    double norm = 0.0;
    for (double x : g) norm += x * x;
    CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("batch mean loss and gradient") {
    Rng rng(73);
    const int k = 3;
    const ScoreVector row0 = sv({0.3, -0.7, 0.1, 0.9});

    SUBCASE("single row equals pointwise loss and gradient") {
        Matrix scores(1, 4);
        for (int c = 0; c < 4; ++c) scores(0, c) = row0.values[c];
        const std::vector<int> labels = {1};
        const std::vector<std::vector<int>> experts = {{2}};
        const auto batch =
            batch_loss_and_grad(LossKind::asym_softmax, scores, k, labels, experts);
        CHECK(batch.mean_loss ==
              doctest::Approx(loss(LossKind::asym_softmax, row0, 1, 2)).epsilon(1e-15));
        const auto g = grad(LossKind::asym_softmax, row0, 1, 2);
        for (int c = 0; c < 4; ++c) CHECK(batch.score_grad(0, c) == g[c]);
    }

    SUBCASE("duplicated rows keep the same mean") {
        Matrix scores(2, 4);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 4; ++c) scores(r, c) = row0.values[c];
        const std::vector<int> labels = {1, 1};
        const std::vector<std::vector<int>> experts = {{2}, {2}};
        const auto batch =
            batch_loss_and_grad(LossKind::asym_softmax, scores, k, labels, experts);
        CHECK(batch.mean_loss ==
              doctest::Approx(loss(LossKind::asym_softmax, row0, 1, 2)).epsilon(1e-15));
    }

    SUBCASE("three random rows against a direct summation oracle") {
        Matrix scores(3, 4);
        std::vector<int> labels(3);
        std::vector<std::vector<int>> experts(3);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) scores(r, c) = rng.uniform(-3.0, 3.0);
            labels[r] = rng.uniform_int(k);
            experts[r] = {rng.uniform_int(k)};
        }
        const auto batch =
            batch_loss_and_grad(LossKind::sym_softmax, scores, k, labels, experts);
        double hand = 0.0;
        for (int r = 0; r < 3; ++r) {
            const auto row = scores.row(r);
            const ScoreVector u(std::vector<double>(row.begin(), row.end()), k, 1);
            hand += loss(LossKind::sym_softmax, u, labels[r], experts[r][0]);
            const auto g = grad(LossKind::sym_softmax, u, labels[r], experts[r][0]);
            for (int c = 0; c < 4; ++c)
                CHECK(std::abs(batch.score_grad(r, c) - g[c] / 3.0) < 1e-12);
        }
        CHECK(std::abs(batch.mean_loss - hand / 3.0) < 1e-12);
    }

    SUBCASE("empty batch is rejected") {
        Matrix scores(0, 4);
        CHECK_THROWS_AS(
            batch_loss_and_grad(LossKind::asym_softmax, scores, k, {}, {}),
            InvalidInputError);
    }
}
