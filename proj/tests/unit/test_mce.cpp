#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "itl/mce.hpp"
#include "support/helpers.hpp"

using namespace itl;
using Catch::Approx;

namespace {

double naive_lse(const Eigen::MatrixXd& q, int s) {
    double acc = 0.0;
    for (Eigen::Index a = 0; a < q.cols(); ++a) acc += std::exp(q(s, a));
    return std::log(acc);
}

} // namespace

TEST_CASE("soft value iteration", "[mce]") {
    SECTION("single action reduces to plain policy evaluation") {
        const TabularMdp mdp = testing::random_mdp(5, 1, 3);
        const Eigen::MatrixXd q = soft_value_iteration(mdp.true_dynamics(), mdp.reward, 0.95, 1e-12);
        const ValueResult closed =
            evaluate_policy_closed_form(mdp.true_dynamics(), mdp.reward, 0.95, Policy::uniform(5, 1));
        CHECK((q - closed.q).lpNorm<Eigen::Infinity>() < 1e-8);
    }
    SECTION("zero reward has the constant fixed point log|A|/(1-gamma)") {
        const TabularMdp mdp = testing::random_mdp(4, 3, 5);
        const Eigen::MatrixXd q = soft_value_iteration(
            mdp.true_dynamics(), Eigen::MatrixXd::Zero(4, 3), 0.95, 1e-12);
        const double expected = std::log(3.0) / (1.0 - 0.95);
        for (int s = 0; s < 4; ++s)
            CHECK(naive_lse(q, s) == Approx(expected).margin(1e-8));
    }
    SECTION("random MDP matches a long brute-force iteration") {
        const TabularMdp mdp = testing::random_mdp(5, 3, 7);
        const Eigen::MatrixXd q =
            soft_value_iteration(mdp.true_dynamics(), mdp.reward, 0.95, 1e-12);
        // oracle: unshifted fixed-point iteration, fixed sweep count
        Eigen::VectorXd v = Eigen::VectorXd::Zero(5);
        Eigen::MatrixXd qo(5, 3);
        for (int sweep = 0; sweep < 100000; ++sweep) {
            for (int s = 0; s < 5; ++s)
                for (int a = 0; a < 3; ++a)
                    qo(s, a) = mdp.reward(s, a) + 0.95 * mdp.true_dynamics().row(s, a).dot(v);
            for (int s = 0; s < 5; ++s) v[s] = naive_lse(qo, s);
        }
        CHECK((q - qo).lpNorm<Eigen::Infinity>() < 1e-6);
    }
}

TEST_CASE("data-term gradient matches finite differences", "[mce]") {
    const TabularMdp mdp = testing::random_mdp(4, 2, 11);
    const BatchDataset data = testing::full_pair_dataset(mdp, 6, 13);
    Rng rng(3);
    Tensor3 theta(4, 2, 4, 0.0);
    for (auto& v : theta.data()) v = rng.uniform(-1.0, 1.0);
    const Tensor3 t = mce_softmax_dynamics(theta);
    const Tensor3 grad = mce_data_gradient(data, t);

    auto data_term = [&](const Tensor3& th) {
        const Tensor3 tt = mce_softmax_dynamics(th);
        double acc = 0.0;
        for (int s = 0; s < 4; ++s)
            for (int a = 0; a < 2; ++a)
                for (int sp = 0; sp < 4; ++sp)
                    if (data.counts(s, a, sp) > 0)
                        acc += data.counts(s, a, sp) * std::log(tt(s, a, sp));
        return acc;
    };
    const double h = 1e-5;
    double worst_rel = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        Tensor3 tp = theta, tm = theta;
        tp.data()[i] += h;
        tm.data()[i] -= h;
        const double fd = (data_term(tp) - data_term(tm)) / (2.0 * h);
        worst_rel = std::max(worst_rel,
                             std::abs(grad.data()[i] - fd) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst_rel <= 1e-5);
}

TEST_CASE("full gradient matches finite differences of the whole loss", "[mce]") {
    const TabularMdp mdp = testing::random_mdp(3, 2, 21);
    const BatchDataset data = testing::full_pair_dataset(mdp, 4, 23);
    Rng rng(7);
    Tensor3 theta(3, 2, 3, 0.0);
    for (auto& v : theta.data()) v = rng.uniform(-0.5, 0.5);

    auto loss_of = [&](const Tensor3& th) {
        const Tensor3 tt = mce_softmax_dynamics(th);
        const Eigen::MatrixXd q = soft_value_iteration(tt, mdp.reward, 0.9, 1e-13);
        return mce_loss(data, tt, q, 1.0);
    };
    const Tensor3 t = mce_softmax_dynamics(theta);
    const Eigen::MatrixXd q = soft_value_iteration(t, mdp.reward, 0.9, 1e-13);
    Tensor3 grad = mce_data_gradient(data, t);
    const Tensor3 pg = mce_detail::policy_term_gradient(data, t, q, 0.9, 1.0);
    for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] += pg.data()[i];

    const double h = 1e-4;
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        Tensor3 tp = theta, tm = theta;
        tp.data()[i] += h;
        tm.data()[i] -= h;
        const double fd = (loss_of(tp) - loss_of(tm)) / (2.0 * h);
        worst = std::max(worst, std::abs(grad.data()[i] - fd) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("fit behavior", "[mce]") {
    SECTION("zero steps returns uniform dynamics") {
        const TabularMdp mdp = testing::random_mdp(3, 2, 31);
        const BatchDataset data = testing::full_pair_dataset(mdp, 3, 33);
        MceConfig cfg;
        cfg.max_steps = 0;
        const MceFitResult res = fit_mce(data, mdp.reward, 0.95, cfg);
        for (int s = 0; s < 3; ++s)
            for (int a = 0; a < 2; ++a)
                for (int sp = 0; sp < 3; ++sp)
                    REQUIRE(res.dynamics(s, a, sp) == Approx(1.0 / 3));
    }
    SECTION("deterministic transitions dominate after training") {
        // two states, both actions deterministic: a0 stays, a1 switches
        TabularMdp mdp;
        mdp.n_states = 2;
        mdp.n_actions = 2;
        Tensor3 t(2, 2, 2, 0.0);
        t(0, 0, 0) = 1.0;
        t(0, 1, 1) = 1.0;
        t(1, 0, 1) = 1.0;
        t(1, 1, 0) = 1.0;
        mdp.dynamics = t;
        mdp.reward.resize(2, 2);
        mdp.reward << 1.0, 0.0, 0.0, 1.0;
        mdp.discount = 0.9;
        mdp.initial_dist = Eigen::VectorXd::Constant(2, 0.5);
        const BatchDataset data = testing::full_pair_dataset(mdp, 50, 41);
        MceConfig cfg;
        cfg.max_steps = 3000;
        cfg.learning_rate = 0.05;
        cfg.convergence_tol = 1e-12;
        const MceFitResult res = fit_mce(data, mdp.reward, mdp.discount, cfg);
        CHECK(res.dynamics(0, 0, 0) >= 0.9);
        CHECK(res.dynamics(0, 1, 1) >= 0.9);
        CHECK(res.dynamics(1, 0, 1) >= 0.9);
        CHECK(res.dynamics(1, 1, 0) >= 0.9);
    }
    SECTION("rows stay on the simplex and the loss mostly climbs") {
        const TabularMdp mdp = testing::random_mdp(5, 3, 47);
        const BatchDataset data = testing::full_pair_dataset(mdp, 8, 49);
        MceConfig cfg;
        cfg.max_steps = 200;
        const MceFitResult res = fit_mce(data, mdp.reward, mdp.discount, cfg);
        for (int s = 0; s < 5; ++s)
            for (int a = 0; a < 3; ++a)
                REQUIRE(std::abs(res.dynamics.row(s, a).sum() - 1.0) < 1e-9);
        int increases = 0;
        for (std::size_t i = 1; i < res.loss_history.size(); ++i)
            increases += (res.loss_history[i] >= res.loss_history[i - 1] - 1e-12);
        CHECK(static_cast<double>(increases) / (res.loss_history.size() - 1) >= 0.9);
    }
}
