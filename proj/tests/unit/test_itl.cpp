#include <catch2/catch_amalgamated.hpp>

#include "itl/envs.hpp"
#include "itl/estimator.hpp"
#include "itl/metrics.hpp"
#include "support/helpers.hpp"

using namespace itl;
using Catch::Approx;

namespace {

GridworldSpec small_grid() {
    // asymmetric wall placement keeps the non-goal optimal actions unique
    GridworldSpec spec;
    spec.width = 3;
    spec.height = 3;
    spec.soft_wall_tiles = {5};
    spec.transfer_wall_tiles = {7};
    spec.start = 0;
    spec.goal = 8;
    return spec;
}

} // namespace

TEST_CASE("optimal-expert recovery on a small grid", "[itl]") {
    const TabularMdp mdp = build_gridworld(small_grid());
    const ExpertResult expert = build_expert(mdp, {.epsilon = 0.0});
    const BatchDataset data = generate_batch(mdp, expert.ball, 1.0, 10, 7);
    ItlConfig cfg;
    cfg.epsilon = 0.0;
    const ItlResult res = itl_fit(data, mdp.reward, mdp.discount, cfg);
    REQUIRE(res.converged);
    CHECK(res.residual_violations.empty());
    const Policy recovered = greedy_policy(value_iteration(res.t_hat, mdp.reward, mdp.discount));
    const Policy truth = greedy_policy(value_iteration(mdp));
    CHECK(best_matching(recovered, truth, data.observed_state_list()) == Approx(1.0));
}

TEST_CASE("an already-consistent mle converges in one solve", "[itl]") {
    // huge sample count pins the mle near the truth, so the first projection
    // is already feasible
    RandomworldSpec spec;
    spec.seed = 9;
    spec.n_states = 6;
    spec.n_actions = 3;
    spec.successors_per_pair = 3;
    const TabularMdp mdp = build_randomworld(spec);
    const ExpertResult expert = build_expert(mdp, {.epsilon = 0.0});
    const BatchDataset data = generate_batch(mdp, expert.ball, 1.0, 4000, 3);
    ItlConfig cfg;
    cfg.epsilon = 0.0;
    const ItlResult res = itl_fit(data, mdp.reward, mdp.discount, cfg);
    REQUIRE(res.converged);
    CHECK(res.outer_iterations == 1);
    const Tensor3 mle = mle_estimate(data);
    CHECK((res.t_hat.flattened() - mle.flattened()).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("converged fits pass the exact constraint check", "[itl]") {
    const TabularMdp mdp = build_gridworld(small_grid());
    ExpertSpec es;
    es.target_stochastic_fraction = 0.4;
    const ExpertResult expert = build_expert(mdp, es);
    const BatchDataset data = generate_batch(mdp, expert.ball, 0.7, 10, 21);
    ItlConfig cfg;
    cfg.epsilon = expert.epsilon;
    const ItlResult res = itl_fit(data, mdp.reward, mdp.discount, cfg);
    REQUIRE(res.converged);
    const EstimatedExpertPolicy hat = estimate_expert_policy(data);
    const Policy pi =
        assemble_policy(hat.valid_actions, data.observed_states, res.t_hat, mdp.reward, mdp.discount);
    CHECK(check_exact(res.t_hat, res.specs, pi, mdp.reward, mdp.discount).empty());
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            REQUIRE(std::abs(res.t_hat.row(s, a).sum() - 1.0) < 1e-8);
}

TEST_CASE("fit is deterministic", "[itl]") {
    const TabularMdp mdp = build_gridworld(small_grid());
    const ExpertResult expert = build_expert(mdp, {.epsilon = 0.1});
    const BatchDataset data = generate_batch(mdp, expert.ball, 0.8, 8, 5);
    ItlConfig cfg;
    cfg.epsilon = 0.1;
    const ItlResult a = itl_fit(data, mdp.reward, mdp.discount, cfg);
    const ItlResult b = itl_fit(data, mdp.reward, mdp.discount, cfg);
    CHECK(a.t_hat.data() == b.t_hat.data());
    CHECK(a.outer_iterations == b.outer_iterations);
}

TEST_CASE("disabling accumulation never grows the constraint system", "[itl]") {
    const TabularMdp mdp = build_gridworld(small_grid());
    ExpertSpec es;
    es.target_stochastic_fraction = 0.3;
    const ExpertResult expert = build_expert(mdp, es);
    const BatchDataset data = generate_batch(mdp, expert.ball, 0.6, 6, 11);
    ItlConfig acc;
    acc.epsilon = expert.epsilon;
    ItlConfig latest = acc;
    latest.accumulate_linearizations = false;
    const ItlResult r_acc = itl_fit(data, mdp.reward, mdp.discount, acc);
    const ItlResult r_latest = itl_fit(data, mdp.reward, mdp.discount, latest);
    CHECK(r_latest.final_linear_rows <= r_acc.final_linear_rows);
}

TEST_CASE("reward-only infeasibility surfaces the conflicting specs", "[itl]") {
    // zero rewards and a positive epsilon make separation impossible
    const TabularMdp mdp = build_gridworld(small_grid());
    const ExpertResult expert = build_expert(mdp, {.epsilon = 0.0});
    const BatchDataset data = generate_batch(mdp, expert.ball, 1.0, 5, 2);
    ItlConfig cfg;
    cfg.epsilon = 0.5;
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
    try {
        itl_fit(data, zero, mdp.discount, cfg);
        FAIL("expected ItlInfeasibleError");
    } catch (const ItlInfeasibleError& e) {
        CHECK(!e.conflicting_specs.empty());
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("infeasible"));
    }
}

TEST_CASE("epsilon sweep", "[itl]") {
    const TabularMdp mdp = build_gridworld(small_grid());
    ExpertSpec es;
    es.target_stochastic_fraction = 0.3;
    const ExpertResult expert = build_expert(mdp, es);
    const BatchDataset train = generate_batch(mdp, expert.ball, 1.0, 10, 41);
    const BatchDataset validation = generate_batch(mdp, expert.ball, 1.0, 10, 42);

    SECTION("a single candidate wins by default") {
        const SweepResult r =
            epsilon_sweep(train, validation, {mdp.reward}, mdp.discount, {expert.epsilon});
        CHECK(r.best_epsilon == Approx(expert.epsilon));
        REQUIRE(r.cells.size() == 1);
        CHECK_FALSE(r.cells[0].failed);
        CHECK(r.cells[0].epsilon_matching.size() == 1);
    }
    SECTION("sweep scores are reproducible") {
        const std::vector<double> grid{0.0, expert.epsilon, 2.0 * expert.epsilon + 0.1};
        const SweepResult a = epsilon_sweep(train, validation, {mdp.reward}, mdp.discount, grid);
        const SweepResult b = epsilon_sweep(train, validation, {mdp.reward}, mdp.discount, grid);
        CHECK(a.best_epsilon == b.best_epsilon);
        for (std::size_t i = 0; i < a.cells.size(); ++i)
            CHECK(a.cells[i].mean_score == b.cells[i].mean_score);
    }
    SECTION("failed cells are recorded, not fatal") {
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
        const SweepResult r =
            epsilon_sweep(train, validation, {zero}, mdp.discount, {0.0, 1.0});
        // epsilon 1 with zero rewards is infeasible; epsilon 0 must survive
        CHECK(r.cells.size() == 2);
        CHECK_FALSE(r.cells[0].failed);
        CHECK(r.cells[1].failed);
        CHECK(r.best_epsilon == 0.0);
    }
}
