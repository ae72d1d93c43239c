#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "itl/mdp.hpp"
#include "itl/rng.hpp"

namespace itl {

/**
 * 5x5 slippery grid.  Tiles are indexed row-major from the bottom-left
 * corner: tile = y * width + x.  Actions are 0=right, 1=up, 2=left, 3=down.
 * Rewards are defined on entered tiles and folded into R(s,a) through the
 * true dynamics; the goal tile is absorbing and pays its reward every step.
 */
struct GridworldSpec {
    int width = 5;
    int height = 5;
    double slip_prob = 0.2;
    std::vector<int> soft_wall_tiles = {7, 12, 17};          // column x=2, rows y=1..3
    std::vector<int> transfer_wall_tiles = {6, 11, 16};      // shifted to column x=1
    double soft_wall_penalty = -5.0;
    double step_penalty = -0.1;
    double goal_reward = 10.0;
    int start = 0;
    int goal = 24;
    double discount = 0.95;

    int n_tiles() const { return width * height; }

    void validate() const {
        if (width <= 0 || height <= 0) throw std::invalid_argument("GridworldSpec: empty grid");
        if (!(slip_prob >= 0.0 && slip_prob <= 1.0))
            throw std::invalid_argument("GridworldSpec: slip_prob outside [0,1]");
        if (start == goal) throw std::invalid_argument("GridworldSpec: start equals goal");
        auto in_range = [&](int t) { return t >= 0 && t < n_tiles(); };
        if (!in_range(start) || !in_range(goal))
            throw std::invalid_argument("GridworldSpec: start/goal outside grid");
        for (int t : soft_wall_tiles) {
            if (!in_range(t)) throw std::invalid_argument("GridworldSpec: wall tile outside grid");
            if (t == goal) throw std::invalid_argument("GridworldSpec: goal cannot be a soft wall");
        }
    }
};

/// 15-state / 5-action world with sparse random dynamics and state rewards
/// descending in the state index.
struct RandomworldSpec {
    int n_states = 15;
    int n_actions = 5;
    int successors_per_pair = 5;
    std::uint64_t seed = 0;
    double discount = 0.95;

    void validate() const {
        if (n_states <= 0 || n_actions <= 0)
            throw std::invalid_argument("RandomworldSpec: counts must be positive");
        if (successors_per_pair <= 0 || successors_per_pair > n_states)
            throw std::invalid_argument("RandomworldSpec: successors_per_pair outside [1, n_states]");
    }
};

struct ExpertSpec {
    double epsilon = 0.0;
    std::optional<double> target_stochastic_fraction;

    void validate() const {
        if (epsilon < 0.0) throw std::invalid_argument("ExpertSpec: epsilon must be nonnegative");
        if (target_stochastic_fraction &&
            !(*target_stochastic_fraction >= 0.0 && *target_stochastic_fraction <= 1.0))
            throw std::invalid_argument("ExpertSpec: target fraction outside [0,1]");
    }
};

struct ExpertResult {
    Policy policy;          // uniform over each state's epsilon-ball
    EpsilonBall ball;
    double epsilon = 0.0;   // the value actually used (after any search)
    double stochastic_fraction = 0.0;
};

namespace detail {

/// Folds tile-entry rewards into R(s,a) = sum_s' T(s'|s,a) r(s').
inline Eigen::MatrixXd entry_rewards_to_table(const Tensor3& dynamics,
                                              const Eigen::VectorXd& state_reward) {
    const int S = dynamics.dim0(), A = dynamics.dim1();
    Eigen::MatrixXd r(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            r(s, a) = dynamics.row(s, a).dot(state_reward);
    return r;
}

inline Eigen::VectorXd gridworld_state_rewards(const GridworldSpec& spec,
                                               const std::vector<int>& walls) {
    Eigen::VectorXd r = Eigen::VectorXd::Constant(spec.n_tiles(), spec.step_penalty);
    for (int t : walls) r[t] = spec.soft_wall_penalty;
    r[spec.goal] = spec.goal_reward;
    return r;
}

} // namespace detail

inline Tensor3 gridworld_dynamics(const GridworldSpec& spec) {
    spec.validate();
    const int S = spec.n_tiles();
    const int A = 4;
    // direction deltas in action order right, up, left, down
    const int dx[4] = {1, 0, -1, 0};
    const int dy[4] = {0, 1, 0, -1};
    Tensor3 t(S, A, S, 0.0);
    for (int s = 0; s < S; ++s) {
        if (s == spec.goal) {
            for (int a = 0; a < A; ++a) t(s, a, s) = 1.0;
            continue;
        }
        const int x = s % spec.width, y = s / spec.width;
        for (int a = 0; a < A; ++a) {
            for (int d = 0; d < 4; ++d) {
                // slip spreads uniformly over the four directions, intended
                // direction included; blocked moves stay in place
                double p = spec.slip_prob / 4.0 + (d == a ? 1.0 - spec.slip_prob : 0.0);
                if (p == 0.0) continue;
                const int nx = x + dx[d], ny = y + dy[d];
                const int target = (nx < 0 || nx >= spec.width || ny < 0 || ny >= spec.height)
                                       ? s
                                       : ny * spec.width + nx;
                t(s, a, target) += p;
            }
        }
    }
    return t;
}

inline TabularMdp build_gridworld(const GridworldSpec& spec) {
    const Tensor3 dyn = gridworld_dynamics(spec);
    TabularMdp mdp;
    mdp.n_states = spec.n_tiles();
    mdp.n_actions = 4;
    mdp.reward = detail::entry_rewards_to_table(
        dyn, detail::gridworld_state_rewards(spec, spec.soft_wall_tiles));
    mdp.dynamics = dyn;
    mdp.discount = spec.discount;
    mdp.initial_dist = Eigen::VectorXd::Zero(mdp.n_states);
    mdp.initial_dist[spec.start] = 1.0;
    mdp.validate();
    return mdp;
}

inline Eigen::VectorXd randomworld_state_rewards(const RandomworldSpec& spec) {
    Rng rng(derive_seed(spec.seed, {0x5257u})); // "RW" reward stream
    Eigen::VectorXd r(spec.n_states);
    // state i (0-based) draws from [n-1-i, n-i]: earlier states pay more
    for (int i = 0; i < spec.n_states; ++i)
        r[i] = rng.uniform(spec.n_states - 1.0 - i, spec.n_states - static_cast<double>(i));
    return r;
}

inline Eigen::VectorXd randomworld_transfer_state_rewards(const RandomworldSpec& spec) {
    Rng rng(derive_seed(spec.seed, {0x5254u})); // transfer reward stream
    Eigen::VectorXd r(spec.n_states);
    for (int i = 0; i < spec.n_states; ++i)
        r[i] = rng.uniform(static_cast<double>(i), i + 1.0);
    return r;
}

inline Tensor3 randomworld_dynamics(const RandomworldSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, {0x5244u})); // dynamics stream
    Tensor3 t(spec.n_states, spec.n_actions, spec.n_states, 0.0);
    std::vector<double> probs(spec.successors_per_pair);
    for (int s = 0; s < spec.n_states; ++s)
        for (int a = 0; a < spec.n_actions; ++a) {
            const auto successors =
                rng.sample_without_replacement(spec.n_states, spec.successors_per_pair);
            double total = 0.0;
            for (double& p : probs) total += (p = rng.uniform_pos());
            for (int i = 0; i < spec.successors_per_pair; ++i)
                t(s, a, successors[i]) = probs[i] / total;
        }
    return t;
}

inline TabularMdp build_randomworld(const RandomworldSpec& spec) {
    const Tensor3 dyn = randomworld_dynamics(spec);
    TabularMdp mdp;
    mdp.n_states = spec.n_states;
    mdp.n_actions = spec.n_actions;
    mdp.reward = detail::entry_rewards_to_table(dyn, randomworld_state_rewards(spec));
    mdp.dynamics = dyn;
    mdp.discount = spec.discount;
    mdp.initial_dist =
        Eigen::VectorXd::Constant(spec.n_states, 1.0 / spec.n_states);
    mdp.validate();
    return mdp;
}

/// Gridworld transfer task: identical dynamics, soft wall moved.
inline TabularMdp transfer_reward(const TabularMdp& mdp, const GridworldSpec& spec) {
    if (mdp.n_states != spec.n_tiles() || mdp.n_actions != 4)
        throw std::invalid_argument("transfer_reward: MDP is not the gridworld of this spec");
    TabularMdp out = mdp;
    out.reward = detail::entry_rewards_to_table(
        mdp.true_dynamics(), detail::gridworld_state_rewards(spec, spec.transfer_wall_tiles));
    return out;
}

/// Randomworld transfer task: identical dynamics, reward ranking inverted.
inline TabularMdp transfer_reward(const TabularMdp& mdp, const RandomworldSpec& spec) {
    if (mdp.n_states != spec.n_states || mdp.n_actions != spec.n_actions)
        throw std::invalid_argument("transfer_reward: MDP is not the randomworld of this spec");
    TabularMdp out = mdp;
    out.reward =
        detail::entry_rewards_to_table(mdp.true_dynamics(), randomworld_transfer_state_rewards(spec));
    return out;
}

/// Custom transfer task: replace the reward table wholesale.
inline TabularMdp transfer_reward(const TabularMdp& mdp, const Eigen::MatrixXd& reward_table) {
    if (reward_table.rows() != mdp.n_states || reward_table.cols() != mdp.n_actions)
        throw std::invalid_argument("transfer_reward: reward table shape mismatch");
    TabularMdp out = mdp;
    out.reward = reward_table;
    return out;
}

/**
 * Expert that mixes uniformly over each state's epsilon-ball of the true
 * optimal Q.
 *
 * When a target stochastic fraction is requested, epsilon is searched on a
 * 200-point grid spanning [0, max per-state Q gap]; the fraction of
 * multi-action states is monotone in epsilon, so a bisection over the grid
 * locates the candidate closest to the target (ties to the smaller epsilon).
 */
inline ExpertResult build_expert(const TabularMdp& mdp, const ExpertSpec& spec) {
    spec.validate();
    const ValueResult vr = value_iteration(mdp);
    double eps = spec.epsilon;
    if (spec.target_stochastic_fraction) {
        const double target = *spec.target_stochastic_fraction;
        double max_gap = 0.0;
        for (int s = 0; s < mdp.n_states; ++s)
            max_gap = std::max(max_gap, vr.q.row(s).maxCoeff() - vr.q.row(s).minCoeff());
        constexpr int grid_size = 200;
        auto fraction_at = [&](int j) {
            const double e = max_gap * j / (grid_size - 1.0);
            return epsilon_ball(vr, e).stochastic_fraction();
        };
        int lo = 0, hi = grid_size - 1;
        if (fraction_at(lo) >= target) {
            hi = lo;
        } else {
            while (hi - lo > 1) { // smallest grid index whose fraction reaches the target
                const int mid = (lo + hi) / 2;
                (fraction_at(mid) >= target ? hi : lo) = mid;
            }
        }
        int pick = hi;
        if (hi > 0 && std::abs(fraction_at(hi - 1) - target) <= std::abs(fraction_at(hi) - target))
            pick = hi - 1;
        eps = max_gap * pick / (grid_size - 1.0);
    }
    ExpertResult out;
    out.epsilon = eps;
    out.ball = epsilon_ball(vr, eps);
    out.stochastic_fraction = out.ball.stochastic_fraction();
    out.policy.probs = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        const auto& acts = out.ball.per_state[s];
        for (int a : acts) out.policy.probs(s, a) = 1.0 / acts.size();
    }
    return out;
}

} // namespace itl
