#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "itl/tensor.hpp"

namespace itl {

inline constexpr double kSimplexTol = 1e-9;    // row-stochasticity check
inline constexpr double kBallTol = 1e-9;       // epsilon-ball membership slack
inline constexpr double kPropertyTol = 1e-7;   // separation margin slack

namespace detail {
inline void check_rows_stochastic(const Tensor3& t, const char* what) {
    for (int s = 0; s < t.dim0(); ++s)
        for (int a = 0; a < t.dim1(); ++a) {
            const auto r = t.row(s, a);
            if (r.minCoeff() < -kSimplexTol || std::abs(r.sum() - 1.0) > kSimplexTol) {
                std::ostringstream msg;
                msg << what << ": row (" << s << "," << a << ") is not a distribution"
                    << " (sum=" << r.sum() << ", min=" << r.minCoeff() << ")";
                throw std::invalid_argument(msg.str());
            }
        }
}
} // namespace detail

/**
 * Finite MDP with states 0..n_states-1 and actions 0..n_actions-1.
 *
 * `dynamics` may be absent: the estimation problem is posed for an MDP whose
 * rewards, discount and initial distribution are known while the transition
 * tensor is not.
 */
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    std::optional<Tensor3> dynamics;   // [S x A x S], row-stochastic
    Eigen::MatrixXd reward;            // [S x A]
    double discount = 0.0;             // in [0, 1)
    Eigen::VectorXd initial_dist;      // [S], sums to 1

    void validate() const {
        if (n_states <= 0 || n_actions <= 0)
            throw std::invalid_argument("TabularMdp: state/action counts must be positive");
        if (!(discount >= 0.0 && discount < 1.0))
            throw std::invalid_argument("TabularMdp: discount must lie in [0,1)");
        if (reward.rows() != n_states || reward.cols() != n_actions)
            throw std::invalid_argument("TabularMdp: reward table shape mismatch");
        if (initial_dist.size() != n_states || initial_dist.minCoeff() < -kSimplexTol ||
            std::abs(initial_dist.sum() - 1.0) > kSimplexTol)
            throw std::invalid_argument("TabularMdp: initial_dist is not a distribution");
        if (dynamics) {
            if (dynamics->dim0() != n_states || dynamics->dim1() != n_actions ||
                dynamics->dim2() != n_states)
                throw std::invalid_argument("TabularMdp: dynamics shape mismatch");
            detail::check_rows_stochastic(*dynamics, "TabularMdp");
        }
    }

    const Tensor3& true_dynamics() const {
        if (!dynamics) throw std::logic_error("TabularMdp: dynamics not available");
        return *dynamics;
    }
};

/// Row-stochastic state -> action distribution.
struct Policy {
    Eigen::MatrixXd probs; // [S x A]

    void validate() const {
        for (Eigen::Index s = 0; s < probs.rows(); ++s) {
            if (probs.row(s).minCoeff() < -kSimplexTol ||
                std::abs(probs.row(s).sum() - 1.0) > kSimplexTol)
                throw std::invalid_argument("Policy: row " + std::to_string(s) +
                                            " is not a distribution");
        }
    }

    static Policy uniform(int n_states, int n_actions) {
        Policy p;
        p.probs = Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions);
        return p;
    }

    /// One-hot policy from an action per state.
    static Policy deterministic(const std::vector<int>& actions, int n_actions) {
        Policy p;
        p.probs = Eigen::MatrixXd::Zero(static_cast<int>(actions.size()), n_actions);
        for (std::size_t s = 0; s < actions.size(); ++s) p.probs(s, actions[s]) = 1.0;
        return p;
    }

    /// Deterministic argmax per state; ties break to the lowest action index.
    int argmax(int s) const {
        int best = 0;
        for (int a = 1; a < probs.cols(); ++a)
            if (probs(s, a) > probs(s, best)) best = a;
        return best;
    }
};

enum class ValueMethod { closed_form, iterative };

struct ValueResult {
    Eigen::VectorXd v;   // [S]
    Eigen::MatrixXd q;   // [S x A]
    ValueMethod method = ValueMethod::closed_form;
};

/// Per-state set of actions whose Q value is within epsilon of the best.
struct EpsilonBall {
    std::vector<std::vector<int>> per_state; // sorted action indices
    double epsilon = 0.0;

    bool contains(int s, int a) const {
        const auto& v = per_state[s];
        return std::binary_search(v.begin(), v.end(), a);
    }
    /// Fraction of states whose set holds more than one action.
    double stochastic_fraction() const {
        if (per_state.empty()) return 0.0;
        int multi = 0;
        for (const auto& v : per_state) multi += (v.size() > 1);
        return static_cast<double>(multi) / per_state.size();
    }
};

/// E_{a~pi}[T_a] as an [S x S] matrix.
inline Eigen::MatrixXd policy_transition_matrix(const Tensor3& t, const Policy& pi) {
    const int S = t.dim0(), A = t.dim1();
    Eigen::MatrixXd tp = Eigen::MatrixXd::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double w = pi.probs(s, a);
            if (w != 0.0) tp.row(s) += w * t.row(s, a).transpose();
        }
    return tp;
}

/// E_{a~pi}[R_a] as an [S] vector.
inline Eigen::VectorXd policy_reward_vector(const Eigen::MatrixXd& reward, const Policy& pi) {
    return (reward.array() * pi.probs.array()).rowwise().sum();
}

/**
 * Policy evaluation through the closed form V = (I - g T_pi)^{-1} R_pi,
 * with Q_a = R_a + g T_a V.  Row-stochastic T_pi and discount < 1 keep the
 * system nonsingular; a singular factorization is reported, never patched.
 */
inline ValueResult evaluate_policy_closed_form(const Tensor3& t, const Eigen::MatrixXd& reward,
                                               double gamma, const Policy& pi) {
    const int S = t.dim0(), A = t.dim1();
    const Eigen::MatrixXd sys =
        Eigen::MatrixXd::Identity(S, S) - gamma * policy_transition_matrix(t, pi);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys);
    // PartialPivLU has no rank query; probe the residual instead.
    ValueResult out;
    out.method = ValueMethod::closed_form;
    out.v = lu.solve(policy_reward_vector(reward, pi));
    if (!out.v.allFinite() || (sys * out.v - policy_reward_vector(reward, pi)).lpNorm<Eigen::Infinity>() > 1e-8 * (1.0 + out.v.lpNorm<Eigen::Infinity>()))
        throw std::runtime_error("evaluate_policy_closed_form: singular or ill-conditioned system");
    out.q.resize(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            out.q(s, a) = reward(s, a) + gamma * t.row(s, a).dot(out.v);
    return out;
}

inline ValueResult evaluate_policy_closed_form(const TabularMdp& mdp, const Policy& pi) {
    return evaluate_policy_closed_form(mdp.true_dynamics(), mdp.reward, mdp.discount, pi);
}

/**
 * Optimal values by value iteration: stops once the sup-norm Bellman
 * residual falls below `tol`.
 *
 * Throws after 10^6 sweeps with the last residual in the message.
 */
inline ValueResult value_iteration(const Tensor3& t, const Eigen::MatrixXd& reward, double gamma,
                                   double tol = 1e-10,
                                   const Eigen::VectorXd* warm_start = nullptr) {
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
    const int S = t.dim0(), A = t.dim1();
    constexpr long max_sweeps = 1000000;
    Eigen::VectorXd v = warm_start ? *warm_start : Eigen::VectorXd::Zero(S);
    Eigen::MatrixXd q(S, A);
    double residual = std::numeric_limits<double>::infinity();
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                q(s, a) = reward(s, a) + gamma * t.row(s, a).dot(v);
        Eigen::VectorXd v_next = q.rowwise().maxCoeff();
        residual = (v_next - v).lpNorm<Eigen::Infinity>();
        v.swap(v_next);
        if (residual <= tol) {
            ValueResult out;
            out.v = std::move(v);
            out.q = std::move(q);
            // refresh Q at the final V so that v == rowwise max of q
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < A; ++a)
                    out.q(s, a) = reward(s, a) + gamma * t.row(s, a).dot(out.v);
            out.v = out.q.rowwise().maxCoeff();
            out.method = ValueMethod::iterative;
            return out;
        }
    }
    throw std::runtime_error("value_iteration: no convergence after 1e6 sweeps, last residual " +
                             std::to_string(residual));
}

inline ValueResult value_iteration(const TabularMdp& mdp, double tol = 1e-10) {
    return value_iteration(mdp.true_dynamics(), mdp.reward, mdp.discount, tol);
}

/// One-hot greedy policy of a Q table.  Ties break to the lowest action
/// index; a tie means within kBallTol of the row maximum, so solver-level
/// noise cannot flip the chosen action between equivalent ones.
inline Policy greedy_policy(const ValueResult& vr) {
    const int S = static_cast<int>(vr.q.rows()), A = static_cast<int>(vr.q.cols());
    std::vector<int> actions(S, 0);
    for (int s = 0; s < S; ++s) {
        const double qmax = vr.q.row(s).maxCoeff();
        int best = 0;
        while (qmax - vr.q(s, best) > kBallTol) ++best;
        actions[s] = best;
    }
    return Policy::deterministic(actions, A);
}

/// Actions within epsilon of the per-state max Q (absolute slack kBallTol).
inline EpsilonBall epsilon_ball(const ValueResult& vr, double epsilon) {
    if (epsilon < 0.0) throw std::invalid_argument("epsilon_ball: epsilon must be nonnegative");
    const int S = static_cast<int>(vr.q.rows()), A = static_cast<int>(vr.q.cols());
    EpsilonBall ball;
    ball.epsilon = epsilon;
    ball.per_state.resize(S);
    for (int s = 0; s < S; ++s) {
        const double qmax = vr.q.row(s).maxCoeff();
        for (int a = 0; a < A; ++a)
            if (qmax - vr.q(s, a) <= epsilon + kBallTol) ball.per_state[s].push_back(a);
    }
    return ball;
}

struct BallPropertyReport {
    bool holds = true;
    // (state, valid action, offending action); for set mismatches the valid
    // slot carries the reference argmax.
    std::vector<std::tuple<int, int, int>> violations;
};

/**
 * Checks whether dynamics `t` reproduce the reference epsilon-balls on the
 * given states and keep every action outside a ball at least epsilon below
 * every action inside it, measured on the optimal Q of `t`.
 */
inline BallPropertyReport epsilon_ball_property_holds(const Tensor3& t,
                                                      const Eigen::MatrixXd& reward, double gamma,
                                                      const EpsilonBall& reference,
                                                      const std::vector<int>& states,
                                                      double epsilon) {
    BallPropertyReport report;
    if (states.empty()) return report;
    const ValueResult vr = value_iteration(t, reward, gamma);
    const EpsilonBall ball_t = epsilon_ball(vr, epsilon);
    const int A = static_cast<int>(vr.q.cols());
    for (int s : states) {
        const auto& ref = reference.per_state[s];
        if (ball_t.per_state[s] != ref) {
            std::vector<int> diff;
            std::set_symmetric_difference(ball_t.per_state[s].begin(), ball_t.per_state[s].end(),
                                          ref.begin(), ref.end(), std::back_inserter(diff));
            const int ref_best = ref.empty() ? -1 : ref.front();
            for (int a : diff) report.violations.emplace_back(s, ref_best, a);
        }
        for (int a : ref)
            for (int ap = 0; ap < A; ++ap) {
                if (std::binary_search(ref.begin(), ref.end(), ap)) continue;
                if (vr.q(s, a) - vr.q(s, ap) < epsilon - kPropertyTol)
                    report.violations.emplace_back(s, a, ap);
            }
    }
    report.holds = report.violations.empty();
    return report;
}

} // namespace itl
