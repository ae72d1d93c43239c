#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "itl/dataset.hpp"
#include "itl/mdp.hpp"

namespace itl {

enum class ConstraintKind {
    separation, // Q(s, valid) - Q(s, invalid) >= eps
    closeness,  // |Q(s, valid) - Q(s, other valid)| <= eps
};

/**
 * One expert-consistency constraint at a state.  `action_a` is always a
 * valid action; `action_b` is the invalid action for separation and the
 * second valid action for closeness.
 */
struct ConstraintSpec {
    int state = 0;
    int action_a = 0;
    int action_b = 0;
    ConstraintKind kind = ConstraintKind::separation;
    double epsilon = 0.0;
};

/// Sparse inequality  sum_i coeff_i * x_i >= rhs  over the flattened dynamics.
struct LinearRow {
    std::vector<std::pair<int, double>> coeffs;
    double rhs = 0.0;
    int spec_index = -1; // position in the generating spec list
};

/**
 * Linearized constraint system over a flattened [S x A x S] dynamics tensor.
 * Besides the explicit inequality rows, every feasible point must satisfy
 * the per-(s,a) simplex equalities and elementwise nonnegativity; those are
 * implied by the dimensions and are materialized by the QP solver.
 */
struct LinearConstraintSet {
    int n_states = 0;
    int n_actions = 0;
    std::vector<LinearRow> rows;
    Policy linearization_policy;        // latest expansion point
    Tensor3 linearization_dynamics;

    int n_variables() const { return n_states * n_actions * n_states; }
    int simplex_equality_count() const { return n_states * n_actions; }

    void append(const LinearConstraintSet& other) {
        if (n_states == 0) {
            *this = other;
            return;
        }
        if (other.n_states != n_states || other.n_actions != n_actions)
            throw std::invalid_argument("LinearConstraintSet::append: shape mismatch");
        rows.insert(rows.end(), other.rows.begin(), other.rows.end());
        linearization_policy = other.linearization_policy;
        linearization_dynamics = other.linearization_dynamics;
    }
};

struct ConstraintViolation {
    int spec_index = -1;
    double slack = 0.0; // negative beyond tolerance means violated
};

/**
 * Builds the full constraint list for the given states: a separation spec
 * for every (valid, invalid) pair and a closeness spec for every unordered
 * pair of distinct valid actions.
 */
inline std::vector<ConstraintSpec> enumerate_constraints(
    const std::vector<std::vector<int>>& valid_sets, const std::vector<int>& states,
    int n_actions, double epsilon) {
    std::vector<ConstraintSpec> specs;
    for (int s : states) {
        const auto& valid = valid_sets[s];
        if (valid.empty())
            throw std::invalid_argument("enumerate_constraints: state " + std::to_string(s) +
                                        " has an empty valid set");
        for (int a : valid)
            for (int ap = 0; ap < n_actions; ++ap) {
                if (std::find(valid.begin(), valid.end(), ap) != valid.end()) continue;
                specs.push_back({s, a, ap, ConstraintKind::separation, epsilon});
            }
        for (std::size_t i = 0; i < valid.size(); ++i)
            for (std::size_t j = i + 1; j < valid.size(); ++j)
                specs.push_back({s, valid[i], valid[j], ConstraintKind::closeness, epsilon});
    }
    return specs;
}

/**
 * Linearizes the constraints at a reference (policy, dynamics) pair.
 *
 * The value vector v = (I - g T_pi)^{-1} R_pi is computed once at the
 * reference; with v frozen each constraint is linear in T, with coefficient
 * g*v on the (s, action_a) block and -g*v on the (s, action_b) block.  A
 * separation spec emits one row, a closeness spec two (the two sides of the
 * absolute value).  Zero coefficients are dropped, so a zero value vector
 * leaves rows whose feasibility rests on the rewards alone.
 */
inline LinearConstraintSet linearize(const std::vector<ConstraintSpec>& specs, const Policy& policy,
                                     const Tensor3& ref_dynamics, const Eigen::MatrixXd& rewards,
                                     double gamma) {
    const int S = ref_dynamics.dim0(), A = ref_dynamics.dim1();
    const ValueResult vr = evaluate_policy_closed_form(ref_dynamics, rewards, gamma, policy);
    LinearConstraintSet set;
    set.n_states = S;
    set.n_actions = A;
    set.linearization_policy = policy;
    set.linearization_dynamics = ref_dynamics;
    const Eigen::VectorXd coeff = gamma * vr.v;

    auto block_terms = [&](int s, int a, double sign, std::vector<std::pair<int, double>>& out) {
        const int base = (s * A + a) * S;
        for (int sp = 0; sp < S; ++sp)
            if (coeff[sp] != 0.0) out.emplace_back(base + sp, sign * coeff[sp]);
    };

    for (std::size_t idx = 0; idx < specs.size(); ++idx) {
        const ConstraintSpec& c = specs[idx];
        const double dr = rewards(c.state, c.action_a) - rewards(c.state, c.action_b);
        std::vector<std::pair<int, double>> terms;
        block_terms(c.state, c.action_a, +1.0, terms);
        block_terms(c.state, c.action_b, -1.0, terms);
        if (c.kind == ConstraintKind::separation) {
            // dr + coeffs >= eps
            set.rows.push_back({terms, c.epsilon - dr, static_cast<int>(idx)});
        } else {
            // |dr + coeffs| <= eps, split into the two one-sided rows
            set.rows.push_back({terms, -c.epsilon - dr, static_cast<int>(idx)});
            std::vector<std::pair<int, double>> neg = terms;
            for (auto& [i, v] : neg) v = -v;
            set.rows.push_back({std::move(neg), dr - c.epsilon, static_cast<int>(idx)});
        }
    }
    return set;
}

/**
 * Evaluates the constraints in their exact nonlinear form: Q^pi(.,.;t) via
 * the closed form at t itself.  Returns the specs violated beyond kPropertyTol
 * together with their slack.
 */
inline std::vector<ConstraintViolation> check_exact(const Tensor3& t,
                                                    const std::vector<ConstraintSpec>& specs,
                                                    const Policy& policy,
                                                    const Eigen::MatrixXd& rewards, double gamma,
                                                    Eigen::VectorXd* value_out = nullptr) {
    const ValueResult vr = evaluate_policy_closed_form(t, rewards, gamma, policy);
    if (value_out) *value_out = vr.v;
    std::vector<ConstraintViolation> violations;
    for (std::size_t idx = 0; idx < specs.size(); ++idx) {
        const ConstraintSpec& c = specs[idx];
        const double gap = vr.q(c.state, c.action_a) - vr.q(c.state, c.action_b);
        const double slack = (c.kind == ConstraintKind::separation) ? gap - c.epsilon
                                                                    : c.epsilon - std::abs(gap);
        if (slack < -kPropertyTol) violations.push_back({static_cast<int>(idx), slack});
    }
    return violations;
}

/**
 * Policy used for exact checks and linearizations: uniform over the valid
 * actions on observed states, greedy under `t` everywhere else.
 */
inline Policy assemble_policy(const std::vector<std::vector<int>>& valid_sets,
                              const std::set<int>& observed_states, const Tensor3& t,
                              const Eigen::MatrixXd& rewards, double gamma) {
    const int S = t.dim0(), A = t.dim1();
    const Policy greedy = greedy_policy(value_iteration(t, rewards, gamma));
    Policy pi;
    pi.probs = greedy.probs;
    for (int s : observed_states) {
        const auto& valid = valid_sets[s];
        pi.probs.row(s).setZero();
        for (int a : valid) pi.probs(s, a) = 1.0 / valid.size();
    }
    return pi;
}

/// Reference balls for the property check, taken from observed valid sets.
inline EpsilonBall balls_from_valid_sets(const std::vector<std::vector<int>>& valid_sets,
                                         double epsilon) {
    EpsilonBall b;
    b.epsilon = epsilon;
    b.per_state = valid_sets;
    for (auto& v : b.per_state) std::sort(v.begin(), v.end());
    return b;
}

/// Human-readable diagnostic dump (state, pair, slack per spec).
inline std::string constraint_report(const std::vector<ConstraintSpec>& specs,
                                     const std::vector<ConstraintViolation>& violations) {
    std::string out = "spec_index,state,kind,action_a,action_b,slack\n";
    for (const auto& v : violations) {
        const ConstraintSpec& c = specs[v.spec_index];
        out += std::to_string(v.spec_index) + "," + std::to_string(c.state) + "," +
               (c.kind == ConstraintKind::separation ? "separation" : "closeness") + "," +
               std::to_string(c.action_a) + "," + std::to_string(c.action_b) + "," +
               std::to_string(v.slack) + "\n";
    }
    return out;
}

} // namespace itl
