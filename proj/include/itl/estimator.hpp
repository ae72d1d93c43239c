#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "itl/constraints.hpp"
#include "itl/dataset.hpp"
#include "itl/qp.hpp"

namespace itl {

struct ItlConfig {
    double epsilon = 0.0;
    int max_outer_iters = 50;
    bool accumulate_linearizations = true;
    bool include_unobserved_constraints = false;
    bool include_initial_linearization = true; // keep the pre-loop rows in the accumulated set
    double expert_min_freq = 0.0;
    QpSettings qp;

    void validate() const {
        if (epsilon < 0.0) throw std::invalid_argument("ItlConfig: epsilon must be nonnegative");
        if (max_outer_iters < 1)
            throw std::invalid_argument("ItlConfig: max_outer_iters must be at least 1");
    }
};

struct ItlResult {
    Tensor3 t_hat;
    int outer_iterations = 0;   // number of QP solves
    bool converged = false;
    std::vector<ConstraintViolation> residual_violations;
    std::vector<ConstraintSpec> specs; // the exact constraints the result is judged against
    double wall_time_seconds = 0.0;
    int final_linear_rows = 0;
};

/// Thrown when the accumulated linear system has no feasible point.
class ItlInfeasibleError : public std::runtime_error {
public:
    ItlInfeasibleError(std::string diagnostic, std::vector<ConstraintSpec> specs)
        : std::runtime_error("ITL constraint system infeasible: " + diagnostic),
          conflicting_specs(std::move(specs)) {}
    std::vector<ConstraintSpec> conflicting_specs;
};

namespace itl_detail {

inline Tensor3 tensor_from_flat(const Eigen::VectorXd& x, int S, int A) {
    Tensor3 t(S, A, S, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = x[static_cast<Eigen::Index>(i)];
    // clear any residual negativity from the solver before downstream
    // row-stochastic validation
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            auto row = t.row(s, a);
            for (int sp = 0; sp < S; ++sp) row[sp] = std::max(row[sp], 0.0);
            row /= row.sum();
        }
    return t;
}

inline std::vector<ConstraintSpec> unobserved_specs(const BatchDataset& data, const Tensor3& t,
                                                    const Eigen::MatrixXd& rewards, double gamma,
                                                    double epsilon) {
    const Policy greedy = greedy_policy(value_iteration(t, rewards, gamma));
    std::vector<std::vector<int>> sets(data.n_states);
    std::vector<int> states;
    for (int s = 0; s < data.n_states; ++s) {
        if (data.state_observed(s)) continue;
        sets[s] = {greedy.argmax(s)};
        states.push_back(s);
    }
    return enumerate_constraints(sets, states, data.n_actions, epsilon);
}

} // namespace itl_detail

/**
 * Iterative point estimate of the dynamics.
 *
 * Starting from the smoothed MLE, the loop alternates: assemble the policy
 * (uniform over observed valid actions; greedy under the current iterate on
 * unobserved states, uniform on the very first pass), linearize the
 * constraints there, and solve the weighted projection QP.  It stops once
 * the epsilon-ball property holds on every observed state and the exact
 * constraints are clean, or the iteration cap is reached, in which case the
 * iterate with the fewest violations is returned with converged=false.
 */
inline ItlResult itl_fit(const BatchDataset& data, const Eigen::MatrixXd& rewards, double gamma,
                         const ItlConfig& config) {
    config.validate();
    if (data.transitions.empty()) throw std::invalid_argument("itl_fit: dataset is empty");
    const auto t_start = std::chrono::steady_clock::now();
    const int S = data.n_states, A = data.n_actions;

    const EstimatedExpertPolicy expert = estimate_expert_policy(data, config.expert_min_freq);
    const std::vector<int> observed = data.observed_state_list();
    const std::vector<ConstraintSpec> specs =
        enumerate_constraints(expert.valid_actions, observed, A, config.epsilon);
    const EpsilonBall reference = balls_from_valid_sets(expert.valid_actions, config.epsilon);

    const Tensor3 t_mle = mle_estimate(data);
    QpProblem problem;
    problem.x0 = t_mle.flattened();
    problem.weights = data.counts.flattened();
    problem.constraints.n_states = S;
    problem.constraints.n_actions = A;

    ItlResult result;
    result.specs = specs;

    // pre-loop pass: expert policy on observed states, uniform elsewhere
    Policy pi0 = Policy::uniform(S, A);
    for (int s : observed) pi0.probs.row(s) = expert.policy.probs.row(s);
    LinearConstraintSet initial = linearize(specs, pi0, t_mle, rewards, gamma);
    if (config.include_unobserved_constraints)
        initial.append(linearize(itl_detail::unobserved_specs(data, t_mle, rewards, gamma, config.epsilon),
                                 pi0, t_mle, rewards, gamma));

    LinearConstraintSet accumulated;
    if (config.include_initial_linearization) accumulated = initial;

    Tensor3 t_cur;
    Tensor3 best_t;
    std::size_t best_violation_count = std::numeric_limits<std::size_t>::max();
    std::vector<ConstraintViolation> best_exact;

    for (int iter = 0; iter < config.max_outer_iters; ++iter) {
        LinearConstraintSet solved_set;
        if (iter == 0) {
            solved_set = initial;
        } else {
            const Policy pi =
                assemble_policy(expert.valid_actions, data.observed_states, t_cur, rewards, gamma);
            LinearConstraintSet latest = linearize(specs, pi, t_cur, rewards, gamma);
            if (config.include_unobserved_constraints)
                latest.append(linearize(
                    itl_detail::unobserved_specs(data, t_cur, rewards, gamma, config.epsilon), pi,
                    t_cur, rewards, gamma));
            if (config.accumulate_linearizations) {
                accumulated.append(latest);
                solved_set = accumulated;
            } else {
                solved_set = latest;
            }
        }
        problem.constraints = solved_set;
        const Eigen::VectorXd warm = t_cur.size() ? Eigen::VectorXd(t_cur.flattened()) : Eigen::VectorXd();
        const QpSolution qp = qp_solve(problem, config.qp, warm.size() ? &warm : nullptr);
        if (qp.status == QpStatus::infeasible)
            throw ItlInfeasibleError(qp.diagnostic, specs);
        result.final_linear_rows = static_cast<int>(solved_set.rows.size());
        result.outer_iterations = iter + 1;
        t_cur = itl_detail::tensor_from_flat(qp.x, S, A);

        const BallPropertyReport property =
            epsilon_ball_property_holds(t_cur, rewards, gamma, reference, observed, config.epsilon);
        const Policy check_pi =
            assemble_policy(expert.valid_actions, data.observed_states, t_cur, rewards, gamma);
        const std::vector<ConstraintViolation> exact =
            check_exact(t_cur, specs, check_pi, rewards, gamma);
        const std::size_t violation_count = property.violations.size() + exact.size();
        if (violation_count < best_violation_count) {
            best_violation_count = violation_count;
            best_t = t_cur;
            best_exact = exact;
        }
        if (property.holds && exact.empty()) {
            result.converged = true;
            break;
        }
    }

    result.t_hat = result.converged ? t_cur : best_t;
    result.residual_violations = result.converged ? std::vector<ConstraintViolation>{} : best_exact;
    result.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

struct SweepCell {
    double epsilon = 0.0;
    bool failed = false;
    std::string error;
    // one entry per supplied reward table, in order
    std::vector<double> best_matching;
    std::vector<double> epsilon_matching;
    double mean_score = 0.0;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    double best_epsilon = 0.0;
    int best_index = -1;
};

/**
 * Validation sweep over candidate epsilons.
 *
 * Each candidate fits ITL on the training split and scores the greedy policy
 * of the fitted dynamics, one reward table at a time, against the validation
 * split: epsilon-matching is membership of the policy's argmax in the
 * validation valid-action set, best-matching is agreement with the
 * validation modal action, both averaged over validation-observed states.
 * The returned best epsilon maximizes the mean of all scores.
 */
inline SweepResult epsilon_sweep(const BatchDataset& train, const BatchDataset& validation,
                                 const std::vector<Eigen::MatrixXd>& rewards, double gamma,
                                 const std::vector<double>& epsilon_grid,
                                 const ItlConfig& base_config = {}) {
    if (epsilon_grid.empty() || rewards.empty())
        throw std::invalid_argument("epsilon_sweep: empty grid or reward list");
    const EstimatedExpertPolicy val_expert = estimate_expert_policy(validation, base_config.expert_min_freq);
    std::vector<int> val_states = validation.observed_state_list();

    SweepResult out;
    double best_score = -std::numeric_limits<double>::infinity();
    for (double eps : epsilon_grid) {
        SweepCell cell;
        cell.epsilon = eps;
        try {
            ItlConfig cfg = base_config;
            cfg.epsilon = eps;
            const ItlResult fit = itl_fit(train, rewards.front(), gamma, cfg);
            for (const Eigen::MatrixXd& r : rewards) {
                const Policy pi = greedy_policy(value_iteration(fit.t_hat, r, gamma));
                double best = 0.0, ball = 0.0;
                for (int s : val_states) {
                    const int a = pi.argmax(s);
                    const auto& valid = val_expert.valid_actions[s];
                    ball += std::find(valid.begin(), valid.end(), a) != valid.end();
                    int modal = 0;
                    double modal_count = -1.0;
                    for (int av = 0; av < validation.n_actions; ++av)
                        if (validation.pair_total(s, av) > modal_count) {
                            modal_count = validation.pair_total(s, av);
                            modal = av;
                        }
                    best += (a == modal);
                }
                const double denom = std::max<std::size_t>(val_states.size(), 1);
                cell.best_matching.push_back(best / denom);
                cell.epsilon_matching.push_back(ball / denom);
            }
            double total = 0.0;
            for (double v : cell.best_matching) total += v;
            for (double v : cell.epsilon_matching) total += v;
            cell.mean_score = total / (2.0 * rewards.size());
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.error = e.what();
            cell.mean_score = -std::numeric_limits<double>::infinity();
        }
        if (!cell.failed && cell.mean_score > best_score) {
            best_score = cell.mean_score;
            out.best_epsilon = eps;
            out.best_index = static_cast<int>(out.cells.size());
        }
        out.cells.push_back(std::move(cell));
    }
    if (out.best_index < 0)
        throw std::runtime_error("epsilon_sweep: every cell failed");
    return out;
}

} // namespace itl
