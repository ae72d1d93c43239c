#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "itl/constraints.hpp"

namespace itl {

/**
 * Weighted projection problem over a flattened dynamics tensor:
 *
 *   min_x  sum_i (weights_i + ridge) * (x_i - x0_i)^2
 *   s.t.   every LinearRow of `constraints`,
 *          per-(s,a) simplex equalities, and x >= 0.
 *
 * The ridge keeps the objective strictly convex on coordinates with zero
 * observation weight, tying the solution to the nearest feasible point
 * around x0 there.
 */
struct QpProblem {
    Eigen::VectorXd x0;
    Eigen::VectorXd weights;
    double ridge = 1e-6;
    LinearConstraintSet constraints;

    void validate() const {
        const int n = constraints.n_variables();
        if (n <= 0) throw std::invalid_argument("QpProblem: constraint set has no dimensions");
        if (x0.size() != n || weights.size() != n)
            throw std::invalid_argument("QpProblem: x0/weights size mismatch");
        if (weights.minCoeff() < 0.0)
            throw std::invalid_argument("QpProblem: weights must be nonnegative");
        if (!(ridge > 0.0)) throw std::invalid_argument("QpProblem: ridge must be positive");
    }
};

enum class QpStatus { optimal, max_iter, infeasible };

struct QpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd dual;       // multipliers in the solver's stacked row order
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    QpStatus status = QpStatus::max_iter;
    int iterations = 0;
    std::string diagnostic;
    bool polished = false;
};

struct QpSettings {
    double tol_primal = 1e-6;
    double tol_dual = 1e-6;
    int max_iter = 50000;
    double rho = 0.1;           // base dual step; equalities use 1e3 * rho
    double sigma = 1e-6;
    double alpha = 1.6;         // over-relaxation
    int check_interval = 25;
    bool polish = true;
    bool adapt_rho = true;
    double eps_infeasible = 1e-9;
};

struct KktReport {
    double stationarity = 0.0;
    double primal_feasibility = 0.0;
    double complementary_slackness = 0.0;
};

namespace qp_detail {

struct Stacked {
    Eigen::SparseMatrix<double> A;  // inequality rows, simplex rows, identity
    Eigen::VectorXd lower, upper;
    int n_ineq = 0, n_eq = 0, n_bound = 0;
};

inline Stacked stack_constraints(const LinearConstraintSet& cs) {
    const int n = cs.n_variables();
    const int S = cs.n_states, A = cs.n_actions;
    const double inf = std::numeric_limits<double>::infinity();
    Stacked st;
    st.n_ineq = static_cast<int>(cs.rows.size());
    st.n_eq = cs.simplex_equality_count();
    st.n_bound = n;
    const int m = st.n_ineq + st.n_eq + st.n_bound;
    std::vector<Eigen::Triplet<double>> trip;
    st.lower.resize(m);
    st.upper.resize(m);
    int r = 0;
    for (const LinearRow& row : cs.rows) {
        for (const auto& [i, v] : row.coeffs) trip.emplace_back(r, i, v);
        st.lower[r] = row.rhs;
        st.upper[r] = inf;
        ++r;
    }
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const int base = (s * A + a) * S;
            for (int sp = 0; sp < S; ++sp) trip.emplace_back(r, base + sp, 1.0);
            st.lower[r] = 1.0;
            st.upper[r] = 1.0;
            ++r;
        }
    for (int i = 0; i < n; ++i) {
        trip.emplace_back(r, i, 1.0);
        st.lower[r] = 0.0;
        st.upper[r] = inf;
        ++r;
    }
    st.A.resize(m, n);
    st.A.setFromTriplets(trip.begin(), trip.end());
    st.A.makeCompressed();
    return st;
}

inline int most_violated_row(const Stacked& st, const Eigen::VectorXd& ax, double* amount) {
    int worst = 0;
    double worst_v = -1.0;
    for (int i = 0; i < ax.size(); ++i) {
        const double v = std::max(st.lower[i] - ax[i],
                                  std::isfinite(st.upper[i]) ? ax[i] - st.upper[i] : 0.0);
        if (v > worst_v) {
            worst_v = v;
            worst = i;
        }
    }
    if (amount) *amount = worst_v;
    return worst;
}

inline std::string row_name(const Stacked& st, const LinearConstraintSet& cs, int row) {
    if (row < st.n_ineq) {
        const int spec = cs.rows[row].spec_index;
        return "inequality row " + std::to_string(row) + " (spec " + std::to_string(spec) + ")";
    }
    if (row < st.n_ineq + st.n_eq) return "simplex equality " + std::to_string(row - st.n_ineq);
    return "nonnegativity bound " + std::to_string(row - st.n_ineq - st.n_eq);
}

} // namespace qp_detail

/**
 * Operator-splitting solve: alternates a regularized equality-constrained
 * quadratic step with projection onto the constraint interval, driven by
 * scaled dual updates, then polishes on the detected active set.
 *
 * `x_init` optionally seeds the primal iterate (e.g. the previous solution
 * in an outer loop); the default start is x0.
 */
inline QpSolution qp_solve(const QpProblem& problem, const QpSettings& settings = {},
                           const Eigen::VectorXd* x_init = nullptr) {
    problem.validate();
    using qp_detail::Stacked;
    const Stacked st = qp_detail::stack_constraints(problem.constraints);
    const int n = static_cast<int>(problem.x0.size());
    const int m = static_cast<int>(st.lower.size());

    // reward-only rows (no coefficients) are decided immediately
    for (const LinearRow& row : problem.constraints.rows)
        if (row.coeffs.empty() && row.rhs > kPropertyTol) {
            QpSolution sol;
            sol.x = problem.x0;
            sol.status = QpStatus::infeasible;
            sol.diagnostic = "constant constraint violated: spec " + std::to_string(row.spec_index) +
                             " requires 0 >= " + std::to_string(row.rhs);
            return sol;
        }

    // cost normalization: the iteration runs on c*P with c = 1/max(P) so the
    // dual steps are well scaled even for ridge-only objectives; residuals
    // and returned duals are in original units
    const Eigen::VectorXd pdiag_orig = 2.0 * (problem.weights.array() + problem.ridge);
    const double cost_scale = 1.0 / pdiag_orig.maxCoeff();
    const Eigen::VectorXd pdiag = cost_scale * pdiag_orig;
    const Eigen::VectorXd q = -pdiag.cwiseProduct(problem.x0);
    const Eigen::VectorXd q_orig = -pdiag_orig.cwiseProduct(problem.x0);

    Eigen::VectorXd rho(m);
    double rho_scale = 1.0;
    auto fill_rho = [&]() {
        for (int i = 0; i < m; ++i) {
            const bool eq = st.lower[i] == st.upper[i];
            rho[i] = settings.rho * rho_scale * (eq ? 1e3 : 1.0);
        }
    };
    fill_rho();

    const Eigen::SparseMatrix<double> At = st.A.transpose();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    auto factorize = [&]() {
        Eigen::SparseMatrix<double> K =
            At * rho.asDiagonal() * st.A +
            Eigen::SparseMatrix<double>((pdiag.array() + settings.sigma).matrix().asDiagonal());
        ldlt.compute(K);
        if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("qp_solve: KKT factorization failed");
    };
    factorize();

    Eigen::VectorXd x = x_init ? *x_init : problem.x0;
    Eigen::VectorXd z = st.A * x;
    z = z.cwiseMax(st.lower).cwiseMin(st.upper);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd y_prev_window = y;

    QpSolution sol;
    sol.x = x;
    sol.dual = y / cost_scale;
    double best_metric = std::numeric_limits<double>::infinity();

    // yc is in the solver's scaled units; residuals are reported unscaled
    auto residuals = [&](const Eigen::VectorXd& xc, const Eigen::VectorXd& zc,
                         const Eigen::VectorXd& yc, double& rp, double& rd) {
        rp = (st.A * xc - zc).lpNorm<Eigen::Infinity>();
        rd = (pdiag_orig.cwiseProduct(xc) + q_orig + At * (yc / cost_scale))
                 .lpNorm<Eigen::Infinity>();
    };

    int iter = 0;
    bool converged = false;
    for (; iter < settings.max_iter; ++iter) {
        const Eigen::VectorXd rhs =
            settings.sigma * x - q + At * (rho.cwiseProduct(z) - y);
        const Eigen::VectorXd x_tilde = ldlt.solve(rhs);
        const Eigen::VectorXd z_tilde = st.A * x_tilde;
        x = settings.alpha * x_tilde + (1.0 - settings.alpha) * x;
        const Eigen::VectorXd v =
            settings.alpha * z_tilde + (1.0 - settings.alpha) * z + y.cwiseQuotient(rho);
        z = v.cwiseMax(st.lower).cwiseMin(st.upper);
        y = rho.cwiseProduct(v - z); // v already carries y/rho


        if ((iter + 1) % settings.check_interval != 0) continue;

        double rp, rd;
        residuals(x, z, y, rp, rd);
        if (std::max(rp, rd) < best_metric) {
            best_metric = std::max(rp, rd);
            sol.x = x;
            sol.dual = y / cost_scale;
            sol.primal_residual = rp;
            sol.dual_residual = rd;
        }
        if (rp <= settings.tol_primal && rd <= settings.tol_dual) {
            converged = true;
            ++iter;
            break;
        }

        // primal infeasibility certificate from the dual drift
        Eigen::VectorXd dy = y - y_prev_window;
        const double dy_norm = dy.lpNorm<Eigen::Infinity>();
        if (dy_norm > 0.0) {
            dy /= dy_norm;
            bool valid = true;
            double support = 0.0;
            for (int i = 0; i < m; ++i) {
                if (dy[i] > settings.eps_infeasible) {
                    if (!std::isfinite(st.upper[i])) { valid = false; break; }
                    support += st.upper[i] * dy[i];
                } else if (dy[i] < -settings.eps_infeasible) {
                    support += st.lower[i] * dy[i];
                }
            }
            if (valid && (At * dy).lpNorm<Eigen::Infinity>() <= settings.eps_infeasible &&
                support <= -settings.eps_infeasible) {
                double amount;
                const int row = qp_detail::most_violated_row(st, st.A * sol.x, &amount);
                sol.status = QpStatus::infeasible;
                sol.iterations = iter + 1;
                sol.diagnostic = "infeasible: most violated is " +
                                 qp_detail::row_name(st, problem.constraints, row) + " by " +
                                 std::to_string(amount);
                return sol;
            }
        }
        y_prev_window = y;

        if (settings.adapt_rho && rd > 0.0) {
            const double ratio = rp / std::max(rd, 1e-30);
            if (ratio > 100.0 || ratio < 0.01) {
                rho_scale = std::clamp(rho_scale * std::sqrt(ratio), 1e-6, 1e6);
                fill_rho();
                factorize();
            }
        }
    }

    {
        double rp, rd;
        residuals(x, z, y, rp, rd);
        if (std::max(rp, rd) <= best_metric) {
            sol.x = x;
            sol.dual = y / cost_scale;
            sol.primal_residual = rp;
            sol.dual_residual = rd;
        }
    }
    sol.iterations = iter;
    sol.status = converged ? QpStatus::optimal : QpStatus::max_iter;
    if (!converged) {
        double amount;
        const int row = qp_detail::most_violated_row(st, st.A * sol.x, &amount);
        sol.diagnostic = "max_iter: worst constraint " + qp_detail::row_name(st, problem.constraints, row) +
                         " violated by " + std::to_string(amount);
    }

    if (converged && settings.polish) {
        // equality-constrained re-solve on the active set, accepted only if
        // it tightens both residuals
        std::vector<int> active;
        std::vector<double> target;
        for (int i = 0; i < m; ++i) {
            const bool eq = st.lower[i] == st.upper[i];
            if (eq || sol.dual[i] < -1e-12) {
                active.push_back(i);
                target.push_back(st.lower[i]);
            } else if (sol.dual[i] > 1e-12 && std::isfinite(st.upper[i])) {
                active.push_back(i);
                target.push_back(st.upper[i]);
            }
        }
        const int k = static_cast<int>(active.size());
        if (k > 0) {
            const double reg = 1e-11;
            std::vector<Eigen::Triplet<double>> trip;
            for (int i = 0; i < n; ++i) trip.emplace_back(i, i, pdiag[i] + reg);
            for (int r = 0; r < k; ++r) {
                for (Eigen::SparseMatrix<double>::InnerIterator it(At, active[r]); it; ++it)
                    trip.emplace_back(it.row(), n + r, it.value());
                for (Eigen::SparseMatrix<double>::InnerIterator it(At, active[r]); it; ++it)
                    trip.emplace_back(n + r, it.row(), it.value());
                trip.emplace_back(n + r, n + r, -reg);
            }
            Eigen::SparseMatrix<double> K(n + k, n + k);
            K.setFromTriplets(trip.begin(), trip.end());
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> kkt(K);
            if (kkt.info() == Eigen::Success) {
                Eigen::VectorXd rhs(n + k);
                rhs.head(n) = -q;
                for (int r = 0; r < k; ++r) rhs[n + r] = target[r];
                Eigen::VectorXd solvec = kkt.solve(rhs);
                for (int refine = 0; refine < 2; ++refine)
                    solvec += kkt.solve(rhs - K * solvec);
                Eigen::VectorXd xp = solvec.head(n);
                Eigen::VectorXd yp = Eigen::VectorXd::Zero(m);
                for (int r = 0; r < k; ++r) yp[active[r]] = solvec[n + r];
                Eigen::VectorXd zp = (st.A * xp).cwiseMax(st.lower).cwiseMin(st.upper);
                double rp, rd;
                residuals(xp, zp, yp, rp, rd);
                if (rp <= sol.primal_residual + 1e-15 && rd <= sol.dual_residual + 1e-15) {
                    sol.x = xp;
                    sol.dual = yp / cost_scale;
                    sol.primal_residual = rp;
                    sol.dual_residual = rd;
                    sol.polished = true;
                }
            }
        }
    }
    return sol;
}

/// Residual summary at a solution: stationarity, worst constraint violation,
/// and worst complementary-slackness product.
inline KktReport kkt_report(const QpProblem& problem, const QpSolution& solution) {
    const qp_detail::Stacked st = qp_detail::stack_constraints(problem.constraints);
    const Eigen::VectorXd pdiag = 2.0 * (problem.weights.array() + problem.ridge);
    const Eigen::VectorXd q = -pdiag.cwiseProduct(problem.x0);
    KktReport rep;
    rep.stationarity = (pdiag.cwiseProduct(solution.x) + q + st.A.transpose() * solution.dual)
                           .lpNorm<Eigen::Infinity>();
    const Eigen::VectorXd ax = st.A * solution.x;
    double worst_violation = 0.0, worst_comp = 0.0;
    for (int i = 0; i < ax.size(); ++i) {
        const double below = st.lower[i] - ax[i];
        const double above = std::isfinite(st.upper[i]) ? ax[i] - st.upper[i]
                                                        : -std::numeric_limits<double>::infinity();
        worst_violation = std::max({worst_violation, below, above});
        if (st.lower[i] == st.upper[i]) continue; // equalities have free sign
        const double y = solution.dual[i];
        const double slack = (y < 0.0) ? std::abs(below) : (std::isfinite(st.upper[i]) ? std::abs(above) : 0.0);
        worst_comp = std::max(worst_comp, std::abs(y) * slack);
    }
    rep.primal_feasibility = worst_violation;
    rep.complementary_slackness = worst_comp;
    return rep;
}

} // namespace itl
