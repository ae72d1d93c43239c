#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "itl/dataset.hpp"
#include "itl/mdp.hpp"

namespace itl {

struct MceConfig {
    double learning_rate = 0.1;
    int max_steps = 500;
    double soft_vi_tol = 1e-8;
    double convergence_tol = 1e-6;
    std::uint64_t seed = 0;
    bool full_gradient = false; // also differentiate the policy term through soft VI
    double temperature = 1.0;

    void validate() const {
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("MceConfig: learning_rate must be positive");
        if (max_steps < 0) throw std::invalid_argument("MceConfig: max_steps must be nonnegative");
        if (!(temperature > 0.0))
            throw std::invalid_argument("MceConfig: temperature must be positive");
    }
};

struct MceFitResult {
    Tensor3 dynamics;       // softmax of the final logits
    Tensor3 theta;          // raw logits
    std::vector<double> loss_history;
    int steps = 0;
};

namespace mce_detail {

inline double logsumexp_row(const Eigen::MatrixXd& q, int s, double tau) {
    const double mx = q.row(s).maxCoeff();
    double acc = 0.0;
    for (Eigen::Index a = 0; a < q.cols(); ++a) acc += std::exp((q(s, a) - mx) / tau);
    return mx + tau * std::log(acc);
}

} // namespace mce_detail

/**
 * Soft Bellman fixed point: Q(s,a) = R(s,a) + g * T(.|s,a) . V with
 * V(s) = tau * logsumexp_a Q(s,a)/tau, evaluated in shifted log space.
 */
inline Eigen::MatrixXd soft_value_iteration(const Tensor3& t, const Eigen::MatrixXd& rewards,
                                            double gamma, double tol = 1e-8, double tau = 1.0,
                                            const Eigen::VectorXd* warm_start = nullptr) {
    if (!(tol > 0.0)) throw std::invalid_argument("soft_value_iteration: tol must be positive");
    const int S = t.dim0(), A = t.dim1();
    constexpr long max_sweeps = 1000000;
    Eigen::VectorXd v = warm_start ? *warm_start : Eigen::VectorXd::Zero(S);
    Eigen::MatrixXd q(S, A);
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                q(s, a) = rewards(s, a) + gamma * t.row(s, a).dot(v);
        double residual = 0.0;
        for (int s = 0; s < S; ++s) {
            const double vn = mce_detail::logsumexp_row(q, s, tau);
            residual = std::max(residual, std::abs(vn - v[s]));
            v[s] = vn;
        }
        if (residual <= tol) return q;
    }
    throw std::runtime_error("soft_value_iteration: no convergence after 1e6 sweeps");
}

inline Tensor3 mce_softmax_dynamics(const Tensor3& theta) {
    Tensor3 t(theta.dim0(), theta.dim1(), theta.dim2(), 0.0);
    for (int s = 0; s < theta.dim0(); ++s)
        for (int a = 0; a < theta.dim1(); ++a) {
            const auto th = theta.row(s, a);
            auto row = t.row(s, a);
            const double mx = th.maxCoeff();
            double total = 0.0;
            for (int sp = 0; sp < theta.dim2(); ++sp) total += (row[sp] = std::exp(th[sp] - mx));
            row /= total;
        }
    return t;
}

/// Gradient of the data term sum_D log T_theta(s'|s,a) with respect to the
/// logits: N(s,a,k) - N(s,a,.) * T_theta(k|s,a).
inline Tensor3 mce_data_gradient(const BatchDataset& data, const Tensor3& t_theta) {
    Tensor3 g(t_theta.dim0(), t_theta.dim1(), t_theta.dim2(), 0.0);
    for (int s = 0; s < g.dim0(); ++s)
        for (int a = 0; a < g.dim1(); ++a) {
            const double total = data.counts.row(s, a).sum();
            if (total == 0.0) continue;
            for (int sp = 0; sp < g.dim2(); ++sp)
                g(s, a, sp) = data.counts(s, a, sp) - total * t_theta(s, a, sp);
        }
    return g;
}

namespace mce_detail {

/// Policy-term gradient with full differentiation through the soft value
/// fixed point (adjoint solve), mapped back through the softmax.
inline Tensor3 policy_term_gradient(const BatchDataset& data, const Tensor3& t,
                                    const Eigen::MatrixXd& q, double gamma, double tau) {
    const int S = t.dim0(), A = t.dim1();
    Eigen::MatrixXd pi(S, A); // soft policy
    Eigen::VectorXd v(S);
    for (int s = 0; s < S; ++s) {
        v[s] = logsumexp_row(q, s, tau);
        for (int a = 0; a < A; ++a) pi(s, a) = std::exp((q(s, a) - v[s]) / tau);
    }
    // direct dL/dQ coefficients from the data
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(S, A);
    for (int s = 0; s < S; ++s) {
        double total = 0.0;
        for (int a = 0; a < A; ++a) total += data.counts.row(s, a).sum();
        for (int a = 0; a < A; ++a)
            c(s, a) = (data.counts.row(s, a).sum() - total * pi(s, a)) / tau;
    }
    // adjoint recursion h(s,a) = c(s,a) + pi(a|s) M(s) with
    // M = gamma (I - gamma T_pi^T)^{-1} [sum_{s',a'} T(.|s',a') c(s',a')]
    Eigen::MatrixXd t_pi = Eigen::MatrixXd::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) t_pi.row(s) += pi(s, a) * t.row(s, a).transpose();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) u += c(s, a) * t.row(s, a);
    const Eigen::VectorXd m_adj =
        gamma * (Eigen::MatrixXd::Identity(S, S) - gamma * t_pi.transpose()).partialPivLu().solve(u);
    Eigen::MatrixXd h(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) h(s, a) = c(s, a) + pi(s, a) * m_adj[s];
    // dL/dT(k|s,a) = gamma * h(s,a) * V(k); chain through the softmax rows
    Tensor3 grad(S, A, S, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const auto trow = t.row(s, a);
            const double inner = gamma * h(s, a) * trow.dot(v);
            for (int k = 0; k < S; ++k)
                grad(s, a, k) = trow[k] * (gamma * h(s, a) * v[k] - inner);
        }
    return grad;
}

} // namespace mce_detail

inline double mce_loss(const BatchDataset& data, const Tensor3& t, const Eigen::MatrixXd& q,
                       double tau) {
    double loss = 0.0;
    for (int s = 0; s < data.n_states; ++s) {
        const double lse = mce_detail::logsumexp_row(q, s, tau);
        for (int a = 0; a < data.n_actions; ++a) {
            const double n_sa = data.counts.row(s, a).sum();
            if (n_sa > 0.0) loss += n_sa * (q(s, a) - lse) / tau;
            for (int sp = 0; sp < data.n_states; ++sp)
                if (data.counts(s, a, sp) > 0.0)
                    loss += data.counts(s, a, sp) * std::log(t(s, a, sp));
        }
    }
    return loss;
}

/**
 * Alternating ascent on the demonstration log likelihood: soft value
 * iteration at the current softmax dynamics, then one gradient step on the
 * logits.  Per configuration the policy term's Q is held fixed during the
 * step ("full_gradient" switches on differentiation through the fixed
 * point).  Logits start at zero, i.e. uniform dynamics.
 */
inline MceFitResult fit_mce(const BatchDataset& data, const Eigen::MatrixXd& rewards, double gamma,
                            const MceConfig& config = {}) {
    config.validate();
    if (data.transitions.empty() && config.max_steps > 0)
        throw std::invalid_argument("fit_mce: dataset is empty");
    const int S = data.n_states, A = data.n_actions;
    MceFitResult res;
    res.theta = Tensor3(S, A, S, 0.0);
    res.dynamics = mce_softmax_dynamics(res.theta);
    Eigen::VectorXd v_warm = Eigen::VectorXd::Zero(S);
    double prev_loss = std::numeric_limits<double>::quiet_NaN();
    for (int step = 0; step < config.max_steps; ++step) {
        const Eigen::MatrixXd q = soft_value_iteration(res.dynamics, rewards, gamma,
                                                       config.soft_vi_tol, config.temperature,
                                                       &v_warm);
        for (int s = 0; s < S; ++s) v_warm[s] = mce_detail::logsumexp_row(q, s, config.temperature);
        const double loss = mce_loss(data, res.dynamics, q, config.temperature);
        if (!std::isfinite(loss))
            throw std::runtime_error("fit_mce: loss became non-finite at step " +
                                     std::to_string(step));
        res.loss_history.push_back(loss);
        res.steps = step + 1;
        if (step > 0 && std::abs(loss - prev_loss) < config.convergence_tol) break;
        prev_loss = loss;

        Tensor3 grad = mce_data_gradient(data, res.dynamics);
        if (config.full_gradient) {
            const Tensor3 pg =
                mce_detail::policy_term_gradient(data, res.dynamics, q, gamma, config.temperature);
            for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] += pg.data()[i];
        }
        for (std::size_t i = 0; i < grad.size(); ++i)
            res.theta.data()[i] += config.learning_rate * grad.data()[i];
        res.dynamics = mce_softmax_dynamics(res.theta);
    }
    return res;
}

} // namespace itl
