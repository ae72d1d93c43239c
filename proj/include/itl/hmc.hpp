#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "itl/constraints.hpp"
#include "itl/dataset.hpp"
#include "itl/mdp.hpp"
#include "itl/rng.hpp"

namespace itl {

/**
 * Bijection between row-stochastic [S x A x S] tensors and an unconstrained
 * coordinate vector: per row, stick-breaking fractions z_i = x_i / remaining
 * stick followed by a logit.  Each row of size S contributes S-1 coordinates.
 */
struct SimplexTransform {
    int n_states = 0;
    int n_actions = 0;
    double clamp_floor = 1e-8;

    int w_dim() const { return n_states * n_actions * (n_states - 1); }
    int row_offset(int s, int a) const { return (s * n_actions + a) * (n_states - 1); }

    /// Inverse map; rows are floored at clamp_floor and renormalized first.
    /// `clamped` reports whether any entry needed the floor.
    Eigen::VectorXd to_unconstrained(const Tensor3& t, bool* clamped = nullptr) const {
        if (clamped) *clamped = false;
        const int S = n_states, A = n_actions;
        Eigen::VectorXd w(w_dim());
        std::vector<double> x(S);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const auto row = t.row(s, a);
                double sum = 0.0;
                for (int sp = 0; sp < S; ++sp) {
                    x[sp] = std::max(row[sp], clamp_floor);
                    if (clamped && row[sp] < clamp_floor) *clamped = true;
                    sum += x[sp];
                }
                double rem = 1.0;
                const int base = row_offset(s, a);
                for (int i = 0; i < S - 1; ++i) {
                    const double xi = x[i] / sum;
                    const double z = xi / rem;
                    w[base + i] = std::log(z) - std::log1p(-z);
                    rem -= xi;
                }
            }
        return w;
    }

    Tensor3 to_simplex(const Eigen::VectorXd& w) const {
        const int S = n_states, A = n_actions;
        Tensor3 t(S, A, S, 0.0);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                auto row = t.row(s, a);
                const int base = row_offset(s, a);
                double stick = 1.0;
                for (int i = 0; i < S - 1; ++i) {
                    const double z = 1.0 / (1.0 + std::exp(-w[base + i]));
                    row[i] = stick * z;
                    stick *= (1.0 - z);
                }
                row[S - 1] = stick;
            }
        return t;
    }
};

struct HmcConfig {
    int leapfrog_steps = 20;   // L; the trajectory takes L + 2 position updates
    double step_size = 0.01;   // initial value when adaptation is on
    double target_accept = 0.65;
    int burn_in = 1000;
    int n_samples = 0;
    int thinning = 1;
    std::uint64_t seed = 0;
    bool adapt_step_size = true;
    bool enable_constraints = true;

    void validate() const {
        if (leapfrog_steps < 1) throw std::invalid_argument("HmcConfig: leapfrog_steps must be >= 1");
        if (!(step_size > 0.0)) throw std::invalid_argument("HmcConfig: step_size must be positive");
        if (n_samples < 1) throw std::invalid_argument("HmcConfig: n_samples must be >= 1");
        if (thinning < 1) throw std::invalid_argument("HmcConfig: thinning must be >= 1");
        if (burn_in < 0) throw std::invalid_argument("HmcConfig: burn_in must be nonnegative");
        if (!(target_accept > 0.0 && target_accept < 1.0))
            throw std::invalid_argument("HmcConfig: target_accept must lie in (0,1)");
    }
};

/**
 * Negative log posterior of row-wise Dirichlet(N + delta) in transformed
 * coordinates.  The stick-breaking + logit change of variables factorizes the
 * density into independent Beta terms, one per coordinate: with alpha_i the
 * pseudo-count of an entry and beta_i the tail sum behind it,
 *
 *   E(w) = const + sum_i [ alpha_i*log(1+e^{-w_i}) + beta_i*log(1+e^{w_i}) ].
 */
class DirichletEnergy {
public:
    DirichletEnergy(const BatchDataset& data, const SimplexTransform& transform)
        : transform_(transform) {
        const int S = data.n_states, A = data.n_actions;
        alpha_.resize(transform.w_dim());
        beta_.resize(transform.w_dim());
        norm_const_ = 0.0;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const int base = transform.row_offset(s, a);
                double tail = 0.0;
                for (int sp = S - 1; sp >= 1; --sp) {
                    tail += data.counts(s, a, sp) + data.delta;
                    alpha_[base + sp - 1] = data.counts(s, a, sp - 1) + data.delta;
                    beta_[base + sp - 1] = tail;
                }
                for (int i = 0; i < S - 1; ++i)
                    norm_const_ += std::lgamma(alpha_[base + i]) + std::lgamma(beta_[base + i]) -
                                   std::lgamma(alpha_[base + i] + beta_[base + i]);
            }
    }

    double energy(const Eigen::VectorXd& w) const {
        double e = norm_const_;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double wi = w[i];
            // log(1+e^x) evaluated without overflow
            const double lp_pos = wi > 0 ? wi + std::log1p(std::exp(-wi)) : std::log1p(std::exp(wi));
            const double lp_neg = lp_pos - wi; // log(1+e^{-w})
            e += alpha_[i] * lp_neg + beta_[i] * lp_pos;
        }
        return e;
    }

    void gradient(const Eigen::VectorXd& w, Eigen::VectorXd& grad) const {
        grad.resize(w.size());
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double z = 1.0 / (1.0 + std::exp(-w[i]));
            grad[i] = (alpha_[i] + beta_[i]) * z - alpha_[i];
        }
    }

    double energy_and_grad(const Eigen::VectorXd& w, Eigen::VectorXd& grad) const {
        gradient(w, grad);
        return energy(w);
    }

private:
    SimplexTransform transform_;
    Eigen::VectorXd alpha_, beta_;
    double norm_const_ = 0.0;
};

namespace hmc_detail {

/// Constraint gradient pulled back to w-space.  In T-space the (frozen-value)
/// gradient of a constraint is +g on one row block and -g on another with
/// g = gamma * v; the chain rule through stick-breaking gives, per block,
///   d/dw_i = (1 - z_i) g_i x_i - z_i * sum_{k>i} g_k x_k.
struct WSpaceNormal {
    int offset_a = 0, offset_b = 0;
    Eigen::VectorXd seg_a, seg_b; // length S-1 each

    double dot(const Eigen::VectorXd& m) const {
        return seg_a.dot(m.segment(offset_a, seg_a.size())) +
               seg_b.dot(m.segment(offset_b, seg_b.size()));
    }
    void axpy(double c, Eigen::VectorXd& m) const {
        m.segment(offset_a, seg_a.size()) += c * seg_a;
        m.segment(offset_b, seg_b.size()) += c * seg_b;
    }
    double norm() const { return std::sqrt(seg_a.squaredNorm() + seg_b.squaredNorm()); }
};

inline Eigen::VectorXd row_pullback(const Eigen::VectorXd& g, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& w_row) {
    const int S = static_cast<int>(x.size());
    Eigen::VectorXd out(S - 1);
    // suffix sums of g_k x_k
    double tail = g[S - 1] * x[S - 1];
    for (int i = S - 2; i >= 0; --i) {
        const double z = 1.0 / (1.0 + std::exp(-w_row[i]));
        out[i] = (1.0 - z) * g[i] * x[i] - z * tail;
        tail += g[i] * x[i];
    }
    return out;
}

inline WSpaceNormal constraint_normal(const ConstraintSpec& spec, const Eigen::VectorXd& value,
                                      double gamma, const Tensor3& t, const Eigen::VectorXd& w,
                                      const SimplexTransform& tr) {
    WSpaceNormal n;
    const int S = tr.n_states;
    const Eigen::VectorXd g = gamma * value;
    n.offset_a = tr.row_offset(spec.state, spec.action_a);
    n.offset_b = tr.row_offset(spec.state, spec.action_b);
    const Eigen::VectorXd xa = t.row(spec.state, spec.action_a);
    const Eigen::VectorXd xb = t.row(spec.state, spec.action_b);
    n.seg_a = row_pullback(g, xa, w.segment(n.offset_a, S - 1));
    n.seg_b = -row_pullback(g, xb, w.segment(n.offset_b, S - 1));
    return n;
}

/// Keeps the optimal value vector warm across the many policy assemblies of
/// one chain; consecutive leapfrog positions are close, so iteration counts
/// stay small.
class WarmPolicyAssembler {
public:
    Policy assemble(const std::vector<std::vector<int>>& valid_sets,
                    const std::set<int>& observed, const Tensor3& t,
                    const Eigen::MatrixXd& rewards, double gamma) {
        const ValueResult vr =
            value_iteration(t, rewards, gamma, 1e-10, has_warm_ ? &v_warm_ : nullptr);
        v_warm_ = vr.v;
        has_warm_ = true;
        Policy pi = greedy_policy(vr);
        for (int s : observed) {
            const auto& valid = valid_sets[s];
            pi.probs.row(s).setZero();
            for (int a : valid) pi.probs(s, a) = 1.0 / valid.size();
        }
        return pi;
    }

private:
    Eigen::VectorXd v_warm_;
    bool has_warm_ = false;
};

struct DualAveraging {
    double mu, log_eps, log_eps_bar, h_bar = 0.0;
    double target;
    long t = 0;

    DualAveraging(double eps0, double target_accept)
        : mu(std::log(10.0 * eps0)), log_eps(std::log(eps0)), log_eps_bar(std::log(eps0)),
          target(target_accept) {}

    void update(double accept_prob) {
        ++t;
        constexpr double t0 = 10.0, gamma_da = 0.05, kappa = 0.75;
        h_bar += (target - accept_prob - h_bar) / (t + t0);
        log_eps = mu - std::sqrt(static_cast<double>(t)) / gamma_da * h_bar;
        const double eta = std::pow(static_cast<double>(t), -kappa);
        log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
    }
    double current() const { return std::exp(log_eps); }
    double adapted() const { return std::exp(log_eps_bar); }
};

} // namespace hmc_detail

/**
 * Constrained posterior sampling by HMC with momentum reflection.
 *
 * Each proposal runs the leapfrog trajectory in transformed coordinates; at
 * every inner step the position is mapped back to a tensor, the policy is
 * reassembled (uniform expert on observed states, greedy under the current
 * tensor elsewhere) and the exact constraints are checked.  While they hold
 * the usual force step applies; on a violation the momentum bounces off the
 * most-violated constraint instead.  Endpoints that still violate any
 * constraint are discarded outright, so every emitted sample is feasible.
 * The step size follows dual averaging toward target_accept during burn-in
 * and is frozen afterwards.
 */
inline DynamicsSampleSet bitl_sample(const BatchDataset& data, const Eigen::MatrixXd& rewards,
                                     double gamma, double epsilon,
                                     const std::vector<std::vector<int>>& valid_sets,
                                     const Tensor3& init, const HmcConfig& config) {
    config.validate();
    SimplexTransform transform{data.n_states, data.n_actions};
    const DirichletEnergy energy(data, transform);
    hmc_detail::WarmPolicyAssembler assembler;
    Rng rng(derive_seed(config.seed, {0x4243ULL}));

    const std::vector<int> observed = data.observed_state_list();
    std::vector<ConstraintSpec> specs;
    if (config.enable_constraints)
        specs = enumerate_constraints(valid_sets, observed, data.n_actions, epsilon);

    auto violations_at = [&](const Tensor3& t, Eigen::VectorXd* value_out)
        -> std::vector<ConstraintViolation> {
        if (specs.empty()) {
            if (value_out) value_out->setZero(data.n_states);
            return {};
        }
        const Policy pi = assembler.assemble(valid_sets, data.observed_states, t, rewards, gamma);
        return check_exact(t, specs, pi, rewards, gamma, value_out);
    };

    // chain start: floor-clamped init must already satisfy the constraints
    Eigen::VectorXd w = transform.to_unconstrained(init);
    Tensor3 t_cur = transform.to_simplex(w);
    if (!violations_at(t_cur, nullptr).empty())
        throw std::invalid_argument("bitl_sample: initial tensor violates the exact constraints");

    DynamicsSampleSet out;
    out.samples.reserve(config.n_samples);
    hmc_detail::DualAveraging da(config.step_size, config.target_accept);
    double step = config.step_size;
    double e_cur = energy.energy(w);
    Eigen::VectorXd grad(w.size()), m(w.size()), w_prop(w.size());

    const long total_proposals =
        config.burn_in + static_cast<long>(config.n_samples) * config.thinning;
    long accepted_post = 0, proposals_post = 0;
    for (long p = 0; p < total_proposals; ++p) {
        const bool in_burn = p < config.burn_in;
        for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = rng.normal();
        const double h0 = e_cur + 0.5 * m.squaredNorm();
        w_prop = w;
        bool finite = true;

        energy.gradient(w_prop, grad);
        m -= 0.5 * step * grad;
        for (int l = 0; l <= config.leapfrog_steps && finite; ++l) {
            w_prop += step * m;
            if (!w_prop.allFinite()) { finite = false; break; }
            const Tensor3 t_step = transform.to_simplex(w_prop);
            Eigen::VectorXd value;
            const auto viols = violations_at(t_step, &value);
            if (viols.empty()) {
                energy.gradient(w_prop, grad);
                m -= step * grad;
            } else {
                const auto worst = std::min_element(
                    viols.begin(), viols.end(),
                    [](const auto& a, const auto& b) { return a.slack < b.slack; });
                auto normal = hmc_detail::constraint_normal(specs[worst->spec_index], value, gamma,
                                                            t_step, w_prop, transform);
                const double norm = normal.norm();
                if (norm > 1e-300) {
                    const double coef = -2.0 * normal.dot(m) / (norm * norm);
                    normal.axpy(coef, m);
                    ++out.diagnostics.reflections;
                }
            }
        }
        double accept_prob = 0.0;
        bool accepted = false;
        if (finite) {
            w_prop += step * m;
            if (w_prop.allFinite()) {
                energy.gradient(w_prop, grad);
                m -= 0.5 * step * grad;
                const Tensor3 t_end = transform.to_simplex(w_prop);
                if (!violations_at(t_end, nullptr).empty()) {
                    ++out.diagnostics.cleanup_rejections; // clean-up rejection
                } else {
                    const double h1 = energy.energy(w_prop) + 0.5 * m.squaredNorm();
                    if (std::isfinite(h1)) {
                        accept_prob = std::min(1.0, std::exp(h0 - h1));
                        if (rng.uniform() < accept_prob) {
                            accepted = true;
                            w = w_prop;
                            t_cur = t_end;
                            e_cur = h1 - 0.5 * m.squaredNorm();
                        }
                    }
                }
            }
        }

        if (in_burn && config.adapt_step_size) {
            da.update(accept_prob);
            step = da.current();
            if (!(step > 1e-8 && step < 1e2))
                throw std::runtime_error("bitl_sample: step size adaptation left (1e-8, 1e2): " +
                                         std::to_string(step));
            if (p + 1 == config.burn_in) step = da.adapted();
        }
        if (!in_burn) {
            ++proposals_post;
            accepted_post += accepted;
            if ((p - config.burn_in + 1) % config.thinning == 0) {
                out.samples.push_back(t_cur);
                out.energies.push_back(e_cur);
            }
        }
    }
    out.diagnostics.proposals = total_proposals;
    out.diagnostics.step_size_final = step;
    out.accept_rate = proposals_post > 0 ? static_cast<double>(accepted_post) / proposals_post : 0.0;
    return out;
}

/**
 * Baseline sampler: draw from the unconstrained Dirichlet posterior and keep
 * what passes the supplied check.  Mostly documents how little survives.
 */
inline DynamicsSampleSet rejection_sample(const BatchDataset& data,
                                          const std::function<bool(const Tensor3&)>& check,
                                          long n_attempts, std::uint64_t seed) {
    if (n_attempts < 1) throw std::invalid_argument("rejection_sample: n_attempts must be >= 1");
    Rng rng(derive_seed(seed, {0x52534aULL}));
    DynamicsSampleSet out;
    std::vector<double> alpha(data.n_states);
    long kept = 0;
    for (long i = 0; i < n_attempts; ++i) {
        Tensor3 t(data.n_states, data.n_actions, data.n_states, 0.0);
        for (int s = 0; s < data.n_states; ++s)
            for (int a = 0; a < data.n_actions; ++a) {
                for (int sp = 0; sp < data.n_states; ++sp)
                    alpha[sp] = data.counts(s, a, sp) + data.delta;
                auto row = t.row(s, a);
                rng.dirichlet(alpha, {row.data(), static_cast<std::size_t>(row.size())});
            }
        if (check(t)) {
            out.samples.push_back(std::move(t));
            ++kept;
        }
    }
    out.diagnostics.proposals = n_attempts;
    out.accept_rate = static_cast<double>(kept) / n_attempts;
    return out;
}

} // namespace itl
