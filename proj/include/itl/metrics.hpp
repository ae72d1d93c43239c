#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "itl/dataset.hpp"
#include "itl/mdp.hpp"
#include "itl/rng.hpp"

namespace itl {

/// Mean/std of one metric across datasets, labeled for the results table.
struct MetricReport {
    std::string method;
    std::string task;   // "standard" or "transfer"
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;
    int n_datasets = 0;
};

namespace metric_detail {
inline double argmax_match(const Policy& a, const Policy& b, const std::vector<int>& states) {
    if (states.empty()) return 0.0;
    int hits = 0;
    for (int s : states) hits += (a.argmax(s) == b.argmax(s));
    return static_cast<double>(hits) / states.size();
}
} // namespace metric_detail

/// Fraction of states whose argmax action agrees with the reference policy.
inline double best_matching(const Policy& policy, const Policy& reference) {
    if (policy.probs.rows() != reference.probs.rows() ||
        policy.probs.cols() != reference.probs.cols())
        throw std::invalid_argument("best_matching: shape mismatch");
    std::vector<int> all(policy.probs.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return metric_detail::argmax_match(policy, reference, all);
}

inline double best_matching(const Policy& policy, const Policy& reference,
                            const std::vector<int>& states) {
    return metric_detail::argmax_match(policy, reference, states);
}

/// Fraction of states whose argmax action lies in the reference epsilon-ball.
inline double epsilon_matching(const Policy& policy, const EpsilonBall& balls) {
    if (static_cast<std::size_t>(policy.probs.rows()) != balls.per_state.size())
        throw std::invalid_argument("epsilon_matching: shape mismatch");
    int hits = 0;
    for (Eigen::Index s = 0; s < policy.probs.rows(); ++s)
        hits += balls.contains(static_cast<int>(s), policy.argmax(static_cast<int>(s)));
    return static_cast<double>(hits) / policy.probs.rows();
}

/**
 * E[V^pi under the true dynamics] / E[V* under the true dynamics], both
 * averaged over the initial distribution.  Undefined (nullopt) when the
 * optimal value is numerically zero.
 */
inline std::optional<double> normalized_value(const Policy& policy, const TabularMdp& true_mdp) {
    const ValueResult v_pi = evaluate_policy_closed_form(true_mdp, policy);
    const ValueResult v_star = value_iteration(true_mdp);
    const double denom = true_mdp.initial_dist.dot(v_star.v);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    return true_mdp.initial_dist.dot(v_pi.v) / denom;
}

/**
 * Cross-sample value dispersion of a posterior: the mean over ordered sample
 * pairs (T, T') of E_{s0~mu0} |V^{pi*(T)}(s0;T) - V^{pi*(T')}(s0;T)|.  The
 * full double sum runs when it fits the pair budget; otherwise pairs are
 * subsampled uniformly with a fixed seed.
 */
inline double bayesian_regret(const DynamicsSampleSet& samples, const Eigen::MatrixXd& rewards,
                              double gamma, const Eigen::VectorXd& mu0,
                              long pair_budget = 250000, std::uint64_t seed = 0) {
    const long n = static_cast<long>(samples.samples.size());
    if (n < 2) throw std::invalid_argument("bayesian_regret: need at least two samples");
    std::vector<Policy> policies;
    policies.reserve(n);
    for (const Tensor3& t : samples.samples)
        policies.push_back(greedy_policy(value_iteration(t, rewards, gamma)));

    auto pair_value = [&](long i, long j) {
        const Tensor3& t = samples.samples[i];
        const Eigen::VectorXd vi =
            evaluate_policy_closed_form(t, rewards, gamma, policies[i]).v;
        const Eigen::VectorXd vj =
            evaluate_policy_closed_form(t, rewards, gamma, policies[j]).v;
        return mu0.dot((vi - vj).cwiseAbs());
    };

    double total = 0.0;
    if (n * n <= pair_budget) {
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < n; ++j) total += (i == j) ? 0.0 : pair_value(i, j);
        return total / static_cast<double>(n * n);
    }
    Rng rng(derive_seed(seed, {0x7267ULL}));
    for (long k = 0; k < pair_budget; ++k) {
        const long i = rng.uniform_int(static_cast<int>(n));
        const long j = rng.uniform_int(static_cast<int>(n));
        total += (i == j) ? 0.0 : pair_value(i, j);
    }
    return total / static_cast<double>(pair_budget);
}

/// Mean of the worst ceil(level * n) values (lower tail).
inline double cvar(std::vector<double> values, double level) {
    if (values.empty()) throw std::invalid_argument("cvar: empty value list");
    if (!(level > 0.0 && level <= 1.0)) throw std::invalid_argument("cvar: level outside (0,1]");
    const std::size_t k = static_cast<std::size_t>(std::ceil(level * values.size()));
    std::sort(values.begin(), values.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += values[i];
    return acc / k;
}

/// Summed L1 distance over all rows, without the 1/2 factor.
inline double total_variation(const Tensor3& t, const Tensor3& t_star) {
    if (!t.same_shape(t_star)) throw std::invalid_argument("total_variation: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += std::abs(t.data()[i] - t_star.data()[i]);
    return acc;
}

/// Mean of the one-hot greedy policies of every sample.
inline Policy averaged_posterior_policy(const DynamicsSampleSet& samples,
                                        const Eigen::MatrixXd& rewards, double gamma) {
    if (samples.samples.empty())
        throw std::invalid_argument("averaged_posterior_policy: empty sample set");
    const Tensor3& first = samples.samples.front();
    Policy avg;
    avg.probs = Eigen::MatrixXd::Zero(first.dim0(), first.dim1());
    for (const Tensor3& t : samples.samples) {
        const Policy g = greedy_policy(value_iteration(t, rewards, gamma));
        avg.probs += g.probs;
    }
    avg.probs /= static_cast<double>(samples.samples.size());
    return avg;
}

/// Top-k next states of one (s,a) row by probability; ties by state index.
inline std::vector<std::pair<int, double>> topk_next_states(const Tensor3& t, int s, int a, int k) {
    if (k < 1) throw std::invalid_argument("topk_next_states: k must be >= 1");
    const auto row = t.row(s, a);
    std::vector<std::pair<int, double>> entries(t.dim2());
    for (int sp = 0; sp < t.dim2(); ++sp) entries[sp] = {sp, row[sp]};
    const int kk = std::min<int>(k, t.dim2());
    std::partial_sort(entries.begin(), entries.begin() + kk, entries.end(),
                      [](const auto& x, const auto& y) {
                          return x.second != y.second ? x.second > y.second : x.first < y.first;
                      });
    entries.resize(kk);
    return entries;
}

inline double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / v.size();
}

inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / (v.size() - 1));
}

} // namespace itl
