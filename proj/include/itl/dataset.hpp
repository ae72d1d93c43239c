#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "itl/mdp.hpp"
#include "itl/rng.hpp"

namespace itl {

/// Declared bounds of an external dataset file.
struct DatasetSchema {
    int n_states = 0;
    int n_actions = 0;
    double delta = 1e-3;
};

/**
 * Batch of observed (state, action, next_state) transitions together with
 * the count tensor N and the Laplace smoothing constant used by every
 * estimator built on top of it.
 */
struct BatchDataset {
    int n_states = 0;
    int n_actions = 0;
    std::vector<std::array<int, 3>> transitions;
    Tensor3 counts;                              // [S x A x S], integer-valued
    std::set<int> observed_states;
    std::set<std::pair<int, int>> observed_pairs;
    double delta = 1e-3;

    static BatchDataset from_transitions(int n_states, int n_actions,
                                         std::vector<std::array<int, 3>> transitions,
                                         double delta = 1e-3) {
        if (n_states <= 0 || n_actions <= 0)
            throw std::invalid_argument("BatchDataset: dimensions must be positive");
        if (!(delta > 0.0)) throw std::invalid_argument("BatchDataset: delta must be positive");
        BatchDataset d;
        d.n_states = n_states;
        d.n_actions = n_actions;
        d.delta = delta;
        d.counts = Tensor3(n_states, n_actions, n_states, 0.0);
        d.transitions = std::move(transitions);
        for (const auto& [s, a, sp] : d.transitions) {
            if (s < 0 || s >= n_states || a < 0 || a >= n_actions || sp < 0 || sp >= n_states)
                throw std::out_of_range("BatchDataset: transition index out of range");
            d.counts(s, a, sp) += 1.0;
            d.observed_states.insert(s);
            d.observed_pairs.insert({s, a});
        }
        return d;
    }

    double pair_total(int s, int a) const { return counts.row(s, a).sum(); }
    bool state_observed(int s) const { return observed_states.count(s) > 0; }
    std::vector<int> observed_state_list() const {
        return {observed_states.begin(), observed_states.end()};
    }
};

/// Behavior policy reconstructed from data: uniform over the actions seen in
/// each observed state, uniform over everything elsewhere.
struct EstimatedExpertPolicy {
    Policy policy;
    std::vector<std::vector<int>> valid_actions; // empty for unobserved states
};

/// Posterior (or otherwise sampled) collection of dynamics tensors.
struct DynamicsSampleSet {
    std::vector<Tensor3> samples;
    double accept_rate = 1.0;
    std::vector<double> energies;
    struct Diagnostics {
        long proposals = 0;
        long reflections = 0;
        long cleanup_rejections = 0;
        double step_size_final = 0.0;
    } diagnostics;
};

/**
 * Draws an epsilon-optimal batch: ceil(coverage * S) states chosen uniformly
 * without replacement, then k next-state draws from the true dynamics for
 * every (state, ball action) pair.  Fully determined by the seed.
 */
inline BatchDataset generate_batch(const TabularMdp& mdp, const EpsilonBall& expert_ball,
                                   double coverage, int k, std::uint64_t seed,
                                   double delta = 1e-3) {
    if (!(coverage > 0.0 && coverage <= 1.0))
        throw std::invalid_argument("generate_batch: coverage must lie in (0,1]");
    if (k < 1) throw std::invalid_argument("generate_batch: k must be at least 1");
    const Tensor3& t = mdp.true_dynamics();
    Rng rng(derive_seed(seed, {0xba7cULL}));
    const int n_selected = static_cast<int>(std::ceil(coverage * mdp.n_states));
    std::vector<int> selected = rng.sample_without_replacement(mdp.n_states, n_selected);
    std::sort(selected.begin(), selected.end());
    std::vector<std::array<int, 3>> transitions;
    transitions.reserve(static_cast<std::size_t>(n_selected) * mdp.n_actions * k);
    for (int s : selected)
        for (int a : expert_ball.per_state[s]) {
            const auto row = t.row(s, a);
            for (int i = 0; i < k; ++i) {
                const int sp = rng.categorical({row.data(), static_cast<std::size_t>(row.size())});
                transitions.push_back({s, a, sp});
            }
        }
    return BatchDataset::from_transitions(mdp.n_states, mdp.n_actions, std::move(transitions),
                                          delta);
}

/// Laplace-smoothed empirical transition tensor: (N + delta) / sum(N + delta).
inline Tensor3 mle_estimate(const BatchDataset& data) {
    Tensor3 t(data.n_states, data.n_actions, data.n_states, 0.0);
    for (int s = 0; s < data.n_states; ++s)
        for (int a = 0; a < data.n_actions; ++a) {
            const double total = data.counts.row(s, a).sum() + data.delta * data.n_states;
            for (int sp = 0; sp < data.n_states; ++sp)
                t(s, a, sp) = (data.counts(s, a, sp) + data.delta) / total;
        }
    return t;
}

/// Independent draws from the row-wise Dirichlet(N + delta) posterior.
inline DynamicsSampleSet sample_dirichlet_posterior(const BatchDataset& data, int n_samples,
                                                    std::uint64_t seed) {
    if (n_samples < 1)
        throw std::invalid_argument("sample_dirichlet_posterior: n_samples must be positive");
    Rng rng(derive_seed(seed, {0xd124ULL}));
    DynamicsSampleSet out;
    out.samples.reserve(n_samples);
    std::vector<double> alpha(data.n_states);
    for (int i = 0; i < n_samples; ++i) {
        Tensor3 t(data.n_states, data.n_actions, data.n_states, 0.0);
        for (int s = 0; s < data.n_states; ++s)
            for (int a = 0; a < data.n_actions; ++a) {
                for (int sp = 0; sp < data.n_states; ++sp)
                    alpha[sp] = data.counts(s, a, sp) + data.delta;
                auto row = t.row(s, a);
                rng.dirichlet(alpha, {row.data(), static_cast<std::size_t>(row.size())});
            }
        out.samples.push_back(std::move(t));
    }
    out.diagnostics.proposals = n_samples;
    out.accept_rate = 1.0;
    return out;
}

/**
 * Reconstructs the behavior policy.  An action is valid in an observed state
 * when it was taken at least once and its empirical frequency there reaches
 * min_freq.  Should the frequency filter reject everything, the modal action
 * is kept so the set stays usable downstream.
 */
inline EstimatedExpertPolicy estimate_expert_policy(const BatchDataset& data,
                                                    double min_freq = 0.0) {
    if (!(min_freq >= 0.0 && min_freq < 1.0))
        throw std::invalid_argument("estimate_expert_policy: min_freq must lie in [0,1)");
    EstimatedExpertPolicy out;
    out.valid_actions.resize(data.n_states);
    out.policy.probs =
        Eigen::MatrixXd::Constant(data.n_states, data.n_actions, 1.0 / data.n_actions);
    for (int s : data.observed_states) {
        double state_total = 0.0;
        for (int a = 0; a < data.n_actions; ++a) state_total += data.pair_total(s, a);
        std::vector<int>& valid = out.valid_actions[s];
        int modal = 0;
        double modal_count = -1.0;
        for (int a = 0; a < data.n_actions; ++a) {
            const double c = data.pair_total(s, a);
            if (c > modal_count) { modal_count = c; modal = a; }
            if (c >= 1.0 && c / state_total >= min_freq) valid.push_back(a);
        }
        if (valid.empty()) valid.push_back(modal);
        out.policy.probs.row(s).setZero();
        for (int a : valid) out.policy.probs(s, a) = 1.0 / valid.size();
    }
    return out;
}

} // namespace itl
