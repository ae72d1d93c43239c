#pragma once

#include <cstdint>
#include <vector>

#include "itl/dataset.hpp"
#include "itl/mdp.hpp"
#include "itl/rng.hpp"

namespace itl::testing {

/// Random dense MDP with Dirichlet(1) rows and N(0,1) rewards.
inline TabularMdp random_mdp(int n_states, int n_actions, std::uint64_t seed,
                             double discount = 0.95) {
    Rng rng(derive_seed(seed, {0x7465737453ULL}));
    TabularMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.discount = discount;
    Tensor3 t(n_states, n_actions, n_states, 0.0);
    const std::vector<double> alpha(n_states, 1.0);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            auto row = t.row(s, a);
            rng.dirichlet(alpha, {row.data(), static_cast<std::size_t>(row.size())});
        }
    mdp.dynamics = std::move(t);
    mdp.reward.resize(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = rng.normal();
    mdp.initial_dist = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    mdp.validate();
    return mdp;
}

inline Policy random_policy(int n_states, int n_actions, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x706f6cULL}));
    Policy p;
    p.probs.resize(n_states, n_actions);
    const std::vector<double> alpha(n_actions, 1.0);
    for (int s = 0; s < n_states; ++s) {
        std::vector<double> row(n_actions);
        rng.dirichlet(alpha, row);
        for (int a = 0; a < n_actions; ++a) p.probs(s, a) = row[a];
    }
    return p;
}

/// Dataset drawn from an MDP's true dynamics with `k` draws for every
/// (state, action) pair (full coverage, all actions).
inline BatchDataset full_pair_dataset(const TabularMdp& mdp, int k, std::uint64_t seed,
                                      double delta = 1e-3) {
    Rng rng(derive_seed(seed, {0x66706473ULL}));
    std::vector<std::array<int, 3>> transitions;
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            const auto row = mdp.true_dynamics().row(s, a);
            for (int i = 0; i < k; ++i)
                transitions.push_back(
                    {s, a, rng.categorical({row.data(), static_cast<std::size_t>(row.size())})});
        }
    return BatchDataset::from_transitions(mdp.n_states, mdp.n_actions, std::move(transitions),
                                          delta);
}

} // namespace itl::testing
