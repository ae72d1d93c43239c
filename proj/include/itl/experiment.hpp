#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "itl/envs.hpp"
#include "itl/estimator.hpp"
#include "itl/hmc.hpp"
#include "itl/io.hpp"
#include "itl/mce.hpp"
#include "itl/metrics.hpp"

namespace itl {

inline constexpr const char* kMethodNames[] = {"mle", "itl", "mce", "ps", "bitl"};
inline constexpr const char* kTaskNames[] = {"standard", "transfer"};
inline constexpr const char* kMetricNames[] = {
    "best_matching", "epsilon_matching", "normalized_value",   "value_cvar",
    "total_variation", "constraint_violations", "bayesian_regret", "fit_seconds"};

/**
 * Declarative description of one experiment sweep: which world(s), which
 * expert, which data regime, which methods, and how the posterior methods
 * sample.  Loaded from a JSON config document; the seed must be explicit.
 */
struct ExperimentConfig {
    // world
    std::string world_type;     // gridworld | randomworld | mdp_file
    GridworldSpec gridworld;
    RandomworldSpec randomworld;
    int n_worlds = 1;           // independent randomworld instances
    std::string mdp_path;       // world_type == mdp_file
    std::string transfer_mdp_path;
    // expert
    ExpertSpec expert;
    // data
    int k = 10;
    std::vector<double> coverages;
    int n_datasets = 1;
    double delta = 1e-3;
    // run
    std::vector<std::string> methods;
    std::uint64_t seed = 0;
    int workers = 1;
    bool transfer = true;
    // method options
    ItlConfig itl;
    MceConfig mce;
    HmcConfig hmc;          // n_samples doubles as the PS sample count
    double cvar_level = 0.05;
    long pair_budget = 250000;

    json raw;               // the document this config was parsed from

    void validate() const {
        if (methods.empty()) throw std::invalid_argument("config: at least one method required");
        for (const auto& m : methods) {
            bool known = false;
            for (const char* name : kMethodNames) known |= (m == name);
            if (!known) throw std::invalid_argument("config: unknown method '" + m + "'");
        }
        if (coverages.empty()) throw std::invalid_argument("config: coverage grid is empty");
        for (double c : coverages)
            if (!(c > 0.0 && c <= 1.0))
                throw std::invalid_argument("config: coverage values must lie in (0,1]");
        if (n_datasets < 1) throw std::invalid_argument("config: n_datasets must be >= 1");
        if (world_type != "gridworld" && world_type != "randomworld" && world_type != "mdp_file")
            throw std::invalid_argument("config: unknown world type '" + world_type + "'");
    }

    bool has_method(const std::string& m) const {
        return std::find(methods.begin(), methods.end(), m) != methods.end();
    }
};

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline ExperimentConfig parse_experiment_config(const json& j) {
    ExperimentConfig cfg;
    cfg.raw = j;
    if (!j.contains("seed")) throw std::invalid_argument("config: explicit seed required");
    cfg.seed = j.at("seed").get<std::uint64_t>();

    const json& world = j.at("world");
    cfg.world_type = world.at("type").get<std::string>();
    if (cfg.world_type == "gridworld") {
        GridworldSpec& g = cfg.gridworld;
        g.slip_prob = world.value("slip_prob", g.slip_prob);
        g.soft_wall_penalty = world.value("soft_wall_penalty", g.soft_wall_penalty);
        g.step_penalty = world.value("step_penalty", g.step_penalty);
        g.goal_reward = world.value("goal_reward", g.goal_reward);
        g.discount = world.value("gamma", g.discount);
        if (world.contains("soft_wall_tiles"))
            g.soft_wall_tiles = world.at("soft_wall_tiles").get<std::vector<int>>();
        if (world.contains("transfer_wall_tiles"))
            g.transfer_wall_tiles = world.at("transfer_wall_tiles").get<std::vector<int>>();
    } else if (cfg.world_type == "randomworld") {
        RandomworldSpec& r = cfg.randomworld;
        r.n_states = world.value("n_states", r.n_states);
        r.n_actions = world.value("n_actions", r.n_actions);
        r.successors_per_pair = world.value("successors_per_pair", r.successors_per_pair);
        r.discount = world.value("gamma", r.discount);
        cfg.n_worlds = world.value("n_worlds", 1);
    } else if (cfg.world_type == "mdp_file") {
        cfg.mdp_path = world.at("path").get<std::string>();
        cfg.transfer_mdp_path = world.value("transfer_path", std::string{});
    }

    if (j.contains("expert")) {
        const json& e = j.at("expert");
        cfg.expert.epsilon = e.value("epsilon", 0.0);
        if (e.contains("target_stochastic_fraction"))
            cfg.expert.target_stochastic_fraction = e.at("target_stochastic_fraction").get<double>();
    }

    if (j.contains("data")) {
        const json& d = j.at("data");
        cfg.k = d.value("k", cfg.k);
        if (d.contains("coverages")) cfg.coverages = d.at("coverages").get<std::vector<double>>();
        cfg.n_datasets = d.value("n_datasets", cfg.n_datasets);
        cfg.delta = d.value("delta", cfg.delta);
    }
    cfg.methods = j.value("methods", std::vector<std::string>{});
    cfg.workers = j.value("workers", 1);
    cfg.transfer = j.value("transfer", true);

    if (j.contains("itl")) {
        const json& it = j.at("itl");
        cfg.itl.max_outer_iters = it.value("max_outer_iters", cfg.itl.max_outer_iters);
        cfg.itl.accumulate_linearizations =
            it.value("accumulate_linearizations", cfg.itl.accumulate_linearizations);
        cfg.itl.include_unobserved_constraints =
            it.value("include_unobserved_constraints", cfg.itl.include_unobserved_constraints);
        cfg.itl.include_initial_linearization =
            it.value("include_initial_linearization", cfg.itl.include_initial_linearization);
        cfg.itl.expert_min_freq = it.value("expert_min_freq", cfg.itl.expert_min_freq);
    }
    if (j.contains("mce")) {
        const json& m = j.at("mce");
        cfg.mce.learning_rate = m.value("learning_rate", cfg.mce.learning_rate);
        cfg.mce.max_steps = m.value("max_steps", cfg.mce.max_steps);
        cfg.mce.convergence_tol = m.value("convergence_tol", cfg.mce.convergence_tol);
        cfg.mce.full_gradient = m.value("full_gradient", cfg.mce.full_gradient);
        cfg.mce.temperature = m.value("temperature", cfg.mce.temperature);
    }
    if (j.contains("posterior")) {
        const json& p = j.at("posterior");
        cfg.hmc.n_samples = p.value("n_samples", 100);
        cfg.hmc.burn_in = p.value("burn_in", cfg.hmc.burn_in);
        cfg.hmc.thinning = p.value("thinning", cfg.hmc.thinning);
        cfg.hmc.leapfrog_steps = p.value("leapfrog_steps", cfg.hmc.leapfrog_steps);
        cfg.hmc.step_size = p.value("step_size", cfg.hmc.step_size);
        cfg.hmc.target_accept = p.value("target_accept", cfg.hmc.target_accept);
    } else {
        cfg.hmc.n_samples = 100;
    }
    if (j.contains("metrics")) {
        cfg.cvar_level = j.at("metrics").value("cvar_level", cfg.cvar_level);
        cfg.pair_budget = j.at("metrics").value("pair_budget", cfg.pair_budget);
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(io_detail::load_json_file(path));
}

/// Everything fixed per world instance: true MDPs for both tasks plus the
/// expert and its epsilon-balls under each reward.
struct WorldBundle {
    std::string name;
    TabularMdp standard;
    TabularMdp transfer;
    bool has_transfer = false;
    ExpertResult expert;          // built on the standard task
    EpsilonBall transfer_ball;    // epsilon-ball of the transfer task at the expert's epsilon
    double gamma = 0.95;
};

inline WorldBundle make_world(const ExperimentConfig& cfg, int world_idx) {
    WorldBundle w;
    if (cfg.world_type == "gridworld") {
        w.standard = build_gridworld(cfg.gridworld);
        w.transfer = transfer_reward(w.standard, cfg.gridworld);
        w.has_transfer = cfg.transfer;
        w.name = "gridworld";
    } else if (cfg.world_type == "randomworld") {
        RandomworldSpec spec = cfg.randomworld;
        spec.seed = derive_seed(cfg.seed, {0x776cULL, static_cast<std::uint64_t>(world_idx)});
        w.standard = build_randomworld(spec);
        w.transfer = transfer_reward(w.standard, spec);
        w.has_transfer = cfg.transfer;
        w.name = "randomworld" + std::to_string(world_idx);
    } else {
        w.standard = load_mdp_spec(cfg.mdp_path);
        if (!w.standard.dynamics)
            throw std::invalid_argument("run_experiment: mdp_file world needs dynamics");
        if (!cfg.transfer_mdp_path.empty()) {
            w.transfer = load_mdp_spec(cfg.transfer_mdp_path);
            w.has_transfer = cfg.transfer;
        }
        w.name = std::filesystem::path(cfg.mdp_path).stem().string();
    }
    w.gamma = w.standard.discount;
    w.expert = build_expert(w.standard, cfg.expert);
    if (w.has_transfer)
        w.transfer_ball = epsilon_ball(value_iteration(w.transfer), w.expert.epsilon);
    return w;
}

namespace exp_detail {

inline double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

struct MethodCell {
    std::map<std::string, double> scalar; // metric -> value (per task suffix)
    json extra = json::object();
};

/// Scores one fitted tensor on both tasks.
inline void score_point_estimate(MethodCell& cell, const Tensor3& t, const WorldBundle& w,
                                 const std::vector<ConstraintSpec>& specs,
                                 const EstimatedExpertPolicy& expert_hat,
                                 const BatchDataset& data) {
    const Policy pi_star = greedy_policy(value_iteration(w.standard));
    const Policy pi = greedy_policy(value_iteration(t, w.standard.reward, w.gamma));
    cell.scalar["best_matching_standard"] = best_matching(pi, pi_star);
    cell.scalar["epsilon_matching_standard"] = epsilon_matching(pi, w.expert.ball);
    const auto nv = normalized_value(pi, w.standard);
    cell.scalar["normalized_value_standard"] = nv ? *nv : nan_value();
    cell.scalar["value_standard"] =
        w.standard.initial_dist.dot(evaluate_policy_closed_form(w.standard, pi).v);
    cell.scalar["total_variation"] = total_variation(t, w.standard.true_dynamics());
    const Policy check_pi =
        assemble_policy(expert_hat.valid_actions, data.observed_states, t, w.standard.reward, w.gamma);
    cell.scalar["constraint_violations"] =
        static_cast<double>(check_exact(t, specs, check_pi, w.standard.reward, w.gamma).size());
    if (w.has_transfer) {
        const Policy pi_star_tr = greedy_policy(value_iteration(w.transfer));
        const Policy pi_tr = greedy_policy(value_iteration(t, w.transfer.reward, w.gamma));
        cell.scalar["best_matching_transfer"] = best_matching(pi_tr, pi_star_tr);
        cell.scalar["epsilon_matching_transfer"] = epsilon_matching(pi_tr, w.transfer_ball);
        const auto nvt = normalized_value(pi_tr, w.transfer);
        cell.scalar["normalized_value_transfer"] = nvt ? *nvt : nan_value();
        cell.scalar["value_transfer"] =
            w.transfer.initial_dist.dot(evaluate_policy_closed_form(w.transfer, pi_tr).v);
    }
}

/// Scores a sample set: averaged greedy policy for the matching/value
/// metrics, per-sample means for total variation and violations.
inline void score_sample_set(MethodCell& cell, const DynamicsSampleSet& set, const WorldBundle& w,
                             const std::vector<ConstraintSpec>& specs,
                             const EstimatedExpertPolicy& expert_hat, const BatchDataset& data,
                             double cvar_unused, long pair_budget, std::uint64_t seed) {
    (void)cvar_unused;
    const Policy pi_star = greedy_policy(value_iteration(w.standard));
    const Policy avg = averaged_posterior_policy(set, w.standard.reward, w.gamma);
    cell.scalar["best_matching_standard"] = best_matching(avg, pi_star);
    cell.scalar["epsilon_matching_standard"] = epsilon_matching(avg, w.expert.ball);
    const auto nv = normalized_value(avg, w.standard);
    cell.scalar["normalized_value_standard"] = nv ? *nv : nan_value();
    cell.scalar["value_standard"] =
        w.standard.initial_dist.dot(evaluate_policy_closed_form(w.standard, avg).v);

    double tv = 0.0, viols = 0.0;
    for (const Tensor3& t : set.samples) {
        tv += total_variation(t, w.standard.true_dynamics());
        const Policy check_pi = assemble_policy(expert_hat.valid_actions, data.observed_states, t,
                                                w.standard.reward, w.gamma);
        viols += static_cast<double>(
            check_exact(t, specs, check_pi, w.standard.reward, w.gamma).size());
    }
    cell.scalar["total_variation"] = tv / set.samples.size();
    cell.scalar["constraint_violations"] = viols / set.samples.size();
    cell.scalar["bayesian_regret"] =
        bayesian_regret(set, w.standard.reward, w.gamma, w.standard.initial_dist, pair_budget, seed);
    cell.extra["accept_rate"] = set.accept_rate;
    cell.extra["n_samples"] = set.samples.size();

    if (w.has_transfer) {
        const Policy pi_star_tr = greedy_policy(value_iteration(w.transfer));
        const Policy avg_tr = averaged_posterior_policy(set, w.transfer.reward, w.gamma);
        cell.scalar["best_matching_transfer"] = best_matching(avg_tr, pi_star_tr);
        cell.scalar["epsilon_matching_transfer"] = epsilon_matching(avg_tr, w.transfer_ball);
        const auto nvt = normalized_value(avg_tr, w.transfer);
        cell.scalar["normalized_value_transfer"] = nvt ? *nvt : nan_value();
        cell.scalar["value_transfer"] =
            w.transfer.initial_dist.dot(evaluate_policy_closed_form(w.transfer, avg_tr).v);
        cell.scalar["bayesian_regret_transfer"] =
            bayesian_regret(set, w.transfer.reward, w.gamma, w.transfer.initial_dist, pair_budget,
                            seed + 1);
    }
}

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

} // namespace exp_detail

/**
 * Runs every method of the config on one generated dataset and returns the
 * cell record.  The cell seed fully determines the dataset and samplers.
 */
inline json run_cell(const ExperimentConfig& cfg, const WorldBundle& w, int world_idx,
                     int coverage_idx, int dataset_idx) {
    const double coverage = cfg.coverages[coverage_idx];
    const std::uint64_t cell_seed =
        derive_seed(cfg.seed, {static_cast<std::uint64_t>(world_idx),
                               static_cast<std::uint64_t>(coverage_idx),
                               static_cast<std::uint64_t>(dataset_idx)});
    const BatchDataset data =
        generate_batch(w.standard, w.expert.ball, coverage, cfg.k, cell_seed, cfg.delta);
    const EstimatedExpertPolicy expert_hat = estimate_expert_policy(data, 0.0);
    const std::vector<ConstraintSpec> specs = enumerate_constraints(
        expert_hat.valid_actions, data.observed_state_list(), data.n_actions, w.expert.epsilon);

    json cell;
    cell["world"] = w.name;
    cell["coverage"] = coverage;
    cell["dataset_index"] = dataset_idx;
    cell["seed"] = cell_seed;
    cell["epsilon"] = w.expert.epsilon;
    json methods = json::object();

    std::optional<ItlResult> itl_result;
    auto ensure_itl = [&]() -> const ItlResult& {
        if (!itl_result) {
            ItlConfig ic = cfg.itl;
            ic.epsilon = w.expert.epsilon;
            itl_result = itl_fit(data, w.standard.reward, w.gamma, ic);
        }
        return *itl_result;
    };

    for (const std::string& method : cfg.methods) {
        exp_detail::MethodCell mc;
        try {
            const auto t0 = std::chrono::steady_clock::now();
            if (method == "mle") {
                const Tensor3 t = mle_estimate(data);
                exp_detail::score_point_estimate(mc, t, w, specs, expert_hat, data);
                mc.extra["tensor"] = tensor_to_json(t);
            } else if (method == "itl") {
                const ItlResult& r = ensure_itl();
                exp_detail::score_point_estimate(mc, r.t_hat, w, specs, expert_hat, data);
                mc.scalar["fit_seconds"] = r.wall_time_seconds;
                mc.extra["converged"] = r.converged;
                mc.extra["outer_iterations"] = r.outer_iterations;
                mc.extra["tensor"] = tensor_to_json(r.t_hat);
            } else if (method == "mce") {
                MceConfig mcfg = cfg.mce;
                const auto s = std::chrono::steady_clock::now();
                const MceFitResult r = fit_mce(data, w.standard.reward, w.gamma, mcfg);
                mc.scalar["fit_seconds"] =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count();
                exp_detail::score_point_estimate(mc, r.dynamics, w, specs, expert_hat, data);
                mc.extra["steps"] = r.steps;
                mc.extra["tensor"] = tensor_to_json(r.dynamics);
            } else if (method == "ps") {
                const DynamicsSampleSet set = sample_dirichlet_posterior(
                    data, cfg.hmc.n_samples, derive_seed(cell_seed, {0x7073ULL}));
                exp_detail::score_sample_set(mc, set, w, specs, expert_hat, data, cfg.cvar_level,
                                             cfg.pair_budget, cell_seed);
            } else if (method == "bitl") {
                HmcConfig hc = cfg.hmc;
                hc.seed = derive_seed(cell_seed, {0x6269ULL});
                const DynamicsSampleSet set =
                    bitl_sample(data, w.standard.reward, w.gamma, w.expert.epsilon,
                                expert_hat.valid_actions, ensure_itl().t_hat, hc);
                exp_detail::score_sample_set(mc, set, w, specs, expert_hat, data, cfg.cvar_level,
                                             cfg.pair_budget, cell_seed);
                mc.extra["reflections"] = set.diagnostics.reflections;
                mc.extra["cleanup_rejections"] = set.diagnostics.cleanup_rejections;
                mc.extra["step_size"] = set.diagnostics.step_size_final;
            }
            if (!mc.scalar.count("fit_seconds") && (method == "mle"))
                mc.scalar["fit_seconds"] =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            json entry = json::object();
            for (const auto& [k, v] : mc.scalar)
                entry[k] = std::isnan(v) ? json() : json(v);
            entry["diagnostics"] = mc.extra;
            methods[method] = entry;
        } catch (const std::exception& e) {
            methods[method] = json{{"error", e.what()}};
        }
    }
    cell["methods"] = methods;
    return cell;
}

struct AggregatedRow {
    std::string method, task, metric;
    double coverage = 0.0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double stddev = std::numeric_limits<double>::quiet_NaN();
    int n_datasets = 0;
};

/**
 * Full sweep: for every (world, coverage, dataset index) cell, generate
 * data, fit each requested method, and score both tasks; cell records land
 * under out/cells, fitted tensors under out/tensors, and the aggregate
 * table in out/results.csv.  Cell failures are recorded and skipped.
 */
inline std::filesystem::path run_experiment(const ExperimentConfig& cfg,
                                            const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir / "cells");
    std::filesystem::create_directories(out_dir / "tensors");
    const int n_worlds = (cfg.world_type == "randomworld") ? cfg.n_worlds : 1;
    std::vector<WorldBundle> worlds;
    for (int wi = 0; wi < n_worlds; ++wi) worlds.push_back(make_world(cfg, wi));

    struct CellKey { int world, coverage, dataset; };
    std::vector<CellKey> keys;
    for (int wi = 0; wi < n_worlds; ++wi)
        for (int ci = 0; ci < static_cast<int>(cfg.coverages.size()); ++ci)
            for (int di = 0; di < cfg.n_datasets; ++di) keys.push_back({wi, ci, di});

    std::vector<json> cells(keys.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= keys.size()) return;
            const CellKey& k = keys[i];
            try {
                cells[i] = run_cell(cfg, worlds[k.world], k.world, k.coverage, k.dataset);
            } catch (const std::exception& e) {
                cells[i] = json{{"error", e.what()},
                                {"world", worlds[k.world].name},
                                {"coverage", cfg.coverages[k.coverage]},
                                {"dataset_index", k.dataset}};
            }
        }
    };
    const int n_workers = std::max(1, cfg.workers);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // persist cells and point-estimate tensors in deterministic order
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const CellKey& k = keys[i];
        std::ostringstream name;
        name << "cell_w" << k.world << "_c" << k.coverage << "_d" << k.dataset << ".json";
        json cell = cells[i];
        if (cell.contains("methods")) {
            for (auto& [method, entry] : cell["methods"].items()) {
                if (!entry.contains("diagnostics") || !entry["diagnostics"].contains("tensor"))
                    continue;
                std::ostringstream tname;
                tname << method << "_w" << k.world << "_c" << k.coverage << "_d" << k.dataset
                      << ".json";
                io_detail::write_text_file(out_dir / "tensors" / tname.str(),
                                           entry["diagnostics"]["tensor"].dump() + "\n");
                entry["diagnostics"].erase("tensor");
            }
        }
        io_detail::write_text_file(out_dir / "cells" / name.str(), cell.dump(2) + "\n");
        cells[i] = cell;
    }

    // aggregate over (world, dataset) per coverage
    const std::string config_hash =
        "0x" + [&] { std::ostringstream os; os << std::hex << fnv1a64(cfg.raw.dump()); return os.str(); }();
    std::ostringstream csv;
    csv << "method,task,metric,coverage,mean,std,n_datasets,config_hash\n";
    for (const std::string& method : cfg.methods)
        for (const char* task : kTaskNames)
            for (const char* metric : kMetricNames)
                for (int ci = 0; ci < static_cast<int>(cfg.coverages.size()); ++ci) {
                    std::vector<double> vals;
                    std::vector<double> raw_values; // for value_cvar
                    for (std::size_t i = 0; i < keys.size(); ++i) {
                        if (keys[i].coverage != ci) continue;
                        const json& cell = cells[i];
                        if (!cell.contains("methods") || !cell["methods"].contains(method)) continue;
                        const json& entry = cell["methods"][method];
                        if (entry.contains("error")) continue;
                        const std::string task_s(task);
                        auto fetch = [&](const std::string& key) -> std::optional<double> {
                            if (entry.contains(key) && !entry[key].is_null())
                                return entry[key].get<double>();
                            return std::nullopt;
                        };
                        const std::string m(metric);
                        std::optional<double> v;
                        if (m == "value_cvar") {
                            v = fetch("value_" + task_s);
                            if (v) raw_values.push_back(*v);
                            continue;
                        } else if (m == "total_variation" || m == "constraint_violations" ||
                                   m == "fit_seconds") {
                            v = fetch(m); // task-independent, repeated per task
                        } else if (m == "bayesian_regret") {
                            v = fetch(task_s == "standard" ? "bayesian_regret"
                                                           : "bayesian_regret_transfer");
                        } else {
                            v = fetch(m + "_" + task_s);
                        }
                        if (v) vals.push_back(*v);
                    }
                    AggregatedRow row;
                    row.method = method;
                    row.task = task;
                    row.metric = metric;
                    row.coverage = cfg.coverages[ci];
                    if (std::string(metric) == "value_cvar") {
                        row.n_datasets = static_cast<int>(raw_values.size());
                        if (!raw_values.empty()) row.mean = cvar(raw_values, cfg.cvar_level);
                    } else {
                        row.n_datasets = static_cast<int>(vals.size());
                        if (!vals.empty()) {
                            row.mean = mean_of(vals);
                            row.stddev = stddev_of(vals);
                        }
                    }
                    csv << row.method << ',' << row.task << ',' << row.metric << ','
                        << exp_detail::format_double(row.coverage) << ','
                        << exp_detail::format_double(row.mean) << ','
                        << exp_detail::format_double(row.stddev) << ',' << row.n_datasets << ','
                        << config_hash << '\n';
                }
    const auto csv_path = out_dir / "results.csv";
    io_detail::write_text_file(csv_path, csv.str());
    return csv_path;
}

namespace exp_detail {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (first) {
            t.header = cols;
            first = false;
        } else {
            t.rows.push_back(cols);
        }
    }
    return t;
}

struct SvgCanvas {
    double width = 640, height = 480, margin = 60;
    std::ostringstream body;

    double x(double v, double lo, double hi) const {
        return margin + (v - lo) / (hi - lo + 1e-300) * (width - 2 * margin);
    }
    double y(double v, double lo, double hi) const {
        return height - margin - (v - lo) / (hi - lo + 1e-300) * (height - 2 * margin);
    }
    std::string finish(const std::string& x_label, const std::string& y_label) {
        std::ostringstream svg;
        svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
            << height << "\">\n";
        svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
            << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
            << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 15
            << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
        svg << "<text x=\"15\" y=\"" << height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
            << height / 2 << ")\">" << y_label << "</text>\n";
        svg << body.str() << "</svg>\n";
        return svg.str();
    }
};

inline const char* method_color(const std::string& m) {
    if (m == "mle") return "#888888";
    if (m == "itl") return "#d62728";
    if (m == "mce") return "#2ca02c";
    if (m == "ps") return "#9467bd";
    if (m == "bitl") return "#1f77b4";
    return "#000000";
}

} // namespace exp_detail

/**
 * Renders the standard plots from a results.csv: one normalized-value vs
 * coverage chart per task and a value vs Bayesian-regret scatter.  Missing
 * metrics produce a warning line on stderr and a skipped plot.
 */
inline std::vector<std::filesystem::path> render_plots(const std::filesystem::path& results_csv,
                                                       const std::filesystem::path& out_dir) {
    const exp_detail::CsvTable table = exp_detail::read_csv(results_csv);
    std::filesystem::create_directories(out_dir);
    auto col = [&](const std::string& name) {
        for (std::size_t i = 0; i < table.header.size(); ++i)
            if (table.header[i] == name) return static_cast<int>(i);
        throw std::runtime_error("results csv missing column " + name);
    };
    const int c_method = col("method"), c_task = col("task"), c_metric = col("metric"),
              c_cov = col("coverage"), c_mean = col("mean");
    std::vector<std::filesystem::path> written;

    for (const std::string task : {"standard", "transfer"}) {
        // method -> sorted (coverage, value)
        std::map<std::string, std::map<double, double>> series;
        for (const auto& r : table.rows) {
            if (r[c_task] != task || r[c_metric] != "normalized_value" || r[c_mean] == "nan")
                continue;
            series[r[c_method]][std::stod(r[c_cov])] = std::stod(r[c_mean]);
        }
        if (series.empty()) {
            std::fprintf(stderr, "render_plots: no normalized_value rows for task %s, skipped\n",
                         task.c_str());
            continue;
        }
        double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
        for (const auto& [m, pts] : series)
            for (const auto& [cvg, v] : pts) {
                lo_x = std::min(lo_x, cvg); hi_x = std::max(hi_x, cvg);
                lo_y = std::min(lo_y, v); hi_y = std::max(hi_y, v);
            }
        exp_detail::SvgCanvas canvas;
        int legend_i = 0;
        for (const auto& [m, pts] : series) {
            canvas.body << "<polyline fill=\"none\" stroke=\"" << exp_detail::method_color(m)
                        << "\" stroke-width=\"2\" points=\"";
            for (const auto& [cvg, v] : pts)
                canvas.body << canvas.x(cvg, lo_x, hi_x) << ',' << canvas.y(v, lo_y, hi_y) << ' ';
            canvas.body << "\"/>\n";
            canvas.body << "<text x=\"" << canvas.width - canvas.margin + 5 << "\" y=\""
                        << canvas.margin + 16 * legend_i++ << "\" fill=\""
                        << exp_detail::method_color(m) << "\">" << m << "</text>\n";
        }
        const auto path = out_dir / ("value_vs_coverage_" + task + ".svg");
        io_detail::write_text_file(path, canvas.finish("coverage", "normalized_value"));
        written.push_back(path);
    }

    {
        // scatter: regret vs value for the sampler methods
        std::vector<std::tuple<std::string, double, double>> pts; // method, regret, value
        std::map<std::string, std::map<std::string, double>> by_key_value, by_key_regret;
        for (const auto& r : table.rows) {
            if (r[c_mean] == "nan") continue;
            const std::string key = r[c_method] + "," + r[c_task] + "," + r[c_cov];
            if (r[c_metric] == "normalized_value") by_key_value[r[c_method]][key] = std::stod(r[c_mean]);
            if (r[c_metric] == "bayesian_regret") by_key_regret[r[c_method]][key] = std::stod(r[c_mean]);
        }
        for (const auto& [m, vals] : by_key_regret)
            for (const auto& [key, regret] : vals) {
                auto it = by_key_value.find(m);
                if (it == by_key_value.end() || !it->second.count(key)) continue;
                pts.emplace_back(m, regret, it->second[key]);
            }
        if (pts.empty()) {
            std::fprintf(stderr, "render_plots: no bayesian_regret rows, scatter skipped\n");
        } else {
            double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
            for (const auto& [m, rg, v] : pts) {
                lo_x = std::min(lo_x, rg); hi_x = std::max(hi_x, rg);
                lo_y = std::min(lo_y, v); hi_y = std::max(hi_y, v);
            }
            exp_detail::SvgCanvas canvas;
            for (const auto& [m, rg, v] : pts)
                canvas.body << "<circle cx=\"" << canvas.x(rg, lo_x, hi_x) << "\" cy=\""
                            << canvas.y(v, lo_y, hi_y) << "\" r=\"4\" fill=\""
                            << exp_detail::method_color(m) << "\"/>\n";
            const auto path = out_dir / "value_vs_regret.svg";
            io_detail::write_text_file(path, canvas.finish("bayesian_regret", "normalized_value"));
            written.push_back(path);
        }
    }
    return written;
}

/// Side-by-side top-k next-state table for several fitted tensors.
inline std::string counterfactual_csv(const std::vector<std::pair<std::string, Tensor3>>& fits,
                                      int s, int a, int k) {
    std::ostringstream os;
    os << "method,rank,next_state,probability\n";
    for (const auto& [name, t] : fits) {
        const auto top = topk_next_states(t, s, a, k);
        for (std::size_t i = 0; i < top.size(); ++i)
            os << name << ',' << i + 1 << ',' << top[i].first << ','
               << exp_detail::format_double(top[i].second) << '\n';
    }
    return os.str();
}

} // namespace itl
