#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "itl/dataset.hpp"
#include "itl/mdp.hpp"

namespace itl {

using json = nlohmann::json;

namespace io_detail {
inline json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("parse error in " + path.string() + ": " + e.what());
    }
    return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}
} // namespace io_detail

inline json tensor_to_json(const Tensor3& t) {
    return json{{"dims", {t.dim0(), t.dim1(), t.dim2()}}, {"data", t.data()}};
}

inline Tensor3 tensor_from_json(const json& j) {
    const auto dims = j.at("dims");
    Tensor3 t(dims.at(0).get<int>(), dims.at(1).get<int>(), dims.at(2).get<int>());
    const auto& data = j.at("data");
    if (data.size() != t.size()) throw std::runtime_error("tensor_from_json: size mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = data.at(i).get<double>();
    return t;
}

inline void save_tensor(const std::filesystem::path& path, const Tensor3& t,
                        const json& metadata = json::object()) {
    json j = tensor_to_json(t);
    if (!metadata.empty()) j["meta"] = metadata;
    io_detail::write_text_file(path, j.dump(2) + "\n");
}

inline Tensor3 load_tensor(const std::filesystem::path& path, json* metadata = nullptr) {
    const json j = io_detail::load_json_file(path);
    if (metadata) *metadata = j.value("meta", json::object());
    return tensor_from_json(j);
}

/**
 * MDP spec document: n_states, n_actions, gamma, reward as a dense
 * [S][A] table, optional dense dynamics [S][A][S], initial_dist.
 */
inline TabularMdp load_mdp_spec(const std::filesystem::path& path) {
    const json j = io_detail::load_json_file(path);
    TabularMdp mdp;
    mdp.n_states = j.at("n_states").get<int>();
    mdp.n_actions = j.at("n_actions").get<int>();
    mdp.discount = j.at("gamma").get<double>();
    const auto& rw = j.at("reward");
    mdp.reward.resize(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) mdp.reward(s, a) = rw.at(s).at(a).get<double>();
    if (j.contains("initial_dist")) {
        mdp.initial_dist.resize(mdp.n_states);
        for (int s = 0; s < mdp.n_states; ++s)
            mdp.initial_dist[s] = j.at("initial_dist").at(s).get<double>();
    } else {
        mdp.initial_dist =
            Eigen::VectorXd::Constant(mdp.n_states, 1.0 / mdp.n_states);
    }
    if (j.contains("dynamics") && !j.at("dynamics").is_null()) {
        Tensor3 t(mdp.n_states, mdp.n_actions, mdp.n_states);
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a)
                for (int sp = 0; sp < mdp.n_states; ++sp)
                    t(s, a, sp) = j.at("dynamics").at(s).at(a).at(sp).get<double>();
        mdp.dynamics = std::move(t);
    }
    mdp.validate();
    return mdp;
}

inline void save_mdp_spec(const std::filesystem::path& path, const TabularMdp& mdp) {
    json j;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["gamma"] = mdp.discount;
    json rw = json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        json row = json::array();
        for (int a = 0; a < mdp.n_actions; ++a) row.push_back(mdp.reward(s, a));
        rw.push_back(row);
    }
    j["reward"] = rw;
    j["initial_dist"] = std::vector<double>(mdp.initial_dist.data(),
                                            mdp.initial_dist.data() + mdp.initial_dist.size());
    if (mdp.dynamics) {
        json dyn = json::array();
        for (int s = 0; s < mdp.n_states; ++s) {
            json per_a = json::array();
            for (int a = 0; a < mdp.n_actions; ++a) {
                const auto row = mdp.dynamics->row(s, a);
                per_a.push_back(std::vector<double>(row.data(), row.data() + row.size()));
            }
            dyn.push_back(per_a);
        }
        j["dynamics"] = dyn;
    }
    io_detail::write_text_file(path, j.dump(2) + "\n");
}

/// Schema sidecar path for a dataset file: `<file>.schema.json`.
inline std::filesystem::path schema_sidecar_path(const std::filesystem::path& dataset_path) {
    auto p = dataset_path;
    p += ".schema.json";
    return p;
}

inline void save_dataset(const std::filesystem::path& path, const BatchDataset& data) {
    std::ostringstream csv;
    csv << "s,a,s_next\n";
    for (const auto& [s, a, sp] : data.transitions) csv << s << ',' << a << ',' << sp << '\n';
    io_detail::write_text_file(path, csv.str());
    json schema{{"n_states", data.n_states}, {"n_actions", data.n_actions}, {"delta", data.delta}};
    io_detail::write_text_file(schema_sidecar_path(path), schema.dump(2) + "\n");
}

/**
 * Loads `s,a,s_next` integer triples (one header line).  Malformed rows and
 * out-of-range indices abort with the offending line number.
 */
inline BatchDataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        return BatchDataset::from_transitions(schema.n_states, schema.n_actions, {}, schema.delta);
    std::vector<std::array<int, 3>> transitions;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::array<int, 3> triple{};
        char c1, c2;
        std::istringstream row(line);
        if (!(row >> triple[0] >> c1 >> triple[1] >> c2 >> triple[2]) || c1 != ',' || c2 != ',')
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": malformed row '" + line + "'");
        for (int i = 0; i < 3; ++i) {
            const int bound = (i == 1) ? schema.n_actions : schema.n_states;
            if (triple[i] < 0 || triple[i] >= bound)
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                         ": index " + std::to_string(triple[i]) +
                                         " outside schema bounds");
        }
        transitions.push_back(triple);
    }
    return BatchDataset::from_transitions(schema.n_states, schema.n_actions,
                                          std::move(transitions), schema.delta);
}

inline BatchDataset load_dataset(const std::filesystem::path& path) {
    const json j = io_detail::load_json_file(schema_sidecar_path(path));
    DatasetSchema schema;
    schema.n_states = j.at("n_states").get<int>();
    schema.n_actions = j.at("n_actions").get<int>();
    schema.delta = j.value("delta", 1e-3);
    return load_dataset(path, schema);
}

/// Text tensor stack with a manifest; every sample tensor is stored dense.
inline void save_sample_set(const std::filesystem::path& path, const DynamicsSampleSet& set,
                            const json& manifest_extra = json::object()) {
    json manifest{{"count", set.samples.size()},
                  {"accept_rate", set.accept_rate},
                  {"proposals", set.diagnostics.proposals},
                  {"reflections", set.diagnostics.reflections},
                  {"cleanup_rejections", set.diagnostics.cleanup_rejections},
                  {"step_size_final", set.diagnostics.step_size_final}};
    for (auto it = manifest_extra.begin(); it != manifest_extra.end(); ++it)
        manifest[it.key()] = it.value();
    json j{{"manifest", manifest}, {"energies", set.energies}};
    json samples = json::array();
    for (const Tensor3& t : set.samples) samples.push_back(tensor_to_json(t));
    j["samples"] = samples;
    io_detail::write_text_file(path, j.dump() + "\n");
}

inline DynamicsSampleSet load_sample_set(const std::filesystem::path& path,
                                         json* manifest = nullptr) {
    const json j = io_detail::load_json_file(path);
    DynamicsSampleSet set;
    if (manifest) *manifest = j.at("manifest");
    set.accept_rate = j.at("manifest").value("accept_rate", 1.0);
    if (j.contains("energies")) set.energies = j.at("energies").get<std::vector<double>>();
    for (const json& sj : j.at("samples")) set.samples.push_back(tensor_from_json(sj));
    return set;
}

} // namespace itl
