#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mjls/errors.hpp"
#include "mjls/mode_atlas.hpp"
#include "mjls/model.hpp"
#include "mjls/simulate.hpp"
#include "mjls/solver.hpp"
#include "mjls/synthesis.hpp"

namespace mjls {

using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Matrix <-> JSON (row-major arrays of arrays)
// ---------------------------------------------------------------------------

inline json matrix_to_json(const Eigen::MatrixXd& A) {
    json rows = json::array();
    for (int r = 0; r < A.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < A.cols(); ++c) row.push_back(A(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd json_to_matrix(const json& j, const std::string& what, int cols_hint = -1) {
    if (!j.is_array()) throw Error(ErrorCode::ParseError, what + ": expected an array of rows");
    const int rows = static_cast<int>(j.size());
    int cols = cols_hint;
    if (rows > 0) {
        if (!j[0].is_array())
            throw Error(ErrorCode::ParseError, what + ": rows must be arrays");
        cols = static_cast<int>(j[0].size());
    }
    if (cols < 0) cols = 0;
    Eigen::MatrixXd A(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols)
            throw Error(ErrorCode::ParseError, what + ": ragged row " + std::to_string(r + 1));
        for (int c = 0; c < cols; ++c) {
            if (!j[r][c].is_number())
                throw Error(ErrorCode::ParseError,
                            what + ": non-numeric entry at row " + std::to_string(r + 1));
            A(r, c) = j[r][c].get<double>();
        }
    }
    return A;
}

inline Eigen::VectorXd json_to_vector(const json& j, const std::string& what) {
    if (!j.is_array()) throw Error(ErrorCode::ParseError, what + ": expected an array");
    Eigen::VectorXd v(j.size());
    for (std::size_t k = 0; k < j.size(); ++k) {
        if (!j[k].is_number())
            throw Error(ErrorCode::ParseError, what + ": non-numeric entry");
        v(k) = j[k].get<double>();
    }
    return v;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (int k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

namespace detail {

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ParseError, "cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

inline const json& need(const json& j, const char* key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end())
        throw Error(ErrorCode::ParseError, ctx + ": missing key \"" + key + "\"");
    return *it;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

inline PlantModel parse_model(const json& j) {
    using detail::need;
    const std::string ctx = "model";
    std::vector<int> counts = need(j, "subsystem_mode_counts", ctx).get<std::vector<int>>();
    std::vector<std::vector<int>> vectors =
        need(j, "mode_vectors", ctx).get<std::vector<std::vector<int>>>();
    Eigen::MatrixXd Q = json_to_matrix(need(j, "generator", ctx), "generator");

    PlantModel model;
    model.atlas = build_atlas(counts, vectors, Q);
    const int N = model.atlas.N;
    const int M = model.atlas.M();

    const json& subs = need(j, "subsystems", ctx);
    if (!subs.is_array() || static_cast<int>(subs.size()) != N)
        throw Error(ErrorCode::ParseError, "subsystems: expected " + std::to_string(N) +
                                               " entries");
    for (int i = 0; i < N; ++i) {
        SubsystemData sd;
        const std::string tag = "subsystem " + std::to_string(i + 1);
        auto read_family = [&](const char* key, std::vector<Eigen::MatrixXd>& out) {
            const json& fam = need(subs[i], key, tag);
            if (!fam.is_array() || static_cast<int>(fam.size()) != counts[i])
                throw Error(ErrorCode::ParseError,
                            tag + " " + key + ": expected " + std::to_string(counts[i]) +
                                " mode blocks");
            for (int k = 0; k < counts[i]; ++k)
                out.push_back(json_to_matrix(fam[k], tag + " " + key));
        };
        read_family("A", sd.A);
        read_family("B", sd.B);
        read_family("E", sd.E);
        read_family("L", sd.L);
        read_family("H", sd.H);
        model.subsystems.push_back(std::move(sd));
    }

    const json& sbar = need(j, "S_bar", ctx);
    const json& stil = need(j, "S_tilde", ctx);
    if (static_cast<int>(sbar.size()) != N || static_cast<int>(stil.size()) != N)
        throw Error(ErrorCode::ParseError, "S_bar/S_tilde: expected one matrix per subsystem");
    for (int i = 0; i < N; ++i)
        model.budgets.push_back({json_to_matrix(sbar[i], "S_bar"),
                                 json_to_matrix(stil[i], "S_tilde")});

    const json& weights = need(j, "weights", ctx);
    if (!weights.is_array() || static_cast<int>(weights.size()) != M)
        throw Error(ErrorCode::ParseError, "weights: expected one entry per global mode");
    model.weights.R.resize(M);
    model.weights.G.resize(M);
    for (int mu = 0; mu < M; ++mu) {
        const json& Rj = need(weights[mu], "R", "weights");
        const json& Gj = need(weights[mu], "G", "weights");
        for (int i = 0; i < N; ++i) {
            model.weights.R[mu].push_back(json_to_matrix(Rj[i], "weights R"));
            model.weights.G[mu].push_back(json_to_matrix(Gj[i], "weights G"));
        }
    }

    model.x0 = json_to_vector(need(j, "x0", ctx), "x0");

    if (j.contains("initial_distribution")) {
        const json& pi = j["initial_distribution"];
        if (pi.is_string() && pi.get<std::string>() == "stationary") {
            model.use_stationary_distribution = true;
            model.initial_distribution = stationary_distribution(model.atlas);
        } else {
            model.initial_distribution = json_to_vector(pi, "initial_distribution");
        }
    } else {
        model.initial_distribution = Eigen::VectorXd::Constant(M, 1.0 / M);
    }
    validate_model(model);
    return model;
}

inline json serialize_model(const PlantModel& model) {
    json j;
    j["subsystem_mode_counts"] = model.atlas.local_mode_counts;
    j["mode_vectors"] = model.atlas.mode_vectors;
    j["generator"] = matrix_to_json(model.atlas.generator);
    json subs = json::array();
    for (const auto& sd : model.subsystems) {
        json s;
        auto fam = [](const std::vector<Eigen::MatrixXd>& mats) {
            json a = json::array();
            for (const auto& m : mats) a.push_back(matrix_to_json(m));
            return a;
        };
        s["A"] = fam(sd.A);
        s["B"] = fam(sd.B);
        s["E"] = fam(sd.E);
        s["L"] = fam(sd.L);
        s["H"] = fam(sd.H);
        subs.push_back(std::move(s));
    }
    j["subsystems"] = std::move(subs);
    json sbar = json::array(), stil = json::array();
    for (const auto& b : model.budgets) {
        sbar.push_back(matrix_to_json(b.S_bar));
        stil.push_back(matrix_to_json(b.S_tilde));
    }
    j["S_bar"] = std::move(sbar);
    j["S_tilde"] = std::move(stil);
    json weights = json::array();
    for (std::size_t mu = 0; mu < model.weights.R.size(); ++mu) {
        json w;
        json R = json::array(), G = json::array();
        for (const auto& m : model.weights.R[mu]) R.push_back(matrix_to_json(m));
        for (const auto& m : model.weights.G[mu]) G.push_back(matrix_to_json(m));
        w["R"] = std::move(R);
        w["G"] = std::move(G);
        weights.push_back(std::move(w));
    }
    j["weights"] = std::move(weights);
    j["x0"] = vector_to_json(model.x0);
    if (model.use_stationary_distribution)
        j["initial_distribution"] = "stationary";
    else
        j["initial_distribution"] = vector_to_json(model.initial_distribution);
    return j;
}

inline PlantModel load_model_file(const std::string& path) {
    return parse_model(detail::read_json_file(path));
}

inline void save_model_file(const std::string& path, const PlantModel& model) {
    detail::write_json_file(path, serialize_model(model));
}

// ---------------------------------------------------------------------------
// Pattern files (standalone: binary matrix + atlas fingerprint)
// ---------------------------------------------------------------------------

inline void save_pattern_file(const std::string& path, const Eigen::MatrixXi& C,
                              const ModeAtlas& atlas) {
    json j;
    json rows = json::array();
    for (int r = 0; r < C.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < C.cols(); ++c) row.push_back(C(r, c));
        rows.push_back(std::move(row));
    }
    j["C"] = std::move(rows);
    j["atlas_hash"] = atlas_hash(atlas);
    detail::write_json_file(path, j);
}

inline InfoPattern load_pattern_file(const std::string& path, const ModeAtlas& atlas) {
    const json j = detail::read_json_file(path);
    const json& Cj = detail::need(j, "C", "pattern");
    const Eigen::MatrixXd Cd = json_to_matrix(Cj, "pattern C");
    Eigen::MatrixXi C = Cd.cast<int>();
    if ((Cd - C.cast<double>()).cwiseAbs().maxCoeff() > 0.0)
        throw Error(ErrorCode::NonBinaryEntry, "pattern C: entries must be 0 or 1");
    const std::uint64_t hash = detail::need(j, "atlas_hash", "pattern").get<std::uint64_t>();
    if (hash != atlas_hash(atlas))
        throw Error(ErrorCode::AtlasMismatch,
                    path + ": pattern was built over a different atlas");
    return build_info_pattern(atlas, C);
}

// ---------------------------------------------------------------------------
// Result files
// ---------------------------------------------------------------------------

inline json serialize_config(const SolverConfig& cfg) {
    json j;
    j["max_iterations"] = cfg.max_iterations;
    j["tolerance"] = cfg.tolerance;
    j["displacement_tol"] = cfg.displacement_tol;
    j["restarts"] = cfg.restarts;
    j["seed"] = cfg.seed;
    j["epsilon"] = cfg.epsilon;
    j["gamma_lo"] = cfg.gamma_lo;
    j["gamma_hi"] = cfg.gamma_hi;
    j["bisection_tol"] = cfg.bisection_tol;
    return j;
}

inline SolverConfig parse_config(const json& j) {
    SolverConfig cfg;
    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.tolerance = j.value("tolerance", cfg.tolerance);
    cfg.displacement_tol = j.value("displacement_tol", cfg.displacement_tol);
    cfg.restarts = j.value("restarts", cfg.restarts);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.gamma_lo = j.value("gamma_lo", cfg.gamma_lo);
    cfg.gamma_hi = j.value("gamma_hi", cfg.gamma_hi);
    cfg.bisection_tol = j.value("bisection_tol", cfg.bisection_tol);
    return cfg;
}

inline json serialize_result(const SynthesisResult& result, const PlantModel& model,
                             const SolverConfig& cfg, bool use_stationary,
                             const SchurReport* schur = nullptr,
                             const GainDistanceReport* gain_report = nullptr,
                             const MonteCarloReport* mc = nullptr) {
    json j;
    j["version"] = kToolVersion;
    j["config"] = serialize_config(cfg);
    j["use_stationary"] = use_stationary;
    j["atlas_hash"] = result.pattern.atlas_fingerprint;
    json rows = json::array();
    for (int r = 0; r < result.pattern.C.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < result.pattern.C.cols(); ++c) row.push_back(result.pattern.C(r, c));
        rows.push_back(std::move(row));
    }
    j["pattern_C"] = std::move(rows);
    j["status"] = to_string(result.status);
    j["gamma"] = result.gamma;
    j["iterations"] = result.iterations;
    j["max_residual"] = result.max_residual;
    j["cost_bound"] = cost_bound(result, model, use_stationary);
    j["bound_kind"] = "analytic-certificate"; // not a worst-case optimum
    j["v"] = vector_to_json(result.v);
    auto fam2 = [](const std::vector<std::vector<Eigen::MatrixXd>>& mats) {
        json a = json::array();
        for (const auto& per : mats) {
            json inner = json::array();
            for (const auto& m : per) inner.push_back(matrix_to_json(m));
            a.push_back(std::move(inner));
        }
        return a;
    };
    j["gains"] = fam2(result.gains);
    j["global_gains"] = fam2(result.global_gains);
    j["X"] = fam2(result.X);
    j["Y"] = fam2(result.Y);
    j["tau_u"] = result.tau_u;
    j["tau"] = result.tau;
    j["theta"] = result.theta;
    j["beta_u"] = result.beta_u;
    if (schur) {
        json s;
        s["pass"] = schur->pass;
        json entries = json::array();
        for (const auto& e : schur->entries)
            entries.push_back({{"i", e.i}, {"mu", e.mu}, {"max_eigenvalue", e.max_eigenvalue}});
        s["entries"] = std::move(entries);
        j["schur_certificate"] = std::move(s);
    }
    if (gain_report) {
        json g;
        g["pass"] = gain_report->pass;
        json entries = json::array();
        for (const auto& e : gain_report->entries)
            entries.push_back({{"i", e.i},
                               {"mu", e.mu},
                               {"distance_sq", e.distance_sq},
                               {"budget", e.budget},
                               {"slack", e.slack}});
        g["entries"] = std::move(entries);
        j["gain_distance_certificate"] = std::move(g);
    }
    if (mc) {
        json m;
        m["paths"] = mc->paths;
        m["horizon"] = mc->horizon;
        m["mean_cost"] = mc->mean_cost;
        m["standard_error"] = mc->standard_error;
        m["mean_weighted_cost"] = mc->mean_weighted;
        m["weighted_standard_error"] = mc->weighted_standard_error;
        m["lambda_hat"] = mc->lambda_hat;
        m["tail_fraction"] = mc->tail_fraction;
        m["iqc_pass"] = mc->iqc_pass;
        m["divergence_count"] = mc->divergence_count;
        j["monte_carlo"] = std::move(m);
    }
    return j;
}

struct LoadedResult {
    SynthesisResult result;
    SolverConfig config;
    bool use_stationary = false;
    double recorded_gamma = 0.0;
};

// Reconstructs a result against a model.  The gain matrices are taken from
// the file (not re-derived from v) so that tampered gains are caught by the
// distance certificate.
inline LoadedResult load_result_file(const std::string& path, const PlantModel& model) {
    const json j = detail::read_json_file(path);
    using detail::need;
    LoadedResult out;
    out.config = parse_config(need(j, "config", "result"));
    out.use_stationary = j.value("use_stationary", false);

    const std::uint64_t hash = need(j, "atlas_hash", "result").get<std::uint64_t>();
    if (hash != atlas_hash(model.atlas))
        throw Error(ErrorCode::ModelResultMismatch,
                    "result was produced for a different mode atlas");
    const Eigen::MatrixXd Cd = json_to_matrix(need(j, "pattern_C", "result"), "pattern_C");
    const Eigen::MatrixXi C = Cd.cast<int>();
    if (C.rows() != model.N())
        throw Error(ErrorCode::ModelResultMismatch, "pattern size differs from model");
    const InfoPattern pattern = build_info_pattern(model.atlas, C);
    const VariableLayout layout = build_layout(model, pattern);

    const Eigen::VectorXd v = json_to_vector(need(j, "v", "result"), "result v");
    if (v.size() != layout.size)
        throw Error(ErrorCode::ModelResultMismatch,
                    "solution vector length differs from the model's variable layout");
    out.result = detail::unpack_solution(model, pattern, layout, v);
    out.result.status = SolveStatus::Feasible;
    out.result.iterations = j.value("iterations", 0);
    out.result.max_residual = j.value("max_residual", 0.0);
    out.recorded_gamma = j.value("gamma", out.result.gamma);

    if (j.contains("gains")) {
        const json& gj = j["gains"];
        for (int i = 0; i < model.N() && i < static_cast<int>(gj.size()); ++i)
            for (std::size_t sigma = 0; sigma < gj[i].size(); ++sigma)
                out.result.gains[i][sigma] =
                    json_to_matrix(gj[i][sigma], "gains", model.subsystems[i].n());
    }
    return out;
}

} // namespace mjls
