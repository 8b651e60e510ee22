#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mjls/errors.hpp"
#include "mjls/lmi.hpp"
#include "mjls/mode_atlas.hpp"
#include "mjls/model.hpp"
#include "mjls/solver.hpp"

namespace mjls {

struct SynthesisResult {
    InfoPattern pattern;
    VariableLayout layout;
    Eigen::VectorXd v; // raw solution vector, authoritative for re-checks

    std::vector<std::vector<Eigen::MatrixXd>> X, Y;      // [i][mu]
    std::vector<std::vector<Eigen::MatrixXd>> gains;     // [i][sigma], K_i
    std::vector<std::vector<Eigen::MatrixXd>> global_gains; // [i][mu], K~_i
    std::vector<double> tau_u_til, tau_til, theta_til;   // NaN where absent
    std::vector<double> tau_u, tau, theta;               // reciprocals
    std::vector<std::vector<double>> beta_bar, beta_til, beta_u; // [i][mu]
    double gamma = std::numeric_limits<double>::quiet_NaN();
    SolveStatus status = SolveStatus::Infeasible;
    int iterations = 0;
    double max_residual = std::numeric_limits<double>::infinity();
};

namespace detail {

inline SynthesisResult unpack_solution(const PlantModel& model, const InfoPattern& pattern,
                                       const VariableLayout& layout, const Eigen::VectorXd& v) {
    const int N = model.N();
    const int M = model.atlas.M();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SynthesisResult r;
    r.pattern = pattern;
    r.layout = layout;
    r.v = v;
    r.X.resize(N);
    r.Y.resize(N);
    r.gains.resize(N);
    r.global_gains.resize(N);
    r.tau_u_til.assign(N, nan);
    r.tau_til.assign(N, nan);
    r.theta_til.assign(N, nan);
    r.tau_u.assign(N, nan);
    r.tau.assign(N, nan);
    r.theta.assign(N, nan);
    r.beta_bar.assign(N, std::vector<double>(M, nan));
    r.beta_til.assign(N, std::vector<double>(M, nan));
    r.beta_u.assign(N, std::vector<double>(M, nan));
    for (int i = 0; i < N; ++i) {
        const auto& s = layout.sub[i];
        r.X[i].resize(M);
        r.Y[i].resize(M);
        r.global_gains[i].resize(M);
        for (int mu = 0; mu < M; ++mu) {
            r.X[i][mu] = get_sym(v, s.X[mu], s.n);
            r.Y[i][mu] = get_sym(v, s.Y[mu], s.n);
            const auto lb = lift(model, i + 1, mu + 1);
            if (s.m > 0)
                r.global_gains[i][mu] =
                    -model.weights.G[mu][i].inverse() * lb.B.transpose() * r.X[i][mu];
            else
                r.global_gains[i][mu] = Eigen::MatrixXd(0, s.n);
        }
        if (s.m > 0) {
            r.gains[i].resize(s.K.size());
            for (std::size_t sigma = 0; sigma < s.K.size(); ++sigma)
                r.gains[i][sigma] = get_full(v, s.K[sigma], s.m, s.n);
            r.tau_u_til[i] = v(s.tau_u_til);
            r.tau_u[i] = 1.0 / r.tau_u_til[i];
            for (int mu = 0; mu < M; ++mu) {
                r.beta_bar[i][mu] = v(s.beta_bar[mu]);
                r.beta_til[i][mu] = v(s.beta_til[mu]);
                r.beta_u[i][mu] = r.beta_til[i][mu] * r.tau_u_til[i];
            }
        } else {
            r.gains[i].assign(pattern.class_counts[i], Eigen::MatrixXd(0, s.n));
        }
        if (s.tau_til >= 0) {
            r.tau_til[i] = v(s.tau_til);
            r.tau[i] = 1.0 / r.tau_til[i];
        }
        if (s.theta_til >= 0) {
            r.theta_til[i] = v(s.theta_til);
            r.theta[i] = 1.0 / r.theta_til[i];
        }
    }
    r.gamma = v(layout.gamma);
    return r;
}

// Snap the exact algebraic couplings (Y = X^-1, reciprocal scalars), then
// keep the snapped point only if every cone constraint still checks out.
inline bool polish_solution(const RankLmiProblem& problem, Eigen::VectorXd& v,
                            double tolerance) {
    Eigen::VectorXd w = v;
    const auto& layout = problem.layout;
    for (const auto& s : layout.sub) {
        for (std::size_t mu = 0; mu < s.X.size(); ++mu) {
            const Eigen::MatrixXd X = get_sym(w, s.X[mu], s.n);
            Eigen::LDLT<Eigen::MatrixXd> ldlt(X);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
            Eigen::MatrixXd Xi = X.inverse();
            set_sym(w, s.Y[mu], s.n, 0.5 * (Xi + Xi.transpose()));
            if (s.beta_bar[mu] >= 0) w(s.beta_til[mu]) = 1.0 / w(s.beta_bar[mu]);
        }
        if (s.tau_til >= 0) w(s.tau_aux) = 1.0 / w(s.tau_til);
        if (s.theta_til >= 0) w(s.theta_aux) = 1.0 / w(s.theta_til);
    }
    auto res = constraint_residuals(problem, w);
    if (max_residual(res) <= tolerance) {
        v = w;
        return true;
    }
    return false;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Gain-distance certificate (independent of the solver's bookkeeping)
// ---------------------------------------------------------------------------

struct GainDistanceReport {
    struct Entry {
        int i, mu;
        double distance_sq; // |K_i(phi_i(mu)) - K~_i(mu)|^2, induced 2-norm
        double budget;      // beta^u_i(mu)
        double slack;       // budget - distance_sq
    };
    std::vector<Entry> entries;
    bool pass = true;
};

inline GainDistanceReport check_gain_distance(const SynthesisResult& result,
                                              const PlantModel& model,
                                              const InfoPattern& pattern) {
    GainDistanceReport report;
    const int M = model.atlas.M();
    for (int i = 0; i < model.N(); ++i) {
        if (model.subsystems[i].m() == 0) continue;
        for (int mu = 0; mu < M; ++mu) {
            const int sigma = pattern.phi[i][mu] - 1;
            const Eigen::MatrixXd diff = result.gains[i][sigma] - result.global_gains[i][mu];
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(diff);
            const double dist_sq = diff.size() == 0 ? 0.0 : std::pow(svd.singularValues()(0), 2);
            const double budget = result.beta_u[i][mu];
            report.entries.push_back({i + 1, mu + 1, dist_sq, budget, budget - dist_sq});
            if (!(dist_sq <= budget)) report.pass = false;
        }
    }
    return report;
}

// Direct evaluation of the guaranteed cost expression, independent of the
// solver's gamma slot.
inline double cost_bound(const SynthesisResult& result, const PlantModel& model,
                         bool use_stationary) {
    const Eigen::VectorXd pi = effective_distribution(model, use_stationary);
    const int M = model.atlas.M();
    double total = 0.0;
    for (int i = 0; i < model.N(); ++i) {
        const int n = model.subsystems[i].n();
        const Eigen::VectorXd x0i = model.x0.segment(model.state_offset(i + 1), n);
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
        for (int mu = 0; mu < M; ++mu) W += pi(mu) * result.X[i][mu];
        if (model.subsystems[i].g() > 0) W += result.tau[i] * model.budgets[i].S_bar;
        if (model.subsystems[i].s() > 0) W += result.theta[i] * model.budgets[i].S_tilde;
        total += (x0i.transpose() * W * x0i).value();
    }
    return total;
}

// ---------------------------------------------------------------------------
// End-to-end synthesis
// ---------------------------------------------------------------------------

inline SynthesisResult synthesize_neighboring(const PlantModel& model,
                                              const InfoPattern& pattern,
                                              const SolverConfig& cfg,
                                              const AssemblyOptions* assembly = nullptr,
                                              const Eigen::VectorXd* warm_start = nullptr,
                                              bool use_stationary = false) {
    validate_model(model);
    AssemblyOptions opts;
    if (assembly) opts = *assembly;
    opts.epsilon = cfg.epsilon;
    RankLmiProblem problem = assemble_theorem3(model, pattern, opts);
    assemble_cost_bound(model, problem, use_stationary);

    GammaOutcome g;
    try {
        g = minimize_gamma(problem, problem.layout.gamma, cfg, warm_start);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BracketInfeasible)
            throw Error(ErrorCode::SynthesisInfeasible, e.what());
        throw;
    }
    Eigen::VectorXd v = g.outcome.v;
    detail::polish_solution(problem, v, cfg.tolerance);

    SynthesisResult result = detail::unpack_solution(model, pattern, problem.layout, v);
    result.status = g.outcome.status;
    result.iterations = g.outcome.iterations;
    result.max_residual = max_residual(constraint_residuals(problem, v));

    const SchurReport schur = schur_check(problem.layout, v, model);
    const GainDistanceReport gains = check_gain_distance(result, model, pattern);
    if (!schur.pass || !gains.pass) {
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& e : schur.entries) worst = std::max(worst, e.max_eigenvalue);
        throw Error(ErrorCode::PostCheckFailed,
                    std::string("solver reported feasible but the certificates failed ") +
                        "(schur " + (schur.pass ? "pass" : "FAIL") + ", worst eigenvalue " +
                        std::to_string(worst) + "; gain-distance " +
                        (gains.pass ? "pass" : "FAIL") + ")");
    }
    return result;
}

// Global mode dependent design: the same machinery specialized to the
// all-ones pattern, optionally with externally supplied beta^u values.
inline SynthesisResult synthesize_global(
    const PlantModel& model, const SolverConfig& cfg,
    const std::optional<std::vector<std::vector<double>>>& beta_u_choice = std::nullopt,
    bool use_stationary = false) {
    const Eigen::MatrixXi all_ones = Eigen::MatrixXi::Ones(model.N(), model.N());
    const InfoPattern pattern = build_info_pattern(model.atlas, all_ones);
    AssemblyOptions opts;
    opts.pinned_beta_u = beta_u_choice;
    return synthesize_neighboring(model, pattern, cfg, &opts, nullptr, use_stationary);
}

// ---------------------------------------------------------------------------
// Solution lifting across information patterns
// ---------------------------------------------------------------------------

inline SynthesisResult lift_solution(const SynthesisResult& result, const PlantModel& model,
                                     const InfoPattern& pattern_from,
                                     const InfoPattern& pattern_to, const SolverConfig& cfg,
                                     bool use_stationary = false) {
    if (!refines(pattern_from, pattern_to))
        throw Error(ErrorCode::NotARefinement, "target pattern does not refine the source");
    AssemblyOptions opts;
    opts.epsilon = cfg.epsilon;
    RankLmiProblem problem = assemble_theorem3(model, pattern_to, opts);
    assemble_cost_bound(model, problem, use_stationary);
    const VariableLayout& to = problem.layout;
    const VariableLayout& from = result.layout;
    const int M = model.atlas.M();

    Eigen::VectorXd v = Eigen::VectorXd::Zero(to.size);
    for (int i = 0; i < model.N(); ++i) {
        const auto& sf = from.sub[i];
        const auto& st = to.sub[i];
        for (int mu = 0; mu < M; ++mu) {
            set_sym(v, st.X[mu], st.n, get_sym(result.v, sf.X[mu], sf.n));
            set_sym(v, st.Y[mu], st.n, get_sym(result.v, sf.Y[mu], sf.n));
            if (st.beta_bar[mu] >= 0) {
                v(st.beta_bar[mu]) = result.v(sf.beta_bar[mu]);
                v(st.beta_til[mu]) = result.v(sf.beta_til[mu]);
            }
            // duplicate the coarse gain onto every refined class
            if (st.m > 0) {
                const int sigma_from = pattern_from.phi[i][mu] - 1;
                const int sigma_to = pattern_to.phi[i][mu] - 1;
                set_full(v, st.K[sigma_to], st.m, st.n,
                         get_full(result.v, sf.K[sigma_from], sf.m, sf.n));
            }
        }
        if (st.tau_u_til >= 0) v(st.tau_u_til) = result.v(sf.tau_u_til);
        if (st.tau_til >= 0) {
            v(st.tau_til) = result.v(sf.tau_til);
            v(st.tau_aux) = result.v(sf.tau_aux);
        }
        if (st.theta_til >= 0) {
            v(st.theta_til) = result.v(sf.theta_til);
            v(st.theta_aux) = result.v(sf.theta_aux);
        }
    }
    v(to.gamma) = result.v(from.gamma);

    auto residuals = constraint_residuals(problem, v);
    const double mr = max_residual(residuals);
    if (mr > cfg.tolerance)
        throw Error(ErrorCode::LiftedInfeasible,
                    "lifted point violates the fine-pattern constraints (max residual " +
                        std::to_string(mr) + ")");
    SynthesisResult lifted = detail::unpack_solution(model, pattern_to, to, v);
    lifted.status = SolveStatus::Feasible;
    lifted.iterations = 0;
    lifted.max_residual = mr;
    return lifted;
}

} // namespace mjls
