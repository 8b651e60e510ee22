// End-to-end acceptance checks over the committed reference data.  Each
// criterion prints exactly one PASS/FAIL line; the process exits nonzero if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mjls/cli.hpp"
#include "mjls/io.hpp"
#include "mjls/simulate.hpp"
#include "mjls/synthesis.hpp"

using namespace mjls;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int k, const std::string& what, bool ok, const std::string& detail) {
    std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", k, what.c_str(),
                detail.c_str());
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// independent recomputation of the class labels: group global modes by the
// masked mode vector, labels in order of first appearance
std::vector<std::vector<int>> phi_oracle(const ModeAtlas& atlas, const Eigen::MatrixXi& C) {
    const int N = atlas.N, M = atlas.M();
    std::vector<std::vector<int>> phi(N, std::vector<int>(M));
    for (int i = 0; i < N; ++i) {
        std::map<std::vector<int>, int> seen;
        for (int mu = 0; mu < M; ++mu) {
            std::vector<int> key;
            for (int j = 0; j < N; ++j)
                if (C(i, j) == 1) key.push_back(atlas.mode_vectors[mu][j]);
            auto [it, inserted] = seen.emplace(key, static_cast<int>(seen.size()) + 1);
            phi[i][mu] = it->second;
        }
    }
    return phi;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <data-dir>\n", argv[0]);
        return 2;
    }
    const std::string data = argv[1];

    const PlantModel model = load_model_file(data + "/desk_model.json");
    const std::vector<std::string> names = {"c1", "c2", "c3", "c4", "c5"};
    std::vector<InfoPattern> patterns;
    for (const auto& n : names)
        patterns.push_back(load_pattern_file(data + "/patterns/" + n + ".json", model.atlas));

    SolverConfig cfg;
    cfg.gamma_hi = 50.0;
    cfg.seed = 3;

    // --- 1: class tables match an independent grouping, and fast -----------
    {
        const auto t0 = Clock::now();
        bool ok = true;
        for (const auto& p : patterns) ok = ok && phi_oracle(model.atlas, p.C) == p.phi;
        const double ms = 1e3 * seconds_since(t0);
        ok = ok && ms < 1.0;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "5 patterns in %.3f ms", ms);
        report(1, "mode-information class tables are exact", ok, buf);
    }

    // --- 2: twenty independent feasibility solves, all certified -----------
    {
        const auto t0 = Clock::now();
        AssemblyOptions opts;
        opts.epsilon = cfg.epsilon;
        RankLmiProblem problem = assemble_theorem3(model, patterns[0], opts);
        assemble_cost_bound(model, problem, true);
        problem.upper(problem.layout.gamma) = 50.0;
        int certified = 0;
        for (int k = 0; k < 20; ++k) {
            SolverConfig c = cfg;
            c.seed = 100 + k;
            SolveOutcome out = solve_feasibility(problem, c);
            if (out.status == SolveStatus::Feasible &&
                schur_check(problem.layout, out.v, model).pass)
                ++certified;
        }
        const double s = seconds_since(t0);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%d/20 certified in %.2f s", certified, s);
        report(2, "independent solver runs pass the closed-loop certificate",
               certified == 20 && s < 10.0, buf);
    }

    // --- 3: polished inverse couplings are numerically tight ---------------
    SynthesisResult base;
    {
        base = synthesize_neighboring(model, patterns[0], cfg, nullptr, nullptr, true);
        double worst_xy = 0.0, worst_beta = 0.0;
        for (int i = 0; i < model.N(); ++i)
            for (int mu = 0; mu < model.atlas.M(); ++mu) {
                const int n = model.subsystems[i].n();
                worst_xy = std::max(worst_xy, (base.X[i][mu] * base.Y[i][mu] -
                                               Eigen::MatrixXd::Identity(n, n))
                                                  .norm());
                worst_beta = std::max(
                    worst_beta, std::abs(base.beta_bar[i][mu] * base.beta_til[i][mu] - 1.0));
            }
        char buf[96];
        std::snprintf(buf, sizeof(buf), "|XY-I| <= %.2e, |bb~-1| <= %.2e", worst_xy, worst_beta);
        report(3, "rank couplings recover exact inverses", worst_xy <= 1e-6 && worst_beta <= 1e-6,
               buf);
    }

    // --- 4: solutions lift along every refinement of the base pattern ------
    {
        const auto t0 = Clock::now();
        bool ok = base.status == SolveStatus::Feasible;
        int lifted_count = 0;
        for (std::size_t k = 1; k < patterns.size(); ++k) {
            if (!refines(patterns[0], patterns[k])) continue;
            try {
                SynthesisResult lifted =
                    lift_solution(base, model, patterns[0], patterns[k], cfg, true);
                ok = ok && lifted.max_residual <= cfg.tolerance &&
                     schur_check(lifted.layout, lifted.v, model).pass &&
                     check_gain_distance(lifted, model, patterns[k]).pass &&
                     std::abs(lifted.gamma - base.gamma) <= 1e-12;
                ++lifted_count;
            } catch (const Error&) {
                ok = false;
            }
        }
        const double s = seconds_since(t0);
        ok = ok && lifted_count == 4 && s < 30.0;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%d/4 lifts verified in %.2f s", lifted_count, s);
        report(4, "coarse solutions remain feasible under every finer pattern", ok, buf);
    }

    // --- 5: full sweep is monotone and consistent ---------------------------
    {
        const auto t0 = Clock::now();
        const auto rows = cli::run_sweep(model, names, patterns, cfg, true);
        bool ok = rows.size() == 5;
        for (const auto& r : rows) ok = ok && r.feasible && std::isfinite(r.gamma);
        // finer information never costs more (1% numerical slack)
        for (std::size_t k = 0; ok && k + 1 < rows.size(); ++k)
            ok = ok && rows[k + 1].gamma <= rows[k].gamma * 1.01;
        // the injective pattern is equivalent to full mode knowledge
        ok = ok && std::abs(rows[3].gamma - rows[4].gamma) <= 1e-6;
        const double s = seconds_since(t0);
        ok = ok && s < 300.0;
        std::string detail = "gammas";
        for (const auto& r : rows) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), " %.4f", r.gamma);
            detail += buf;
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), ", %.1f s", s);
        detail += buf;
        report(5, "pattern sweep is monotone under refinement", ok, detail);
    }

    // --- 6: Monte Carlo behaves, and destabilized gains visibly fail -------
    MonteCarloReport mc;
    {
        const auto t0 = Clock::now();
        mc = monte_carlo(model, base, patterns[0], 200, 50.0, 1e-3, 42,
                         UncertaintyKind::StaticContraction);
        bool ok = mc.divergence_count == 0 && std::isfinite(mc.lambda_hat) &&
                  mc.lambda_hat > 0.0 && mc.tail_fraction <= 0.05 && mc.iqc_pass;

        SynthesisResult negated = base;
        for (auto& per : negated.gains)
            for (auto& K : per) K = -K;
        MonteCarloReport bad = monte_carlo(model, negated, patterns[0], 20, 50.0, 1e-3, 42,
                                           UncertaintyKind::StaticContraction);
        const bool visibly_bad =
            bad.divergence_count > 0 || bad.mean_cost >= 10.0 * mc.mean_cost;
        const double s = seconds_since(t0);
        ok = ok && visibly_bad && s < 120.0;
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "lambda %.3f, tail %.4f, negated divergences %d/20, %.1f s", mc.lambda_hat,
                      mc.tail_fraction, bad.divergence_count, s);
        report(6, "closed-loop sampling decays and rejects negated gains", ok, buf);
    }

    // --- 7: the analytic bound dominates the sampled cost ------------------
    {
        const double bound = cost_bound(base, model, true);
        // allowance for truncating the infinite-horizon integral at T
        const double truncation = 1e-3 * bound;
        const bool ok =
            mc.mean_weighted <= bound + 3.0 * mc.weighted_standard_error + truncation;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "sampled %.4f + 3se %.4f vs bound %.4f",
                      mc.mean_weighted, 3.0 * mc.weighted_standard_error, bound);
        report(7, "guaranteed cost bound covers the Monte Carlo estimate", ok, buf);
    }

    // --- 8: the integrator is exact to tolerance and fourth order ----------
    {
        PlantModel sys;
        sys.atlas = build_atlas({1}, {{1}}, Eigen::MatrixXd::Zero(1, 1));
        SubsystemData sd;
        sd.A.push_back(Eigen::MatrixXd::Constant(1, 1, -2.0));
        sd.B.push_back(Eigen::MatrixXd(1, 0));
        sd.E.push_back(Eigen::MatrixXd(1, 0));
        sd.L.push_back(Eigen::MatrixXd(1, 0));
        sd.H.push_back(Eigen::MatrixXd(0, 1));
        sys.subsystems.push_back(sd);
        sys.budgets.push_back({Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)});
        sys.weights.R.push_back({Eigen::MatrixXd::Identity(1, 1)});
        sys.weights.G.push_back({Eigen::MatrixXd(0, 0)});
        sys.x0 = Eigen::VectorXd::Ones(1);
        sys.initial_distribution = Eigen::VectorXd::Ones(1);
        const InfoPattern p = build_info_pattern(sys.atlas, Eigen::MatrixXi::Ones(1, 1));
        ModePath path;
        path.jump_times = {0.0};
        path.modes = {1};
        path.horizon = 1.0;
        const UncertaintyRealization unc = sample_uncertainty(sys, UncertaintyKind::None, 0);
        std::vector<std::vector<Eigen::MatrixXd>> gains = {{Eigen::MatrixXd(0, 1)}};
        auto err_at = [&](double dt) {
            Trajectory t = integrate_closed_loop(sys, gains, p, path, unc, dt);
            return std::abs(t.states.back()(0) - std::exp(-2.0));
        };
        const double fine = err_at(1e-3);
        const double ratio = err_at(0.05) / err_at(0.025);
        const bool ok = fine <= 1e-6 && ratio >= 12.0 && ratio <= 20.0;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "error %.2e at dt=1e-3, halving ratio %.2f", fine, ratio);
        report(8, "closed-loop integration is accurate at fourth order", ok, buf);
    }

    // --- 9: stationary distributions agree with a direct linear solve ------
    {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> unif(0.05, 2.0);
        bool ok = true;
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int M = 5;
            Eigen::MatrixXd Q(M, M);
            for (int r = 0; r < M; ++r) {
                double sum = 0.0;
                for (int c = 0; c < M; ++c)
                    if (c != r) {
                        Q(r, c) = unif(rng);
                        sum += Q(r, c);
                    }
                Q(r, r) = -sum;
            }
            std::vector<std::vector<int>> vecs;
            for (int k = 1; k <= M; ++k) vecs.push_back({k});
            ModeAtlas atlas = build_atlas({M}, vecs, Q);
            Eigen::MatrixXd A(M + 1, M);
            A.topRows(M) = Q.transpose();
            A.bottomRows(1).setOnes();
            Eigen::VectorXd b = Eigen::VectorXd::Zero(M + 1);
            b(M) = 1.0;
            const Eigen::VectorXd oracle = (A.transpose() * A).ldlt().solve(A.transpose() * b);
            const Eigen::VectorXd pi = stationary_distribution(atlas);
            const double res = (Q.transpose() * pi).norm();
            worst = std::max({worst, res, (pi - oracle).norm()});
            ok = ok && res <= 1e-10 && (pi - oracle).norm() <= 1e-9;
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "worst deviation %.2e over 100 chains", worst);
        report(9, "stationary distributions solve the balance equations", ok, buf);
    }

    // --- 10: the rank solver is sound and reproducible ----------------------
    {
        const double inf = std::numeric_limits<double>::infinity();
        RankLmiProblem p;
        p.num_vars = 2;
        p.lower = Eigen::VectorXd::Constant(2, -inf);
        p.upper = Eigen::VectorXd::Constant(2, inf);
        p.initial = Eigen::VectorXd::Constant(2, 2.0);
        auto bound_block = [](const std::string& name, int var, double constant, double w) {
            AffineBlock B = blockops::make_block(name, 1, Sense::PosSemidef);
            B.constant = Eigen::MatrixXd::Constant(1, 1, constant);
            B.coefs.push_back({var, 0, 0, w});
            return B;
        };
        p.cone_blocks.push_back(bound_block("lo", 0, -1.0, 1.0));
        p.cone_blocks.push_back(bound_block("hi", 0, 3.0, -1.0));
        RankConstraint rc;
        rc.block = blockops::make_block("inv", 2, Sense::PosSemidef);
        rc.block.constant << 0, 1, 1, 0;
        rc.block.coefs.push_back({0, 0, 0, 1.0});
        rc.block.coefs.push_back({1, 1, 1, 1.0});
        rc.max_rank = 1;
        p.rank_blocks.push_back(rc);

        SolverConfig sc;
        sc.seed = 17;
        const SolveOutcome a = solve_feasibility(p, sc);
        const SolveOutcome b = solve_feasibility(p, sc);
        const bool curve = a.status == SolveStatus::Feasible && a.v(0) >= 1.0 - 1e-5 &&
                           a.v(0) <= 3.0 + 1e-5 && std::abs(a.v(0) * a.v(1) - 1.0) <= 1e-6;
        const bool replay = a.status == b.status && (a.v - b.v).norm() == 0.0;

        RankLmiProblem q;
        q.num_vars = 1;
        q.lower = Eigen::VectorXd::Constant(1, -inf);
        q.upper = Eigen::VectorXd::Constant(1, inf);
        q.initial = Eigen::VectorXd::Zero(1);
        q.cone_blocks.push_back(bound_block("pos", 0, -1.0, 1.0));
        q.cone_blocks.push_back(bound_block("neg", 0, -1.0, -1.0));
        SolverConfig qc;
        qc.max_iterations = 500;
        const bool honest = solve_feasibility(q, qc).status != SolveStatus::Feasible;

        char buf[96];
        std::snprintf(buf, sizeof(buf), "ab-1 = %.2e, replay %s, infeasible rejected %s",
                      a.v(0) * a.v(1) - 1.0, replay ? "exact" : "DIFFERS",
                      honest ? "yes" : "NO");
        report(10, "rank-constrained solving is sound and deterministic",
               curve && replay && honest, buf);
    }

    return failures == 0 ? 0 : 1;
}
