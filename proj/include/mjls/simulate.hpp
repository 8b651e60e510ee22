#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mjls/errors.hpp"
#include "mjls/mode_atlas.hpp"
#include "mjls/model.hpp"
#include "mjls/synthesis.hpp"

namespace mjls {

// Piecewise-constant, right-continuous global-mode realization.
struct ModePath {
    std::vector<double> jump_times; // starts at 0, strictly increasing
    std::vector<int> modes;         // 1-based, same length as jump_times
    double horizon = 0.0;

    int mode_at(double t) const {
        int k = 0;
        while (k + 1 < static_cast<int>(jump_times.size()) && jump_times[k + 1] <= t) ++k;
        return modes[k];
    }
};

inline ModePath sample_mode_path(const ModeAtlas& atlas, const Eigen::VectorXd& pi0, double T,
                                 std::uint64_t seed) {
    const int M = atlas.M();
    if (pi0.size() != M || pi0.minCoeff() < 0.0 || std::abs(pi0.sum() - 1.0) > 1e-12)
        throw Error(ErrorCode::BadDistribution, "initial distribution is not a distribution");
    if (!(T > 0.0)) throw Error(ErrorCode::BadTimeStep, "horizon must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto sample_discrete = [&](const Eigen::VectorXd& p) {
        double u = unif(rng), acc = 0.0;
        for (int k = 0; k < p.size(); ++k) {
            acc += p(k);
            if (u <= acc) return k;
        }
        return static_cast<int>(p.size()) - 1;
    };

    ModePath path;
    path.horizon = T;
    int mu = sample_discrete(pi0);
    double t = 0.0;
    path.jump_times.push_back(0.0);
    path.modes.push_back(mu + 1);
    while (t < T) {
        const double rate = -atlas.generator(mu, mu);
        if (rate <= 0.0) break; // absorbing mode, held to T
        std::exponential_distribution<double> hold(rate);
        t += hold(rng);
        if (t >= T) break;
        Eigen::VectorXd p = atlas.generator.row(mu).transpose() / rate;
        p(mu) = 0.0;
        mu = sample_discrete(p);
        path.jump_times.push_back(t);
        path.modes.push_back(mu + 1);
    }
    return path;
}

// ---------------------------------------------------------------------------
// Uncertainty realizations: static contractions inside the admissible class
// ---------------------------------------------------------------------------

enum class UncertaintyKind { None, StaticContraction, SectorGain };

struct UncertaintyRealization {
    UncertaintyKind kind = UncertaintyKind::None;
    std::vector<Eigen::MatrixXd> local;          // Delta_i: g_i x h_i, |.| <= 1
    std::vector<Eigen::MatrixXd> interconnection; // Delta~_i: s_i x sum_{j!=i} h_j
    std::uint64_t seed = 0;
};

namespace detail {
inline Eigen::MatrixXd sample_contraction(int rows, int cols, std::mt19937_64& rng) {
    if (rows == 0 || cols == 0) return Eigen::MatrixXd(rows, cols);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd G(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) G(r, c) = gauss(rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
    const double smax = svd.singularValues()(0);
    const double radius = std::pow(unif(rng), 1.0 / (rows * cols));
    return smax > 0.0 ? Eigen::MatrixXd(G * (radius / smax)) : G;
}
} // namespace detail

inline UncertaintyRealization sample_uncertainty(const PlantModel& model, UncertaintyKind kind,
                                                 std::uint64_t seed) {
    UncertaintyRealization u;
    u.kind = kind;
    u.seed = seed;
    const int N = model.N();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> sector(-1.0, 1.0);
    for (int i = 0; i < N; ++i) {
        const auto& sd = model.subsystems[i];
        int h_others = 0;
        for (int j = 0; j < N; ++j)
            if (j != i) h_others += model.subsystems[j].h();
        switch (kind) {
            case UncertaintyKind::None:
                u.local.push_back(Eigen::MatrixXd::Zero(sd.g(), sd.h()));
                u.interconnection.push_back(Eigen::MatrixXd::Zero(sd.s(), h_others));
                break;
            case UncertaintyKind::StaticContraction:
                u.local.push_back(detail::sample_contraction(sd.g(), sd.h(), rng));
                u.interconnection.push_back(detail::sample_contraction(sd.s(), h_others, rng));
                break;
            case UncertaintyKind::SectorGain: {
                // memoryless diagonal gains in [-1, 1]
                Eigen::MatrixXd D = Eigen::MatrixXd::Zero(sd.g(), sd.h());
                for (int k = 0; k < std::min(sd.g(), sd.h()); ++k) D(k, k) = sector(rng);
                u.local.push_back(D);
                Eigen::MatrixXd Di = Eigen::MatrixXd::Zero(sd.s(), h_others);
                for (int k = 0; k < std::min(sd.s(), h_others); ++k) Di(k, k) = sector(rng);
                u.interconnection.push_back(Di);
                break;
            }
        }
        // certify the contraction property at construction
        for (const Eigen::MatrixXd* D : {&u.local.back(), &u.interconnection.back()}) {
            if (D->size() == 0) continue;
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(*D);
            if (svd.singularValues()(0) > 1.0 + 1e-12)
                throw Error(ErrorCode::NotSymmetric, "sampled operator exceeds the unit ball");
        }
    }
    return u;
}

// ---------------------------------------------------------------------------
// Closed-loop integration
// ---------------------------------------------------------------------------

struct Trajectory {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;            // stacked x
    std::vector<std::vector<Eigen::VectorXd>> u;    // [step][i]
    std::vector<std::vector<Eigen::VectorXd>> zeta; // [step][i]
    std::vector<std::vector<Eigen::VectorXd>> xi;   // [step][i]
    std::vector<std::vector<Eigen::VectorXd>> r;    // [step][i]
    std::vector<int> mode;                          // global mode per step
};

namespace detail {

// Closed-loop matrix for a frozen global mode: x_dot = A_cl x with the
// static uncertainty operators folded in.
inline Eigen::MatrixXd closed_loop_matrix(const PlantModel& model,
                                          const std::vector<std::vector<Eigen::MatrixXd>>& gains,
                                          const InfoPattern& pattern,
                                          const UncertaintyRealization& unc, int mu) {
    const int N = model.N();
    const int n_total = model.total_state_dim();
    Eigen::MatrixXd Acl = Eigen::MatrixXd::Zero(n_total, n_total);
    // zeta = H_blk x with H per subsystem
    std::vector<Eigen::MatrixXd> H(N);
    std::vector<int> off(N);
    for (int i = 0; i < N; ++i) {
        off[i] = model.state_offset(i + 1);
        H[i] = lift(model, i + 1, mu).H;
    }
    for (int i = 0; i < N; ++i) {
        const auto lb = lift(model, i + 1, mu);
        const int n = model.subsystems[i].n();
        Acl.block(off[i], off[i], n, n) += lb.A;
        if (model.subsystems[i].m() > 0) {
            const int sigma = pattern.phi[i][mu - 1] - 1;
            Acl.block(off[i], off[i], n, n) += lb.B * gains[i][sigma];
        }
        if (model.subsystems[i].g() > 0 && model.subsystems[i].h() > 0)
            Acl.block(off[i], off[i], n, n) += lb.E * unc.local[i] * H[i];
        if (model.subsystems[i].s() > 0) {
            int c = 0;
            for (int j = 0; j < N; ++j) {
                if (j == i) continue;
                const int hj = model.subsystems[j].h();
                if (hj > 0)
                    Acl.block(off[i], off[j], n, model.subsystems[j].n()) +=
                        lb.L * unc.interconnection[i].middleCols(c, hj) * H[j];
                c += hj;
            }
        }
    }
    return Acl;
}

} // namespace detail

inline Trajectory integrate_closed_loop(const PlantModel& model,
                                        const std::vector<std::vector<Eigen::MatrixXd>>& gains,
                                        const InfoPattern& pattern, const ModePath& path,
                                        const UncertaintyRealization& unc, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorCode::BadTimeStep, "dt must be positive");
    const int N = model.N();
    const double T = path.horizon;
    constexpr double overflow_guard = 1e12;

    // grid: multiples of dt with jump times spliced in, so every jump is a
    // grid point and each step runs under a single frozen mode
    std::vector<double> grid;
    {
        std::size_t jump = 1;
        double t = 0.0;
        grid.push_back(0.0);
        while (t < T - 1e-15) {
            double t_next = std::min(t + dt, T);
            if (jump < path.jump_times.size() && path.jump_times[jump] < t_next - 1e-15)
                t_next = path.jump_times[jump];
            if (jump < path.jump_times.size() &&
                std::abs(path.jump_times[jump] - t_next) <= 1e-15)
                ++jump;
            grid.push_back(t_next);
            t = t_next;
        }
    }

    Trajectory traj;
    traj.times = grid;
    traj.states.reserve(grid.size());
    Eigen::VectorXd x = model.x0;

    int mu = path.mode_at(0.0);
    Eigen::MatrixXd Acl = detail::closed_loop_matrix(model, gains, pattern, unc, mu);

    auto record = [&](double t, const Eigen::VectorXd& xv, int mode) {
        traj.states.push_back(xv);
        traj.mode.push_back(mode);
        std::vector<Eigen::VectorXd> ui(N), zi(N), xii(N), ri(N);
        std::vector<Eigen::MatrixXd> Hs(N);
        for (int i = 0; i < N; ++i) {
            const auto lb = lift(model, i + 1, mode);
            const int n = model.subsystems[i].n();
            const Eigen::VectorXd xloc = xv.segment(model.state_offset(i + 1), n);
            zi[i] = lb.H * xloc;
            if (model.subsystems[i].m() > 0) {
                const int sigma = pattern.phi[i][mode - 1] - 1;
                ui[i] = gains[i][sigma] * xloc;
            } else {
                ui[i] = Eigen::VectorXd(0);
            }
            xii[i] = model.subsystems[i].g() > 0 ? Eigen::VectorXd(unc.local[i] * zi[i])
                                                 : Eigen::VectorXd(0);
        }
        for (int i = 0; i < N; ++i) {
            if (model.subsystems[i].s() > 0) {
                int h_others = 0;
                for (int j = 0; j < N; ++j)
                    if (j != i) h_others += model.subsystems[j].h();
                Eigen::VectorXd stacked(h_others);
                int c = 0;
                for (int j = 0; j < N; ++j) {
                    if (j == i) continue;
                    stacked.segment(c, zi[j].size()) = zi[j];
                    c += static_cast<int>(zi[j].size());
                }
                ri[i] = unc.interconnection[i] * stacked;
            } else {
                ri[i] = Eigen::VectorXd(0);
            }
        }
        traj.u.push_back(std::move(ui));
        traj.zeta.push_back(std::move(zi));
        traj.xi.push_back(std::move(xii));
        traj.r.push_back(std::move(ri));
        (void)t;
    };

    record(0.0, x, mu);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double h = grid[k + 1] - grid[k];
        const int mode_now = path.mode_at(grid[k]);
        if (mode_now != mu) {
            mu = mode_now;
            Acl = detail::closed_loop_matrix(model, gains, pattern, unc, mu);
        }
        // classical RK4 on the frozen linear dynamics
        const Eigen::VectorXd k1 = Acl * x;
        const Eigen::VectorXd k2 = Acl * (x + 0.5 * h * k1);
        const Eigen::VectorXd k3 = Acl * (x + 0.5 * h * k2);
        const Eigen::VectorXd k4 = Acl * (x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite() || x.norm() > overflow_guard)
            throw Error(ErrorCode::Divergence, "state norm exceeded the overflow guard");
        const int mode_next = path.mode_at(grid[k + 1]);
        record(grid[k + 1], x, mode_next);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// IQC residuals
// ---------------------------------------------------------------------------

struct IqcReport {
    struct Entry {
        int i;
        double horizon;
        double local_residual; // int(|zeta_i|^2 - |xi_i|^2) + x0_i^T S_bar x0_i
        double ic_residual;    // int(sum_{j!=i}|zeta_j|^2 - |r_i|^2) + x0_i^T S_til x0_i
    };
    std::vector<Entry> entries;
    double min_residual = std::numeric_limits<double>::infinity();
    bool pass = true;
};

inline IqcReport iqc_check(const Trajectory& traj, const PlantModel& model,
                           const std::vector<double>& horizons) {
    if (traj.zeta.empty() || traj.zeta.size() != traj.times.size())
        throw Error(ErrorCode::MissingSignals, "trajectory lacks recorded signals");
    const int N = model.N();
    IqcReport report;
    const double slack = 1e-8 * (1.0 + model.x0.squaredNorm());

    // cumulative trapezoidal integrals of the squared signal norms
    const std::size_t S = traj.times.size();
    std::vector<std::vector<double>> cz(N, std::vector<double>(S, 0.0));
    std::vector<std::vector<double>> cxi(N, std::vector<double>(S, 0.0));
    std::vector<std::vector<double>> cr(N, std::vector<double>(S, 0.0));
    for (int i = 0; i < N; ++i)
        for (std::size_t k = 1; k < S; ++k) {
            const double h = traj.times[k] - traj.times[k - 1];
            cz[i][k] = cz[i][k - 1] +
                       0.5 * h * (traj.zeta[k][i].squaredNorm() + traj.zeta[k - 1][i].squaredNorm());
            cxi[i][k] = cxi[i][k - 1] +
                        0.5 * h * (traj.xi[k][i].squaredNorm() + traj.xi[k - 1][i].squaredNorm());
            cr[i][k] = cr[i][k - 1] +
                       0.5 * h * (traj.r[k][i].squaredNorm() + traj.r[k - 1][i].squaredNorm());
        }

    for (double tl : horizons) {
        std::size_t k = 0;
        while (k + 1 < S && traj.times[k + 1] <= tl) ++k;
        for (int i = 0; i < N; ++i) {
            const int n = model.subsystems[i].n();
            const Eigen::VectorXd x0i = model.x0.segment(model.state_offset(i + 1), n);
            const double off_local = (x0i.transpose() * model.budgets[i].S_bar * x0i).value();
            const double off_ic = (x0i.transpose() * model.budgets[i].S_tilde * x0i).value();
            double sum_others = 0.0;
            for (int j = 0; j < N; ++j)
                if (j != i) sum_others += cz[j][k];
            IqcReport::Entry e;
            e.i = i + 1;
            e.horizon = traj.times[k];
            e.local_residual = cz[i][k] - cxi[i][k] + off_local;
            e.ic_residual = sum_others - cr[i][k] + off_ic;
            report.min_residual =
                std::min({report.min_residual, e.local_residual, e.ic_residual});
            if (e.local_residual < -slack || e.ic_residual < -slack) report.pass = false;
            report.entries.push_back(e);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Monte Carlo verification
// ---------------------------------------------------------------------------

struct MonteCarloReport {
    int paths = 0;
    double horizon = 0.0;
    std::vector<double> truncated_cost; // per path, int sum |x_i|^2
    std::vector<double> weighted_cost;  // per path, int sum x^T R x + u^T G u
    std::vector<double> min_iqc_residual;
    std::vector<std::uint64_t> seeds;
    std::vector<bool> diverged;
    double mean_cost = 0.0, standard_error = 0.0;
    double mean_weighted = 0.0, weighted_standard_error = 0.0;
    double lambda_hat = 0.0;  // mean_cost / |x0|^2
    double tail_fraction = 0.0; // share of state cost accrued over [T/2, T]
    bool iqc_pass = true;
    int divergence_count = 0;
};

inline MonteCarloReport monte_carlo(const PlantModel& model, const SynthesisResult& result,
                                    const InfoPattern& pattern, int paths, double T, double dt,
                                    std::uint64_t master_seed, UncertaintyKind kind) {
    if (paths <= 0) throw Error(ErrorCode::BadDistribution, "path count must be positive");
    MonteCarloReport report;
    report.paths = paths;
    report.horizon = T;
    const Eigen::VectorXd pi0 = effective_distribution(model, false);

    std::vector<double> horizons;
    for (int k = 0; k < 10; ++k)
        horizons.push_back(T * std::pow(10.0, -3.0 * (9 - k) / 9.0)); // log-spaced up to T

    double tail_total = 0.0, cost_total = 0.0;
    for (int p = 0; p < paths; ++p) {
        const std::uint64_t seed = master_seed + 0x9E3779B97F4A7C15ull * (p + 1);
        report.seeds.push_back(seed);
        try {
            const ModePath path = sample_mode_path(model.atlas, pi0, T, seed);
            const UncertaintyRealization unc = sample_uncertainty(model, kind, seed ^ 0x5bull);
            const Trajectory traj = integrate_closed_loop(model, result.gains, pattern, path,
                                                          unc, dt);
            double cost = 0.0, wcost = 0.0, tail = 0.0;
            for (std::size_t k = 1; k < traj.times.size(); ++k) {
                const double h = traj.times[k] - traj.times[k - 1];
                const double f = 0.5 * h *
                                 (traj.states[k].squaredNorm() + traj.states[k - 1].squaredNorm());
                cost += f;
                if (traj.times[k] > 0.5 * T) tail += f;
                double w0 = 0.0, w1 = 0.0;
                for (int i = 0; i < model.N(); ++i) {
                    const int n = model.subsystems[i].n();
                    const int o = model.state_offset(i + 1);
                    for (std::size_t kk : {k - 1, k}) {
                        const int mu = traj.mode[kk] - 1;
                        const Eigen::VectorXd xl = traj.states[kk].segment(o, n);
                        double term = (xl.transpose() * model.weights.R[mu][i] * xl).value();
                        if (model.subsystems[i].m() > 0)
                            term += (traj.u[kk][i].transpose() * model.weights.G[mu][i] *
                                     traj.u[kk][i])
                                        .value();
                        (kk == k - 1 ? w0 : w1) += term;
                    }
                }
                wcost += 0.5 * h * (w0 + w1);
            }
            const IqcReport iqc = iqc_check(traj, model, horizons);
            report.truncated_cost.push_back(cost);
            report.weighted_cost.push_back(wcost);
            report.min_iqc_residual.push_back(iqc.min_residual);
            report.diverged.push_back(false);
            if (!iqc.pass) report.iqc_pass = false;
            cost_total += cost;
            tail_total += tail;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Divergence) throw;
            report.truncated_cost.push_back(std::numeric_limits<double>::infinity());
            report.weighted_cost.push_back(std::numeric_limits<double>::infinity());
            report.min_iqc_residual.push_back(std::numeric_limits<double>::quiet_NaN());
            report.diverged.push_back(true);
            ++report.divergence_count;
        }
    }

    // aggregate over the non-diverged paths, in path-index order
    int n_ok = 0;
    double s1 = 0.0, s2 = 0.0, w1s = 0.0, w2s = 0.0;
    for (int p = 0; p < paths; ++p) {
        if (report.diverged[p]) continue;
        ++n_ok;
        s1 += report.truncated_cost[p];
        s2 += report.truncated_cost[p] * report.truncated_cost[p];
        w1s += report.weighted_cost[p];
        w2s += report.weighted_cost[p] * report.weighted_cost[p];
    }
    if (n_ok > 0) {
        report.mean_cost = s1 / n_ok;
        report.mean_weighted = w1s / n_ok;
        if (n_ok > 1) {
            report.standard_error =
                std::sqrt(std::max(0.0, (s2 / n_ok - report.mean_cost * report.mean_cost) /
                                            (n_ok - 1)));
            report.weighted_standard_error = std::sqrt(
                std::max(0.0, (w2s / n_ok - report.mean_weighted * report.mean_weighted) /
                                  (n_ok - 1)));
        }
        const double x0sq = model.x0.squaredNorm();
        report.lambda_hat = x0sq > 0.0 ? report.mean_cost / x0sq : 0.0;
        report.tail_fraction = cost_total > 0.0 ? tail_total / cost_total : 0.0;
    }
    return report;
}

} // namespace mjls
