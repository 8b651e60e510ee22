#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mjls/errors.hpp"
#include "mjls/lmi.hpp"

namespace mjls {

struct SolverConfig {
    int max_iterations = 4000;
    double tolerance = 1e-6;        // final residual norm per constraint
    double displacement_tol = 1e-9; // iteration stopping displacement
    int restarts = 5;
    std::uint64_t seed = 0;
    double epsilon = 1e-4; // strictness margin used at assembly time
    double gamma_lo = 0.0;
    double gamma_hi = 1e6;
    double bisection_tol = 1e-3;
    bool verbose = false;
};

enum class SolveStatus { Feasible, Infeasible, MaxIterations };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Feasible: return "Feasible";
        case SolveStatus::Infeasible: return "Infeasible";
        case SolveStatus::MaxIterations: return "MaxIterations";
    }
    return "Unknown";
}

struct SolveOutcome {
    SolveStatus status = SolveStatus::Infeasible;
    Eigen::VectorXd v;
    std::vector<std::pair<std::string, double>> residuals; // per constraint, from scratch
    double max_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

// ---------------------------------------------------------------------------
// Projection kernels
// ---------------------------------------------------------------------------

namespace detail {
inline void require_symmetric(const Eigen::MatrixXd& S) {
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw Error(ErrorCode::NotSymmetric, "matrix is not symmetric");
}
} // namespace detail

// Nearest PSD matrix in Frobenius norm: clamp negative eigenvalues.
inline Eigen::MatrixXd project_psd(const Eigen::MatrixXd& S) {
    detail::require_symmetric(S);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// Nearest symmetric matrix of rank <= r: keep the r eigenvalues of largest
// magnitude, ties broken by ascending eigen-index.
inline Eigen::MatrixXd project_rank(const Eigen::MatrixXd& S, int r) {
    detail::require_symmetric(S);
    const int n = static_cast<int>(S.rows());
    if (r < 0 || r > n) throw Error(ErrorCode::RankOutOfRange, "rank bound out of range");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
    });
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < r; ++k) d(order[k]) = es.eigenvalues()(order[k]);
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Affine-consistency projection
// ---------------------------------------------------------------------------

// Least-squares projection onto {(v, blocks) : block_j = F_j(v)} in the
// product space of the variable vector and all block matrices.
class AffineProjector {
  public:
    explicit AffineProjector(const RankLmiProblem& problem) {
        n_ = problem.num_vars;
        int rows = 0;
        for (const auto& b : problem.cone_blocks) rows += b.dim * b.dim;
        for (const auto& b : problem.rank_blocks) rows += b.block.dim * b.block.dim;
        rows_ = rows;
        f0_.resize(rows);
        std::vector<Eigen::Triplet<double>> trips;
        int off = 0;
        auto add_block = [&](const AffineBlock& b) {
            for (int r = 0; r < b.dim; ++r)
                for (int c = 0; c < b.dim; ++c) f0_(off + r * b.dim + c) = b.constant(r, c);
            for (const auto& cf : b.coefs)
                trips.emplace_back(off + cf.r * b.dim + cf.c, cf.var, cf.w);
            off += b.dim * b.dim;
        };
        for (const auto& b : problem.cone_blocks) add_block(b);
        for (const auto& b : problem.rank_blocks) add_block(b.block);
        A_.resize(rows, n_);
        A_.setFromTriplets(trips.begin(), trips.end());
        Eigen::MatrixXd normal = Eigen::MatrixXd(A_.transpose() * A_);
        normal.diagonal().array() += 1.0;
        llt_.compute(normal);
        for (int k = 0; k < n_; ++k)
            if (Eigen::VectorXd(A_.col(k)).isZero(0.0)) free_vars_.push_back(k);
    }

    // v minimizing |v - v_hat|^2 + sum_j |F_j(v) - target_j|^2_F
    Eigen::VectorXd project(const Eigen::VectorXd& v_hat,
                            const Eigen::VectorXd& target_vec) const {
        return llt_.solve(v_hat + A_.transpose() * (target_vec - f0_));
    }

    Eigen::VectorXd block_values(const Eigen::VectorXd& v) const { return A_ * v + f0_; }
    const std::vector<int>& free_variables() const { return free_vars_; }
    int stacked_rows() const { return rows_; }

  private:
    int n_ = 0, rows_ = 0;
    Eigen::SparseMatrix<double> A_;
    Eigen::VectorXd f0_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    std::vector<int> free_vars_;
};

struct ProductPoint {
    Eigen::VectorXd v;
    std::vector<Eigen::MatrixXd> blocks; // cone blocks then rank blocks, problem order
};

inline ProductPoint project_affine(const RankLmiProblem& problem, const ProductPoint& point) {
    AffineProjector proj(problem);
    if (!proj.free_variables().empty())
        throw Error(ErrorCode::RankDeficientMap,
                    std::to_string(proj.free_variables().size()) +
                        " variable(s) unconstrained by any block");
    Eigen::VectorXd target(proj.stacked_rows());
    int off = 0;
    for (const auto& B : point.blocks) {
        const int d = static_cast<int>(B.rows());
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) target(off + r * d + c) = B(r, c);
        off += d * d;
    }
    ProductPoint out;
    out.v = proj.project(point.v, target);
    Eigen::VectorXd vals = proj.block_values(out.v);
    off = 0;
    auto take = [&](int d) {
        Eigen::MatrixXd B(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) B(r, c) = vals(off + r * d + c);
        off += d * d;
        return B;
    };
    for (const auto& b : problem.cone_blocks) out.blocks.push_back(take(b.dim));
    for (const auto& b : problem.rank_blocks) out.blocks.push_back(take(b.block.dim));
    return out;
}

// ---------------------------------------------------------------------------
// Residuals (always recomputed from scratch at the candidate point)
// ---------------------------------------------------------------------------

namespace detail {

inline double cone_distance(const Eigen::MatrixXd& S, Sense sense) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
    double d2 = 0.0;
    for (int k = 0; k < es.eigenvalues().size(); ++k) {
        const double lam = es.eigenvalues()(k);
        const double viol = sense == Sense::PosSemidef ? std::min(lam, 0.0) : std::max(lam, 0.0);
        d2 += viol * viol;
    }
    return std::sqrt(d2);
}

inline Eigen::MatrixXd cone_project(const Eigen::MatrixXd& S, Sense sense) {
    if (sense == Sense::PosSemidef) return project_psd(S);
    return -project_psd(-S);
}

} // namespace detail

inline std::vector<std::pair<std::string, double>> constraint_residuals(
    const RankLmiProblem& problem, const Eigen::VectorXd& v) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& b : problem.cone_blocks) {
        const Eigen::MatrixXd S = evaluate_block(b, v);
        out.emplace_back(b.name, detail::cone_distance(S, b.sense));
    }
    for (const auto& b : problem.rank_blocks) {
        const Eigen::MatrixXd S = evaluate_block(b.block, v);
        out.emplace_back(b.block.name, (S - project_rank(S, b.max_rank)).norm());
    }
    double box = 0.0;
    for (int k = 0; k < problem.num_vars; ++k) {
        if (std::isfinite(problem.lower(k))) box = std::max(box, problem.lower(k) - v(k));
        if (std::isfinite(problem.upper(k))) box = std::max(box, v(k) - problem.upper(k));
    }
    out.emplace_back("bounds", std::max(box, 0.0));
    return out;
}

inline double max_residual(const std::vector<std::pair<std::string, double>>& residuals) {
    double m = 0.0;
    for (const auto& [name, r] : residuals) m = std::max(m, r);
    return m;
}

// ---------------------------------------------------------------------------
// Alternating-projections feasibility solver
// ---------------------------------------------------------------------------

inline SolveOutcome solve_feasibility(const RankLmiProblem& problem, const SolverConfig& cfg,
                                      const Eigen::VectorXd* warm_start = nullptr) {
    AffineProjector proj(problem);
    Eigen::VectorXd v0 = warm_start           ? *warm_start
                         : problem.initial.size() == problem.num_vars
                             ? problem.initial
                             : Eigen::VectorXd::Zero(problem.num_vars);
    auto clamp_box = [&](Eigen::VectorXd x) {
        for (int k = 0; k < problem.num_vars; ++k)
            x(k) = std::min(std::max(x(k), problem.lower(k)), problem.upper(k));
        return x;
    };

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SolveOutcome best;
    best.v = clamp_box(v0);
    Eigen::VectorXd v = best.v;
    int total_iterations = 0;

    for (int attempt = 0; attempt <= cfg.restarts; ++attempt) {
        if (attempt > 0) {
            v = best.v;
            for (int k = 0; k < v.size(); ++k) v(k) *= 1.0 + 1e-2 * gauss(rng);
            v = clamp_box(v);
        }
        double stall_reference = std::numeric_limits<double>::infinity();
        int stall_iter = 0;
        for (int iter = 0; iter < cfg.max_iterations; ++iter) {
            ++total_iterations;
            // project every block value onto its cone / rank set
            Eigen::VectorXd target(proj.stacked_rows());
            int off = 0;
            auto current = proj.block_values(v);
            auto pull = [&](int d) {
                Eigen::MatrixXd B(d, d);
                for (int r = 0; r < d; ++r)
                    for (int c = 0; c < d; ++c) B(r, c) = current(off + r * d + c);
                return B;
            };
            auto push = [&](const Eigen::MatrixXd& B) {
                const int d = static_cast<int>(B.rows());
                for (int r = 0; r < d; ++r)
                    for (int c = 0; c < d; ++c) target(off + r * d + c) = B(r, c);
                off += d * d;
            };
            for (const auto& b : problem.cone_blocks) {
                Eigen::MatrixXd S = pull(b.dim);
                push(detail::cone_project(0.5 * (S + S.transpose()), b.sense));
            }
            for (const auto& b : problem.rank_blocks) {
                Eigen::MatrixXd S = pull(b.block.dim);
                push(project_rank(0.5 * (S + S.transpose()), b.max_rank));
            }
            const Eigen::VectorXd v_next = proj.project(clamp_box(v), target);
            const double displacement = (v_next - v).norm();
            v = v_next;

            if (cfg.verbose && iter % 500 == 0) {
                auto res = constraint_residuals(problem, clamp_box(v));
                double rank_gap = 0.0;
                for (std::size_t j = problem.cone_blocks.size(); j + 1 < res.size(); ++j)
                    rank_gap = std::max(rank_gap, res[j].second);
                std::cerr << "iter " << total_iterations << " residual " << max_residual(res)
                          << " rank-gap " << rank_gap << " displacement " << displacement
                          << "\n";
            }
            if (displacement <= cfg.displacement_tol) break;
            // periodic checks: stop early once feasible to tolerance, or bail
            // out of a stalled attempt (limit cycle of an infeasible trial)
            if (iter % 100 == 99) {
                const double mr = max_residual(constraint_residuals(problem, clamp_box(v)));
                if (mr <= cfg.tolerance) break;
                if (mr <= 0.9 * stall_reference) {
                    stall_reference = mr;
                    stall_iter = iter;
                } else if (iter - stall_iter >= 1000) {
                    break;
                }
            }
        }
        const Eigen::VectorXd v_final = clamp_box(v);
        auto residuals = constraint_residuals(problem, v_final);
        const double mr = max_residual(residuals);
        if (mr < best.max_residual) {
            best.v = v_final;
            best.residuals = std::move(residuals);
            best.max_residual = mr;
        }
        if (best.max_residual <= cfg.tolerance) {
            best.status = SolveStatus::Feasible;
            best.iterations = total_iterations;
            return best;
        }
    }
    best.status = total_iterations >= cfg.max_iterations * (cfg.restarts + 1)
                      ? SolveStatus::MaxIterations
                      : SolveStatus::Infeasible;
    best.iterations = total_iterations;
    return best;
}

// ---------------------------------------------------------------------------
// Bisection on the cost level gamma
// ---------------------------------------------------------------------------

struct GammaOutcome {
    double gamma = std::numeric_limits<double>::infinity();
    SolveOutcome outcome;
};

// The problem must expose gamma as a plain slot; feasibility at level g is
// probed by capping that slot at g.
inline GammaOutcome minimize_gamma(RankLmiProblem& problem, int gamma_slot,
                                   const SolverConfig& cfg,
                                   const Eigen::VectorXd* warm_start = nullptr) {
    const double saved_upper = problem.upper(gamma_slot);
    double lo = cfg.gamma_lo, hi = cfg.gamma_hi;
    if (!(lo < hi)) throw Error(ErrorCode::BracketInfeasible, "empty gamma bracket");

    problem.upper(gamma_slot) = hi;
    SolveOutcome top = solve_feasibility(problem, cfg, warm_start);
    if (top.status != SolveStatus::Feasible) {
        problem.upper(gamma_slot) = saved_upper;
        throw Error(ErrorCode::BracketInfeasible,
                    "infeasible at the upper end of the gamma bracket (max residual " +
                        std::to_string(top.max_residual) + ")");
    }
    GammaOutcome best{top.v(gamma_slot), top};
    hi = std::min(hi, best.gamma);

    while (hi - lo > cfg.bisection_tol * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        problem.upper(gamma_slot) = mid;
        SolveOutcome trial = solve_feasibility(problem, cfg, &best.outcome.v);
        if (trial.status == SolveStatus::Feasible) {
            best = {trial.v(gamma_slot), trial};
            hi = std::min(mid, best.gamma);
        } else {
            lo = mid;
        }
    }
    problem.upper(gamma_slot) = saved_upper;
    return best;
}

} // namespace mjls
