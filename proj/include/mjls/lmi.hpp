#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mjls/errors.hpp"
#include "mjls/mode_atlas.hpp"
#include "mjls/model.hpp"

namespace mjls {

// ---------------------------------------------------------------------------
// Variable layout
//
// Symmetric matrix slots store the lower triangle (n(n+1)/2 entries), gain
// slots store row-major m x n entries.  Slots for absent uncertainty or input
// channels are omitted entirely, so the assembled system stays minimal.
// ---------------------------------------------------------------------------

struct VariableLayout {
    struct Subsystem {
        int n = 0, m = 0;
        std::vector<int> X; // per mu: offset of symmetric n x n slot
        std::vector<int> Y;
        std::vector<int> K;        // per sigma: offset of m*n full slot (-1 absent)
        std::vector<int> beta_bar; // per mu, scalar slot (-1 absent)
        std::vector<int> beta_til;
        int tau_u_til = -1;
        int tau_til = -1, tau_aux = -1;
        int theta_til = -1, theta_aux = -1;
    };
    std::vector<Subsystem> sub;
    int gamma = -1;
    int size = 0;

    static int sym_size(int n) { return n * (n + 1) / 2; }
    static int sym_index(int off, int p, int q) {
        return p >= q ? off + p * (p + 1) / 2 + q : off + q * (q + 1) / 2 + p;
    }
};

inline Eigen::MatrixXd get_sym(const Eigen::VectorXd& v, int off, int n) {
    Eigen::MatrixXd S(n, n);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q <= p; ++q) S(p, q) = S(q, p) = v(VariableLayout::sym_index(off, p, q));
    return S;
}

inline void set_sym(Eigen::VectorXd& v, int off, int n, const Eigen::MatrixXd& S) {
    for (int p = 0; p < n; ++p)
        for (int q = 0; q <= p; ++q)
            v(VariableLayout::sym_index(off, p, q)) = 0.5 * (S(p, q) + S(q, p));
}

inline Eigen::MatrixXd get_full(const Eigen::VectorXd& v, int off, int rows, int cols) {
    Eigen::MatrixXd S(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) S(r, c) = v(off + r * cols + c);
    return S;
}

inline void set_full(Eigen::VectorXd& v, int off, int rows, int cols, const Eigen::MatrixXd& S) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) v(off + r * cols + c) = S(r, c);
}

// ---------------------------------------------------------------------------
// Affine symmetric constraint blocks
// ---------------------------------------------------------------------------

enum class Sense { NegSemidef, PosSemidef };

struct Coef {
    int var;
    int r, c;
    double w;
};

struct AffineBlock {
    std::string name;
    int dim = 0;
    Eigen::MatrixXd constant;
    std::vector<Coef> coefs;
    Sense sense = Sense::NegSemidef;
};

struct RankConstraint {
    AffineBlock block;
    int max_rank = 0;
};

struct RankLmiProblem {
    int num_vars = 0;
    std::vector<AffineBlock> cone_blocks;
    std::vector<RankConstraint> rank_blocks;
    Eigen::VectorXd lower, upper; // elementwise box, +-inf where free
    Eigen::VectorXd initial;
    VariableLayout layout;
};

inline Eigen::MatrixXd evaluate_block(const AffineBlock& block, const Eigen::VectorXd& v) {
    Eigen::MatrixXd S = block.constant;
    for (const auto& c : block.coefs) S(c.r, c.c) += c.w * v(c.var);
    return S;
}

namespace blockops {

inline void add_const(AffineBlock& B, int r0, int c0, const Eigen::MatrixXd& A) {
    B.constant.block(r0, c0, A.rows(), A.cols()) += A;
}

// slot * A
inline void add_scalar(AffineBlock& B, int r0, int c0, int slot, const Eigen::MatrixXd& A) {
    for (int r = 0; r < A.rows(); ++r)
        for (int c = 0; c < A.cols(); ++c)
            if (A(r, c) != 0.0) B.coefs.push_back({slot, r0 + r, c0 + c, A(r, c)});
}

// w * S * R where S is the symmetric variable at (off, n)
inline void add_sym_right(AffineBlock& B, int r0, int c0, int off, int n, const Eigen::MatrixXd& R,
                          double w = 1.0) {
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < R.cols(); ++c)
            for (int k = 0; k < n; ++k)
                if (R(k, c) != 0.0)
                    B.coefs.push_back(
                        {VariableLayout::sym_index(off, r, k), r0 + r, c0 + c, w * R(k, c)});
}

// w * Lm * S
inline void add_sym_left(AffineBlock& B, int r0, int c0, int off, int n, const Eigen::MatrixXd& Lm,
                         double w = 1.0) {
    for (int r = 0; r < Lm.rows(); ++r)
        for (int c = 0; c < n; ++c)
            for (int k = 0; k < n; ++k)
                if (Lm(r, k) != 0.0)
                    B.coefs.push_back(
                        {VariableLayout::sym_index(off, k, c), r0 + r, c0 + c, w * Lm(r, k)});
}

// w * S
inline void add_sym(AffineBlock& B, int r0, int c0, int off, int n, double w = 1.0) {
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            B.coefs.push_back({VariableLayout::sym_index(off, r, c), r0 + r, c0 + c, w});
}

// w * K (or w * K^T) where K is the full variable at (off, rows x cols)
inline void add_full(AffineBlock& B, int r0, int c0, int off, int rows, int cols, double w = 1.0,
                     bool transposed = false) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (transposed)
                B.coefs.push_back({off + r * cols + c, r0 + c, c0 + r, w});
            else
                B.coefs.push_back({off + r * cols + c, r0 + r, c0 + c, w});
        }
}

// w * x^T S x as a 1x1 contribution at (r0, c0)
inline void add_sym_quadratic(AffineBlock& B, int r0, int c0, int off, int n,
                              const Eigen::VectorXd& x, double w = 1.0) {
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            double coeff = w * x(p) * x(q);
            if (coeff != 0.0)
                B.coefs.push_back({VariableLayout::sym_index(off, p, q), r0, c0, coeff});
        }
}

inline AffineBlock make_block(std::string name, int dim, Sense sense) {
    AffineBlock B;
    B.name = std::move(name);
    B.dim = dim;
    B.constant = Eigen::MatrixXd::Zero(dim, dim);
    B.sense = sense;
    return B;
}

} // namespace blockops

// ---------------------------------------------------------------------------
// Layout construction
// ---------------------------------------------------------------------------

inline VariableLayout build_layout(const PlantModel& model, const InfoPattern& pattern) {
    VariableLayout layout;
    const int N = model.N();
    const int M = model.atlas.M();
    layout.sub.resize(N);
    int off = 0;
    for (int i = 0; i < N; ++i) {
        const auto& sd = model.subsystems[i];
        auto& s = layout.sub[i];
        s.n = sd.n();
        s.m = sd.m();
        const int sym = VariableLayout::sym_size(s.n);
        s.X.resize(M);
        s.Y.resize(M);
        for (int mu = 0; mu < M; ++mu) {
            s.X[mu] = off;
            off += sym;
        }
        for (int mu = 0; mu < M; ++mu) {
            s.Y[mu] = off;
            off += sym;
        }
        s.beta_bar.assign(M, -1);
        s.beta_til.assign(M, -1);
        if (s.m > 0) {
            s.K.resize(pattern.class_counts[i]);
            for (int sigma = 0; sigma < pattern.class_counts[i]; ++sigma) {
                s.K[sigma] = off;
                off += s.m * s.n;
            }
            for (int mu = 0; mu < M; ++mu) s.beta_bar[mu] = off++;
            for (int mu = 0; mu < M; ++mu) s.beta_til[mu] = off++;
            s.tau_u_til = off++;
        }
        if (sd.g() > 0) {
            s.tau_til = off++;
            s.tau_aux = off++;
        }
        if (sd.s() > 0) {
            s.theta_til = off++;
            s.theta_aux = off++;
        }
    }
    layout.gamma = off++;
    layout.size = off;
    return layout;
}

// Default starting point: identity matrices, unit scalars, zero gains.
inline Eigen::VectorXd default_initial_point(const PlantModel& model,
                                             const VariableLayout& layout) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(layout.size);
    const int M = model.atlas.M();
    for (const auto& s : layout.sub) {
        for (int mu = 0; mu < M; ++mu) {
            set_sym(v, s.X[mu], s.n, Eigen::MatrixXd::Identity(s.n, s.n));
            set_sym(v, s.Y[mu], s.n, Eigen::MatrixXd::Identity(s.n, s.n));
            if (s.beta_bar[mu] >= 0) v(s.beta_bar[mu]) = 1.0;
            if (s.beta_til[mu] >= 0) v(s.beta_til[mu]) = 1.0;
        }
        if (s.tau_u_til >= 0) v(s.tau_u_til) = 1.0;
        if (s.tau_til >= 0) v(s.tau_til) = 1.0;
        if (s.tau_aux >= 0) v(s.tau_aux) = 1.0;
        if (s.theta_til >= 0) v(s.theta_til) = 1.0;
        if (s.theta_aux >= 0) v(s.theta_aux) = 1.0;
    }
    v(layout.gamma) = 1.0;
    return v;
}

// ---------------------------------------------------------------------------
// Theorem-style rank-constrained LMI assembly
// ---------------------------------------------------------------------------

struct AssemblyOptions {
    double epsilon = 1e-4;        // strictness margin on strict inequalities
    double upsilon_margin = 1e-5; // small margin on the gain-distance block
    // Optional externally supplied beta^u values, [i][mu]; when set, the
    // coupling beta_til * tau_u_til = beta_u is added as an extra rank-1
    // constraint with constant off-diagonal sqrt(beta_u).
    std::optional<std::vector<std::vector<double>>> pinned_beta_u;
};

inline RankLmiProblem assemble_theorem3(const PlantModel& model, const InfoPattern& pattern,
                                        const AssemblyOptions& opts = {}) {
    if (pattern.atlas_fingerprint != atlas_hash(model.atlas))
        throw Error(ErrorCode::AtlasMismatch, "pattern built over a different atlas");
    if (opts.epsilon <= 0.0)
        throw Error(ErrorCode::NonpositiveScalar, "strictness margin must be positive");
    const int N = model.N();
    const int M = model.atlas.M();
    for (int i = 0; i < N; ++i)
        if (model.subsystems[i].n() == 0)
            throw Error(ErrorCode::ZeroDimensionDegenerate,
                        "subsystem " + std::to_string(i + 1) + " has empty state");

    RankLmiProblem problem;
    problem.layout = build_layout(model, pattern);
    problem.num_vars = problem.layout.size;
    const double inf = std::numeric_limits<double>::infinity();
    problem.lower = Eigen::VectorXd::Constant(problem.num_vars, -inf);
    problem.upper = Eigen::VectorXd::Constant(problem.num_vars, inf);
    problem.initial = default_initial_point(model, problem.layout);

    const double eps = opts.epsilon;
    const Eigen::MatrixXd& Q = model.atlas.generator;
    using namespace blockops;

    for (int i = 0; i < N; ++i) {
        const auto& sd = model.subsystems[i];
        const auto& s = problem.layout.sub[i];
        const int n = sd.n(), m = sd.m(), g = sd.g(), sc = sd.s(), h = sd.h();
        const bool input = m > 0, local_unc = g > 0, ic = sc > 0;

        // scalar positivity (slot >= eps)
        if (input) {
            problem.lower(s.tau_u_til) = eps;
            for (int mu = 0; mu < M; ++mu) {
                problem.lower(s.beta_bar[mu]) = eps;
                problem.lower(s.beta_til[mu]) = eps;
            }
        }
        if (local_unc) {
            problem.lower(s.tau_til) = eps;
            problem.lower(s.tau_aux) = eps;
        }
        if (ic) {
            problem.lower(s.theta_til) = eps;
            problem.lower(s.theta_aux) = eps;
        }

        // which other subsystems contribute a theta_j block to G33
        std::vector<int> theta_peers;
        for (int j = 0; j < N; ++j)
            if (j != i && model.subsystems[j].s() > 0) theta_peers.push_back(j);

        for (int mu = 0; mu < M; ++mu) {
            const auto lb = lift(model, i + 1, mu + 1);
            const Eigen::MatrixXd& R = model.weights.R[mu][i];
            const Eigen::MatrixXd Rinv = R.inverse();
            Eigen::MatrixXd Ginv, BGinvBt;
            if (input) {
                Ginv = model.weights.G[mu][i].inverse();
                BGinvBt = lb.B * Ginv * lb.B.transpose();
            }

            // --- 3x3 Theorem block, emitted as (G + eps I) <= 0 ---
            const int d1 = n;
            const int d2 = (M - 1) * n;
            const int n_h = local_unc ? h : 0;
            const int d3 = n + (input ? n : 0) + n_h + static_cast<int>(theta_peers.size()) * h;
            const int dim = d1 + d2 + d3;
            auto B3 = make_block("G[i=" + std::to_string(i + 1) + ",mu=" + std::to_string(mu + 1) +
                                     "]",
                                 dim, Sense::NegSemidef);
            B3.constant = Eigen::MatrixXd::Identity(dim, dim) * eps;

            // G11 = Y A^T + A Y + q_mumu Y - B G^-1 B^T + tau_u_til B B^T
            //       + tau_til E E^T + theta_til L L^T
            add_sym_right(B3, 0, 0, s.Y[mu], n, lb.A.transpose());
            add_sym_left(B3, 0, 0, s.Y[mu], n, lb.A);
            add_sym(B3, 0, 0, s.Y[mu], n, Q(mu, mu));
            if (input) {
                add_const(B3, 0, 0, -BGinvBt);
                add_scalar(B3, 0, 0, s.tau_u_til, lb.B * lb.B.transpose());
            }
            if (local_unc) add_scalar(B3, 0, 0, s.tau_til, lb.E * lb.E.transpose());
            if (ic) add_scalar(B3, 0, 0, s.theta_til, lb.L * lb.L.transpose());

            // G12 = Y [sqrt(q_munu) I ...], G22 = -diag[Y(nu)]
            int col = d1;
            for (int nu = 0; nu < M; ++nu) {
                if (nu == mu) continue;
                const double w = std::sqrt(std::max(Q(mu, nu), 0.0));
                add_sym(B3, 0, col, s.Y[mu], n, w);
                add_sym(B3, col, 0, s.Y[mu], n, w);
                add_sym(B3, col, col, s.Y[nu], n, -1.0);
                col += n;
            }

            // G13 = Y [I, I?, H^T, H^T...], G33 = -diag[R^-1, beta_bar I, tau_til I, theta_j I...]
            const Eigen::MatrixXd I_n = Eigen::MatrixXd::Identity(n, n);
            const Eigen::MatrixXd Ht = lb.H.transpose();
            add_sym_right(B3, 0, col, s.Y[mu], n, I_n);
            add_sym_left(B3, col, 0, s.Y[mu], n, I_n);
            add_const(B3, col, col, -Rinv);
            col += n;
            if (input) {
                add_sym_right(B3, 0, col, s.Y[mu], n, I_n);
                add_sym_left(B3, col, 0, s.Y[mu], n, I_n);
                add_scalar(B3, col, col, s.beta_bar[mu],
                           -Eigen::MatrixXd::Identity(n, n));
                col += n;
            }
            if (local_unc) {
                add_sym_right(B3, 0, col, s.Y[mu], n, Ht);
                add_sym_left(B3, col, 0, s.Y[mu], n, lb.H);
                add_scalar(B3, col, col, s.tau_til, -Eigen::MatrixXd::Identity(h, h));
                col += h;
            }
            for (int j : theta_peers) {
                add_sym_right(B3, 0, col, s.Y[mu], n, Ht);
                add_sym_left(B3, col, 0, s.Y[mu], n, lb.H);
                add_scalar(B3, col, col, problem.layout.sub[j].theta_til,
                           -Eigen::MatrixXd::Identity(h, h));
                col += h;
            }
            problem.cone_blocks.push_back(std::move(B3));

            // --- X, Y positive definiteness with margin ---
            auto BX = make_block("Xpd[i=" + std::to_string(i + 1) + ",mu=" +
                                     std::to_string(mu + 1) + "]",
                                 n, Sense::PosSemidef);
            BX.constant = -eps * Eigen::MatrixXd::Identity(n, n);
            add_sym(BX, 0, 0, s.X[mu], n);
            problem.cone_blocks.push_back(std::move(BX));
            auto BY = make_block("Ypd[i=" + std::to_string(i + 1) + ",mu=" +
                                     std::to_string(mu + 1) + "]",
                                 n, Sense::PosSemidef);
            BY.constant = -eps * Eigen::MatrixXd::Identity(n, n);
            add_sym(BY, 0, 0, s.Y[mu], n);
            problem.cone_blocks.push_back(std::move(BY));

            // --- gain-distance block:
            //     [[-tau_u_til I, Ups^T],[Ups, -beta_til I]] <= -margin I ---
            if (input) {
                const int sigma = pattern.phi[i][mu] - 1;
                auto BU = make_block("Ups[i=" + std::to_string(i + 1) + ",mu=" +
                                         std::to_string(mu + 1) + "]",
                                     n + m, Sense::NegSemidef);
                BU.constant = opts.upsilon_margin * Eigen::MatrixXd::Identity(n + m, n + m);
                add_scalar(BU, 0, 0, s.tau_u_til, -Eigen::MatrixXd::Identity(n, n));
                add_scalar(BU, n, n, s.beta_til[mu], -Eigen::MatrixXd::Identity(m, m));
                // Ups = K(phi_i(mu)) + G^-1 B^T X
                add_full(BU, n, 0, s.K[sigma], m, n);
                add_full(BU, 0, n, s.K[sigma], m, n, 1.0, true);
                const Eigen::MatrixXd GB = Ginv * lb.B.transpose();
                add_sym_left(BU, n, 0, s.X[mu], n, GB);
                add_sym_right(BU, 0, n, s.X[mu], n, GB.transpose());
                problem.cone_blocks.push_back(std::move(BU));

                // --- rank-1 inverse coupling for beta ---
                RankConstraint rc;
                rc.block = make_block("betarank[i=" + std::to_string(i + 1) + ",mu=" +
                                          std::to_string(mu + 1) + "]",
                                      2, Sense::PosSemidef);
                rc.block.constant << 0.0, 1.0, 1.0, 0.0;
                rc.block.coefs.push_back({s.beta_bar[mu], 0, 0, 1.0});
                rc.block.coefs.push_back({s.beta_til[mu], 1, 1, 1.0});
                rc.max_rank = 1;
                problem.rank_blocks.push_back(std::move(rc));
            }

            // --- rank-n inverse coupling for X, Y ---
            RankConstraint rxy;
            rxy.block = make_block("xyrank[i=" + std::to_string(i + 1) + ",mu=" +
                                       std::to_string(mu + 1) + "]",
                                   2 * n, Sense::PosSemidef);
            rxy.block.constant.block(0, n, n, n) = Eigen::MatrixXd::Identity(n, n);
            rxy.block.constant.block(n, 0, n, n) = Eigen::MatrixXd::Identity(n, n);
            add_sym(rxy.block, 0, 0, s.Y[mu], n);
            add_sym(rxy.block, n, n, s.X[mu], n);
            rxy.max_rank = n;
            problem.rank_blocks.push_back(std::move(rxy));
        }

        // --- reciprocal couplings for tau and theta (cost-bound reconstruction) ---
        auto add_reciprocal = [&problem](const std::string& name, int tilde_slot, int aux_slot) {
            RankConstraint rc;
            rc.block = blockops::make_block(name, 2, Sense::PosSemidef);
            rc.block.constant << 0.0, 1.0, 1.0, 0.0;
            rc.block.coefs.push_back({tilde_slot, 0, 0, 1.0});
            rc.block.coefs.push_back({aux_slot, 1, 1, 1.0});
            rc.max_rank = 1;
            // also require the coupling matrix itself to be PSD
            AffineBlock psd = rc.block;
            psd.name += ".psd";
            psd.sense = Sense::PosSemidef;
            problem.cone_blocks.push_back(std::move(psd));
            problem.rank_blocks.push_back(std::move(rc));
        };
        if (local_unc)
            add_reciprocal("taurec[i=" + std::to_string(i + 1) + "]", s.tau_til, s.tau_aux);
        if (ic)
            add_reciprocal("thetarec[i=" + std::to_string(i + 1) + "]", s.theta_til, s.theta_aux);

        // --- externally pinned beta^u values: beta_til * tau_u_til = beta_u ---
        if (opts.pinned_beta_u && input) {
            const auto& bu = (*opts.pinned_beta_u)[i];
            for (int mu = 0; mu < M; ++mu) {
                if (bu[mu] <= 0.0)
                    throw Error(ErrorCode::NonpositiveScalar, "pinned beta^u must be positive");
                RankConstraint rc;
                rc.block = make_block("betapin[i=" + std::to_string(i + 1) + ",mu=" +
                                          std::to_string(mu + 1) + "]",
                                      2, Sense::PosSemidef);
                const double sq = std::sqrt(bu[mu]);
                rc.block.constant << 0.0, sq, sq, 0.0;
                rc.block.coefs.push_back({s.tau_u_til, 0, 0, 1.0});
                rc.block.coefs.push_back({s.beta_til[mu], 1, 1, 1.0});
                rc.max_rank = 1;
                problem.rank_blocks.push_back(std::move(rc));
            }
        }
    }

    problem.lower(problem.layout.gamma) = eps;
    return problem;
}

// Appends the cost-bound constraint
//   gamma - sum_i x0_i^T [ sum_mu pi_mu X_i(mu) + tau_i S_bar_i + theta_i S_til_i ] x0_i >= 0
// using the reciprocal slots tau_aux, theta_aux for tau_i, theta_i.
inline void assemble_cost_bound(const PlantModel& model, RankLmiProblem& problem,
                                bool use_stationary) {
    if (model.x0.size() != model.total_state_dim() || model.total_state_dim() == 0)
        throw Error(ErrorCode::MissingInitialState, "model has no usable initial state");
    const Eigen::VectorXd pi = effective_distribution(model, use_stationary);
    const int N = model.N();
    const int M = model.atlas.M();
    using namespace blockops;
    auto B = make_block("costbound", 1, Sense::PosSemidef);
    B.coefs.push_back({problem.layout.gamma, 0, 0, 1.0});
    for (int i = 0; i < N; ++i) {
        const auto& s = problem.layout.sub[i];
        const Eigen::VectorXd x0i = model.x0.segment(model.state_offset(i + 1), s.n);
        for (int mu = 0; mu < M; ++mu)
            add_sym_quadratic(B, 0, 0, s.X[mu], s.n, x0i, -pi(mu));
        if (s.tau_aux >= 0)
            B.coefs.push_back(
                {s.tau_aux, 0, 0, -(x0i.transpose() * model.budgets[i].S_bar * x0i).value()});
        if (s.theta_aux >= 0)
            B.coefs.push_back(
                {s.theta_aux, 0, 0, -(x0i.transpose() * model.budgets[i].S_tilde * x0i).value()});
    }
    problem.cone_blocks.push_back(std::move(B));
}

// ---------------------------------------------------------------------------
// Riccati-residual oracle (the coupled inequality behind the design)
// ---------------------------------------------------------------------------

// Scalar data for one subsystem; NaN marks an absent channel.
struct RiccatiScalars {
    double tau_u = std::numeric_limits<double>::quiet_NaN();
    double tau = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> theta; // all subsystems, NaN where absent
    double beta_u = std::numeric_limits<double>::quiet_NaN();
};

inline Eigen::MatrixXd riccati_residual(const PlantModel& model, int i, int mu,
                                        const std::vector<Eigen::MatrixXd>& X_all_modes,
                                        const RiccatiScalars& sc) {
    const auto& sd = model.subsystems[i - 1];
    const int n = sd.n();
    const auto lb = lift(model, i, mu);
    const Eigen::MatrixXd& X = X_all_modes[mu - 1];
    const Eigen::MatrixXd& Q = model.atlas.generator;

    Eigen::MatrixXd res = lb.A.transpose() * X + X * lb.A + model.weights.R[mu - 1][i - 1];
    for (int nu = 0; nu < model.atlas.M(); ++nu) res += Q(mu - 1, nu) * X_all_modes[nu];

    if (sd.m() > 0) {
        if (!(sc.tau_u > 0.0))
            throw Error(ErrorCode::NonpositiveScalar, "tau_u must be positive");
        if (!(sc.beta_u >= 0.0))
            throw Error(ErrorCode::NonpositiveScalar, "beta_u must be nonnegative");
        const Eigen::MatrixXd Ginv = model.weights.G[mu - 1][i - 1].inverse();
        res += X * ((1.0 / sc.tau_u) * lb.B * lb.B.transpose() -
                    lb.B * Ginv * lb.B.transpose()) *
               X;
        res += sc.tau_u * sc.beta_u * Eigen::MatrixXd::Identity(n, n);
    }
    if (sd.g() > 0) {
        if (!(sc.tau > 0.0)) throw Error(ErrorCode::NonpositiveScalar, "tau must be positive");
        res += (1.0 / sc.tau) * X * lb.E * lb.E.transpose() * X;
    }
    if (sd.s() > 0) {
        if (!(sc.theta[i - 1] > 0.0))
            throw Error(ErrorCode::NonpositiveScalar, "theta must be positive");
        res += (1.0 / sc.theta[i - 1]) * X * lb.L * lb.L.transpose() * X;
    }
    double h_coeff = (sd.g() > 0) ? sc.tau : 0.0;
    for (int j = 0; j < model.N(); ++j) {
        if (j == i - 1 || model.subsystems[j].s() == 0) continue;
        if (!(sc.theta[j] > 0.0))
            throw Error(ErrorCode::NonpositiveScalar, "theta must be positive");
        h_coeff += sc.theta[j];
    }
    if (sd.h() > 0 && h_coeff != 0.0) res += h_coeff * lb.H.transpose() * lb.H;

    return 0.5 * (res + res.transpose());
}

// ---------------------------------------------------------------------------
// Schur-complement cross-check
// ---------------------------------------------------------------------------

struct SchurReport {
    struct Entry {
        int i, mu;
        double max_eigenvalue;
    };
    std::vector<Entry> entries;
    bool pass = true;
};

// Independently reconstructs the Riccati-route data (X = Y^-1, reciprocal
// scalars) from a candidate solution vector and evaluates the residual sign.
inline SchurReport schur_check(const VariableLayout& layout, const Eigen::VectorXd& v,
                               const PlantModel& model) {
    const int N = model.N();
    const int M = model.atlas.M();
    SchurReport report;
    std::vector<double> theta(N, std::numeric_limits<double>::quiet_NaN());
    for (int j = 0; j < N; ++j)
        if (layout.sub[j].theta_til >= 0) theta[j] = 1.0 / v(layout.sub[j].theta_til);

    for (int i = 0; i < N; ++i) {
        const auto& s = layout.sub[i];
        std::vector<Eigen::MatrixXd> X(M);
        for (int mu = 0; mu < M; ++mu) {
            const Eigen::MatrixXd Y = get_sym(v, s.Y[mu], s.n);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
            if (svd.singularValues().minCoeff() <=
                1e-10 * std::max(1.0, svd.singularValues().maxCoeff()))
                throw Error(ErrorCode::SingularY, "Y[i=" + std::to_string(i + 1) + ",mu=" +
                                                      std::to_string(mu + 1) +
                                                      "] is singular within pivot tolerance");
            X[mu] = Y.inverse();
            X[mu] = 0.5 * (X[mu] + X[mu].transpose());
        }
        RiccatiScalars sc;
        sc.theta = theta;
        if (s.tau_u_til >= 0) sc.tau_u = 1.0 / v(s.tau_u_til);
        if (s.tau_til >= 0) sc.tau = 1.0 / v(s.tau_til);
        for (int mu = 0; mu < M; ++mu) {
            if (s.tau_u_til >= 0) sc.beta_u = v(s.beta_til[mu]) * v(s.tau_u_til);
            const Eigen::MatrixXd res = riccati_residual(model, i + 1, mu + 1, X, sc);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res);
            const double max_eig = es.eigenvalues().maxCoeff();
            report.entries.push_back({i + 1, mu + 1, max_eig});
            if (!(max_eig < 0.0)) report.pass = false;
        }
    }
    return report;
}

} // namespace mjls
