#pragma once

#include <Eigen/Dense>
#include <queue>
#include <string>
#include <vector>

#include "mjls/errors.hpp"
#include "mjls/mode_atlas.hpp"

namespace mjls {

// Per-subsystem data, one matrix block per local mode.
struct SubsystemData {
    std::vector<Eigen::MatrixXd> A; // n_i x n_i
    std::vector<Eigen::MatrixXd> B; // n_i x m_i
    std::vector<Eigen::MatrixXd> E; // n_i x g_i
    std::vector<Eigen::MatrixXd> L; // n_i x s_i
    std::vector<Eigen::MatrixXd> H; // h_i x n_i

    int n() const { return A.empty() ? 0 : static_cast<int>(A.front().rows()); }
    int m() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }
    int g() const { return E.empty() ? 0 : static_cast<int>(E.front().cols()); }
    int s() const { return L.empty() ? 0 : static_cast<int>(L.front().cols()); }
    int h() const { return H.empty() ? 0 : static_cast<int>(H.front().rows()); }
    int modes() const { return static_cast<int>(A.size()); }
};

struct UncertaintyBudget {
    Eigen::MatrixXd S_bar;   // n_i x n_i, PD
    Eigen::MatrixXd S_tilde; // n_i x n_i, PD
};

// Per global mode, per subsystem weights.
struct CostWeights {
    std::vector<std::vector<Eigen::MatrixXd>> R; // [mu][i], n_i x n_i PD
    std::vector<std::vector<Eigen::MatrixXd>> G; // [mu][i], m_i x m_i PD
};

struct PlantModel {
    ModeAtlas atlas;
    std::vector<SubsystemData> subsystems;
    std::vector<UncertaintyBudget> budgets;
    CostWeights weights;
    Eigen::VectorXd x0;                   // stacked initial state
    Eigen::VectorXd initial_distribution; // pi over {1..M}
    bool use_stationary_distribution = false;

    int N() const { return static_cast<int>(subsystems.size()); }
    int state_offset(int i) const { // 1-based subsystem index
        int off = 0;
        for (int j = 0; j < i - 1; ++j) off += subsystems[j].n();
        return off;
    }
    int total_state_dim() const {
        int n = 0;
        for (const auto& s : subsystems) n += s.n();
        return n;
    }
};

namespace detail {
inline bool is_positive_definite(const Eigen::MatrixXd& S, double pivot_tol = 1e-12) {
    if (S.rows() != S.cols()) return false;
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + S.cwiseAbs().maxCoeff()))
        return false;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    return ldlt.vectorD().minCoeff() > pivot_tol;
}
} // namespace detail

inline std::vector<std::string> model_violations(const PlantModel& model) {
    std::vector<std::string> v;
    const int N = model.atlas.N;
    const int M = model.atlas.M();
    if (model.N() != N) {
        v.push_back("DimensionMismatch: subsystem count differs from atlas N");
        return v;
    }
    for (int i = 0; i < N; ++i) {
        const auto& sub = model.subsystems[i];
        const std::string tag = "subsystem " + std::to_string(i + 1);
        if (sub.modes() != model.atlas.local_mode_counts[i]) {
            v.push_back("DimensionMismatch: " + tag + " has " + std::to_string(sub.modes()) +
                        " mode blocks, atlas expects " +
                        std::to_string(model.atlas.local_mode_counts[i]));
            continue;
        }
        const int n = sub.n(), m = sub.m(), g = sub.g(), s = sub.s(), h = sub.h();
        if (n == 0) v.push_back("DimensionMismatch: " + tag + " has empty state");
        auto check = [&](const std::vector<Eigen::MatrixXd>& mats, int rows, int cols,
                         const char* name) {
            if (static_cast<int>(mats.size()) != sub.modes()) {
                v.push_back("DimensionMismatch: " + tag + " " + name + " mode count");
                return;
            }
            for (const auto& mat : mats)
                if (mat.rows() != rows || mat.cols() != cols)
                    v.push_back("DimensionMismatch: " + tag + " " + name + " block shape");
        };
        check(sub.A, n, n, "A");
        check(sub.B, n, m, "B");
        check(sub.E, n, g, "E");
        check(sub.L, n, s, "L");
        check(sub.H, h, n, "H");
        if (static_cast<int>(model.budgets.size()) != N) continue;
        if (!detail::is_positive_definite(model.budgets[i].S_bar))
            v.push_back("NotPositiveDefinite: S_bar of " + tag);
        if (!detail::is_positive_definite(model.budgets[i].S_tilde))
            v.push_back("NotPositiveDefinite: S_tilde of " + tag);
    }
    if (static_cast<int>(model.budgets.size()) != N)
        v.push_back("DimensionMismatch: budget count differs from N");
    if (static_cast<int>(model.weights.R.size()) != M ||
        static_cast<int>(model.weights.G.size()) != M) {
        v.push_back("DimensionMismatch: weights must cover all global modes");
    } else {
        for (int mu = 0; mu < M; ++mu) {
            if (static_cast<int>(model.weights.R[mu].size()) != N ||
                static_cast<int>(model.weights.G[mu].size()) != N) {
                v.push_back("DimensionMismatch: weights at mode " + std::to_string(mu + 1));
                continue;
            }
            for (int i = 0; i < N; ++i) {
                const auto& sub = model.subsystems[i];
                if (model.weights.R[mu][i].rows() != sub.n() ||
                    !detail::is_positive_definite(model.weights.R[mu][i]))
                    v.push_back("NotPositiveDefinite: R of subsystem " + std::to_string(i + 1) +
                                " at mode " + std::to_string(mu + 1));
                if (model.weights.G[mu][i].rows() != sub.m() ||
                    (sub.m() > 0 && !detail::is_positive_definite(model.weights.G[mu][i])))
                    v.push_back("NotPositiveDefinite: G of subsystem " + std::to_string(i + 1) +
                                " at mode " + std::to_string(mu + 1));
            }
        }
    }
    if (model.x0.size() != model.total_state_dim())
        v.push_back("DimensionMismatch: x0 length differs from total state dimension");
    if (model.initial_distribution.size() != M) {
        v.push_back("BadDistribution: initial distribution length differs from M");
    } else {
        if (model.initial_distribution.minCoeff() < 0.0)
            v.push_back("BadDistribution: negative probability");
        if (std::abs(model.initial_distribution.sum() - 1.0) > 1e-12)
            v.push_back("BadDistribution: probabilities do not sum to 1");
    }
    return v;
}

inline const PlantModel& validate_model(const PlantModel& model) {
    auto v = model_violations(model);
    if (v.empty()) return model;
    ErrorCode code = ErrorCode::DimensionMismatch;
    if (v.front().rfind("NotPositiveDefinite", 0) == 0) code = ErrorCode::NotPositiveDefinite;
    if (v.front().rfind("BadDistribution", 0) == 0) code = ErrorCode::BadDistribution;
    std::string msg = v.front();
    for (std::size_t k = 1; k < v.size(); ++k) msg += "; " + v[k];
    throw Error(code, msg);
}

struct LiftedBlocks {
    Eigen::MatrixXd A, B, E, L, H;
};

// Subsystem i's matrices at the local mode selected by global mode mu.
inline LiftedBlocks lift(const PlantModel& model, int i, int mu) {
    if (i < 1 || i > model.N())
        throw Error(ErrorCode::IndexOutOfRange, "subsystem index out of range");
    const int mi = project_mode(model.atlas, mu, i);
    const auto& sub = model.subsystems[i - 1];
    return {sub.A[mi - 1], sub.B[mi - 1], sub.E[mi - 1], sub.L[mi - 1], sub.H[mi - 1]};
}

inline bool is_irreducible(const Eigen::MatrixXd& Q) {
    const int M = static_cast<int>(Q.rows());
    auto reachable = [&](bool transpose) {
        std::vector<bool> vis(M, false);
        std::queue<int> q;
        q.push(0);
        vis[0] = true;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int w = 0; w < M; ++w) {
                double rate = transpose ? Q(w, u) : Q(u, w);
                if (w != u && rate > 0.0 && !vis[w]) {
                    vis[w] = true;
                    q.push(w);
                }
            }
        }
        return std::all_of(vis.begin(), vis.end(), [](bool b) { return b; });
    };
    return reachable(false) && reachable(true);
}

// Unique pi with pi^T Q = 0, entries >= 0, sum 1.
inline Eigen::VectorXd stationary_distribution(const ModeAtlas& atlas) {
    const Eigen::MatrixXd& Q = atlas.generator;
    const int M = atlas.M();
    if (!is_irreducible(Q))
        throw Error(ErrorCode::ReducibleChain, "generator is not irreducible");
    Eigen::MatrixXd A(M + 1, M);
    A.topRows(M) = Q.transpose();
    A.bottomRows(1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(M + 1);
    b(M) = 1.0;
    Eigen::VectorXd pi = A.colPivHouseholderQr().solve(b);
    pi = pi.cwiseMax(0.0);
    pi /= pi.sum();
    double residual = (Q.transpose() * pi).norm();
    if (residual > 1e-10)
        throw Error(ErrorCode::ReducibleChain,
                    "stationary distribution residual " + std::to_string(residual));
    return pi;
}

inline Eigen::VectorXd effective_distribution(const PlantModel& model, bool use_stationary) {
    if (use_stationary || model.use_stationary_distribution)
        return stationary_distribution(model.atlas);
    return model.initial_distribution;
}

} // namespace mjls
