#pragma once

#include <Eigen/Dense>
#include <initializer_list>

#include "mjls/model.hpp"

namespace testsupport {

inline Eigen::MatrixXd scal(double x) {
    Eigen::MatrixXd M(1, 1);
    M << x;
    return M;
}

inline Eigen::MatrixXd four_mode_generator() {
    Eigen::MatrixXd Q(4, 4);
    Q << -3, 1, 1, 1,
         1, -2, 0.5, 0.5,
         0.8, 0.6, -2, 0.6,
         0.7, 0.7, 0.6, -2;
    return Q;
}

// The committed reference model: three scalar subsystems over a four-vector
// joint-mode set, every uncertainty channel active.
inline mjls::PlantModel desk_model() {
    using namespace mjls;
    PlantModel m;
    m.atlas = build_atlas({2, 2, 2}, {{1, 1, 1}, {1, 2, 2}, {2, 1, 2}, {2, 2, 1}},
                          four_mode_generator());
    const double A_vals[3][2] = {{-1.2, 0.6}, {0.4, -1.5}, {-0.8, 0.5}};
    for (int i = 0; i < 3; ++i) {
        SubsystemData sd;
        for (int k = 0; k < 2; ++k) {
            sd.A.push_back(scal(A_vals[i][k]));
            sd.B.push_back(scal(1.0));
            sd.E.push_back(scal(0.15));
            sd.L.push_back(scal(0.1));
            sd.H.push_back(scal(0.2));
        }
        m.subsystems.push_back(sd);
        m.budgets.push_back({scal(1.0), scal(1.0)});
    }
    m.weights.R.resize(4);
    m.weights.G.resize(4);
    for (int mu = 0; mu < 4; ++mu)
        for (int i = 0; i < 3; ++i) {
            m.weights.R[mu].push_back(scal(1.0));
            m.weights.G[mu].push_back(scal(1.0));
        }
    m.x0 = Eigen::VectorXd::Ones(3);
    m.use_stationary_distribution = true;
    m.initial_distribution = stationary_distribution(m.atlas);
    return m;
}

// Scalar single-mode model with every channel present, convenient for
// hand-checkable arithmetic.
inline mjls::PlantModel scalar_model(double A, double B, double E, double L, double H) {
    using namespace mjls;
    PlantModel m;
    m.atlas = build_atlas({1}, {{1}}, Eigen::MatrixXd::Zero(1, 1));
    SubsystemData sd;
    sd.A.push_back(scal(A));
    sd.B.push_back(B == 0.0 ? Eigen::MatrixXd(1, 0) : scal(B));
    sd.E.push_back(E == 0.0 ? Eigen::MatrixXd(1, 0) : scal(E));
    sd.L.push_back(L == 0.0 ? Eigen::MatrixXd(1, 0) : scal(L));
    sd.H.push_back(H == 0.0 ? Eigen::MatrixXd(0, 1) : scal(H));
    m.subsystems.push_back(sd);
    m.budgets.push_back({scal(1.0), scal(1.0)});
    m.weights.R.push_back({scal(1.0)});
    m.weights.G.push_back({B == 0.0 ? Eigen::MatrixXd(0, 0) : scal(1.0)});
    m.x0 = Eigen::VectorXd::Ones(1);
    m.initial_distribution = Eigen::VectorXd::Ones(1);
    return m;
}

inline Eigen::MatrixXi pattern3(std::initializer_list<int> v) {
    Eigen::MatrixXi C(3, 3);
    int k = 0;
    for (int x : v) {
        C(k / 3, k % 3) = x;
        ++k;
    }
    return C;
}

} // namespace testsupport
