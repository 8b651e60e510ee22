#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "mjls/errors.hpp"

namespace mjls {

// Joint mode structure of the large-scale system.  The index of each mode
// vector fixes the scalar encoding of the joint mode: global mode mu
// (1-based) corresponds to mode_vectors[mu-1].
struct ModeAtlas {
    int N = 0;                                  // number of subsystems
    std::vector<int> local_mode_counts;         // M_i, one per subsystem
    std::vector<std::vector<int>> mode_vectors; // each entry is [mu_1..mu_N], 1-based
    Eigen::MatrixXd generator;                  // M x M transition-rate matrix

    int M() const { return static_cast<int>(mode_vectors.size()); }
};

inline std::uint64_t atlas_hash(const ModeAtlas& atlas) {
    // FNV-1a over the structural content, enough to detect mixed-atlas use.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t x) {
        for (int k = 0; k < 8; ++k) {
            h ^= (x >> (8 * k)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(static_cast<std::uint64_t>(atlas.N));
    for (int c : atlas.local_mode_counts) mix(static_cast<std::uint64_t>(c));
    for (const auto& v : atlas.mode_vectors)
        for (int m : v) mix(static_cast<std::uint64_t>(m));
    for (int r = 0; r < atlas.generator.rows(); ++r)
        for (int c = 0; c < atlas.generator.cols(); ++c) {
            double d = atlas.generator(r, c);
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(d));
            std::memcpy(&bits, &d, sizeof(bits));
            mix(bits);
        }
    return h;
}

inline ModeAtlas build_atlas(std::vector<int> local_mode_counts,
                             std::vector<std::vector<int>> mode_vectors,
                             Eigen::MatrixXd generator) {
    const int N = static_cast<int>(local_mode_counts.size());
    const int M = static_cast<int>(mode_vectors.size());
    if (M == 0)
        throw Error(ErrorCode::IndexOutOfRange, "mode_vectors must be non-empty");
    for (int i = 0; i < N; ++i)
        if (local_mode_counts[i] < 1)
            throw Error(ErrorCode::LocalModeOutOfRange,
                        "subsystem " + std::to_string(i + 1) + " has local mode count < 1");

    std::vector<std::vector<bool>> seen(N);
    for (int i = 0; i < N; ++i) seen[i].assign(local_mode_counts[i], false);

    for (std::size_t a = 0; a < mode_vectors.size(); ++a) {
        const auto& v = mode_vectors[a];
        if (static_cast<int>(v.size()) != N)
            throw Error(ErrorCode::DimensionMismatch,
                        "mode vector " + std::to_string(a + 1) + " has wrong length");
        for (int i = 0; i < N; ++i) {
            if (v[i] < 1 || v[i] > local_mode_counts[i])
                throw Error(ErrorCode::LocalModeOutOfRange,
                            "mode vector " + std::to_string(a + 1) + ", component " +
                                std::to_string(i + 1) + " out of range");
            seen[i][v[i] - 1] = true;
        }
        for (std::size_t b = a + 1; b < mode_vectors.size(); ++b)
            if (mode_vectors[b] == v)
                throw Error(ErrorCode::DuplicateModeVector,
                            "mode vectors " + std::to_string(a + 1) + " and " +
                                std::to_string(b + 1) + " coincide");
    }
    for (int i = 0; i < N; ++i)
        for (int m = 0; m < local_mode_counts[i]; ++m)
            if (!seen[i][m])
                throw Error(ErrorCode::LocalModeOutOfRange,
                            "local mode " + std::to_string(m + 1) + " of subsystem " +
                                std::to_string(i + 1) + " never appears in a mode vector");

    if (generator.rows() != M || generator.cols() != M)
        throw Error(ErrorCode::DimensionMismatch, "generator must be M x M");
    for (int r = 0; r < M; ++r) {
        double row_sum = 0.0;
        for (int c = 0; c < M; ++c) {
            if (c != r && generator(r, c) < 0.0)
                throw Error(ErrorCode::NegativeOffDiagonal,
                            "generator(" + std::to_string(r + 1) + "," + std::to_string(c + 1) +
                                ") is negative");
            row_sum += generator(r, c);
        }
        if (std::abs(row_sum) > 1e-12)
            throw Error(ErrorCode::GeneratorRowSumNonzero,
                        "generator row " + std::to_string(r + 1) + " sums to " +
                            std::to_string(row_sum));
    }

    ModeAtlas atlas;
    atlas.N = N;
    atlas.local_mode_counts = std::move(local_mode_counts);
    atlas.mode_vectors = std::move(mode_vectors);
    atlas.generator = std::move(generator);
    return atlas;
}

// psi_i^{-1}: component i of the joint mode vector encoded by mu.  All
// arguments are 1-based.
inline int project_mode(const ModeAtlas& atlas, int mu, int i) {
    if (mu < 1 || mu > atlas.M())
        throw Error(ErrorCode::IndexOutOfRange, "global mode index out of range");
    if (i < 1 || i > atlas.N)
        throw Error(ErrorCode::IndexOutOfRange, "subsystem index out of range");
    return atlas.mode_vectors[mu - 1][i - 1];
}

// psi: index of a joint mode vector.
inline int encode_mode(const ModeAtlas& atlas, const std::vector<int>& vec) {
    for (int mu = 1; mu <= atlas.M(); ++mu)
        if (atlas.mode_vectors[mu - 1] == vec) return mu;
    throw Error(ErrorCode::IndexOutOfRange, "mode vector not in atlas");
}

// Mode-information pattern and the derived many-to-one maps phi_i.
struct InfoPattern {
    Eigen::MatrixXi C;                  // N x N binary, unit diagonal
    std::vector<std::vector<int>> phi;  // phi[i][mu-1] = sigma_i in {1..M_ci}
    std::vector<int> class_counts;      // M_ci per subsystem
    std::uint64_t atlas_fingerprint = 0;

    int N() const { return static_cast<int>(phi.size()); }
    int M() const { return phi.empty() ? 0 : static_cast<int>(phi.front().size()); }
};

inline InfoPattern build_info_pattern(const ModeAtlas& atlas, const Eigen::MatrixXi& C) {
    const int N = atlas.N;
    const int M = atlas.M();
    if (C.rows() != N || C.cols() != N)
        throw Error(ErrorCode::DimensionMismatch, "pattern matrix must be N x N");
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            if (C(i, j) != 0 && C(i, j) != 1)
                throw Error(ErrorCode::NonBinaryEntry,
                            "pattern entry (" + std::to_string(i + 1) + "," +
                                std::to_string(j + 1) + ") is not binary");
    for (int i = 0; i < N; ++i)
        if (C(i, i) != 1)
            throw Error(ErrorCode::MissingSelfMode,
                        "controller " + std::to_string(i + 1) + " must see its own mode");

    InfoPattern pattern;
    pattern.C = C;
    pattern.phi.resize(N);
    pattern.class_counts.resize(N);
    pattern.atlas_fingerprint = atlas_hash(atlas);
    for (int i = 0; i < N; ++i) {
        pattern.phi[i].resize(M);
        // class labels in order of first appearance over mu = 1..M
        std::map<std::vector<int>, int> classes;
        for (int mu = 0; mu < M; ++mu) {
            std::vector<int> masked(N);
            for (int j = 0; j < N; ++j) masked[j] = C(i, j) * atlas.mode_vectors[mu][j];
            auto it = classes.find(masked);
            if (it == classes.end())
                it = classes.emplace(masked, static_cast<int>(classes.size()) + 1).first;
            pattern.phi[i][mu] = it->second;
        }
        pattern.class_counts[i] = static_cast<int>(classes.size());
    }
    return pattern;
}

// True iff controller i can recover the global mode from what it sees.
inline bool is_globally_equivalent(const InfoPattern& pattern, int i) {
    if (i < 1 || i > pattern.N())
        throw Error(ErrorCode::IndexOutOfRange, "subsystem index out of range");
    return pattern.class_counts[i - 1] == pattern.M();
}

inline bool is_globally_equivalent_all(const InfoPattern& pattern) {
    for (int i = 1; i <= pattern.N(); ++i)
        if (!is_globally_equivalent(pattern, i)) return false;
    return true;
}

// True iff pattern_b carries at least as much mode information as pattern_a:
// the partition induced by each phi_i of b refines that of a.
inline bool refines(const InfoPattern& a, const InfoPattern& b) {
    if (a.atlas_fingerprint != b.atlas_fingerprint)
        throw Error(ErrorCode::AtlasMismatch, "patterns built over different atlases");
    const int M = a.M();
    for (int i = 0; i < a.N(); ++i) {
        // class of b determines class of a
        std::map<int, int> b_to_a;
        for (int mu = 0; mu < M; ++mu) {
            auto [it, inserted] = b_to_a.emplace(b.phi[i][mu], a.phi[i][mu]);
            if (!inserted && it->second != a.phi[i][mu]) return false;
        }
    }
    return true;
}

} // namespace mjls
