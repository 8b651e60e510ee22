#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "mjls/mode_atlas.hpp"

using namespace mjls;

namespace {

Eigen::MatrixXd four_mode_generator() {
    Eigen::MatrixXd Q(4, 4);
    Q << -3, 1, 1, 1,
         1, -2, 0.5, 0.5,
         0.8, 0.6, -2, 0.6,
         0.7, 0.7, 0.6, -2;
    return Q;
}

// N=3 joint-mode set with four admissible combinations
ModeAtlas example_atlas() {
    return build_atlas({2, 2, 2}, {{1, 1, 1}, {1, 1, 2}, {1, 2, 2}, {2, 1, 2}},
                       four_mode_generator());
}

// the sweep atlas used by the committed reference model
ModeAtlas sweep_atlas() {
    return build_atlas({2, 2, 2}, {{1, 1, 1}, {1, 2, 2}, {2, 1, 2}, {2, 2, 1}},
                       four_mode_generator());
}

Eigen::MatrixXi pattern_rows(std::initializer_list<int> v) {
    Eigen::MatrixXi C(3, 3);
    int k = 0;
    for (int x : v) {
        C(k / 3, k % 3) = x;
        ++k;
    }
    return C;
}

} // namespace

TEST_CASE("atlas construction fixes the joint-mode encoding") {
    ModeAtlas atlas = example_atlas();
    CHECK(atlas.M() == 4);
    CHECK(atlas.N == 3);
    CHECK(encode_mode(atlas, {1, 1, 2}) == 2);
}

TEST_CASE("single-mode atlas") {
    ModeAtlas atlas = build_atlas({1}, {{1}}, Eigen::MatrixXd::Zero(1, 1));
    CHECK(atlas.M() == 1);
    CHECK(encode_mode(atlas, {1}) == 1);
    CHECK(project_mode(atlas, 1, 1) == 1);
}

TEST_CASE("full product atlas recovers each coordinate") {
    // oracle: enumerate the Cartesian product in lexicographic order
    std::vector<std::vector<int>> expected;
    for (int a = 1; a <= 2; ++a)
        for (int b = 1; b <= 2; ++b) expected.push_back({a, b});

    Eigen::MatrixXd Q(4, 4);
    Q << -3, 1, 1, 1, 1, -3, 1, 1, 1, 1, -3, 1, 1, 1, 1, -3;
    ModeAtlas atlas = build_atlas({2, 2}, expected, Q);
    CHECK(atlas.M() == 4);
    for (int mu = 1; mu <= 4; ++mu)
        for (int i = 1; i <= 2; ++i)
            CHECK(project_mode(atlas, mu, i) == expected[mu - 1][i - 1]);
}

TEST_CASE("project_mode on the example atlas") {
    ModeAtlas atlas = example_atlas();
    CHECK(project_mode(atlas, 3, 1) == 1);
    CHECK(project_mode(atlas, 3, 2) == 2);
    CHECK(project_mode(atlas, 3, 3) == 2);
    CHECK_THROWS_AS(project_mode(atlas, 5, 1), Error);
    CHECK_THROWS_AS(project_mode(atlas, 1, 4), Error);
}

TEST_CASE("encoding round trip reconstructs every mode vector") {
    ModeAtlas atlas = sweep_atlas();
    for (int mu = 1; mu <= atlas.M(); ++mu) {
        std::vector<int> rebuilt;
        for (int i = 1; i <= atlas.N; ++i) rebuilt.push_back(project_mode(atlas, mu, i));
        CHECK(rebuilt == atlas.mode_vectors[mu - 1]);
        CHECK(encode_mode(atlas, rebuilt) == mu);
    }
}

TEST_CASE("atlas validation rejects malformed input") {
    Eigen::MatrixXd Q0 = Eigen::MatrixXd::Zero(2, 2);
    auto code = [](auto fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::ParseError;
    };
    CHECK(code([&] { build_atlas({2}, {{1}, {1}}, Q0); }) == ErrorCode::DuplicateModeVector);
    CHECK(code([&] { build_atlas({2}, {{1}, {3}}, Q0); }) == ErrorCode::LocalModeOutOfRange);
    // a declared local mode that never occurs
    CHECK(code([&] { build_atlas({3}, {{1}, {2}}, Q0); }) == ErrorCode::LocalModeOutOfRange);
    Eigen::MatrixXd bad_sum(2, 2);
    bad_sum << -1, 1.5, 1, -1;
    CHECK(code([&] { build_atlas({2}, {{1}, {2}}, bad_sum); }) ==
          ErrorCode::GeneratorRowSumNonzero);
    Eigen::MatrixXd neg(2, 2);
    neg << 1, -1, 1, -1;
    CHECK(code([&] { build_atlas({2}, {{1}, {2}}, neg); }) == ErrorCode::NegativeOffDiagonal);
}

TEST_CASE("generator row-sum tolerance is tight") {
    Eigen::MatrixXd Q(2, 2);
    Q << -1, 1 + 5e-13, 1, -1;
    CHECK_NOTHROW(build_atlas({2}, {{1}, {2}}, Q));
    Q(0, 1) = 1 + 1e-11;
    CHECK_THROWS_AS(build_atlas({2}, {{1}, {2}}, Q), Error);
}

TEST_CASE("masked-vector classes on the example atlas") {
    ModeAtlas atlas = example_atlas();
    InfoPattern p = build_info_pattern(atlas, pattern_rows({1, 1, 0, 0, 1, 0, 0, 0, 1}));
    CHECK(p.phi[0] == std::vector<int>{1, 1, 2, 3});
    CHECK(p.class_counts[0] == 3);
}

TEST_CASE("identity pattern relabels the local mode") {
    ModeAtlas atlas = example_atlas();
    InfoPattern p = build_info_pattern(atlas, Eigen::MatrixXi::Identity(3, 3));
    for (int i = 1; i <= 3; ++i) {
        CHECK(p.class_counts[i - 1] == atlas.local_mode_counts[i - 1]);
        // classes must separate exactly by local mode
        for (int mu = 1; mu <= 4; ++mu)
            for (int nu = 1; nu <= 4; ++nu)
                CHECK((p.phi[i - 1][mu - 1] == p.phi[i - 1][nu - 1]) ==
                      (project_mode(atlas, mu, i) == project_mode(atlas, nu, i)));
    }
}

TEST_CASE("all-ones pattern is a bijection") {
    ModeAtlas atlas = example_atlas();
    InfoPattern p = build_info_pattern(atlas, Eigen::MatrixXi::Ones(3, 3));
    for (int i = 0; i < 3; ++i) {
        CHECK(p.class_counts[i] == 4);
        CHECK(p.phi[i] == std::vector<int>{1, 2, 3, 4});
    }
}

TEST_CASE("pattern validation") {
    ModeAtlas atlas = example_atlas();
    Eigen::MatrixXi C = Eigen::MatrixXi::Identity(3, 3);
    C(0, 1) = 2;
    CHECK_THROWS_AS(build_info_pattern(atlas, C), Error);
    C(0, 1) = 0;
    C(1, 1) = 0;
    CHECK_THROWS_AS(build_info_pattern(atlas, C), Error);
}

TEST_CASE("two-route class computation agrees") {
    // oracle route: mask, then label by first appearance, written independently
    ModeAtlas atlas = sweep_atlas();
    const Eigen::MatrixXi C = pattern_rows({1, 0, 1, 1, 1, 0, 0, 1, 1});
    std::vector<std::vector<int>> oracle(3);
    for (int i = 0; i < 3; ++i) {
        std::vector<std::vector<int>> seen;
        for (int mu = 0; mu < 4; ++mu) {
            std::vector<int> masked;
            for (int j = 0; j < 3; ++j)
                masked.push_back(C(i, j) == 1 ? atlas.mode_vectors[mu][j] : 0);
            int label = 0;
            for (std::size_t k = 0; k < seen.size(); ++k)
                if (seen[k] == masked) label = static_cast<int>(k) + 1;
            if (label == 0) {
                seen.push_back(masked);
                label = static_cast<int>(seen.size());
            }
            oracle[i].push_back(label);
        }
    }
    InfoPattern p = build_info_pattern(atlas, C);
    CHECK(p.phi == oracle);
}

TEST_CASE("surjectivity of the class labels") {
    ModeAtlas atlas = sweep_atlas();
    for (auto C : {pattern_rows({1, 0, 0, 0, 1, 0, 0, 0, 1}),
                   pattern_rows({1, 1, 0, 0, 1, 1, 0, 1, 1})}) {
        InfoPattern p = build_info_pattern(atlas, C);
        for (int i = 0; i < 3; ++i) {
            std::set<int> labels(p.phi[i].begin(), p.phi[i].end());
            CHECK(static_cast<int>(labels.size()) == p.class_counts[i]);
            CHECK(*labels.begin() == 1);
            CHECK(*labels.rbegin() == p.class_counts[i]);
        }
    }
}

TEST_CASE("global equivalence detection") {
    ModeAtlas atlas = sweep_atlas();
    // oracle: count distinct masked vectors for row 3 of the c4 pattern
    {
        std::set<std::vector<int>> distinct;
        for (int mu = 0; mu < 4; ++mu)
            distinct.insert({0, atlas.mode_vectors[mu][1], atlas.mode_vectors[mu][2]});
        CHECK(distinct.size() == 4);
    }
    InfoPattern c4 = build_info_pattern(atlas, pattern_rows({1, 1, 0, 0, 1, 1, 0, 1, 1}));
    CHECK(is_globally_equivalent(c4, 3));
    InfoPattern ones = build_info_pattern(atlas, Eigen::MatrixXi::Ones(3, 3));
    CHECK(is_globally_equivalent_all(ones));

    // oracle: identity row for i=3 collapses to the local mode count
    {
        std::set<std::vector<int>> distinct;
        for (int mu = 0; mu < 4; ++mu) distinct.insert({0, 0, atlas.mode_vectors[mu][2]});
        CHECK(distinct.size() == 2);
    }
    InfoPattern id = build_info_pattern(atlas, Eigen::MatrixXi::Identity(3, 3));
    CHECK_FALSE(is_globally_equivalent(id, 3));
    CHECK(is_globally_equivalent(id, 3) == (id.class_counts[2] == id.M()));
    CHECK_THROWS_AS(is_globally_equivalent(id, 4), Error);
}

TEST_CASE("refinement along the sweep chain") {
    ModeAtlas atlas = sweep_atlas();
    std::vector<Eigen::MatrixXi> chain{
        pattern_rows({1, 0, 0, 0, 1, 0, 0, 0, 1}), pattern_rows({1, 1, 0, 0, 1, 0, 0, 0, 1}),
        pattern_rows({1, 1, 0, 0, 1, 1, 0, 0, 1}), pattern_rows({1, 1, 0, 0, 1, 1, 0, 1, 1}),
        pattern_rows({1, 1, 1, 1, 1, 1, 1, 1, 1})};
    std::vector<InfoPattern> patterns;
    for (const auto& C : chain) patterns.push_back(build_info_pattern(atlas, C));

    // oracle: partition comparison (every class of b lies inside a class of a)
    auto refines_oracle = [](const InfoPattern& a, const InfoPattern& b) {
        for (int i = 0; i < a.N(); ++i)
            for (int mu = 0; mu < a.M(); ++mu)
                for (int nu = 0; nu < a.M(); ++nu)
                    if (b.phi[i][mu] == b.phi[i][nu] && a.phi[i][mu] != a.phi[i][nu])
                        return false;
        return true;
    };

    for (std::size_t k = 0; k + 1 < patterns.size(); ++k) {
        CHECK(refines_oracle(patterns[k], patterns[k + 1]));
        CHECK(refines(patterns[k], patterns[k + 1]));
    }
    CHECK(refines(patterns[0], patterns[4]));
    for (const auto& p : patterns) CHECK(refines(p, p));
    CHECK_FALSE(refines(patterns[2], patterns[0]));
}

TEST_CASE("entrywise pattern dominance implies refinement") {
    ModeAtlas atlas = sweep_atlas();
    std::vector<Eigen::MatrixXi> all;
    all.push_back(pattern_rows({1, 0, 0, 0, 1, 0, 0, 0, 1}));
    all.push_back(pattern_rows({1, 0, 1, 0, 1, 0, 1, 0, 1}));
    all.push_back(pattern_rows({1, 1, 1, 0, 1, 0, 1, 1, 1}));
    all.push_back(pattern_rows({1, 1, 1, 1, 1, 1, 1, 1, 1}));
    for (const auto& Ca : all)
        for (const auto& Cb : all) {
            bool dominated = true;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    if (Ca(r, c) > Cb(r, c)) dominated = false;
            if (dominated)
                CHECK(refines(build_info_pattern(atlas, Ca), build_info_pattern(atlas, Cb)));
        }
}

TEST_CASE("patterns over different atlases cannot be compared") {
    InfoPattern a = build_info_pattern(example_atlas(), Eigen::MatrixXi::Identity(3, 3));
    InfoPattern b = build_info_pattern(sweep_atlas(), Eigen::MatrixXi::Identity(3, 3));
    CHECK_THROWS_AS(refines(a, b), Error);
}

TEST_CASE("atlas fingerprints separate distinct atlases") {
    CHECK(atlas_hash(example_atlas()) != atlas_hash(sweep_atlas()));
    CHECK(atlas_hash(example_atlas()) == atlas_hash(example_atlas()));
    ModeAtlas perturbed = example_atlas();
    perturbed.generator(0, 1) += 1e-9;
    perturbed.generator(0, 0) -= 1e-9;
    CHECK(atlas_hash(perturbed) != atlas_hash(example_atlas()));
}
