#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gaborcomp/pursuit.hpp"

using namespace gaborcomp;

namespace {

Eigen::VectorXd random_signal(int m, uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd x(m);
    for (int i = 0; i < m; ++i) x[i] = rng.next_gaussian();
    return x;
}

// Greedy pursuit oracle built on entirely different machinery: dense
// adjoint correlations and Eigen's pivoted QR for the solves.
std::vector<long> oracle_support(const Eigen::VectorXd& x, const Dictionary& dict,
                                 int zeta) {
    std::vector<long> support;
    Eigen::VectorXcd r = x.cast<cplx>();
    for (int it = 0; it < zeta; ++it) {
        const Eigen::VectorXd scores = (dict.atoms.adjoint() * r).cwiseAbs();
        long best = -1;
        double best_score = 0.0;
        for (long c = 0; c < scores.size(); ++c) {
            bool taken = false;
            for (const long s : support) taken = taken || s == c;
            if (!taken && scores[c] > best_score) {
                best_score = scores[c];
                best = c;
            }
        }
        if (best < 0 || best_score < 1e-12) break;
        support.push_back(best);
        Eigen::MatrixXcd cols(dict.m, support.size());
        for (size_t k = 0; k < support.size(); ++k)
            cols.col(static_cast<long>(k)) = dict.atoms.col(support[k]);
        const Eigen::VectorXcd coef = cols.colPivHouseholderQr().solve(x.cast<cplx>());
        r = x.cast<cplx>() - cols * coef;
    }
    return support;
}

}  // namespace

TEST_CASE("fast correlation path matches the dense reference") {
    const Dictionary dict = build_multires(64);
    for (const uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed);
        Eigen::VectorXcd r(64);
        for (int i = 0; i < 64; ++i)
            r[i] = cplx(rng.next_gaussian(), seed == 1 ? 0.0 : rng.next_gaussian());
        const Eigen::VectorXd fast = correlation_magnitudes(dict, r);
        const Eigen::VectorXd dense = correlation_magnitudes_dense(dict, r);
        REQUIRE(fast.size() == dense.size());
        CHECK((fast - dense).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("planted real atoms are recovered with exact amplitudes") {
    const Dictionary dict = build_multires(64);
    // Two identically real columns with well-separated centers.
    const long a = atom_index({3, 1, 0}, 64);
    const long b = atom_index({3, 6, 4}, 64);
    const Eigen::VectorXd x =
        2.5 * dict.atoms.col(a).real() - 1.25 * dict.atoms.col(b).real();

    PursuitConfig cfg;
    cfg.zeta = 2;
    const SparseCode code = comp_single(x, dict, cfg);
    REQUIRE(code.support.size() == 2);
    CHECK(code.support[0] == a);
    CHECK(code.support[1] == b);
    CHECK(std::abs(code.coefficients[a] - cplx(2.5, 0.0)) < 1e-8);
    CHECK(std::abs(code.coefficients[b] - cplx(-1.25, 0.0)) < 1e-8);
    CHECK(code.residual_norms.front() == doctest::Approx(x.norm()));
    CHECK(code.residual_norms.back() < 1e-10);
    CHECK(code.dependent_cols.empty());

    double imag_norm = 0.0;
    const Eigen::VectorXd rec = reconstruct(dict, code, &imag_norm);
    CHECK((rec - x).norm() < 1e-10);
    CHECK(imag_norm < 1e-10);
}

TEST_CASE("a modulated burst resolves into its conjugate pair") {
    const Dictionary dict = build_multires(64);
    const long f_col = atom_index({4, 2, 3}, 64);
    const long mirror_col = atom_index({4, 2, 13}, 64);
    // Real input:  d + conj(d)  =  column f plus column 2^j - f.
    const Eigen::VectorXd x = dict.atoms.col(f_col).real() * 2.0;

    PursuitConfig cfg;
    cfg.zeta = 2;
    const SparseCode code = comp_single(x, dict, cfg);
    REQUIRE(code.support.size() == 2);
    CHECK(((code.support[0] == f_col && code.support[1] == mirror_col) ||
           (code.support[0] == mirror_col && code.support[1] == f_col)));
    CHECK(code.residual_norms.back() < 1e-9);
    // Coefficients of a real signal over a conjugate pair are conjugate.
    const cplx cf = code.coefficients[f_col];
    const cplx cm = code.coefficients[mirror_col];
    CHECK(std::abs(cf - std::conj(cm)) < 1e-9);
}

TEST_CASE("residuals decrease and stay orthogonal to the selection") {
    const Dictionary dict = build_multires(64);
    const Eigen::VectorXd x = random_signal(64, 17);
    PursuitConfig cfg;
    cfg.zeta = 40;
    const SparseCode code = comp_single(x, dict, cfg);
    REQUIRE(code.support.size() == 40);
    REQUIRE(code.residual_norms.size() == 41);
    for (size_t i = 1; i < code.residual_norms.size(); ++i)
        CHECK(code.residual_norms[i] <= code.residual_norms[i - 1] + 1e-12);

    // During the run: correlation against already-selected atoms.
    REQUIRE(code.selected_corr_max.size() == 40);
    CHECK(code.selected_corr_max[0] == 0.0);
    for (const double v : code.selected_corr_max) CHECK(v < 1e-9 * x.norm());

    // After the run: the final residual against the whole selection.
    Eigen::VectorXcd r = x.cast<cplx>();
    for (const long s : code.support)
        r -= dict.atoms.col(s) * code.coefficients[s];
    for (const long s : code.support)
        CHECK(std::abs(dict.atoms.col(s).dot(r)) < 1e-9 * x.norm());
    CHECK(std::abs(r.norm() - code.residual_norms.back()) < 1e-9);
}

TEST_CASE("a full budget drives the residual to numerical zero") {
    const Dictionary dict = build_multires(16);
    const Eigen::VectorXd x = random_signal(16, 23);
    PursuitConfig cfg;
    cfg.zeta = 16;
    const SparseCode code = comp_single(x, dict, cfg);
    CHECK(code.residual_norms.back() < 1e-9 * x.norm());
}

TEST_CASE("pursuit agrees with a dense greedy oracle") {
    const Dictionary dict = build_multires(16);
    PursuitConfig cfg;
    cfg.zeta = 3;
    for (const uint64_t seed : {31ull, 32ull, 33ull, 34ull, 35ull}) {
        const Eigen::VectorXd x = random_signal(16, seed);
        const SparseCode code = comp_single(x, dict, cfg);
        const std::vector<long> expected = oracle_support(x, dict, 3);
        CHECK(code.support == expected);
    }
}

TEST_CASE("joint pursuit with one segment equals the single path bitwise") {
    const Dictionary dict = build_multires(64);
    const Eigen::VectorXd x = random_signal(64, 41);
    PursuitConfig cfg;
    cfg.zeta = 12;
    const SparseCode single = comp_single(x, dict, cfg);
    const JointSparseCode joint = comp_joint({x}, dict, cfg);
    REQUIRE(joint.codes.size() == 1);
    const SparseCode& jc = joint.codes[0];
    CHECK(jc.support == single.support);
    CHECK(jc.support == joint.shared_support);
    CHECK(jc.residual_norms == single.residual_norms);
    CHECK(jc.dependent_cols == single.dependent_cols);
    REQUIRE(jc.coefficients.size() == single.coefficients.size());
    for (long c = 0; c < jc.coefficients.size(); ++c) {
        CHECK(jc.coefficients[c].real() == single.coefficients[c].real());
        CHECK(jc.coefficients[c].imag() == single.coefficients[c].imag());
    }
}

TEST_CASE("joint pursuit shares one support and solves per segment") {
    const Dictionary dict = build_multires(64);
    const Eigen::VectorXd x1 = random_signal(64, 51);
    const Eigen::VectorXd x2 = random_signal(64, 52);
    const Eigen::VectorXd x3 = 3.0 * x1;
    PursuitConfig cfg;
    cfg.zeta = 10;
    const JointSparseCode joint = comp_joint({x1, x2, x3}, dict, cfg);
    REQUIRE(joint.codes.size() == 3);
    for (const SparseCode& code : joint.codes)
        CHECK(code.support == joint.shared_support);
    bool any_diff = false;
    for (long c : joint.shared_support)
        any_diff = any_diff ||
                   std::abs(joint.codes[0].coefficients[c] -
                            joint.codes[1].coefficients[c]) > 1e-6;
    CHECK(any_diff);
    // Least squares is linear in the input, so a scaled member scales.
    for (const long c : joint.shared_support)
        CHECK(std::abs(joint.codes[2].coefficients[c] -
                       3.0 * joint.codes[0].coefficients[c]) < 1e-10);
}

TEST_CASE("relative residual tolerance stops the pursuit early") {
    const Dictionary dict = build_multires(64);
    const Eigen::VectorXd x = random_signal(64, 61);
    PursuitConfig cfg;
    cfg.zeta = 64;
    cfg.residual_tol = 0.3;
    const SparseCode code = comp_single(x, dict, cfg);
    CHECK(code.support.size() < 64);
    CHECK(code.residual_norms.back() < 0.3 * x.norm());
    // One step earlier the tolerance was not yet met.
    CHECK(code.residual_norms[code.residual_norms.size() - 2] >= 0.3 * x.norm());
}

TEST_CASE("zero input produces an empty support") {
    const Dictionary dict = build_multires(64);
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(64);
    PursuitConfig cfg;
    cfg.zeta = 5;
    const SparseCode code = comp_single(x, dict, cfg);
    CHECK(code.support.empty());
    CHECK(code.residual_norms == std::vector<double>{0.0});
    CHECK(code.coefficients.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pursuit validates its inputs") {
    const Dictionary dict = build_multires(64);
    const Eigen::VectorXd x = random_signal(64, 71);
    PursuitConfig cfg;
    cfg.zeta = 0;
    CHECK_THROWS_AS(comp_single(x, dict, cfg), InvalidSpec);
    cfg.zeta = 65;
    CHECK_THROWS_AS(comp_single(x, dict, cfg), InvalidSpec);
    cfg.zeta = 5;
    cfg.residual_tol = -0.1;
    CHECK_THROWS_AS(comp_single(x, dict, cfg), InvalidSpec);
    cfg.residual_tol = 1.5;
    CHECK_THROWS_AS(comp_single(x, dict, cfg), InvalidSpec);
    cfg = PursuitConfig{};
    cfg.zeta = 4;
    CHECK_THROWS_AS(comp_joint({}, dict, cfg), EmptyInput);
    CHECK_THROWS_AS(comp_joint({x, random_signal(32, 72)}, dict, cfg), DimError);
}

TEST_CASE("complex least squares matches Eigen and flags dependents") {
    Rng rng(81);
    const int m = 24, n = 6;
    Eigen::MatrixXcd cols(m, n);
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < m; ++r)
            cols(r, c) = cplx(rng.next_gaussian(), rng.next_gaussian());
    Eigen::VectorXcd x(m);
    for (int r = 0; r < m; ++r) x[r] = cplx(rng.next_gaussian(), rng.next_gaussian());

    const Eigen::VectorXcd mine = least_squares_complex(cols, x);
    const Eigen::VectorXcd ref = cols.colPivHouseholderQr().solve(x);
    CHECK((mine - ref).norm() < 1e-10 * ref.norm());

    // A duplicated column is dependent: zero coefficient, same fit.
    Eigen::MatrixXcd dup(m, n + 1);
    dup.leftCols(n) = cols;
    dup.col(n) = cols.col(2);
    std::vector<int> dependent;
    const Eigen::VectorXcd with_dup = least_squares_complex(dup, x, -1.0, &dependent);
    REQUIRE(dependent == std::vector<int>{n});
    CHECK(with_dup[n] == cplx(0.0, 0.0));
    CHECK((dup * with_dup - cols * ref).norm() < 1e-9 * x.norm());
}
