#include "gaborcomp/dictionary.hpp"

#include <cmath>
#include <string>

namespace gaborcomp {

int log2_exact(int m, const char* what) {
    if (m < 1 || (m & (m - 1)) != 0)
        throw InvalidResolution(std::string(what) + ": M must be a power of two, got " +
                                std::to_string(m));
    int l = 0;
    while ((1 << l) < m) ++l;
    return l;
}

double gauss_window(double delta, double alpha) {
    const double u = delta / alpha;
    const double v = std::exp(-M_PI * u * u);
    return v < 1e-300 ? 0.0 : v;
}

namespace {

void check_params(const AtomParams& p, int m, int levels) {
    if (p.j < 1 || p.j > levels)
        throw InvalidAtomParams("resolution j=" + std::to_string(p.j) +
                                " outside [1, " + std::to_string(levels) +
                                "] for M=" + std::to_string(m));
    const int scale = 1 << p.j;
    if (p.t < 0 || p.t >= m / scale)
        throw InvalidAtomParams("translation t=" + std::to_string(p.t) +
                                " outside [0, " + std::to_string(m / scale) +
                                ") at j=" + std::to_string(p.j));
    if (p.f < 0 || p.f >= scale)
        throw InvalidAtomParams("frequency f=" + std::to_string(p.f) +
                                " outside [0, " + std::to_string(scale) +
                                ") at j=" + std::to_string(p.j));
}

}  // namespace

Eigen::VectorXcd gabor_atom(const AtomParams& p, int m) {
    const int levels = log2_exact(m, "gabor_atom") - 1;
    if (levels < 1)
        throw InvalidResolution("gabor_atom: M must be at least 4, got " + std::to_string(m));
    check_params(p, m, levels);

    const int scale = 1 << p.j;          // alpha and the frequency modulus
    const long m0 = static_cast<long>(scale) * p.t;
    const double alpha = static_cast<double>(scale);

    Eigen::VectorXcd atom(m);
    for (int i = 0; i < m; ++i) {
        const long delta = i - m0;
        const double g = gauss_window(static_cast<double>(delta), alpha);
        // Phase is -2*pi*(f*delta mod 2^j)/2^j. Reducing the integer
        // numerator first keeps omega in {0, pi} exactly real and makes
        // (f, 2^j - f) pairs exact conjugates.
        long q = (p.f * delta) % scale;
        if (q < 0) q += scale;
        if (2 * q > scale) q -= scale;   // reduce to (-2^j/2, 2^j/2]
        double re, im;
        if (q == 0) {
            re = 1.0;
            im = 0.0;
        } else if (2 * q == scale) {
            re = -1.0;
            im = 0.0;
        } else {
            const double phase = 2.0 * M_PI * static_cast<double>(q) / scale;
            re = std::cos(phase);
            im = -std::sin(phase);
        }
        atom[i] = cplx(g * re, g * im);
    }
    return atom;
}

Eigen::MatrixXcd build_single_res(int j, int m, Eigen::VectorXd* raw_norms) {
    const int levels = log2_exact(m, "build_single_res") - 1;
    if (levels < 1)
        throw InvalidResolution("build_single_res: M must be at least 4");
    if (j < 1 || j > levels)
        throw InvalidResolution("build_single_res: j=" + std::to_string(j) +
                                " outside [1, " + std::to_string(levels) + "]");

    const int scale = 1 << j;
    const int translations = m / scale;
    Eigen::MatrixXcd block(m, m);
    if (raw_norms) raw_norms->resize(m);
    for (int t = 0; t < translations; ++t) {
        for (int f = 0; f < scale; ++f) {
            const long col = static_cast<long>(t) * scale + f;
            Eigen::VectorXcd atom = gabor_atom({j, t, f}, m);
            const double norm = atom.norm();
            // The window always contains its unit center sample, so the
            // norm is at least 1 and the division is safe.
            block.col(col) = atom / norm;
            if (raw_norms) (*raw_norms)[col] = norm;
        }
    }
    return block;
}

Dictionary build_multires(int m) {
    const int levels = log2_exact(m, "build_multires") - 1;
    if (levels < 2)
        throw InvalidResolution("build_multires: M must be at least 8, got " +
                                std::to_string(m));
    Dictionary d;
    d.m = m;
    d.j_count = levels;
    d.atoms.resize(m, static_cast<long>(levels) * m);
    d.raw_norms.resize(static_cast<long>(levels) * m);
    for (int j = 1; j <= levels; ++j) {
        Eigen::VectorXd norms;
        d.atoms.middleCols(static_cast<long>(j - 1) * m, m) = build_single_res(j, m, &norms);
        d.raw_norms.segment(static_cast<long>(j - 1) * m, m) = norms;
    }
    return d;
}

long atom_index(const AtomParams& p, int m) {
    const int levels = log2_exact(m, "atom_index") - 1;
    check_params(p, m, levels);
    return static_cast<long>(p.j - 1) * m + static_cast<long>(p.t) * (1 << p.j) + p.f;
}

AtomParams params_of(long col, int m) {
    const int levels = log2_exact(m, "params_of") - 1;
    if (col < 0 || col >= static_cast<long>(levels) * m)
        throw InvalidAtomParams("column " + std::to_string(col) + " outside [0, " +
                                std::to_string(static_cast<long>(levels) * m) + ")");
    AtomParams p;
    p.j = static_cast<int>(col / m) + 1;
    const long rem = col % m;
    p.t = static_cast<int>(rem >> p.j);
    p.f = static_cast<int>(rem & ((1L << p.j) - 1));
    return p;
}

}  // namespace gaborcomp
