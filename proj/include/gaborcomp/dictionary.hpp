#pragma once

#include <Eigen/Dense>

#include "gaborcomp/common.hpp"

namespace gaborcomp {

// Discrete Gabor atom parameters at dyadic resolution j:
//   scale      alpha = 2^j
//   position   m0    = 2^j * t
//   frequency  omega = 2*pi*f / 2^j
// Valid ranges for signal length M (a power of two):
//   1 <= j <= log2(M)-1,  0 <= t < M/2^j,  0 <= f < 2^j.
struct AtomParams {
    int j = 1;
    int t = 0;
    int f = 0;
};

// Multiresolution complex Gabor dictionary. Columns are unit l2-norm;
// raw_norms keeps the pre-normalization norms so correlation paths and
// coefficient reporting can undo the scaling.
struct Dictionary {
    int m = 0;
    int j_count = 0;                 // number of resolution levels
    Eigen::MatrixXcd atoms;          // m x (j_count*m)
    Eigen::VectorXd raw_norms;       // j_count*m

    long cols() const { return static_cast<long>(j_count) * m; }
};

// log2 for exact powers of two; throws InvalidResolution otherwise.
int log2_exact(int m, const char* what);

// Gaussian window value exp(-pi*(delta/alpha)^2), flushed to exactly
// zero below 1e-300. Every Gabor evaluation in the project goes through
// this function so alternative evaluation orders agree bit-for-bit.
double gauss_window(double delta, double alpha);

// Unnormalized atom sampled on m points. Entries with omega*delta at a
// multiple of pi are evaluated exactly, so atoms with omega in {0, pi}
// have identically zero imaginary part and conjugate-mirror frequency
// pairs (f, 2^j - f) are exact conjugates entry-wise.
Eigen::VectorXcd gabor_atom(const AtomParams& p, int m);

// All atoms of one resolution level, translation-major (column t*2^j+f),
// normalized to unit norm. Optionally reports raw norms.
Eigen::MatrixXcd build_single_res(int j, int m, Eigen::VectorXd* raw_norms = nullptr);

// Concatenation of levels j = 1..log2(m)-1. m must be a power of two.
Dictionary build_multires(int m);

// Column index of an atom: (j-1)*m + t*2^j + f.
long atom_index(const AtomParams& p, int m);
AtomParams params_of(long col, int m);

}  // namespace gaborcomp
