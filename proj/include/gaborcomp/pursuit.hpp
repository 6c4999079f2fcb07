#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gaborcomp/dictionary.hpp"

namespace gaborcomp {

struct PursuitConfig {
    int zeta = 511;              // maximum number of selected atoms
    double residual_tol = 0.0;   // relative residual stop in [0, 1); 0 disables
    // Columns whose component orthogonal to the current selection has
    // norm below rank_tol_scale * ||x|| are kept with zero coefficient.
    double rank_tol_scale = 1e-10;
};

// Sparse decomposition of one segment. coefficients is dense over all
// dictionary columns with nonzeros only on the support; residual_norms
// starts at ||x|| and appends one value per iteration.
struct SparseCode {
    Eigen::VectorXcd coefficients;
    std::vector<long> support;               // selection order
    std::vector<double> residual_norms;
    std::vector<long> dependent_cols;        // flagged rank-deficient picks
    // max |<d_i, r>| over already-selected columns, observed just before
    // each selection; for joint runs the magnitudes are summed over
    // segments. Diagnostic for orthogonality checks.
    std::vector<double> selected_corr_max;
    std::string segment_ref;
    int m = 0;
    int j_count = 0;
};

struct JointSparseCode {
    std::vector<SparseCode> codes;      // one per segment, same order
    std::vector<long> shared_support;   // equals every member's support
};

// Orthogonal matching pursuit with complex least squares on a single
// real segment. Selection maximizes |D^H r|; ties break to the lowest
// column index; a maximum correlation below 1e-12 stops early.
SparseCode comp_single(const Eigen::VectorXd& x, const Dictionary& dict,
                       const PursuitConfig& cfg);

// Joint variant: one shared support chosen by the summed correlation
// magnitudes over all segments, with per-segment coefficients. With a
// single segment this reduces exactly to comp_single.
JointSparseCode comp_joint(const std::vector<Eigen::VectorXd>& segments,
                           const Dictionary& dict, const PursuitConfig& cfg);

// Least-squares coefficients of x against the given columns, solved by
// incremental QR. Columns (in order) that are numerically dependent on
// their predecessors get coefficient zero; their positions are appended
// to dependent_out when provided. rank_tol < 0 selects 1e-10 * ||x||.
Eigen::VectorXcd least_squares_complex(const Eigen::MatrixXcd& columns,
                                       const Eigen::VectorXcd& x,
                                       double rank_tol = -1.0,
                                       std::vector<int>* dependent_out = nullptr);

// Real part of dict * coefficients. The imaginary residue norm, a
// diagnostic that should be near zero for real inputs, is reported
// through imag_norm when provided.
Eigen::VectorXd reconstruct(const Dictionary& dict, const SparseCode& code,
                            double* imag_norm = nullptr);

// |D^H r| computed densely. Reference implementation used by tests to
// validate the fast folded-FFT correlation path.
Eigen::VectorXd correlation_magnitudes_dense(const Dictionary& dict,
                                             const Eigen::VectorXcd& r);

// Fast |D^H r| for all columns at once: per (j, t) the Gaussian-weighted
// residual is folded modulo 2^j and transformed with a radix-2 FFT.
// Agrees with the dense path to near machine precision.
Eigen::VectorXd correlation_magnitudes(const Dictionary& dict,
                                       const Eigen::VectorXcd& r);

}  // namespace gaborcomp
