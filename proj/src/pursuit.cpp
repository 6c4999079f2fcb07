#include "gaborcomp/pursuit.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gaborcomp {

namespace {

// In-place radix-2 FFT with positive exponent, exp(+2*pi*i*n*k/N).
// roots[k] = exp(+2*pi*i*k/N) for k < N/2, precomputed by the caller.
void fft_pos(std::vector<cplx>& a, const std::vector<cplx>& roots) {
    const int n = static_cast<int>(a.size());
    if (n <= 1) return;
    for (int i = 1, rev = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; rev & bit; bit >>= 1) rev ^= bit;
        rev |= bit;
        if (i < rev) std::swap(a[i], a[rev]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const int stride = n / len;
        const int half = len / 2;
        for (int i = 0; i < n; i += len) {
            for (int k = 0; k < half; ++k) {
                const cplx w = roots[static_cast<size_t>(k) * stride];
                const cplx even = a[i + k];
                const cplx odd = a[i + k + half] * w;
                a[i + k] = even + odd;
                a[i + k + half] = even - odd;
            }
        }
    }
}

// Correlates a residual against every dictionary column without forming
// D^H r densely. For a fixed (j, t) block the Gaussian-weighted residual
// is folded modulo 2^j; a 2^j-point FFT then yields the correlations for
// all frequencies of that block at once. The Gaussian weights come from
// the same gauss_window used to build the dictionary, so the two paths
// see bit-identical windows.
class FastCorrelator {
public:
    explicit FastCorrelator(const Dictionary& dict)
        : m_(dict.m), j_count_(dict.j_count) {
        gauss_.resize(j_count_);
        radius_.resize(j_count_);
        roots_.resize(j_count_);
        for (int j = 1; j <= j_count_; ++j) {
            const double alpha = static_cast<double>(1 << j);
            std::vector<double>& table = gauss_[j - 1];
            table.assign(static_cast<size_t>(2 * m_ - 1), 0.0);
            int radius = 0;
            for (int delta = -(m_ - 1); delta <= m_ - 1; ++delta) {
                const double g = gauss_window(static_cast<double>(delta), alpha);
                table[static_cast<size_t>(delta + m_ - 1)] = g;
                if (g > 0.0) radius = std::max(radius, std::abs(delta));
            }
            radius_[j - 1] = radius;
            const int scale = 1 << j;
            std::vector<cplx>& roots = roots_[j - 1];
            roots.resize(static_cast<size_t>(scale / 2));
            for (int k = 0; k < scale / 2; ++k)
                roots[k] = std::polar(1.0, 2.0 * M_PI * k / scale);
        }
    }

    // out[col] += |<d_col, r>| for every column.
    void accumulate_abs(const Eigen::VectorXcd& r, const Eigen::VectorXd& raw_norms,
                        Eigen::VectorXd& out) const {
        std::vector<cplx> acc;
        for (int j = 1; j <= j_count_; ++j) {
            const int scale = 1 << j;
            const int translations = m_ / scale;
            const int radius = radius_[j - 1];
            const double* table = gauss_[j - 1].data() + (m_ - 1);
            const long base = static_cast<long>(j - 1) * m_;
            acc.assign(static_cast<size_t>(scale), cplx(0.0, 0.0));
            for (int t = 0; t < translations; ++t) {
                std::fill(acc.begin(), acc.end(), cplx(0.0, 0.0));
                const long m0 = static_cast<long>(scale) * t;
                const long lo = std::max<long>(-radius, -m0);
                const long hi = std::min<long>(radius, m_ - 1 - m0);
                int p = static_cast<int>(((lo % scale) + scale) % scale);
                const cplx* rv = r.data() + m0;
                for (long delta = lo; delta <= hi; ++delta) {
                    acc[p] += table[delta] * rv[delta];
                    p = (p + 1) & (scale - 1);
                }
                fft_pos(acc, roots_[j - 1]);
                const long col0 = base + static_cast<long>(t) * scale;
                for (int f = 0; f < scale; ++f)
                    out[col0 + f] += std::abs(acc[f]) / raw_norms[col0 + f];
            }
        }
    }

private:
    int m_;
    int j_count_;
    std::vector<std::vector<double>> gauss_;
    std::vector<int> radius_;
    std::vector<std::vector<cplx>> roots_;
};

// Incremental complex least squares over a growing column set, kept as a
// modified Gram-Schmidt QR with a conditional second orthogonalization
// pass. Dependent columns are recorded and excluded from the basis.
class IncrementalLs {
public:
    IncrementalLs(int m, int max_cols, double rank_tol)
        : m_(m), rank_tol_(rank_tol) {
        q_.resize(m, max_cols);
        r_.setZero(max_cols, max_cols);
        qcol_of_.reserve(static_cast<size_t>(max_cols));
    }

    // Returns the basis index of the new column, or -1 if it is
    // numerically dependent on the columns added before it.
    int add_column(const Eigen::VectorXcd& d) {
        Eigen::VectorXcd v = d;
        Eigen::VectorXcd w = Eigen::VectorXcd::Zero(rank_);
        if (rank_ > 0) {
            const auto q = q_.leftCols(rank_);
            w.noalias() = q.adjoint() * v;
            v.noalias() -= q * w;
            // Heavy cancellation loses orthogonality; one more pass
            // restores it to working precision.
            if (v.norm() < 0.70710678118654752 * d.norm()) {
                Eigen::VectorXcd w2(rank_);
                w2.noalias() = q.adjoint() * v;
                v.noalias() -= q * w2;
                w += w2;
            }
        }
        const double nv = v.norm();
        ++ncols_;
        if (nv < rank_tol_) {
            qcol_of_.push_back(-1);
            return -1;
        }
        q_.col(rank_) = v / nv;
        r_.col(rank_).head(rank_) = w;
        r_(rank_, rank_) = nv;
        qcol_of_.push_back(rank_);
        return rank_++;
    }

    Eigen::Ref<const Eigen::VectorXcd> basis_col(int i) const { return q_.col(i); }
    int rank() const { return rank_; }
    int cols_added() const { return ncols_; }

    // Least-squares coefficients for every added column against x, in
    // addition order; dependent columns get exactly zero.
    Eigen::VectorXcd solve(const Eigen::VectorXcd& x) const {
        Eigen::VectorXcd coeffs = Eigen::VectorXcd::Zero(ncols_);
        if (rank_ == 0) return coeffs;
        Eigen::VectorXcd z(rank_);
        z.noalias() = q_.leftCols(rank_).adjoint() * x;
        Eigen::VectorXcd y(rank_);
        for (int i = rank_ - 1; i >= 0; --i) {
            cplx s = z[i];
            for (int k = i + 1; k < rank_; ++k) s -= r_(i, k) * y[k];
            y[i] = s / r_(i, i);
        }
        for (int k = 0; k < ncols_; ++k)
            if (qcol_of_[k] >= 0) coeffs[k] = y[qcol_of_[k]];
        return coeffs;
    }

private:
    int m_;
    double rank_tol_;
    int ncols_ = 0;
    int rank_ = 0;
    Eigen::MatrixXcd q_;
    Eigen::MatrixXcd r_;
    std::vector<int> qcol_of_;
};

JointSparseCode comp_core(const std::vector<Eigen::VectorXd>& segments,
                          const Dictionary& dict, const PursuitConfig& cfg) {
    if (segments.empty()) throw EmptyInput("comp: no segments given");
    if (dict.m <= 0 || dict.atoms.rows() != dict.m || dict.atoms.cols() != dict.cols())
        throw DimError("comp: dictionary is empty or inconsistent");
    const int u_count = static_cast<int>(segments.size());
    for (int u = 0; u < u_count; ++u)
        if (segments[u].size() != dict.m)
            throw DimError("comp: segment " + std::to_string(u) + " has length " +
                           std::to_string(segments[u].size()) + ", dictionary expects " +
                           std::to_string(dict.m));
    if (cfg.zeta < 1)
        throw InvalidSpec("comp: zeta must be at least 1");
    if (cfg.zeta > dict.m)
        throw InvalidSpec("comp: zeta cannot exceed the signal dimension " +
                          std::to_string(dict.m));
    if (!(cfg.residual_tol >= 0.0 && cfg.residual_tol < 1.0))
        throw InvalidSpec("comp: residual_tol must lie in [0, 1)");

    const long n_cols = dict.cols();
    std::vector<Eigen::VectorXcd> xs(u_count), residual(u_count);
    std::vector<std::vector<double>> res_norms(u_count);
    double total_energy = 0.0;
    for (int u = 0; u < u_count; ++u) {
        xs[u] = segments[u].cast<cplx>();
        residual[u] = xs[u];
        total_energy += xs[u].squaredNorm();
        res_norms[u].push_back(residual[u].norm());
    }

    const double rank_tol =
        cfg.rank_tol_scale * std::sqrt(total_energy / u_count);
    IncrementalLs ls(dict.m, cfg.zeta, rank_tol);
    const FastCorrelator fast(dict);

    std::vector<long> support, dependents;
    std::vector<double> sel_corr_max;
    std::vector<char> selected(static_cast<size_t>(n_cols), 0);
    Eigen::VectorXd scores(n_cols);

    while (static_cast<int>(support.size()) < cfg.zeta) {
        scores.setZero();
        for (int u = 0; u < u_count; ++u)
            fast.accumulate_abs(residual[u], dict.raw_norms, scores);

        long best = -1;
        double best_v = -1.0, sel_max = 0.0;
        for (long i = 0; i < n_cols; ++i) {
            const double v = scores[i];
            if (selected[i]) {
                if (v > sel_max) sel_max = v;
            } else if (v > best_v) {
                best_v = v;
                best = i;
            }
        }
        sel_corr_max.push_back(sel_max);
        if (best < 0 || best_v < 1e-12) break;

        selected[static_cast<size_t>(best)] = 1;
        support.push_back(best);
        const int qi = ls.add_column(dict.atoms.col(best));
        if (qi < 0) {
            dependents.push_back(best);
        } else {
            const auto q = ls.basis_col(qi);
            for (int u = 0; u < u_count; ++u)
                residual[u] -= q * q.dot(residual[u]);
        }
        for (int u = 0; u < u_count; ++u)
            res_norms[u].push_back(residual[u].norm());

        if (cfg.residual_tol > 0.0 && total_energy > 0.0) {
            double energy = 0.0;
            for (int u = 0; u < u_count; ++u) energy += residual[u].squaredNorm();
            if (std::sqrt(energy / total_energy) < cfg.residual_tol) break;
        }
    }

    JointSparseCode out;
    out.shared_support = support;
    out.codes.resize(static_cast<size_t>(u_count));
    for (int u = 0; u < u_count; ++u) {
        SparseCode& c = out.codes[u];
        c.m = dict.m;
        c.j_count = dict.j_count;
        c.support = support;
        c.dependent_cols = dependents;
        c.residual_norms = std::move(res_norms[u]);
        c.selected_corr_max = sel_corr_max;
        c.coefficients = Eigen::VectorXcd::Zero(n_cols);
        if (!support.empty()) {
            const Eigen::VectorXcd a = ls.solve(xs[u]);
            for (size_t k = 0; k < support.size(); ++k)
                c.coefficients[support[k]] = a[static_cast<long>(k)];
        }
    }
    return out;
}

}  // namespace

SparseCode comp_single(const Eigen::VectorXd& x, const Dictionary& dict,
                       const PursuitConfig& cfg) {
    std::vector<Eigen::VectorXd> one{x};
    JointSparseCode joint = comp_core(one, dict, cfg);
    return std::move(joint.codes[0]);
}

JointSparseCode comp_joint(const std::vector<Eigen::VectorXd>& segments,
                           const Dictionary& dict, const PursuitConfig& cfg) {
    return comp_core(segments, dict, cfg);
}

Eigen::VectorXcd least_squares_complex(const Eigen::MatrixXcd& columns,
                                       const Eigen::VectorXcd& x, double rank_tol,
                                       std::vector<int>* dependent_out) {
    if (columns.cols() == 0) return Eigen::VectorXcd();
    if (columns.rows() != x.size())
        throw DimError("least_squares_complex: matrix has " +
                       std::to_string(columns.rows()) + " rows, rhs has " +
                       std::to_string(x.size()));
    if (rank_tol < 0.0) rank_tol = 1e-10 * x.norm();
    IncrementalLs ls(static_cast<int>(columns.rows()),
                     static_cast<int>(columns.cols()), rank_tol);
    for (long k = 0; k < columns.cols(); ++k) {
        const int qi = ls.add_column(columns.col(k));
        if (qi < 0 && dependent_out) dependent_out->push_back(static_cast<int>(k));
    }
    return ls.solve(x);
}

Eigen::VectorXd reconstruct(const Dictionary& dict, const SparseCode& code,
                            double* imag_norm) {
    if (code.m != dict.m || code.coefficients.size() != dict.cols())
        throw DimError("reconstruct: code does not match the dictionary (M=" +
                       std::to_string(code.m) + " vs " + std::to_string(dict.m) + ")");
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(dict.m);
    for (const long col : code.support)
        acc += dict.atoms.col(col) * code.coefficients[col];
    if (imag_norm) *imag_norm = acc.imag().norm();
    return acc.real();
}

Eigen::VectorXd correlation_magnitudes_dense(const Dictionary& dict,
                                             const Eigen::VectorXcd& r) {
    if (r.size() != dict.m) throw DimError("correlation: residual length mismatch");
    return (dict.atoms.adjoint() * r).cwiseAbs();
}

Eigen::VectorXd correlation_magnitudes(const Dictionary& dict,
                                       const Eigen::VectorXcd& r) {
    if (r.size() != dict.m) throw DimError("correlation: residual length mismatch");
    const FastCorrelator fast(dict);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dict.cols());
    fast.accumulate_abs(r, dict.raw_norms, out);
    return out;
}

}  // namespace gaborcomp
