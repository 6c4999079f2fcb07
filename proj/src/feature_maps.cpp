#include "gaborcomp/feature_maps.hpp"

#include <cmath>

namespace gaborcomp {

FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "magnitude" || s == "mag") return FeatureMode::Magnitude;
    if (s == "squared_magnitude" || s == "sq") return FeatureMode::SquaredMagnitude;
    throw InvalidSpec("unknown feature mode '" + s +
                      "' (expected magnitude or squared_magnitude)");
}

const char* to_string(FeatureMode mode) {
    switch (mode) {
        case FeatureMode::Magnitude: return "magnitude";
        case FeatureMode::SquaredMagnitude: return "squared_magnitude";
    }
    throw InvalidSpec("invalid feature mode value");
}

std::vector<Eigen::VectorXcd> split_coeffs(const Eigen::VectorXcd& coeffs, int m,
                                           int j_count) {
    if (m < 1 || j_count < 1)
        throw DimError("split_coeffs: M and the level count must be positive");
    if (coeffs.size() != static_cast<long>(m) * j_count)
        throw DimError("split_coeffs: coefficient vector has " +
                       std::to_string(coeffs.size()) + " entries, expected " +
                       std::to_string(static_cast<long>(m) * j_count));
    std::vector<Eigen::VectorXcd> blocks;
    blocks.reserve(static_cast<size_t>(j_count));
    for (int j = 0; j < j_count; ++j)
        blocks.push_back(coeffs.segment(static_cast<long>(j) * m, m));
    return blocks;
}

Eigen::MatrixXd reshape_to_tf(const Eigen::VectorXcd& block, int j, FeatureMode mode) {
    const int m = static_cast<int>(block.size());
    const int levels = log2_exact(m, "reshape_to_tf") - 1;
    if (j < 1 || j > levels)
        throw InvalidResolution("reshape_to_tf: j=" + std::to_string(j) +
                                " outside [1, " + std::to_string(levels) + "]");
    const int rows = 1 << j;        // frequencies
    const int cols = m / rows;      // translations
    Eigen::MatrixXd out(rows, cols);
    for (int t = 0; t < cols; ++t) {
        for (int f = 0; f < rows; ++f) {
            const cplx v = block[static_cast<long>(t) * rows + f];
            const double mag2 = std::norm(v);
            out(f, t) = mode == FeatureMode::Magnitude ? std::sqrt(mag2) : mag2;
        }
    }
    return out;
}

FeatureStack featurize(const SparseCode& code, FeatureMode mode,
                       std::optional<MurmurClass> label) {
    if (code.m < 1 || code.j_count < 1)
        throw DimError("featurize: code carries no dictionary geometry");
    FeatureStack stack;
    stack.mode = mode;
    stack.label = label;
    stack.segment_ref = code.segment_ref;
    stack.m = code.m;
    const std::vector<Eigen::VectorXcd> blocks =
        split_coeffs(code.coefficients, code.m, code.j_count);
    stack.matrices.reserve(blocks.size());
    for (int j = 1; j <= code.j_count; ++j)
        stack.matrices.push_back(reshape_to_tf(blocks[j - 1], j, mode));
    return stack;
}

void normalize_stack(FeatureStack& stack) {
    double peak = 0.0;
    for (const Eigen::MatrixXd& mat : stack.matrices)
        peak = std::max(peak, mat.maxCoeff());
    if (peak <= 0.0) return;
    for (Eigen::MatrixXd& mat : stack.matrices) mat /= peak;
}

}  // namespace gaborcomp
