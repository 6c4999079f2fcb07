#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gaborcomp/pursuit.hpp"
#include "gaborcomp/signal_io.hpp"

namespace gaborcomp {

enum class FeatureMode : uint8_t {
    Magnitude = 0,
    SquaredMagnitude = 1,
};

FeatureMode feature_mode_from_string(const std::string& s);  // throws InvalidSpec
const char* to_string(FeatureMode mode);

// Per-resolution time-frequency matrices derived from one sparse code.
// matrices[j-1] has 2^j rows (frequency) and M/2^j columns (translation).
struct FeatureStack {
    std::vector<Eigen::MatrixXd> matrices;
    FeatureMode mode = FeatureMode::SquaredMagnitude;
    std::optional<MurmurClass> label;
    std::string segment_ref;
    std::string recording_id;  // enables group-aware fold assignment
    int m = 0;

    int j_count() const { return static_cast<int>(matrices.size()); }
};

// Splits a dense coefficient vector into its per-resolution blocks of
// length m each.
std::vector<Eigen::VectorXcd> split_coeffs(const Eigen::VectorXcd& coeffs, int m,
                                           int j_count);

// Reshapes one resolution block into its 2^j x m/2^j matrix; entry
// (f, t) comes from block index t*2^j + f, mapped by the chosen mode.
Eigen::MatrixXd reshape_to_tf(const Eigen::VectorXcd& block, int j, FeatureMode mode);

FeatureStack featurize(const SparseCode& code, FeatureMode mode,
                       std::optional<MurmurClass> label = std::nullopt);

// Optional per-stack max normalization (disabled by default upstream):
// divides every matrix by the stack's largest entry when it is positive.
void normalize_stack(FeatureStack& stack);

}  // namespace gaborcomp
