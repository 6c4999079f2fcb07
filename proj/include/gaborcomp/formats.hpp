#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gaborcomp/classifier.hpp"
#include "gaborcomp/dictionary.hpp"
#include "gaborcomp/evaluation.hpp"
#include "gaborcomp/feature_maps.hpp"
#include "gaborcomp/pursuit.hpp"

// On-disk artifact formats. All multi-byte values are little-endian and
// written explicitly, so files are byte-identical across runs and hosts.
//   .mrgd  dictionary: atoms plus raw norms
//   .mrgc  sparse code: JSON header plus support coefficients
//   .mrgf  feature stacks: float32 matrices for all resolution levels
//   .mrgm  model: architecture header plus the flat parameter vector

namespace gaborcomp {

void write_dictionary(const std::filesystem::path& path, const Dictionary& dict);
Dictionary read_dictionary(const std::filesystem::path& path);

struct CodeMeta {
    std::string segment_ref;
    std::string recording_id;
    std::optional<MurmurClass> label;
    AuscultationSite location = AuscultationSite::Unknown;
    int zeta = 0;
    double residual_tol = 0.0;
};

void write_code(const std::filesystem::path& path, const SparseCode& code,
                const CodeMeta& meta);

struct CodeFile {
    SparseCode code;
    CodeMeta meta;
};

CodeFile read_code(const std::filesystem::path& path);

// All stacks must share segment length, level count and mode.
void write_feature_file(const std::filesystem::path& path,
                        const std::vector<FeatureStack>& stacks);
std::vector<FeatureStack> read_feature_file(const std::filesystem::path& path);

void write_model(const std::filesystem::path& path, const Model& model);
Model read_model(const std::filesystem::path& path);

void write_curves_csv(const std::filesystem::path& path,
                      const std::vector<EpochStats>& history);

struct ReportContext {
    int k = 0;
    uint64_t seed = 0;
    int heads = 0;
    int d_head = 0;
    TrainConfig train;
};

void write_report_json(const std::filesystem::path& path, const CvResult& result,
                       const ReportContext& ctx);

struct PredictionRow {
    std::string segment_ref;
    std::optional<MurmurClass> actual;
    int predicted = 0;
    Eigen::VectorXd probs;
};

void write_predictions_csv(std::ostream& out, const std::vector<PredictionRow>& rows);
void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionRow>& rows);

}  // namespace gaborcomp
