#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "gaborcomp/formats.hpp"

namespace gaborcomp {

// Everything one end-to-end run needs, with every path already resolved
// (relative paths in a config file are taken against the file's
// directory). A run either synthesizes data (synth_specs non-empty) or
// loads an existing manifest.
struct RunConfig {
    int m = 512;
    uint64_t seed = 7;

    // data
    std::vector<SynthSpec> synth_specs;
    double sample_rate = 4000.0;
    long segments_per_recording = 1;
    std::filesystem::path manifest;              // used when synth_specs is empty
    LengthFit length_fit = LengthFit::Resample;

    // artifact locations
    std::filesystem::path out_dir = "out";
    std::filesystem::path data_dir() const { return out_dir / "data"; }
    std::filesystem::path dict_path() const { return out_dir / "dict.mrgd"; }
    std::filesystem::path codes_dir() const { return out_dir / "codes"; }
    std::filesystem::path features_path() const { return out_dir / "features.mrgf"; }
    std::filesystem::path model_path() const { return out_dir / "model.mrgm"; }
    std::filesystem::path curves_path() const { return out_dir / "curves.csv"; }
    std::filesystem::path report_path() const { return out_dir / "report.json"; }

    // decomposition
    int zeta = 511;
    double residual_tol = 0.0;
    bool joint_by_recording = false;

    // features
    FeatureMode feature_mode = FeatureMode::SquaredMagnitude;
    bool normalize_features = false;

    // classifier
    int heads = 4;
    int d_head = 32;
    TrainConfig train;
    double val_fraction = 0.0;

    // evaluation
    int k = 5;
    bool group_by_recording = false;

    static RunConfig from_json_file(const std::filesystem::path& path);
};

// Path-explicit cores shared by the pipeline stages and the CLI subcommands.
std::vector<CodeFile> decompose_to_dir(const std::filesystem::path& dir,
                                       const SegmentSet& set, const Dictionary& dict,
                                       const PursuitConfig& pursuit,
                                       bool joint_by_recording);
std::vector<FeatureStack> featurize_all(const std::vector<CodeFile>& codes,
                                        FeatureMode mode, bool normalize);
Model fit_stacks(const std::vector<FeatureStack>& stacks, int heads, int d_head,
                 const TrainConfig& train_cfg, double val_fraction, uint64_t split_seed,
                 std::vector<EpochStats>* history);
CvResult eval_cv(const std::vector<FeatureStack>& stacks, int k, int heads, int d_head,
                 const TrainConfig& train_cfg, uint64_t seed, bool group_by_recording);

// Stage functions. Each consumes in-memory inputs, writes its artifact
// to the configured path and returns the result for the next stage.
SegmentSet pipeline_data(const RunConfig& cfg);
Dictionary pipeline_dictionary(const RunConfig& cfg);
std::vector<CodeFile> decompose_segments(const RunConfig& cfg, const SegmentSet& set,
                                         const Dictionary& dict);
std::vector<FeatureStack> featurize_codes(const RunConfig& cfg,
                                          const std::vector<CodeFile>& codes);
Model train_stacks(const RunConfig& cfg, const std::vector<FeatureStack>& stacks);
CvResult eval_stacks(const RunConfig& cfg, const std::vector<FeatureStack>& stacks);

// Runs every stage in order, logging one line per stage to log.
void run_pipeline(const RunConfig& cfg, std::ostream& log);

}  // namespace gaborcomp
