#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gaborcomp/common.hpp"

namespace gaborcomp {

// Murmur shape classes. The integer values double as class indices in
// labels, confusion matrices and classifier outputs.
enum class MurmurClass : uint8_t {
    Diamond = 0,
    Plateau = 1,
    Decrescendo = 2,
    Crescendo = 3,
};

inline constexpr int kNumClasses = 4;

enum class AuscultationSite : uint8_t {
    Aortic = 0,
    Pulmonic = 1,
    Mitral = 2,
    Tricuspid = 3,
    Unknown = 4,
};

const char* to_string(MurmurClass c);
const char* to_string(AuscultationSite s);
MurmurClass murmur_class_from_string(const std::string& s);      // throws InvalidLabel
AuscultationSite site_from_string(const std::string& s);         // throws InvalidLabel

// One fixed-length mono segment plus its metadata.
struct Segment {
    std::vector<double> samples;
    MurmurClass label = MurmurClass::Diamond;
    std::string recording_id;
    AuscultationSite location = AuscultationSite::Unknown;
    double sample_rate = 4000.0;
};

// A labelled collection with uniform segment length.
struct SegmentSet {
    std::vector<Segment> segments;
    std::array<long, kNumClasses> class_counts{};

    static SegmentSet from(std::vector<Segment> segments);
    // Checks uniform length == m; throws InvalidSegment on violation.
    void validate_length(int m) const;
};

// Recipe for one batch of synthetic murmur segments.
struct SynthSpec {
    MurmurClass shape = MurmurClass::Diamond;
    double band_low_hz = 25.0;
    double band_high_hz = 400.0;
    double noise_snr_db = 15.0;  // +inf disables noise
    uint64_t seed = 0;
    long count = 1;
};

// Peak normalization to [-1, 1]. Zero signals pass through unchanged;
// the operation is idempotent. Throws EmptyInput on empty input.
std::vector<double> normalize(const std::vector<double>& x);

// Resamples to exactly m samples by linear interpolation, preserving
// the first and last sample values exactly.
std::vector<double> fit_length(const std::vector<double>& x, int m);

enum class LengthFit : uint8_t {
    Resample = 0,   // linear interpolation to m samples
    Pad = 1,        // zero-pad at the end, truncate if longer
};

// Centered moving RMS with window w (odd), edges clamped to the valid
// range. Shared by the generator and by tests that probe envelopes.
std::vector<double> moving_rms(const std::vector<double>& x, int w);

// Deterministic synthetic murmur: band-limited random-phase carrier,
// flattened to near-unit local RMS, shaped by the class envelope, plus
// white gaussian noise at the requested SNR, then peak-normalized.
// The same (seed, index) pair always yields the same samples.
Segment synth_murmur(const SynthSpec& spec, long index, int m = 512,
                     double sample_rate = 4000.0,
                     long segments_per_recording = 1);

SegmentSet make_synth_dataset(const std::vector<SynthSpec>& specs, int m = 512,
                              double sample_rate = 4000.0,
                              long segments_per_recording = 1);

// Loads a manifest CSV (header: recording_id,path,label,location) whose
// paths are resolved relative to the manifest directory. Each file is a
// mono WAV (PCM16 or float32) or a single-column CSV; every segment is
// normalized and fitted to m samples. Row order is preserved.
SegmentSet load_segments(const std::filesystem::path& manifest_path, int m = 512,
                         LengthFit fit = LengthFit::Resample);

// Writes segments as float32 WAV files plus a manifest.csv into dir.
// Returns the manifest path. Layout and bytes are deterministic.
std::filesystem::path write_segment_dir(const SegmentSet& set,
                                        const std::filesystem::path& dir);

}  // namespace gaborcomp
