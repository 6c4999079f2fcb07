#include "gaborcomp/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gaborcomp/wav.hpp"

namespace gaborcomp {

const char* to_string(MurmurClass c) {
    switch (c) {
        case MurmurClass::Diamond: return "Diamond";
        case MurmurClass::Plateau: return "Plateau";
        case MurmurClass::Decrescendo: return "Decrescendo";
        case MurmurClass::Crescendo: return "Crescendo";
    }
    throw InvalidLabel("invalid murmur class value");
}

const char* to_string(AuscultationSite s) {
    switch (s) {
        case AuscultationSite::Aortic: return "AP";
        case AuscultationSite::Pulmonic: return "PP";
        case AuscultationSite::Mitral: return "MP";
        case AuscultationSite::Tricuspid: return "TP";
        case AuscultationSite::Unknown: return "Unknown";
    }
    throw InvalidLabel("invalid auscultation site value");
}

MurmurClass murmur_class_from_string(const std::string& s) {
    if (s == "Diamond") return MurmurClass::Diamond;
    if (s == "Plateau") return MurmurClass::Plateau;
    if (s == "Decrescendo") return MurmurClass::Decrescendo;
    if (s == "Crescendo") return MurmurClass::Crescendo;
    throw InvalidLabel("unknown label '" + s +
                       "' (expected Diamond, Plateau, Decrescendo or Crescendo)");
}

AuscultationSite site_from_string(const std::string& s) {
    if (s == "AP") return AuscultationSite::Aortic;
    if (s == "PP") return AuscultationSite::Pulmonic;
    if (s == "MP") return AuscultationSite::Mitral;
    if (s == "TP") return AuscultationSite::Tricuspid;
    if (s == "Unknown" || s.empty()) return AuscultationSite::Unknown;
    throw InvalidLabel("unknown auscultation site '" + s +
                       "' (expected AP, PP, MP, TP or Unknown)");
}

SegmentSet SegmentSet::from(std::vector<Segment> segments) {
    SegmentSet set;
    set.segments = std::move(segments);
    for (const Segment& s : set.segments)
        ++set.class_counts[static_cast<size_t>(s.label)];
    return set;
}

void SegmentSet::validate_length(int m) const {
    for (size_t i = 0; i < segments.size(); ++i) {
        if (static_cast<int>(segments[i].samples.size()) != m)
            throw InvalidSegment("segment " + std::to_string(i) + " has length " +
                                 std::to_string(segments[i].samples.size()) +
                                 ", expected " + std::to_string(m));
    }
}

std::vector<double> normalize(const std::vector<double>& x) {
    if (x.empty()) throw EmptyInput("normalize: empty input");
    double peak = 0.0;
    for (const double v : x) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return x;
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] / peak;
    return out;
}

std::vector<double> fit_length(const std::vector<double>& x, int m) {
    if (x.empty()) throw EmptyInput("fit_length: empty input");
    if (m < 1) throw InvalidSpec("fit_length: target length must be positive");
    const int n = static_cast<int>(x.size());
    if (n == m) return x;
    std::vector<double> out(static_cast<size_t>(m));
    if (m == 1 || n == 1) {
        std::fill(out.begin(), out.end(), x[0]);
        out.back() = x.back();
        return out;
    }
    for (int i = 0; i < m; ++i) {
        if (i == 0) { out[0] = x.front(); continue; }
        if (i == m - 1) { out[static_cast<size_t>(m - 1)] = x.back(); continue; }
        const double pos = static_cast<double>(i) * (n - 1) / (m - 1);
        int k = static_cast<int>(pos);
        if (k > n - 2) k = n - 2;
        const double frac = pos - k;
        out[static_cast<size_t>(i)] = x[static_cast<size_t>(k)] +
            (x[static_cast<size_t>(k + 1)] - x[static_cast<size_t>(k)]) * frac;
    }
    return out;
}

std::vector<double> moving_rms(const std::vector<double>& x, int w) {
    if (x.empty()) throw EmptyInput("moving_rms: empty input");
    if (w < 1) throw InvalidSpec("moving_rms: window must be positive");
    const int n = static_cast<int>(x.size());
    const int half = w / 2;
    // Prefix sums of squares give each window in O(1).
    std::vector<double> prefix(static_cast<size_t>(n) + 1, 0.0);
    for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        const double mean = (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1);
        out[static_cast<size_t>(i)] = std::sqrt(mean);
    }
    return out;
}

namespace {

std::vector<double> shape_envelope(MurmurClass shape, int m) {
    std::vector<double> env(static_cast<size_t>(m));
    const double last = m - 1;
    switch (shape) {
        case MurmurClass::Diamond: {
            const double c = last / 2.0;
            for (int i = 0; i < m; ++i)
                env[i] = 1.0 - std::abs(i - c) / c;
            break;
        }
        case MurmurClass::Plateau: {
            // Raised-cosine on/off ramps over 5% of the length each.
            const int e = std::max(1, static_cast<int>(std::lround(0.05 * m)));
            for (int i = 0; i < m; ++i) {
                double v = 1.0;
                if (i < e) v = 0.5 * (1.0 - std::cos(M_PI * i / e));
                else if (i > m - 1 - e) v = 0.5 * (1.0 - std::cos(M_PI * (m - 1 - i) / e));
                env[i] = v;
            }
            break;
        }
        case MurmurClass::Decrescendo:
            for (int i = 0; i < m; ++i) env[i] = 1.0 - 0.95 * i / last;
            break;
        case MurmurClass::Crescendo:
            for (int i = 0; i < m; ++i) env[i] = 0.05 + 0.95 * i / last;
            break;
    }
    return env;
}

}  // namespace

Segment synth_murmur(const SynthSpec& spec, long index, int m, double sample_rate,
                     long segments_per_recording) {
    if (m < 8) throw InvalidSpec("synth: segment length must be at least 8");
    if (index < 0) throw InvalidSpec("synth: index must be non-negative");
    if (segments_per_recording < 1)
        throw InvalidSpec("synth: segments_per_recording must be positive");
    if (!(spec.band_low_hz >= 0.0) || !(spec.band_high_hz > spec.band_low_hz))
        throw InvalidSpec("synth: carrier band must satisfy 0 <= low < high");

    const int k_min = std::max(1, static_cast<int>(std::ceil(spec.band_low_hz * m / sample_rate)));
    const int k_max = std::min(m / 2 - 1,
                               static_cast<int>(std::floor(spec.band_high_hz * m / sample_rate)));
    if (k_min > k_max)
        throw InvalidSpec("synth: carrier band contains no representable frequency bin");

    // Substream keyed by (seed, index) only, so two specs differing just in
    // shape produce the same carrier and noise under the same seed.
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(index)));

    std::vector<double> carrier(static_cast<size_t>(m), 0.0);
    for (int k = k_min; k <= k_max; ++k) {
        const double phase = 2.0 * M_PI * rng.next_double();
        const double w = 2.0 * M_PI * k / m;
        for (int i = 0; i < m; ++i) carrier[i] += std::cos(w * i + phase);
    }

    // Flatten the carrier's own amplitude envelope so the class envelope is
    // the only low-frequency amplitude structure left in the signal.
    {
        const std::vector<double> rms = moving_rms(carrier, 65);
        double rms_peak = 0.0;
        for (const double v : rms) rms_peak = std::max(rms_peak, v);
        const double floor_v = 1e-3 * rms_peak;
        for (int i = 0; i < m; ++i) carrier[i] /= std::max(rms[i], floor_v);
    }

    const std::vector<double> env = shape_envelope(spec.shape, m);
    std::vector<double> sig(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) sig[i] = env[i] * carrier[i];

    if (std::isfinite(spec.noise_snr_db)) {
        double power = 0.0;
        for (const double v : sig) power += v * v;
        power /= m;
        const double sigma = std::sqrt(power * std::pow(10.0, -spec.noise_snr_db / 10.0));
        for (int i = 0; i < m; ++i) sig[i] += sigma * rng.next_gaussian();
    }

    Segment seg;
    seg.samples = normalize(sig);
    seg.label = spec.shape;
    seg.location = AuscultationSite::Unknown;
    seg.sample_rate = sample_rate;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s-r%06ld", to_string(spec.shape),
                  index / segments_per_recording);
    seg.recording_id = buf;
    return seg;
}

SegmentSet make_synth_dataset(const std::vector<SynthSpec>& specs, int m,
                              double sample_rate, long segments_per_recording) {
    if (specs.empty()) throw EmptyInput("synth: no specs given");
    std::vector<Segment> segments;
    for (const SynthSpec& spec : specs) {
        if (spec.count < 1) throw InvalidSpec("synth: spec count must be positive");
        for (long i = 0; i < spec.count; ++i)
            segments.push_back(synth_murmur(spec, i, m, sample_rate, segments_per_recording));
    }
    return SegmentSet::from(std::move(segments));
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

SegmentSet load_segments(const std::filesystem::path& manifest_path, int m,
                         LengthFit fit) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest " + manifest_path.string());
    const std::filesystem::path base = manifest_path.parent_path();

    std::string line;
    if (!std::getline(in, line))
        throw DecodeError("manifest " + manifest_path.string() + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "recording_id,path,label,location")
        throw DecodeError("manifest header must be "
                          "'recording_id,path,label,location', got '" + line + "'");

    std::vector<Segment> segments;
    size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_row(line);
        if (f.size() != 4)
            throw DecodeError("manifest row " + std::to_string(row) + " has " +
                              std::to_string(f.size()) + " fields, expected 4");

        const std::filesystem::path file =
            std::filesystem::path(f[1]).is_absolute() ? std::filesystem::path(f[1])
                                                      : base / f[1];
        if (!std::filesystem::exists(file))
            throw IoError("manifest row " + std::to_string(row) +
                          ": file not found: " + file.string());

        Segment seg;
        seg.recording_id = f[0];
        seg.label = murmur_class_from_string(f[2]);
        seg.location = site_from_string(f[3]);

        std::vector<double> samples;
        if (file.extension() == ".wav" || file.extension() == ".WAV") {
            WavData w = read_wav_mono(file);
            samples = std::move(w.samples);
            seg.sample_rate = w.sample_rate;
        } else {
            samples = read_csv_column(file);
        }
        if (samples.empty())
            throw InvalidSegment("manifest row " + std::to_string(row) +
                                 ": file " + file.string() + " holds no samples");

        samples = normalize(samples);
        if (fit == LengthFit::Resample) {
            samples = fit_length(samples, m);
        } else {
            samples.resize(static_cast<size_t>(m), 0.0);
        }
        seg.samples = std::move(samples);
        segments.push_back(std::move(seg));
    }
    if (segments.empty())
        throw EmptyInput("manifest " + manifest_path.string() + " lists no segments");
    return SegmentSet::from(std::move(segments));
}

std::filesystem::path write_segment_dir(const SegmentSet& set,
                                        const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path manifest = dir / "manifest.csv";
    std::ofstream out(manifest, std::ios::trunc);
    if (!out) throw IoError("cannot create " + manifest.string());
    out << "recording_id,path,label,location\n";
    for (size_t i = 0; i < set.segments.size(); ++i) {
        const Segment& s = set.segments[i];
        char name[32];
        std::snprintf(name, sizeof(name), "seg%06zu.wav", i);
        write_wav_f32(dir / name, s.samples, s.sample_rate);
        out << s.recording_id << ',' << name << ',' << to_string(s.label) << ','
            << to_string(s.location) << '\n';
    }
    if (!out) throw IoError("failed writing " + manifest.string());
    return manifest;
}

}  // namespace gaborcomp
