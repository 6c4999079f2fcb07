#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gaborcomp/signal_io.hpp"
#include "gaborcomp/wav.hpp"

using namespace gaborcomp;

namespace {

std::filesystem::path temp_dir(const char* tag) {
    const auto dir = std::filesystem::temp_directory_path() /
                     (std::string("gaborcomp_sig_") + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

double mean_of(const std::vector<double>& x, size_t lo, size_t hi) {
    double s = 0.0;
    for (size_t i = lo; i < hi; ++i) s += x[i];
    return s / static_cast<double>(hi - lo);
}

}  // namespace

TEST_CASE("rng streams are deterministic and well scaled") {
    Rng a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        const double va = a.next_double();
        all_equal = all_equal && va == b.next_double();
        any_diff = any_diff || va != c.next_double();
        CHECK(va >= 0.0);
        CHECK(va < 1.0);
    }
    CHECK(all_equal);
    CHECK(any_diff);

    Rng d(7);
    for (int i = 0; i < 1000; ++i) CHECK(d.next_below(13) < 13);

    // Moment check against the standard normal.
    Rng g(1234);
    const int n = 40000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = g.next_gaussian();
        s1 += v;
        s2 += v * v;
    }
    CHECK(std::abs(s1 / n) < 0.02);
    CHECK(std::abs(s2 / n - 1.0) < 0.03);
}

TEST_CASE("mix_seed separates substreams") {
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(0, 0) != mix_seed(0, 1));
    CHECK(mix_seed(7, 3) == mix_seed(7, 3));
}

TEST_CASE("normalize scales the peak to one and is idempotent") {
    const std::vector<double> x = {0.5, -2.0, 1.0};
    const std::vector<double> y = normalize(x);
    CHECK(y == std::vector<double>{0.25, -1.0, 0.5});
    CHECK(normalize(y) == y);
    const std::vector<double> zeros(8, 0.0);
    CHECK(normalize(zeros) == zeros);
    CHECK_THROWS_AS(normalize({}), EmptyInput);
}

TEST_CASE("fit_length reproduces lines exactly and keeps endpoints") {
    // A sampled line must stay on the line under linear interpolation.
    std::vector<double> line(37);
    for (size_t i = 0; i < line.size(); ++i) line[i] = 3.0 - 0.25 * static_cast<double>(i);
    const std::vector<double> up = fit_length(line, 128);
    for (int i = 0; i < 128; ++i) {
        const double pos = static_cast<double>(i) * 36.0 / 127.0;
        CHECK(up[static_cast<size_t>(i)] == doctest::Approx(3.0 - 0.25 * pos).epsilon(1e-12));
    }
    CHECK(up.front() == line.front());
    CHECK(up.back() == line.back());

    const std::vector<double> down = fit_length(line, 9);
    CHECK(down.front() == line.front());
    CHECK(down.back() == line.back());

    CHECK(fit_length(line, 37) == line);
    CHECK(fit_length({5.0}, 4) == std::vector<double>(4, 5.0));
    CHECK_THROWS_AS(fit_length({}, 8), EmptyInput);
    CHECK_THROWS_AS(fit_length({1.0}, 0), InvalidSpec);
}

TEST_CASE("moving rms matches a direct window computation") {
    Rng rng(5);
    std::vector<double> x(61);
    for (auto& v : x) v = rng.next_gaussian();
    const int w = 9;
    const std::vector<double> fast = moving_rms(x, w);
    for (int i = 0; i < static_cast<int>(x.size()); ++i) {
        const int lo = std::max(0, i - w / 2);
        const int hi = std::min(static_cast<int>(x.size()) - 1, i + w / 2);
        double s = 0.0;
        for (int k = lo; k <= hi; ++k) s += x[k] * x[k];
        CHECK(fast[static_cast<size_t>(i)] ==
              doctest::Approx(std::sqrt(s / (hi - lo + 1))).epsilon(1e-12));
    }
    CHECK_THROWS_AS(moving_rms({}, 5), EmptyInput);
    CHECK_THROWS_AS(moving_rms(x, 0), InvalidSpec);
}

TEST_CASE("synthetic murmurs are deterministic in (seed, index)") {
    SynthSpec spec;
    spec.shape = MurmurClass::Diamond;
    spec.seed = 99;
    const Segment a = synth_murmur(spec, 3);
    const Segment b = synth_murmur(spec, 3);
    const Segment c = synth_murmur(spec, 4);
    CHECK(a.samples == b.samples);
    CHECK(a.samples != c.samples);
    CHECK(a.label == MurmurClass::Diamond);
    CHECK(a.samples.size() == 512);
    double peak = 0.0;
    for (const double v : a.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == 1.0);
}

TEST_CASE("recording ids group consecutive segments") {
    SynthSpec spec;
    spec.shape = MurmurClass::Plateau;
    spec.seed = 1;
    CHECK(synth_murmur(spec, 0, 512, 4000.0, 4).recording_id == "Plateau-r000000");
    CHECK(synth_murmur(spec, 3, 512, 4000.0, 4).recording_id == "Plateau-r000000");
    CHECK(synth_murmur(spec, 4, 512, 4000.0, 4).recording_id == "Plateau-r000001");
    CHECK(synth_murmur(spec, 7, 512, 4000.0, 1).recording_id == "Plateau-r000007");
}

TEST_CASE("class envelopes leave their signature on the local rms") {
    const int m = 512;
    const auto clean = [](MurmurClass shape) {
        SynthSpec spec;
        spec.shape = shape;
        spec.seed = 11;
        spec.noise_snr_db = std::numeric_limits<double>::infinity();
        return synth_murmur(spec, 0, m).samples;
    };

    // Plateau: flat local rms over the central region.
    {
        const std::vector<double> rms = moving_rms(clean(MurmurClass::Plateau), 65);
        const size_t lo = 64, hi = m - 64;
        const double mean = mean_of(rms, lo, hi);
        double var = 0.0;
        for (size_t i = lo; i < hi; ++i) var += (rms[i] - mean) * (rms[i] - mean);
        var /= static_cast<double>(hi - lo);
        CHECK(std::sqrt(var) / mean < 0.1);
    }
    // Diamond: rms peaks near the center and decays toward both edges.
    {
        const std::vector<double> rms = moving_rms(clean(MurmurClass::Diamond), 65);
        size_t arg = 0;
        for (size_t i = 1; i < rms.size(); ++i)
            if (rms[i] > rms[arg]) arg = i;
        CHECK(std::abs(static_cast<double>(arg) - m / 2.0) < 0.1 * m);
        CHECK(rms.front() < 0.35 * rms[arg]);
        CHECK(rms.back() < 0.35 * rms[arg]);
    }
    // Crescendo and decrescendo: strongly rising resp. falling local rms.
    {
        const std::vector<double> up = moving_rms(clean(MurmurClass::Crescendo), 65);
        const std::vector<double> dn = moving_rms(clean(MurmurClass::Decrescendo), 65);
        CHECK(mean_of(up, m - 96, m - 32) > 4.0 * mean_of(up, 32, 96));
        CHECK(mean_of(dn, 32, 96) > 4.0 * mean_of(dn, m - 96, m - 32));
    }
}

TEST_CASE("shapes share the carrier under one (seed, index)") {
    SynthSpec spec;
    spec.seed = 21;
    spec.noise_snr_db = std::numeric_limits<double>::infinity();
    spec.shape = MurmurClass::Crescendo;
    const Segment a = synth_murmur(spec, 0);
    spec.shape = MurmurClass::Decrescendo;
    const Segment b = synth_murmur(spec, 0);
    // Positive envelopes scale samples without moving zero crossings, so
    // the sign patterns must agree wherever both are clearly nonzero.
    for (size_t i = 0; i < a.samples.size(); ++i)
        if (std::abs(a.samples[i]) > 1e-6 && std::abs(b.samples[i]) > 1e-6)
            CHECK((a.samples[i] > 0) == (b.samples[i] > 0));
}

TEST_CASE("noise changes the signal at the requested level") {
    SynthSpec spec;
    spec.shape = MurmurClass::Plateau;
    spec.seed = 5;
    spec.noise_snr_db = std::numeric_limits<double>::infinity();
    const Segment clean = synth_murmur(spec, 0);
    spec.noise_snr_db = 15.0;
    const Segment noisy = synth_murmur(spec, 0);
    CHECK(clean.samples != noisy.samples);
    spec.noise_snr_db = -10.0;  // noise dominates
    const Segment drowned = synth_murmur(spec, 0);
    double corr = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < clean.samples.size(); ++i) {
        corr += clean.samples[i] * drowned.samples[i];
        na += clean.samples[i] * clean.samples[i];
        nb += drowned.samples[i] * drowned.samples[i];
    }
    CHECK(std::abs(corr) / std::sqrt(na * nb) < 0.75);
}

TEST_CASE("synth validation") {
    SynthSpec spec;
    spec.band_low_hz = 300.0;
    spec.band_high_hz = 200.0;
    CHECK_THROWS_AS(synth_murmur(spec, 0), InvalidSpec);
    spec.band_low_hz = 1994.0;
    spec.band_high_hz = 1999.0;  // no representable bin below Nyquist
    CHECK_THROWS_AS(synth_murmur(spec, 0), InvalidSpec);
    spec = SynthSpec{};
    CHECK_THROWS_AS(synth_murmur(spec, -1), InvalidSpec);
    CHECK_THROWS_AS(synth_murmur(spec, 0, 4), InvalidSpec);
    CHECK_THROWS_AS(make_synth_dataset({}), EmptyInput);
    spec.count = 0;
    CHECK_THROWS_AS(make_synth_dataset({spec}), InvalidSpec);
}

TEST_CASE("dataset assembly counts classes") {
    SynthSpec a;
    a.shape = MurmurClass::Diamond;
    a.count = 3;
    SynthSpec b;
    b.shape = MurmurClass::Crescendo;
    b.count = 2;
    const SegmentSet set = make_synth_dataset({a, b}, 64);
    CHECK(set.segments.size() == 5);
    CHECK(set.class_counts[0] == 3);
    CHECK(set.class_counts[3] == 2);
    CHECK(set.class_counts[1] == 0);
    set.validate_length(64);
    CHECK_THROWS_AS(set.validate_length(128), InvalidSegment);
}

TEST_CASE("wav round trip preserves float32 samples") {
    const auto dir = temp_dir("wav");
    std::vector<double> x(200);
    Rng rng(3);
    for (auto& v : x) v = 2.0 * rng.next_double() - 1.0;
    const auto path = dir / "t.wav";
    write_wav_f32(path, x, 4000);
    const WavData back = read_wav_mono(path);
    CHECK(back.sample_rate == 4000);
    REQUIRE(back.samples.size() == x.size());
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(back.samples[i] == doctest::Approx(x[i]).epsilon(1e-6));

    std::ofstream(dir / "junk.wav") << "this is not a wav file at all";
    CHECK_THROWS_AS(read_wav_mono(dir / "junk.wav"), DecodeError);
    CHECK_THROWS_AS(read_wav_mono(dir / "missing.wav"), IoError);
}

TEST_CASE("csv column files load as signals") {
    const auto dir = temp_dir("csv");
    std::ofstream(dir / "sig.csv") << "0.5\n-0.25\n1.0\n";
    CHECK(read_csv_column(dir / "sig.csv") == std::vector<double>{0.5, -0.25, 1.0});
    std::ofstream(dir / "bad.csv") << "0.5\npotato\n";
    CHECK_THROWS_AS(read_csv_column(dir / "bad.csv"), DecodeError);
}

TEST_CASE("segment directory round trip preserves data and metadata") {
    SynthSpec a;
    a.shape = MurmurClass::Decrescendo;
    a.count = 3;
    a.seed = 8;
    SynthSpec b;
    b.shape = MurmurClass::Plateau;
    b.count = 2;
    b.seed = 9;
    const SegmentSet set = make_synth_dataset({a, b}, 256, 4000.0, 2);

    const auto dir = temp_dir("roundtrip");
    const auto manifest = write_segment_dir(set, dir);
    const SegmentSet back = load_segments(manifest, 256);
    REQUIRE(back.segments.size() == set.segments.size());
    for (size_t i = 0; i < set.segments.size(); ++i) {
        const Segment& s = set.segments[i];
        const Segment& r = back.segments[i];
        CHECK(r.label == s.label);
        CHECK(r.recording_id == s.recording_id);
        CHECK(r.location == s.location);
        REQUIRE(r.samples.size() == s.samples.size());
        for (size_t k = 0; k < s.samples.size(); ++k)
            CHECK(r.samples[k] == doctest::Approx(s.samples[k]).epsilon(5e-7));
    }

    // Writing twice produces identical bytes.
    const auto dir2 = temp_dir("roundtrip2");
    write_segment_dir(set, dir2);
    std::ifstream m1(manifest), m2(dir2 / "manifest.csv");
    const std::string c1((std::istreambuf_iterator<char>(m1)), {});
    const std::string c2((std::istreambuf_iterator<char>(m2)), {});
    CHECK(c1 == c2);
}

TEST_CASE("length fitting applies at load time") {
    SynthSpec spec;
    spec.count = 1;
    spec.seed = 12;
    const SegmentSet set = make_synth_dataset({spec}, 128);
    const auto dir = temp_dir("fit");
    const auto manifest = write_segment_dir(set, dir);

    const SegmentSet up = load_segments(manifest, 256, LengthFit::Resample);
    CHECK(up.segments[0].samples.size() == 256);

    const SegmentSet pad = load_segments(manifest, 256, LengthFit::Pad);
    CHECK(pad.segments[0].samples.size() == 256);
    for (size_t i = 128; i < 256; ++i) CHECK(pad.segments[0].samples[i] == 0.0);

    const SegmentSet cut = load_segments(manifest, 64, LengthFit::Pad);
    CHECK(cut.segments[0].samples.size() == 64);
}

TEST_CASE("manifest errors carry a useful type") {
    const auto dir = temp_dir("manifest");
    CHECK_THROWS_AS(load_segments(dir / "none.csv", 64), IoError);

    std::ofstream(dir / "badhdr.csv") << "wrong,header,entirely,here\n";
    CHECK_THROWS_AS(load_segments(dir / "badhdr.csv", 64), DecodeError);

    std::ofstream(dir / "missing.csv")
        << "recording_id,path,label,location\nr0,gone.wav,Diamond,AP\n";
    CHECK_THROWS_AS(load_segments(dir / "missing.csv", 64), IoError);

    std::ofstream(dir / "sig.csv") << "0.1\n0.2\n0.3\n0.4\n";
    std::ofstream(dir / "badlabel.csv")
        << "recording_id,path,label,location\nr0,sig.csv,Squarish,AP\n";
    CHECK_THROWS_AS(load_segments(dir / "badlabel.csv", 64), InvalidLabel);

    std::ofstream(dir / "badrow.csv")
        << "recording_id,path,label,location\nr0,sig.csv,Diamond\n";
    CHECK_THROWS_AS(load_segments(dir / "badrow.csv", 64), DecodeError);
}

TEST_CASE("label and site strings round trip") {
    for (int c = 0; c < kNumClasses; ++c) {
        const auto cls = static_cast<MurmurClass>(c);
        CHECK(murmur_class_from_string(to_string(cls)) == cls);
    }
    for (const int s : {0, 1, 2, 3, 4}) {
        const auto site = static_cast<AuscultationSite>(s);
        CHECK(site_from_string(to_string(site)) == site);
    }
    CHECK_THROWS_AS(murmur_class_from_string("diamond"), InvalidLabel);
    CHECK_THROWS_AS(site_from_string("XX"), InvalidLabel);
}
