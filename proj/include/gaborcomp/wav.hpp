#pragma once

#include <filesystem>
#include <vector>

namespace gaborcomp {

struct WavData {
    std::vector<double> samples;
    double sample_rate = 0.0;
};

// Reads a mono WAV file. PCM16 and IEEE float32 payloads are accepted;
// anything else (including multi-channel data) raises DecodeError.
WavData read_wav_mono(const std::filesystem::path& path);

// Writes samples as a mono IEEE float32 WAV file.
void write_wav_f32(const std::filesystem::path& path,
                   const std::vector<double>& samples, double sample_rate);

// Single-column CSV of decimal floats, one value per line.
std::vector<double> read_csv_column(const std::filesystem::path& path);

}  // namespace gaborcomp
