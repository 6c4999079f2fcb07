#include "gaborcomp/wav.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "gaborcomp/bytes.hpp"
#include "gaborcomp/common.hpp"

namespace gaborcomp {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatIeeeFloat = 3;

std::string tag_of(const char t[4]) { return std::string(t, t + 4); }

}  // namespace

WavData read_wav_mono(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    char riff[4];
    bytes::get_bytes(in, riff, 4, "RIFF tag");
    bytes::get_u32(in, "RIFF size");
    char wave[4];
    bytes::get_bytes(in, wave, 4, "WAVE tag");
    if (tag_of(riff) != "RIFF" || tag_of(wave) != "WAVE")
        throw DecodeError(path.string() + " is not a WAV file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    std::vector<char> payload;

    while (in.peek() != EOF) {
        char tag[4];
        bytes::get_bytes(in, tag, 4, "chunk tag");
        const uint32_t size = bytes::get_u32(in, "chunk size");
        if (tag_of(tag) == "fmt ") {
            if (size < 16) throw DecodeError("fmt chunk too small in " + path.string());
            format = bytes::get_u16(in, "format");
            channels = bytes::get_u16(in, "channels");
            rate = bytes::get_u32(in, "sample rate");
            bytes::get_u32(in, "byte rate");
            bytes::get_u16(in, "block align");
            bits = bytes::get_u16(in, "bits per sample");
            in.seekg(size - 16, std::ios::cur);
            have_fmt = true;
        } else if (tag_of(tag) == "data") {
            payload.resize(size);
            bytes::get_bytes(in, payload.data(), size, "data chunk");
        } else {
            in.seekg(size, std::ios::cur);
        }
        if (size % 2 == 1) in.seekg(1, std::ios::cur);  // chunk padding
        if (!in) throw DecodeError("malformed chunk layout in " + path.string());
    }

    if (!have_fmt || payload.empty())
        throw DecodeError("missing fmt or data chunk in " + path.string());
    if (channels != 1)
        throw DecodeError(path.string() + " has " + std::to_string(channels) +
                          " channels; only mono input is supported");

    WavData out;
    out.sample_rate = static_cast<double>(rate);
    if (format == kFormatPcm && bits == 16) {
        const size_t n = payload.size() / 2;
        out.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            const uint8_t lo = static_cast<uint8_t>(payload[2 * i]);
            const uint8_t hi = static_cast<uint8_t>(payload[2 * i + 1]);
            const int16_t v = static_cast<int16_t>(lo | (hi << 8));
            out.samples[i] = static_cast<double>(v) / 32768.0;
        }
    } else if (format == kFormatIeeeFloat && bits == 32) {
        const size_t n = payload.size() / 4;
        out.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            uint32_t u = 0;
            std::memcpy(&u, payload.data() + 4 * i, 4);
            out.samples[i] = static_cast<double>(std::bit_cast<float>(u));
        }
    } else {
        throw DecodeError(path.string() + ": unsupported sample format (format=" +
                          std::to_string(format) + ", bits=" + std::to_string(bits) + ")");
    }
    return out;
}

void write_wav_f32(const std::filesystem::path& path,
                   const std::vector<double>& samples, double sample_rate) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());

    const uint32_t data_size = static_cast<uint32_t>(samples.size() * 4);
    bytes::put_bytes(out, "RIFF", 4);
    bytes::put_u32(out, 36 + data_size);
    bytes::put_bytes(out, "WAVE", 4);
    bytes::put_bytes(out, "fmt ", 4);
    bytes::put_u32(out, 16);
    bytes::put_u16(out, kFormatIeeeFloat);
    bytes::put_u16(out, 1);
    const uint32_t rate = static_cast<uint32_t>(sample_rate);
    bytes::put_u32(out, rate);
    bytes::put_u32(out, rate * 4);
    bytes::put_u16(out, 4);
    bytes::put_u16(out, 32);
    bytes::put_bytes(out, "data", 4);
    bytes::put_u32(out, data_size);
    for (const double v : samples) bytes::put_f32(out, static_cast<float>(v));
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> read_csv_column(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<double> values;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str() || (end && *end != '\0'))
            throw DecodeError(path.string() + ": line " + std::to_string(lineno) +
                              " is not a number: '" + line + "'");
        values.push_back(v);
    }
    return values;
}

}  // namespace gaborcomp
