#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "gsmfast/errors.hpp"
#include "gsmfast/tensor.hpp"

namespace gsmfast {

/// Time-domain signals, channel-major: samples(c, i).
struct AudioBuffer {
    Tensor2<double> samples;
    unsigned sample_rate = 16000;

    AudioBuffer() = default;
    AudioBuffer(std::size_t channels, std::size_t frames, unsigned rate)
        : samples(channels, frames), sample_rate(rate) {}

    std::size_t channels() const noexcept { return samples.extent(0); }
    std::size_t frames() const noexcept { return samples.extent(1); }
    std::span<double> channel(std::size_t c) noexcept { return samples.row(c); }
    std::span<const double> channel(std::size_t c) const noexcept { return samples.row(c); }

    void validate() const {
        if (channels() == 0 || frames() == 0)
            throw InvalidArgument("AudioBuffer: need at least one channel and one frame");
        if (sample_rate == 0)
            throw InvalidArgument("AudioBuffer: sample rate must be positive");
        for (double v : samples)
            if (!std::isfinite(v))
                throw InvalidArgument("AudioBuffer: non-finite sample");
    }
};

enum class WavEncoding { pcm16, float32 };

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "WAV codec assumes a little-endian host");

inline std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void put32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_tag(std::vector<unsigned char>& out, const char* tag) {
    out.insert(out.end(), tag, tag + 4);
}

} // namespace detail

/// Reads a RIFF/WAVE file: PCM 16/24-bit or IEEE float 32-bit, plain or
/// WAVE_FORMAT_EXTENSIBLE. Integer samples are divided by 2^(bits-1).
inline AudioBuffer read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (!std::filesystem::exists(path))
            throw FileNotFound("read_wav: no such file: " + path.string());
        throw IoError("read_wav: cannot open " + path.string());
    }
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                           std::istreambuf_iterator<char>());
    const std::size_t n = bytes.size();
    const unsigned char* b = bytes.data();
    if (n < 12 || std::memcmp(b, "RIFF", 4) != 0 || std::memcmp(b + 8, "WAVE", 4) != 0)
        throw FormatError("read_wav: not a RIFF/WAVE file: " + path.string());

    bool have_fmt = false;
    std::uint16_t code = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t pos = 12;
    while (pos + 8 <= n) {
        const unsigned char* chunk = b + pos;
        const std::uint32_t size = detail::le32(chunk + 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || body + size > n)
                throw FormatError("read_wav: malformed fmt chunk");
            code = detail::le16(b + body);
            channels = detail::le16(b + body + 2);
            rate = detail::le32(b + body + 4);
            bits = detail::le16(b + body + 14);
            if (code == 0xFFFE) {
                if (size < 40)
                    throw FormatError("read_wav: short WAVE_FORMAT_EXTENSIBLE header");
                code = detail::le16(b + body + 24); // first bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt)
                throw FormatError("read_wav: data chunk precedes fmt chunk");
            if (channels == 0)
                throw FormatError("read_wav: zero channels");
            if (rate == 0)
                throw FormatError("read_wav: zero sample rate");
            const bool pcm = code == 1 && (bits == 16 || bits == 24);
            const bool flt = code == 3 && bits == 32;
            if (!pcm && !flt)
                throw UnsupportedFormat("read_wav: unsupported encoding (format code " +
                                        std::to_string(code) + ", " + std::to_string(bits) +
                                        " bits)");
            const std::size_t width = bits / 8;
            const std::size_t frame_bytes = width * channels;
            if (body + size > n || size % frame_bytes != 0)
                throw TruncatedData("read_wav: data chunk shorter than declared in " +
                                    path.string());
            const std::size_t frames = size / frame_bytes;
            if (frames == 0)
                throw FormatError("read_wav: empty data chunk");
            AudioBuffer out(channels, frames, rate);
            const unsigned char* p = b + body;
            for (std::size_t i = 0; i < frames; ++i)
                for (std::size_t c = 0; c < channels; ++c, p += width) {
                    double v;
                    if (flt) {
                        v = static_cast<double>(std::bit_cast<float>(detail::le32(p)));
                    } else if (bits == 16) {
                        v = static_cast<std::int16_t>(detail::le16(p)) / 32768.0;
                    } else {
                        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                        if (s & 0x800000)
                            s -= 0x1000000;
                        v = s / 8388608.0;
                    }
                    out.samples(c, i) = v;
                }
            return out;
        }
        pos = body + size + (size & 1u);
    }
    if (!have_fmt)
        throw FormatError("read_wav: missing fmt chunk");
    throw FormatError("read_wav: missing data chunk");
}

/// Writes interleaved little-endian WAV. pcm16 clamps to [-1, 1 - 2^-15].
inline void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer,
                      WavEncoding encoding = WavEncoding::float32) {
    buffer.validate();
    const std::size_t channels = buffer.channels();
    const std::size_t frames = buffer.frames();
    const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
    const std::uint16_t code = encoding == WavEncoding::pcm16 ? 1 : 3;
    const std::size_t data_bytes = frames * channels * (bits / 8);
    if (data_bytes > 0xFFFFFFFFull - 36)
        throw InvalidArgument("write_wav: buffer too large for RIFF");

    std::vector<unsigned char> out;
    out.reserve(44 + data_bytes);
    detail::put_tag(out, "RIFF");
    detail::put32(out, static_cast<std::uint32_t>(36 + data_bytes));
    detail::put_tag(out, "WAVE");
    detail::put_tag(out, "fmt ");
    detail::put32(out, 16);
    detail::put16(out, code);
    detail::put16(out, static_cast<std::uint16_t>(channels));
    detail::put32(out, buffer.sample_rate);
    detail::put32(out, static_cast<std::uint32_t>(buffer.sample_rate * channels * (bits / 8)));
    detail::put16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
    detail::put16(out, bits);
    detail::put_tag(out, "data");
    detail::put32(out, static_cast<std::uint32_t>(data_bytes));
    constexpr double pcm_max = 1.0 - 1.0 / 32768.0;
    for (std::size_t i = 0; i < frames; ++i)
        for (std::size_t c = 0; c < channels; ++c) {
            const double v = buffer.samples(c, i);
            if (encoding == WavEncoding::pcm16) {
                const double clamped = std::clamp(v, -1.0, pcm_max);
                const auto q = static_cast<std::int16_t>(std::lround(clamped * 32768.0));
                detail::put16(out, static_cast<std::uint16_t>(q));
            } else {
                detail::put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            }
        }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("write_wav: cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f)
        throw IoError("write_wav: write failed: " + path.string());
}

} // namespace gsmfast
