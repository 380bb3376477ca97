#pragma once

// Minimal RIFF/WAVE reader and writer: PCM16 and float32, any channel count.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace echogrid::wav {

enum class Encoding { Pcm16, Float32 };

struct Audio {
  int channels = 1;
  int sample_rate = 44100;
  std::vector<float> samples;  // interleaved

  std::size_t frames() const { return channels > 0 ? samples.size() / static_cast<std::size_t>(channels) : 0; }
};

/// PCM16 conversion: clamp to [-1, 1], scale by 32767, round half away from zero.
std::vector<std::uint8_t> encode(const Audio& audio, Encoding encoding = Encoding::Pcm16);

/// Throws DataError on anything other than a well-formed PCM16 or float32 file.
Audio decode(std::span<const std::uint8_t> bytes);

Audio read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Audio& audio, Encoding encoding = Encoding::Pcm16);

}  // namespace echogrid::wav
