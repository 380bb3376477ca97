#include "echogrid/wav.hpp"

#include "echogrid/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace echogrid::wav {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

std::vector<std::uint8_t> encode(const Audio& audio, Encoding encoding) {
  if (audio.channels <= 0 || audio.sample_rate <= 0) throw std::invalid_argument("invalid WAV format");
  const std::uint16_t bytes_per_sample = encoding == Encoding::Pcm16 ? 2 : 4;
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * bytes_per_sample);
  const auto block_align = static_cast<std::uint16_t>(audio.channels * bytes_per_sample);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, encoding == Encoding::Pcm16 ? 1 : 3);
  put_u16(out, static_cast<std::uint16_t>(audio.channels));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate) * block_align);
  put_u16(out, block_align);
  put_u16(out, static_cast<std::uint16_t>(bytes_per_sample * 8));
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : audio.samples) {
    if (encoding == Encoding::Pcm16) {
      const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(s));
    }
  }
  return out;
}

Audio decode(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE")) throw DataError("not a RIFF/WAVE file");
  std::size_t at = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (at + 8 <= b.size()) {
    const std::uint32_t size = get_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + size > b.size()) throw DataError("truncated WAV chunk");
    if (tag_is(b, at, "fmt ")) {
      if (size < 16) throw DataError("WAV fmt chunk too short");
      format = get_u16(b, body);
      channels = get_u16(b, body + 2);
      rate = get_u32(b, body + 4);
      bits = get_u16(b, body + 14);
      have_fmt = true;
    } else if (tag_is(b, at, "data")) {
      if (!have_fmt) throw DataError("WAV data chunk before fmt chunk");
      if (channels == 0 || rate == 0) throw DataError("WAV header has zero channels or rate");
      Audio audio;
      audio.channels = channels;
      audio.sample_rate = static_cast<int>(rate);
      if (format == 1 && bits == 16) {
        audio.samples.resize(size / 2);
        for (std::size_t i = 0; i < audio.samples.size(); ++i)
          audio.samples[i] = static_cast<float>(static_cast<std::int16_t>(get_u16(b, body + 2 * i)) / 32767.0);
      } else if (format == 3 && bits == 32) {
        audio.samples.resize(size / 4);
        for (std::size_t i = 0; i < audio.samples.size(); ++i)
          audio.samples[i] = std::bit_cast<float>(get_u32(b, body + 4 * i));
      } else {
        throw DataError("unsupported WAV encoding (need PCM16 or float32)");
      }
      if (audio.samples.size() % channels != 0) throw DataError("WAV data is not a whole number of frames");
      return audio;
    }
    at = body + size + (size & 1u);
  }
  throw DataError("WAV file has no data chunk");
}

Audio read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const Audio& audio, Encoding encoding) {
  const auto bytes = encode(audio, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StorageError("cannot write " + path.string());
}

}  // namespace echogrid::wav
