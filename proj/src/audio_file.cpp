#include "orchestra/audio_file.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <iterator>
#include <limits>
#include <vector>

#include "orchestra/errors.hpp"

namespace orchestra {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
constexpr std::uint32_t kHeaderBytes = 12 + 8 + 40 + 12 + 8;  // RIFF, fmt(ext), fact, data header

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> b{char(v & 0xFF), char(v >> 8)};
  out.write(b.data(), 2);
}
void put32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF),
                              char((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}

void write_header(std::ostream& out, int channels, double sample_rate, std::uint64_t frames) {
  const std::uint32_t block_align = static_cast<std::uint32_t>(channels) * 4;
  const std::uint64_t data_bytes = frames * block_align;
  if (data_bytes + kHeaderBytes > std::numeric_limits<std::uint32_t>::max())
    throw IoError("audio too long for a RIFF file");
  const auto rate = static_cast<std::uint32_t>(sample_rate);
  out.write("RIFF", 4);
  put32(out, static_cast<std::uint32_t>(kHeaderBytes - 8 + data_bytes));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(out, 40);
  put16(out, kFormatExtensible);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, rate);
  put32(out, rate * block_align);
  put16(out, static_cast<std::uint16_t>(block_align));
  put16(out, 32);
  put16(out, 22);
  put16(out, 32);  // valid bits
  put32(out, 0);   // no speaker mask: channels are buses
  // KSDATAFORMAT_SUBTYPE_IEEE_FLOAT
  static constexpr std::array<unsigned char, 16> guid{0x03, 0x00, 0x00, 0x00, 0x00, 0x00, 0x10, 0x00,
                                                      0x80, 0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
  out.write(reinterpret_cast<const char*>(guid.data()), guid.size());
  out.write("fact", 4);
  put32(out, 4);
  put32(out, static_cast<std::uint32_t>(frames));
  out.write("data", 4);
  put32(out, static_cast<std::uint32_t>(data_bytes));
}

void write_frames(std::ostream& out, const Eigen::Ref<const Eigen::MatrixXd>& block) {
  std::vector<char> bytes(static_cast<std::size_t>(block.size()) * 4);
  std::size_t k = 0;
  for (Eigen::Index f = 0; f < block.rows(); ++f)
    for (Eigen::Index c = 0; c < block.cols(); ++c) {
      const float v = static_cast<float>(block(f, c));
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      for (int i = 0; i < 4; ++i) bytes[k++] = char((bits >> (8 * i)) & 0xFF);
    }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio file " + path);
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw IoError(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const unsigned char* chunk = data.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, data.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) format = le16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      pcm = chunk + 8;
      pcm_bytes = avail;
    }
    pos = body + size + (size & 1);
  }
  if (!pcm || channels == 0 || rate == 0) throw IoError(path + ": missing fmt or data chunk");
  const bool is_float = format == kFormatFloat;
  if (!(format == kFormatPcm || is_float)) throw IoError(path + ": unsupported sample format");
  if (is_float ? !(bits == 32 || bits == 64) : !(bits == 8 || bits == 16 || bits == 24 || bits == 32))
    throw IoError(path + ": unsupported bit depth " + std::to_string(bits));

  const std::size_t width = bits / 8;
  const std::size_t frames = pcm_bytes / (width * channels);
  AudioBuffer buf;
  buf.sample_rate = rate;
  buf.samples.resize(static_cast<Eigen::Index>(frames), channels);
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = pcm + (f * channels + c) * width;
      double v = 0.0;
      if (is_float && bits == 32) {
        float x;
        std::uint32_t u = le32(p);
        std::memcpy(&x, &u, 4);
        v = x;
      } else if (is_float) {
        std::uint64_t u = std::uint64_t(le32(p)) | std::uint64_t(le32(p + 4)) << 32;
        std::memcpy(&v, &u, 8);
      } else if (bits == 8) {
        v = (double(p[0]) - 128.0) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = std::int32_t(p[0]) | std::int32_t(p[1]) << 8 | std::int32_t(p[2]) << 16;
        if (s & 0x800000) s -= 0x1000000;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(le32(p)) / 2147483648.0;
      }
      buf.samples(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)) = v;
    }
  return buf;
}

void write_wav(const std::string& path, const Eigen::MatrixXd& samples, double sample_rate) {
  WavWriter w(path, static_cast<int>(samples.cols()), sample_rate);
  w.write(samples);
  w.close();
}

WavWriter::WavWriter(const std::string& path, int channels, double sample_rate)
    : out_(path, std::ios::binary | std::ios::trunc), channels_(channels), sample_rate_(sample_rate) {
  if (!out_) throw IoError("cannot open " + path + " for writing");
  if (channels < 1) throw std::invalid_argument("channel count must be positive");
  write_header(out_, channels, sample_rate, 0);
}

WavWriter::~WavWriter() {
  try {
    close();
  } catch (...) {
  }
}

void WavWriter::write(const Eigen::Ref<const Eigen::MatrixXd>& block) {
  if (block.cols() != channels_) throw std::invalid_argument("channel count mismatch");
  write_frames(out_, block);
  frames_ += static_cast<std::uint64_t>(block.rows());
}

void WavWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.seekp(0);
  write_header(out_, channels_, sample_rate_, frames_);
  out_.close();
  if (!out_) throw IoError("failed to finalize audio file");
}

Eigen::VectorXd downmix_to_mono(const AudioBuffer& buffer) {
  if (buffer.channels() == 0) return Eigen::VectorXd();
  return buffer.samples.rowwise().mean();
}

}  // namespace orchestra
