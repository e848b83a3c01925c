#pragma once

// RIFF/WAVE reading (PCM 8/16/24/32-bit, IEEE float 32/64, plain or
// extensible) and 32-bit float writing.

#include <cstdint>
#include <fstream>
#include <string>

#include <Eigen/Core>

namespace orchestra {

struct AudioBuffer {
  double sample_rate = 48000.0;
  Eigen::MatrixXd samples;  ///< frames x channels

  Eigen::Index frames() const { return samples.rows(); }
  Eigen::Index channels() const { return samples.cols(); }
};

AudioBuffer read_wav(const std::string& path);

/// Writes frames x channels as 32-bit float PCM. Channel order is column order.
void write_wav(const std::string& path, const Eigen::MatrixXd& samples, double sample_rate);

/// Incremental 32-bit float writer; sizes are patched on close().
class WavWriter {
 public:
  WavWriter(const std::string& path, int channels, double sample_rate);
  ~WavWriter();
  WavWriter(const WavWriter&) = delete;
  WavWriter& operator=(const WavWriter&) = delete;

  /// `block` is frames x channels.
  void write(const Eigen::Ref<const Eigen::MatrixXd>& block);
  void close();
  std::uint64_t frames_written() const { return frames_; }

 private:
  std::ofstream out_;
  int channels_;
  double sample_rate_ = 48000.0;
  std::uint64_t frames_ = 0;
  bool closed_ = false;
};

/// Mean of the channels.
Eigen::VectorXd downmix_to_mono(const AudioBuffer& buffer);

}  // namespace orchestra
