#pragma once

// Uniformly partitioned overlap-save convolution of one input against a
// bank of equal-length impulse responses.

#include <complex>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace orchestra {

/// Frequency-domain partitions of C impulse responses, plus their sum.
/// Immutable once built, so one kernel can back many convolvers.
class ConvolutionKernel {
 public:
  /// `irs` holds one impulse response per column.
  ConvolutionKernel(const Eigen::MatrixXd& irs, int block_size);

  int block_size() const { return block_size_; }
  int channels() const { return channels_; }
  int partitions() const { return partitions_; }
  Eigen::Index ir_length() const { return ir_length_; }

 private:
  friend class Convolver;
  using Spectrum = std::vector<std::complex<double>>;

  int block_size_;
  int channels_;
  int partitions_;
  Eigen::Index ir_length_;
  std::vector<std::vector<Spectrum>> spectra_;  // [channel][partition]
  std::vector<Spectrum> mix_spectra_;           // [partition], sum over channels
};

/// Streaming state for one input. Output is exactly zero once the input
/// has been silent for the full IR length.
class Convolver {
 public:
  explicit Convolver(std::shared_ptr<const ConvolutionKernel> kernel);

  /// `input` has block_size samples; `out` is block_size x channels.
  void process(const double* input, Eigen::Ref<Eigen::MatrixXd> out);
  /// Sum over all channels into `out` (block_size samples).
  void process_mix(const double* input, Eigen::Ref<Eigen::VectorXd> out);
  void reset();

  const ConvolutionKernel& kernel() const { return *kernel_; }

 private:
  // Returns false when the block is provably silent (nothing to compute).
  bool push_input(const double* input);
  int first_silent_offset() const;
  void inverse_to(const ConvolutionKernel::Spectrum& spectrum, double* out);

  std::shared_ptr<const ConvolutionKernel> kernel_;
  std::vector<double> time_;                        // 2B samples, overlap-save window
  std::vector<ConvolutionKernel::Spectrum> fdl_;    // frequency-domain delay line
  int fdl_head_ = 0;
  ConvolutionKernel::Spectrum acc_;
  std::vector<double> ifft_out_;
  std::int64_t block_start_ = 0;   // absolute index of the current block's first sample
  std::int64_t last_nonzero_ = -1; // absolute index of the last nonzero input sample
  bool clear_ = true;
};

}  // namespace orchestra
