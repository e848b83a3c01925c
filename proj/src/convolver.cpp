#include "orchestra/convolver.hpp"

#include <algorithm>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace orchestra {
namespace {

Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}

}  // namespace

ConvolutionKernel::ConvolutionKernel(const Eigen::MatrixXd& irs, int block_size)
    : block_size_(block_size),
      channels_(static_cast<int>(irs.cols())),
      partitions_(0),
      ir_length_(irs.rows()) {
  if (block_size < 1) throw std::invalid_argument("block size must be positive");
  if (irs.rows() < 1 || irs.cols() < 1) throw std::invalid_argument("empty impulse response bank");
  partitions_ = static_cast<int>((irs.rows() + block_size - 1) / block_size);
  const int n = 2 * block_size;
  auto& fft = fft_engine();

  std::vector<double> frame(static_cast<std::size_t>(n));
  Spectrum spectrum;
  spectra_.assign(static_cast<std::size_t>(channels_), {});
  mix_spectra_.assign(static_cast<std::size_t>(partitions_),
                      Spectrum(static_cast<std::size_t>(block_size + 1)));
  for (int c = 0; c < channels_; ++c) {
    auto& parts = spectra_[static_cast<std::size_t>(c)];
    for (int p = 0; p < partitions_; ++p) {
      std::fill(frame.begin(), frame.end(), 0.0);
      const Eigen::Index begin = static_cast<Eigen::Index>(p) * block_size;
      const Eigen::Index count = std::min<Eigen::Index>(block_size, irs.rows() - begin);
      for (Eigen::Index i = 0; i < count; ++i) frame[static_cast<std::size_t>(i)] = irs(begin + i, c);
      fft.fwd(spectrum, frame);
      parts.push_back(spectrum);
      auto& mix = mix_spectra_[static_cast<std::size_t>(p)];
      for (std::size_t k = 0; k < mix.size(); ++k) mix[k] += spectrum[k];
    }
  }
}

Convolver::Convolver(std::shared_ptr<const ConvolutionKernel> kernel)
    : kernel_(std::move(kernel)) {
  const auto b = static_cast<std::size_t>(kernel_->block_size());
  time_.assign(2 * b, 0.0);
  fdl_.assign(static_cast<std::size_t>(kernel_->partitions()),
              ConvolutionKernel::Spectrum(b + 1));
  acc_.assign(b + 1, {});
  ifft_out_.assign(2 * b, 0.0);
}

void Convolver::reset() {
  std::fill(time_.begin(), time_.end(), 0.0);
  for (auto& s : fdl_) std::fill(s.begin(), s.end(), std::complex<double>{});
  fdl_head_ = 0;
  block_start_ = 0;
  last_nonzero_ = -1;
  clear_ = true;
}

bool Convolver::push_input(const double* input) {
  const int b = kernel_->block_size();
  for (int i = 0; i < b; ++i)
    if (input[i] != 0.0) last_nonzero_ = block_start_ + i;

  const std::int64_t support = kernel_->ir_length();
  const bool silent = last_nonzero_ < 0 || block_start_ > last_nonzero_ + support - 1;
  if (silent) {
    // All input that can reach this or any later output is zero.
    if (!clear_) {
      std::fill(time_.begin(), time_.end(), 0.0);
      for (auto& s : fdl_) std::fill(s.begin(), s.end(), std::complex<double>{});
      clear_ = true;
    }
    return false;
  }
  clear_ = false;

  std::copy(time_.begin() + b, time_.end(), time_.begin());
  std::copy(input, input + b, time_.begin() + b);
  fdl_head_ = (fdl_head_ + kernel_->partitions() - 1) % kernel_->partitions();
  fft_engine().fwd(fdl_[static_cast<std::size_t>(fdl_head_)], time_);
  return true;
}

int Convolver::first_silent_offset() const {
  const std::int64_t end = last_nonzero_ + kernel_->ir_length();
  return static_cast<int>(std::clamp<std::int64_t>(end - block_start_, 0, kernel_->block_size()));
}

void Convolver::inverse_to(const ConvolutionKernel::Spectrum& spectrum, double* out) {
  const int b = kernel_->block_size();
  fft_engine().inv(ifft_out_, spectrum, static_cast<Eigen::Index>(2 * b));
  std::copy(ifft_out_.begin() + b, ifft_out_.end(), out);
  std::fill(out + first_silent_offset(), out + b, 0.0);
}

void Convolver::process(const double* input, Eigen::Ref<Eigen::MatrixXd> out) {
  const int b = kernel_->block_size();
  const int parts = kernel_->partitions();
  if (push_input(input)) {
    for (int c = 0; c < kernel_->channels(); ++c) {
      const auto& h = kernel_->spectra_[static_cast<std::size_t>(c)];
      std::fill(acc_.begin(), acc_.end(), std::complex<double>{});
      for (int p = 0; p < parts; ++p) {
        const auto& x = fdl_[static_cast<std::size_t>((fdl_head_ + p) % parts)];
        const auto& hp = h[static_cast<std::size_t>(p)];
        for (std::size_t k = 0; k < acc_.size(); ++k) acc_[k] += x[k] * hp[k];
      }
      inverse_to(acc_, out.col(c).data());
    }
  } else {
    out.setZero();
  }
  block_start_ += b;
}

void Convolver::process_mix(const double* input, Eigen::Ref<Eigen::VectorXd> out) {
  const int b = kernel_->block_size();
  const int parts = kernel_->partitions();
  if (push_input(input)) {
    std::fill(acc_.begin(), acc_.end(), std::complex<double>{});
    for (int p = 0; p < parts; ++p) {
      const auto& x = fdl_[static_cast<std::size_t>((fdl_head_ + p) % parts)];
      const auto& hp = kernel_->mix_spectra_[static_cast<std::size_t>(p)];
      for (std::size_t k = 0; k < acc_.size(); ++k) acc_[k] += x[k] * hp[k];
    }
    inverse_to(acc_, out.data());
  } else {
    out.setZero();
  }
  block_start_ += b;
}

}  // namespace orchestra
