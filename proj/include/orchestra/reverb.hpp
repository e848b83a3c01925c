#pragma once

// Room effect: per-source early-reflection banks, a shared isotropic late
// field, feedback calibration and reverberation-time measurement.
//
// Every reverb unit is a stereo feedback delay network of four mutually
// coprime delay lines with a unitary (Hadamard) mixing stage. The unit's
// room size scales its delay lengths; feedback gains are solved per line
// so that every unit decays at the preset's target RT60.

#include <array>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "orchestra/convolver.hpp"
#include "orchestra/vbap.hpp"

namespace orchestra {

inline constexpr int kLinesPerUnit = 4;
inline constexpr int kUnitsPerBank = 4;
inline constexpr int kStreamsPerBank = 2 * kUnitsPerBank;
inline constexpr double kEarlyGateSeconds = 0.080;
inline constexpr double kPresetCrossfadeSeconds = 0.050;

struct ReverbUnitParams {
  double room_size = 0.0;  ///< dimensionless
  std::array<int, kLinesPerUnit> delay_lengths{};     ///< samples, mutually coprime
  std::array<double, kLinesPerUnit> feedback_gains{}; ///< each in (0, 1)
  double damping = 0.0;                               ///< in-loop lowpass amount, [0, 1]

  void validate() const;
};

/// Per-line recirculation gain reaching -60 dB after `target_rt60` seconds.
double calibrate_feedback(double delay_samples, double sample_rate, double target_rt60);

/// Delay-line lengths (ms per room-size unit) of the early and late units.
inline constexpr std::array<double, kLinesPerUnit> kEarlyDelayMsPerUnit{0.211, 0.251, 0.293, 0.347};
inline constexpr std::array<double, kLinesPerUnit> kLateDelayMsPerUnit{0.613, 0.709, 0.797, 0.907};

/// delay_i = round(room_size * base_i ms), nudged upward until coprime with
/// the earlier lines; gains from calibrate_feedback.
ReverbUnitParams make_unit_params(double room_size,
                                  const std::array<double, kLinesPerUnit>& base_ms,
                                  double sample_rate, double target_rt60, double damping = 0.0);

enum class RoomName { Factory, Church };
std::string_view to_string(RoomName name);

struct RoomPreset {
  RoomName name = RoomName::Factory;
  double target_rt60 = 1.2;
  std::array<double, kUnitsPerBank> early_room_sizes{};
  std::array<double, kUnitsPerBank> late_room_sizes{};
  double damping = 0.0;
  SpreadParam early_send_spread{50.0};

  static RoomPreset factory();
  static RoomPreset church();

  std::array<ReverbUnitParams, kUnitsPerBank> early_units(double sample_rate) const;
  std::array<ReverbUnitParams, kUnitsPerBank> late_units(double sample_rate) const;

  void validate() const;
};

RoomPreset parse_preset(std::istream& in);
RoomPreset load_preset(const std::string& path);
std::string format_preset(const RoomPreset& preset);

/// Stereo FDN. Output is the wet signal only (no direct path).
class FdnUnit {
 public:
  explicit FdnUnit(const ReverbUnitParams& params);

  /// Processes `input` into `left`/`right` (same length).
  void process(std::span<const double> input, std::span<double> left, std::span<double> right);
  void reset();
  const ReverbUnitParams& params() const { return params_; }

 private:
  ReverbUnitParams params_;
  std::array<std::vector<double>, kLinesPerUnit> lines_;
  std::array<std::size_t, kLinesPerUnit> heads_{};
  std::array<double, kLinesPerUnit> lowpass_{};
};

/// Impulse response of a unit: `samples` rows, columns {left, right}.
Eigen::MatrixXd unit_impulse_response(const ReverbUnitParams& params, Eigen::Index samples);

/// The four early units of a preset, gated to their first 80 ms and stored
/// as eight impulse responses (unit-major, L then R), each scaled to 1/8
/// energy so the eight-channel sum is near unit energy.
class EarlyReflectionSet {
 public:
  EarlyReflectionSet(const RoomPreset& preset, double sample_rate, int block_size);

  const Eigen::MatrixXd& impulse_responses() const { return irs_; }
  std::shared_ptr<const ConvolutionKernel> kernel() const { return kernel_; }
  const RoomPreset& preset() const { return preset_; }

 private:
  RoomPreset preset_;
  Eigen::MatrixXd irs_;
  std::shared_ptr<const ConvolutionKernel> kernel_;
};

/// Early banks keyed by source. Banks share the preset's kernel, so equal
/// inputs give equal outputs regardless of source.
class EarlyReflectionBanks {
 public:
  explicit EarlyReflectionBanks(std::shared_ptr<const EarlyReflectionSet> set);

  std::size_t allocate(const std::string& source_id);
  bool contains(const std::string& source_id) const;
  std::size_t index_of(const std::string& source_id) const;  ///< throws UnknownSource

  /// Four stereo blocks as block_size x 8 (unit-major, L then R).
  void process(const std::string& source_id, const double* input, Eigen::Ref<Eigen::MatrixXd> out);
  void process(std::size_t bank, const double* input, Eigen::Ref<Eigen::MatrixXd> out);
  /// Sum of the eight channels.
  void process_mix(std::size_t bank, const double* input, Eigen::Ref<Eigen::VectorXd> out);

  int block_size() const { return set_->kernel()->block_size(); }

 private:
  std::shared_ptr<const EarlyReflectionSet> set_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Convolver> banks_;
};

/// One shared set of four late units. The eight decorrelated streams are
/// normalized to unit impulse-response energy and dealt round-robin onto
/// the buses so every bus carries the same level.
class LateField {
 public:
  LateField(const RoomPreset& preset, double sample_rate, int bus_count);

  /// `out` is n x bus_count; overwritten.
  void process(std::span<const double> input, Eigen::Ref<Eigen::MatrixXd> out);
  /// `out` is n x 8 normalized streams; overwritten.
  void process_streams(std::span<const double> input, Eigen::Ref<Eigen::MatrixXd> out);
  void reset();

  const RoomPreset& preset() const { return preset_; }
  const std::array<double, kStreamsPerBank>& stream_scale() const { return stream_scale_; }

 private:
  RoomPreset preset_;
  int bus_count_;
  std::vector<FdnUnit> units_;
  std::array<double, kStreamsPerBank> stream_scale_{};
  std::vector<double> scratch_l_, scratch_r_;
  Eigen::MatrixXd streams_;
};

enum class RtMethod { SchroederT20, SlopeWindow };

struct RtEstimate {
  double rt60 = 0.0;          ///< seconds
  RtMethod method = RtMethod::SchroederT20;
  double fit_residual = 0.0;  ///< RMS deviation from the fitted line, dB
};

/// SchroederT20: backward-integrated energy, fit on [-5, -25] dB.
/// SlopeWindow: the same decay curve fitted between 0.1 s and 0.5 s.
/// Both extrapolate the fitted slope to -60 dB.
RtEstimate measure_rt(std::span<const double> impulse_response, double sample_rate,
                      RtMethod method);

/// Backward-integrated energy decay curve in dB, normalized to 0 dB at t=0.
std::vector<double> energy_decay_curve_db(std::span<const double> impulse_response);

}  // namespace orchestra
