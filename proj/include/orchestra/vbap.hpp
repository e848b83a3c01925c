#pragma once

// Pairwise 2D vector-base amplitude panning over listener-corrected speaker
// directions, with multiple-direction spreading for wide sources.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "orchestra/spatial.hpp"

namespace orchestra {

/// Source width on the 0..100 scale. 100 maps to a +/-90 degree fan.
class SpreadParam {
 public:
  constexpr SpreadParam() = default;
  explicit SpreadParam(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 100.0))
      throw std::invalid_argument("spread must lie in [0, 100]");
  }
  constexpr double value() const { return value_; }
  double half_angle() const { return value_ * std::numbers::pi / 200.0; }

 private:
  double value_ = 0.0;
};

template <typename Scalar>
using VectorXT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One gain per bus; sum of squares is 1.
template <typename Scalar>
struct PanGainsT {
  VectorXT<Scalar> gains;
};
using PanGains = PanGainsT<double>;

/// Directions replicated on each side of the source when spread > 0.
inline constexpr int kSpreadReplicasPerSide = 4;

/// Inverse-distance level for the direct path, clamped inside 1 m.
template <typename Scalar>
Scalar direct_level(Scalar distance) {
  constexpr Scalar reference = Scalar(1);
  return reference / std::max(distance, reference);
}

/// Panner bound to one layout. All scratch space is sized at construction;
/// `pan` does not allocate.
template <typename Scalar>
class BasicPanner {
 public:
  explicit BasicPanner(const LoudspeakerLayout& layout)
      : bus_count_(layout.bus_count),
        positions_(layout.speakers.size()),
        bus_of_(layout.speakers.size()),
        angles_(layout.speakers.size()),
        order_(layout.speakers.size()),
        speaker_gain_(layout.speakers.size()) {
    for (std::size_t i = 0; i < layout.speakers.size(); ++i) {
      positions_[i] = layout.speakers[i].position.template cast<Scalar>();
      bus_of_[i] = layout.speakers[i].bus;
    }
  }

  int bus_count() const { return bus_count_; }

  /// Gains for a source at world azimuth `source_azimuth` (measured from the
  /// listener, yaw 0 frame). Speaker directions are corrected to the
  /// listener pose first. `out` must have bus_count() entries.
  template <typename Derived>
  void pan(Scalar source_azimuth, const ListenerPoseT<Scalar>& listener, SpreadParam spread,
           Eigen::MatrixBase<Derived> const& out_const) {
    auto& out = const_cast<Eigen::MatrixBase<Derived>&>(out_const);
    correct_directions(listener);
    const Scalar centre = wrap_angle<Scalar>(source_azimuth - listener.yaw);

    std::fill(speaker_gain_.begin(), speaker_gain_.end(), Scalar(0));
    if (spread.value() == 0.0) {
      pan_pair(centre);
    } else {
      const Scalar step = Scalar(spread.half_angle()) / Scalar(kSpreadReplicasPerSide);
      for (int k = -kSpreadReplicasPerSide; k <= kSpreadReplicasPerSide; ++k)
        pan_pair(wrap_angle<Scalar>(centre + Scalar(k) * step));
    }

    out.setZero();
    for (std::size_t i = 0; i < speaker_gain_.size(); ++i)
      out(bus_of_[i]) += speaker_gain_[i] * speaker_gain_[i];
    out = out.cwiseSqrt();
    const Scalar norm = out.norm();
    if (norm > Scalar(0)) out /= norm;
  }

  /// Listener-frame speaker azimuths from the last `pan` call, ring order.
  const std::vector<Scalar>& corrected_azimuths() const { return angles_; }

 private:
  void correct_directions(const ListenerPoseT<Scalar>& listener) {
    for (std::size_t i = 0; i < positions_.size(); ++i) {
      angles_[i] = relative_azimuth(listener, positions_[i]);
      order_[i] = i;
    }
    // Insertion sort: small n, no allocation.
    for (std::size_t i = 1; i < order_.size(); ++i) {
      const std::size_t v = order_[i];
      std::size_t j = i;
      while (j > 0 && angles_[order_[j - 1]] > angles_[v]) {
        order_[j] = order_[j - 1];
        --j;
      }
      order_[j] = v;
    }
  }

  // Accumulates one unit-power pairwise solution into speaker_gain_.
  void pan_pair(Scalar azimuth) {
    constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
    const std::size_t n = order_.size();
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t lo = order_[k];
      const std::size_t hi = order_[(k + 1) % n];
      Scalar width = angles_[hi] - angles_[lo];
      if (k + 1 == n) width += two_pi;
      if (width < Scalar(1e-12)) continue;
      Scalar offset = azimuth - angles_[lo];
      if (offset < Scalar(0)) offset += two_pi;
      if (offset >= two_pi) offset -= two_pi;
      if (offset > width) continue;

      Eigen::Matrix<Scalar, 2, 2> base;
      base << std::sin(angles_[lo]), std::sin(angles_[hi]),
              std::cos(angles_[lo]), std::cos(angles_[hi]);
      const Eigen::Matrix<Scalar, 2, 1> target(std::sin(azimuth), std::cos(azimuth));
      if (width >= std::numbers::pi_v<Scalar> - Scalar(1e-9) || std::abs(base.determinant()) < Scalar(1e-9)) {
        // Arc of pi or more (listener outside the ring): the pair cannot
        // reach the back of the arc with positive gains, snap instead.
        speaker_gain_[offset <= width / 2 ? lo : hi] += Scalar(1);
        return;
      }
      Eigen::Matrix<Scalar, 2, 1> g = base.inverse() * target;
      g = g.cwiseMax(Scalar(0));
      const Scalar norm = g.norm();
      if (norm > Scalar(0)) g /= norm;
      speaker_gain_[lo] += g(0);
      speaker_gain_[hi] += g(1);
      return;
    }
    // Rounding left the azimuth between two arcs: it sits on a speaker.
    std::size_t nearest = 0;
    Scalar best = two_pi;
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar d = std::abs(wrap_angle<Scalar>(azimuth - angles_[i]));
      if (d < best) best = d, nearest = i;
    }
    speaker_gain_[nearest] += Scalar(1);
  }

  int bus_count_;
  std::vector<Vec3T<Scalar>> positions_;
  std::vector<int> bus_of_;
  std::vector<Scalar> angles_;
  std::vector<std::size_t> order_;
  std::vector<Scalar> speaker_gain_;
};

using Panner = BasicPanner<double>;

/// Convenience form; builds a panner per call.
template <typename Scalar = double>
PanGainsT<Scalar> pan(Scalar source_azimuth, const ListenerPoseT<Scalar>& listener,
                      const LoudspeakerLayout& layout, SpreadParam spread) {
  BasicPanner<Scalar> panner(layout);
  PanGainsT<Scalar> result{VectorXT<Scalar>::Zero(layout.bus_count)};
  panner.pan(source_azimuth, listener, spread, result.gains);
  return result;
}

}  // namespace orchestra
