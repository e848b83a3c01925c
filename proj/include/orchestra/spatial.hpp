#pragma once

// Reproduction-room geometry: loudspeaker layout, tracked listener pose,
// listener-relative speaker directions and spatial-aliasing analysis.
//
// Frame: right-handed, origin at the room-floor center, x = width (positive
// right), y = depth (positive front), z = up. Azimuths are measured in the
// horizontal plane from the listener's heading, positive to the right, and
// live in (-pi, pi].

#include <cmath>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "orchestra/errors.hpp"

namespace orchestra {

template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
using Vec3 = Vec3T<double>;

template <typename Scalar>
struct ListenerPoseT {
  Vec3T<Scalar> position = Vec3T<Scalar>::Zero();
  Scalar yaw = Scalar(0);  ///< heading, radians; 0 faces +y, positive turns right
};
using ListenerPose = ListenerPoseT<double>;

struct Loudspeaker {
  int id = 0;
  Vec3 position = Vec3::Zero();
  int bus = 0;
};

enum class RoomHalf { Left, Right };

/// Speakers in ring order plus the bus map. Several speakers may share a bus.
struct LoudspeakerLayout {
  std::vector<Loudspeaker> speakers;
  int bus_count = 8;
  std::vector<int> subwoofer_buses;
  double room_width = 9.6;
  double room_depth = 3.0;
  double room_height = 3.0;
  double min_spacing = 0.0;  ///< required ring-adjacent spacing between distinct buses

  /// Throws InvalidLayout on the first violated invariant.
  void validate() const;
};

/// Wall-top ring of 10 speakers on 8 buses over a 9.6 x 3 m footprint.
LoudspeakerLayout canonical_layout();

/// Parses the layout text format. Errors carry the 1-based line number.
LoudspeakerLayout parse_layout(std::istream& in);
LoudspeakerLayout load_layout(const std::string& path);
std::string format_layout(const LoudspeakerLayout& layout);

struct AliasingReport {
  double min_spacing_d = 0.0;    ///< meters
  double speed_of_sound_c = 0.0; ///< m/s
  double f_al = 0.0;             ///< Hz
};

inline constexpr double kDefaultSpeedOfSound = 340.0;
inline constexpr double kMinHorizontalDistance = 1e-6;

/// Wraps an angle into (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi_v<Scalar>) a += two_pi;
  if (a > std::numbers::pi_v<Scalar>) a -= two_pi;
  return a;
}

/// World-frame azimuth (yaw 0) of `to` seen from `from`.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar world_azimuth(const Eigen::MatrixBase<DerivedA>& from,
                                        const Eigen::MatrixBase<DerivedB>& to) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar dx = to.x() - from.x();
  const Scalar dy = to.y() - from.y();
  if (std::hypot(dx, dy) <= Scalar(kMinHorizontalDistance))
    throw DegenerateGeometry("target coincides with the listener in the horizontal plane");
  return std::atan2(dx, dy);
}

/// Azimuth of `target` in the listener's yaw-compensated horizontal frame.
/// Elevation is discarded.
template <typename Scalar, typename Derived>
Scalar relative_azimuth(const ListenerPoseT<Scalar>& listener,
                        const Eigen::MatrixBase<Derived>& target) {
  return wrap_angle<Scalar>(world_azimuth(listener.position, target) - listener.yaw);
}

template <typename Scalar, typename Derived>
Scalar relative_distance(const ListenerPoseT<Scalar>& listener,
                         const Eigen::MatrixBase<Derived>& target) {
  return (target - listener.position).norm();
}

/// f_al = c / (2 d) with d the smallest ring-adjacent spacing between
/// speakers on distinct buses.
AliasingReport aliasing_frequency(const LoudspeakerLayout& layout,
                                  double speed_of_sound = kDefaultSpeedOfSound);

/// Left iff x < 0; x == 0 belongs to the right half.
inline RoomHalf room_half(const ListenerPose& listener, double room_width) {
  if (!(room_width > 0.0)) throw std::invalid_argument("room_width must be positive");
  return listener.position.x() < 0.0 ? RoomHalf::Left : RoomHalf::Right;
}

/// Clamps the pose into the room bounding box. Tracking jitter at the walls
/// is expected, so out-of-room positions are not errors.
ListenerPose clamp_to_room(ListenerPose pose, const LoudspeakerLayout& layout);

}  // namespace orchestra
