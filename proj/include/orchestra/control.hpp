#pragma once

// Text control protocol. One message per datagram, ASCII, fields separated
// by a single space, optional trailing LF, at most 512 bytes:
//
//   POS LISTENER <x> <y> <z> <yaw>
//   POS SOURCE <id> <x> <y> <z>
//   TRIG <clip>
//   LOOP <clip> ON|OFF
//   TEMPO +|-
//   SHAKE <gesture> <accel>
//   CRANE NEXT|UP|DOWN
//   STATUS
//
// <id> is 1..64 chars of [A-Za-z0-9_.-]. Numbers are decimal with '.',
// optional sign and exponent; positions are meters within +/-1000, yaw is
// radians within +/-1000, accel is in standard-gravity units within +/-1000.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace orchestra {

inline constexpr std::size_t kMaxDatagramBytes = 512;
inline constexpr std::size_t kMaxIdLength = 64;

struct ListenerPosition {
  double x = 0, y = 0, z = 0, yaw = 0;
  bool operator==(const ListenerPosition&) const = default;
};
struct SourcePosition {
  std::string id;
  double x = 0, y = 0, z = 0;
  bool operator==(const SourcePosition&) const = default;
};
struct TriggerClip {
  std::string clip_id;
  bool operator==(const TriggerClip&) const = default;
};
struct LoopSwitch {
  std::string loop_id;
  bool on = true;
  bool operator==(const LoopSwitch&) const = default;
};
struct TempoChange {
  int direction = +1;
  bool operator==(const TempoChange&) const = default;
};
struct ShakeGesture {
  std::string gesture_id;
  double accel_value = 0;
  bool operator==(const ShakeGesture&) const = default;
};
enum class CraneCommand { NextWaypoint, HeightUp, HeightDown };
struct CraneMove {
  CraneCommand command = CraneCommand::NextWaypoint;
  bool operator==(const CraneMove&) const = default;
};
struct StatusQuery {
  bool operator==(const StatusQuery&) const = default;
};

using ControlMessage = std::variant<ListenerPosition, SourcePosition, TriggerClip, LoopSwitch,
                                    TempoChange, ShakeGesture, CraneMove, StatusQuery>;

/// Throws ParseError whose position() is the byte offset of the fault.
ControlMessage parse_message(std::string_view datagram);
/// Canonical wire form (no trailing LF); parse_message inverts it exactly.
std::string format_message(const ControlMessage& message);

/// Bounded multi-producer queue drained by the render thread at block
/// boundaries. When full, the oldest message is dropped and counted.
class ControlQueue {
 public:
  explicit ControlQueue(std::size_t capacity = 1024);

  void push(ControlMessage message);
  /// Moves all pending messages into `out` (cleared first), arrival order.
  void drain(std::vector<ControlMessage>& out);
  std::uint64_t dropped() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::deque<ControlMessage> items_;
  std::uint64_t dropped_ = 0;
};

struct ScenarioEvent {
  double time = 0.0;  ///< seconds from render start
  ControlMessage message;
};

/// Timed control script. Lines are `layout <path>`, `scene <path>` or
/// `<seconds> <message>`; times must be non-decreasing.
struct Scenario {
  std::string layout_path;  ///< empty: canonical layout
  std::string scene_path;   ///< empty: built-in demo scene
  std::vector<ScenarioEvent> events;
};

Scenario parse_scenario(std::istream& in, const std::string& base_dir = {});
Scenario load_scenario(const std::string& path);
std::string format_scenario(const Scenario& scenario);

}  // namespace orchestra
