#pragma once

// World state and the per-block mix graph:
//
//   dry(source) --x direct_level--> pan(spread 0) -----------------+
//   dry(source) --> early bank --x early level--> pan(spread 50) --+--> buses
//   sum of dry  --> shared late field ------------> all buses -----+
//
// Both room presets run continuously; a listener crossing the room's
// center line crossfades between them over 50 ms.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "orchestra/control.hpp"
#include "orchestra/reverb.hpp"
#include "orchestra/sequencer.hpp"
#include "orchestra/spatial.hpp"
#include "orchestra/vbap.hpp"

namespace orchestra {

enum class SourceKind { MachineA, MachineB, Crane, GesturePad };

struct SourceState {
  std::string id;
  Vec3 position = Vec3::Zero();
  std::vector<std::string> attached_clips;
  SourceKind kind = SourceKind::MachineA;
};

/// Crane source motion: a horizontal rectangle of four corners traversed
/// one corner per command, and three discrete heights.
struct CraneAutomation {
  std::array<Eigen::Vector2d, 4> corners{};
  std::array<double, 3> heights{};
  double speed = 1.0;  ///< m/s, applies to both horizontal and vertical moves
  int current_waypoint = 0;
  int target_waypoint = 0;
  int current_height = 0;  ///< target height index
  Vec3 position = Vec3::Zero();

  void validate() const;
  /// Puts the crane at rest on corner `waypoint`, height `height`.
  void place(int waypoint, int height);
  /// Returns false when a height command is clamped (ignored).
  bool apply(CraneCommand command);
  void advance(double dt);
  bool moving() const;
};

struct CraneUpdate {
  CraneAutomation automation;
  Vec3 position;
  bool accepted = false;  ///< a movement sound should be triggered
};

CraneUpdate advance_crane(CraneAutomation automation, std::optional<CraneCommand> command, double dt);

struct RoomState {
  RoomName active = RoomName::Factory;
  double crossfade_progress = 1.0;  ///< 1 when settled
};

/// Room selection from the listener's half of the room with hysteresis; at
/// most one switch per completed crossfade.
class RoomSwitcher {
 public:
  RoomSwitcher(RoomName initial, double hysteresis = 0.1,
               double crossfade_seconds = kPresetCrossfadeSeconds);
  static RoomName room_for(RoomHalf half);

  /// Advances by `frames` samples at `sample_rate`; fills per-sample church
  /// weights (factory weight is 1 - w) when `church_weight` is non-empty.
  RoomState update(const ListenerPose& listener, std::int64_t frames, double sample_rate,
                   Eigen::Ref<Eigen::VectorXd> church_weight);
  RoomState update(const ListenerPose& listener, double dt);

  const RoomState& state() const { return state_; }
  int switch_count() const { return switches_; }

 private:
  double hysteresis_;
  double crossfade_seconds_;
  RoomState state_;
  double church_mix_;
  int switches_ = 0;
};

RoomState update_room(RoomSwitcher& switcher, const ListenerPose& listener, double dt);

struct GestureBinding {
  std::string gesture_id;
  std::string clip_id;
};

struct SceneConfig {
  std::vector<SourceState> sources;
  std::vector<Clip> clips;
  std::unordered_map<std::string, std::string> clip_source;  ///< clip id -> source id
  std::vector<GestureBinding> gestures;
  std::string crane_source;  ///< empty: no crane
  CraneAutomation crane;
  std::string crane_move_clip;
  std::string crane_lift_clip;
  ListenerPose listener;
  std::optional<RoomPreset> factory_preset;
  std::optional<RoomPreset> church_preset;
  double direct_level_db = 0.0;
  double early_level_db = -6.0;
  double late_level_db = -18.0;
  double room_hysteresis = 0.1;

  void validate() const;
};

/// Scene text format, one directive per line:
///   clips <manifest>                 source <id> <kind> <x> <y> <z>
///   bind <clip> <source>             gesture <gesture> <clip>
///   crane <source>                   crane_rect x0 y0 x1 y1 x2 y2 x3 y3
///   crane_heights h0 h1 h2           crane_speed <m/s>
///   crane_clips <move> <lift>        listener <x> <y> <z> <yaw>
///   preset <factory|church> <file>   direct_level_db|early_level_db|late_level_db <dB>
///   hysteresis <m>
SceneConfig parse_scene(std::istream& in, const std::string& base_dir, double sample_rate = 48000.0);
SceneConfig load_scene(const std::string& path, double sample_rate = 48000.0);
/// Two machines, a crane and a gesture pad with generated clips.
SceneConfig default_scene(double sample_rate = 48000.0);

struct EngineConfig {
  double sample_rate = 48000.0;
  int block_size = 256;
  int max_voices = 64;
  std::size_t queue_capacity = 1024;
  bool direct_enabled = true;
  bool early_enabled = true;
  bool late_enabled = true;
};

struct StatusSnapshot {
  double bpm = kBaseBpm;
  int tempo_step = 0;
  RoomName room = RoomName::Factory;
  double crossfade = 1.0;
  int loops = 0;
  int voices = 0;
  std::uint64_t block = 0;
  ListenerPose listener;
  std::vector<std::pair<std::string, Vec3>> sources;
  Eigen::VectorXd bus_rms;
  std::uint64_t dropped = 0;
  std::uint64_t rejected = 0;
  std::uint64_t flushed = 0;
  std::uint64_t malformed = 0;
};

/// `BPM 120.00 ROOM FACTORY LOOPS 0 STEP 0 XFADE 1.00 VOICES 0 BLOCK 0
///  LISTENER x y z yaw METERS m0 .. m(n-1) DROPPED 0 REJECTED 0 FLUSHED 0
///  MALFORMED 0` on one line; meters are bus RMS in dBFS, floored at -120.
std::string format_status(const StatusSnapshot& status);

class Engine {
 public:
  Engine(LoudspeakerLayout layout, SceneConfig scene, EngineConfig config = {});

  const EngineConfig& config() const { return config_; }
  const LoudspeakerLayout& layout() const { return layout_; }
  int bus_count() const { return layout_.bus_count; }

  /// Thread-safe; applied at the next block boundary in arrival order.
  void post(ControlMessage message);
  /// Render thread only. Unknown ids are counted as rejected.
  void apply(const ControlMessage& message);

  /// Renders one block into `out` (block_size x bus_count), overwriting it.
  void render_block(Eigen::Ref<Eigen::MatrixXd> out);

  StatusSnapshot snapshot() const;
  /// Last snapshot published by the render thread; safe from any thread.
  StatusSnapshot published_snapshot() const;

  const ListenerPose& listener() const { return listener_; }
  const std::vector<SourceState>& sources() const { return sources_; }
  const RoomSwitcher& room() const { return room_; }
  const Sequencer& sequencer() const { return sequencer_; }
  const CraneAutomation* crane() const;
  std::uint64_t rejected_messages() const { return rejected_; }
  std::uint64_t flushed_samples() const { return flushed_; }
  std::uint64_t blocks_rendered() const { return block_; }
  const Eigen::VectorXd& bus_rms() const { return bus_rms_; }

 private:
  int source_index(const std::string& id) const;
  void publish();

  EngineConfig config_;
  LoudspeakerLayout layout_;
  SceneConfig scene_;
  std::vector<SourceState> sources_;
  ListenerPose listener_;
  Sequencer sequencer_;
  Panner panner_;
  RoomSwitcher room_;
  std::unordered_map<std::string, std::pair<ShakeDetector, std::string>> gestures_;
  int crane_index_ = -1;

  std::array<std::unique_ptr<EarlyReflectionBanks>, 2> early_;
  std::array<std::unique_ptr<LateField>, 2> late_;

  ControlQueue queue_;
  std::vector<ControlMessage> pending_;

  // Scratch, sized at construction.
  Eigen::MatrixXd dry_;
  Eigen::MatrixXd direct_gain_, early_gain_;  // bus x source, previous block
  Eigen::VectorXd new_gain_, church_weight_, late_in_;
  std::array<Eigen::VectorXd, 2> early_mix_;
  Eigen::VectorXd early_sig_;
  std::array<Eigen::MatrixXd, 2> late_out_;
  std::vector<bool> gains_primed_;
  std::vector<double> last_azimuth_;

  double direct_scale_, early_scale_, late_scale_;
  std::array<SpreadParam, 2> early_spread_{};
  std::uint64_t rejected_ = 0;
  std::uint64_t flushed_ = 0;
  std::uint64_t block_ = 0;
  Eigen::VectorXd bus_rms_;

  mutable std::mutex publish_mutex_;
  StatusSnapshot published_;
};

}  // namespace orchestra
