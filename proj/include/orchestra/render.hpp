#pragma once

// Offline rendering: the same Engine the live server drives, clocked by a
// scenario instead of the network. Events land on the first block that
// starts at or after llround(time * fs).

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "orchestra/control.hpp"
#include "orchestra/scene.hpp"
#include "orchestra/spatial.hpp"

namespace orchestra {

struct BlockTrace {
  RoomName room = RoomName::Factory;
  double crossfade = 1.0;
  double bpm = kBaseBpm;
  int loops = 0;
};

struct RenderResult {
  Eigen::MatrixXd audio;   ///< frames x buses
  Eigen::MatrixXd meters;  ///< blocks x buses, per-block RMS
  std::vector<BlockTrace> trace;
  StatusSnapshot final_status;
};

struct RenderOptions {
  EngineConfig engine;
  std::string out_path;  ///< empty: no file
  /// Called after each block with the engine and the block just rendered.
  std::function<void(const Engine&, const Eigen::Ref<const Eigen::MatrixXd>&)> on_block;
};

/// Renders `duration` seconds; output is exactly llround(duration * fs) frames.
RenderResult render_offline(const LoudspeakerLayout& layout, const SceneConfig& scene,
                            const std::vector<ScenarioEvent>& events, double duration,
                            const RenderOptions& options = {});

/// Resolves the scenario's layout and scene (canonical layout and the
/// built-in scene when unset) and renders it.
RenderResult render_scenario(const Scenario& scenario, double duration, const RenderOptions& options = {});

/// Sample offset at which an event at `time` seconds is due.
std::int64_t event_sample(double time, double sample_rate);

}  // namespace orchestra
