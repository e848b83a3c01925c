#include "orchestra/render.hpp"

#include <cmath>
#include <memory>
#include <optional>

#include "orchestra/audio_file.hpp"
#include "orchestra/errors.hpp"

namespace orchestra {

std::int64_t event_sample(double time, double sample_rate) {
  return static_cast<std::int64_t>(std::llround(time * sample_rate));
}

RenderResult render_offline(const LoudspeakerLayout& layout, const SceneConfig& scene,
                            const std::vector<ScenarioEvent>& events, double duration,
                            const RenderOptions& options) {
  if (!(duration >= 0.0) || !std::isfinite(duration)) throw std::invalid_argument("duration must be >= 0");
  Engine engine(layout, scene, options.engine);
  const double fs = options.engine.sample_rate;
  const Eigen::Index block = options.engine.block_size;
  const Eigen::Index frames = static_cast<Eigen::Index>(std::llround(duration * fs));
  const Eigen::Index blocks = (frames + block - 1) / block;

  RenderResult result;
  result.audio = Eigen::MatrixXd::Zero(frames, layout.bus_count);
  result.meters = Eigen::MatrixXd::Zero(blocks, layout.bus_count);
  result.trace.reserve(static_cast<std::size_t>(blocks));

  std::optional<WavWriter> writer;
  if (!options.out_path.empty()) writer.emplace(options.out_path, layout.bus_count, fs);

  Eigen::MatrixXd buffer(block, layout.bus_count);
  std::size_t next = 0;
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const std::int64_t start = static_cast<std::int64_t>(b) * block;
    while (next < events.size() && event_sample(events[next].time, fs) <= start)
      engine.apply(events[next++].message);
    engine.render_block(buffer);

    const Eigen::Index n = std::min(block, frames - static_cast<Eigen::Index>(start));
    result.audio.middleRows(static_cast<Eigen::Index>(start), n) = buffer.topRows(n);
    result.meters.row(b) = engine.bus_rms().transpose();
    const auto& room = engine.room().state();
    result.trace.push_back({room.active, room.crossfade_progress, engine.sequencer().clock().current_bpm(),
                            engine.sequencer().active_loop_count()});
    if (writer) writer->write(buffer.topRows(n));
    if (options.on_block) options.on_block(engine, buffer);
  }
  if (writer) writer->close();
  result.final_status = engine.snapshot();
  return result;
}

RenderResult render_scenario(const Scenario& scenario, double duration, const RenderOptions& options) {
  const LoudspeakerLayout layout =
      scenario.layout_path.empty() ? canonical_layout() : load_layout(scenario.layout_path);
  const SceneConfig scene = scenario.scene_path.empty()
                                ? default_scene(options.engine.sample_rate)
                                : load_scene(scenario.scene_path, options.engine.sample_rate);
  return render_offline(layout, scene, scenario.events, duration, options);
}

}  // namespace orchestra
