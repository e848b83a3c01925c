#include "orchestra/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "text.hpp"

namespace orchestra {
namespace {

constexpr double kSourceMargin = 2.0;
constexpr double kFlushThreshold = 1e-30;

double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

std::string_view kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::MachineA: return "machine_a";
    case SourceKind::MachineB: return "machine_b";
    case SourceKind::Crane: return "crane";
    case SourceKind::GesturePad: return "gesture_pad";
  }
  return "machine_a";
}

std::optional<SourceKind> parse_kind(std::string_view s) {
  for (auto k : {SourceKind::MachineA, SourceKind::MachineB, SourceKind::Crane, SourceKind::GesturePad})
    if (kind_name(k) == s) return k;
  return std::nullopt;
}

Vec3 clamp_source(Vec3 p, const LoudspeakerLayout& layout) {
  const double hx = layout.room_width / 2.0 + kSourceMargin;
  const double hy = layout.room_depth / 2.0 + kSourceMargin;
  p.x() = std::clamp(p.x(), -hx, hx);
  p.y() = std::clamp(p.y(), -hy, hy);
  p.z() = std::clamp(p.z(), -kSourceMargin, layout.room_height + kSourceMargin);
  return p;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

// --- Crane -----------------------------------------------------------------------

void CraneAutomation::validate() const {
  if (!(speed > 0.0)) throw std::invalid_argument("crane speed must be positive");
  if (!(heights[0] < heights[1] && heights[1] < heights[2]))
    throw std::invalid_argument("crane heights must be strictly increasing");
  const Eigen::Vector2d a = corners[1] - corners[0];
  const Eigen::Vector2d b = corners[3] - corners[0];
  const double scale = std::max(a.norm(), b.norm());
  if (!(a.norm() > 0.0 && b.norm() > 0.0)) throw std::invalid_argument("crane rectangle is degenerate");
  if ((corners[0] + corners[2] - corners[1] - corners[3]).norm() > 1e-9 * scale ||
      std::abs(a.dot(b)) > 1e-9 * scale * scale)
    throw std::invalid_argument("crane corners must form a rectangle in traversal order");
}

void CraneAutomation::place(int waypoint, int height) {
  current_waypoint = target_waypoint = ((waypoint % 4) + 4) % 4;
  current_height = std::clamp(height, 0, 2);
  position = {corners[static_cast<std::size_t>(current_waypoint)].x(),
              corners[static_cast<std::size_t>(current_waypoint)].y(),
              heights[static_cast<std::size_t>(current_height)]};
}

bool CraneAutomation::apply(CraneCommand command) {
  switch (command) {
    case CraneCommand::NextWaypoint:
      target_waypoint = (target_waypoint + 1) % 4;
      return true;
    case CraneCommand::HeightUp:
      if (current_height >= 2) return false;
      ++current_height;
      return true;
    case CraneCommand::HeightDown:
      if (current_height <= 0) return false;
      --current_height;
      return true;
  }
  return false;
}

void CraneAutomation::advance(double dt) {
  if (!(dt > 0.0)) return;
  const double step = speed * dt;
  const Eigen::Vector2d target = corners[static_cast<std::size_t>(target_waypoint)];
  const Eigen::Vector2d delta = target - position.head<2>();
  const double dist = delta.norm();
  if (step >= dist) {
    position.head<2>() = target;
    current_waypoint = target_waypoint;
  } else {
    position.head<2>() += delta * (step / dist);
  }
  const double z_target = heights[static_cast<std::size_t>(current_height)];
  const double dz = z_target - position.z();
  position.z() = std::abs(dz) <= step ? z_target : position.z() + std::copysign(step, dz);
}

bool CraneAutomation::moving() const {
  return position.head<2>() != corners[static_cast<std::size_t>(target_waypoint)] ||
         position.z() != heights[static_cast<std::size_t>(current_height)];
}

CraneUpdate advance_crane(CraneAutomation automation, std::optional<CraneCommand> command, double dt) {
  bool accepted = false;
  if (command) accepted = automation.apply(*command);
  automation.advance(dt);
  return {automation, automation.position, accepted};
}

// --- Room switching --------------------------------------------------------------

RoomSwitcher::RoomSwitcher(RoomName initial, double hysteresis, double crossfade_seconds)
    : hysteresis_(hysteresis),
      crossfade_seconds_(crossfade_seconds),
      state_{initial, 1.0},
      church_mix_(initial == RoomName::Church ? 1.0 : 0.0) {
  if (!(hysteresis >= 0.0)) throw std::invalid_argument("hysteresis must be non-negative");
  if (!(crossfade_seconds > 0.0)) throw std::invalid_argument("crossfade time must be positive");
}

RoomName RoomSwitcher::room_for(RoomHalf half) {
  return half == RoomHalf::Left ? RoomName::Factory : RoomName::Church;
}

RoomState RoomSwitcher::update(const ListenerPose& listener, std::int64_t frames, double sample_rate,
                               Eigen::Ref<Eigen::VectorXd> church_weight) {
  const double x = listener.position.x();
  if (state_.crossfade_progress >= 1.0) {
    RoomName wanted = state_.active;
    if (state_.active == RoomName::Factory && x >= hysteresis_) wanted = RoomName::Church;
    if (state_.active == RoomName::Church && x < -hysteresis_) wanted = RoomName::Factory;
    if (wanted != state_.active) {
      state_ = {wanted, 0.0};
      ++switches_;
    }
  }
  const double target = state_.active == RoomName::Church ? 1.0 : 0.0;
  const double step = 1.0 / (crossfade_seconds_ * sample_rate);
  const bool fill = church_weight.size() == frames;
  for (std::int64_t n = 0; n < frames; ++n) {
    if (church_mix_ < target) church_mix_ = std::min(target, church_mix_ + step);
    if (church_mix_ > target) church_mix_ = std::max(target, church_mix_ - step);
    if (fill) church_weight(static_cast<Eigen::Index>(n)) = church_mix_;
  }
  state_.crossfade_progress = 1.0 - std::abs(target - church_mix_);
  return state_;
}

RoomState RoomSwitcher::update(const ListenerPose& listener, double dt) {
  constexpr double rate = 48000.0;
  Eigen::VectorXd none;
  return update(listener, static_cast<std::int64_t>(std::llround(dt * rate)), rate, none);
}

RoomState update_room(RoomSwitcher& switcher, const ListenerPose& listener, double dt) {
  return switcher.update(listener, dt);
}

// --- Scene config ----------------------------------------------------------------

void SceneConfig::validate() const {
  std::set<std::string> ids;
  for (const auto& s : sources) {
    if (s.id.empty()) throw std::invalid_argument("source id must not be empty");
    if (!ids.insert(s.id).second) throw std::invalid_argument("duplicate source '" + s.id + "'");
    if (!s.position.allFinite()) throw std::invalid_argument("source '" + s.id + "' position is not finite");
  }
  std::set<std::string> clip_ids;
  for (const auto& c : clips) {
    c.validate();
    if (!clip_ids.insert(c.id).second) throw std::invalid_argument("duplicate clip '" + c.id + "'");
  }
  for (const auto& c : clips) {
    auto it = clip_source.find(c.id);
    if (it == clip_source.end()) throw std::invalid_argument("clip '" + c.id + "' is not bound to a source");
    if (!ids.count(it->second))
      throw std::invalid_argument("clip '" + c.id + "' bound to unknown source '" + it->second + "'");
  }
  for (const auto& [clip, src] : clip_source)
    if (!clip_ids.count(clip)) throw std::invalid_argument("binding for unknown clip '" + clip + "'");
  for (const auto& g : gestures)
    if (!clip_ids.count(g.clip_id))
      throw std::invalid_argument("gesture '" + g.gesture_id + "' uses unknown clip '" + g.clip_id + "'");
  if (!crane_source.empty()) {
    if (!ids.count(crane_source)) throw std::invalid_argument("unknown crane source '" + crane_source + "'");
    crane.validate();
    for (const auto& c : {crane_move_clip, crane_lift_clip})
      if (!c.empty() && !clip_ids.count(c)) throw std::invalid_argument("unknown crane clip '" + c + "'");
  }
  if (factory_preset) factory_preset->validate();
  if (church_preset) church_preset->validate();
  if (!(room_hysteresis >= 0.0)) throw std::invalid_argument("hysteresis must be non-negative");
}

SceneConfig parse_scene(std::istream& in, const std::string& base_dir, double sample_rate) {
  SceneConfig scene;
  auto resolve = [&](std::string_view p) {
    std::filesystem::path path{std::string(p)};
    if (path.is_relative() && !base_dir.empty()) path = std::filesystem::path(base_dir) / path;
    return path.string();
  };
  std::size_t last_line = 0;
  bool crane_placed = false;
  text::for_each_line(in, [&](const std::vector<std::string_view>& t, std::size_t line) {
    last_line = line;
    const auto key = t[0];
    auto expect = [&](std::size_t n) {
      if (t.size() != n)
        text::fail(line, "'" + std::string(key) + "' expects " + std::to_string(n - 1) + " value(s)");
    };
    auto num = [&](std::size_t i) { return text::need_double(t[i], line); };
    try {
      if (key == "clips") {
        expect(2);
        auto clips = load_clip_manifest(resolve(t[1]), sample_rate);
        for (auto& c : clips) scene.clips.push_back(std::move(c));
      } else if (key == "source") {
        expect(6);
        auto kind = parse_kind(t[2]);
        if (!kind) text::fail(line, "unknown source kind '" + std::string(t[2]) + "'");
        scene.sources.push_back({std::string(t[1]), {num(3), num(4), num(5)}, {}, *kind});
      } else if (key == "bind") {
        expect(3);
        scene.clip_source[std::string(t[1])] = std::string(t[2]);
      } else if (key == "gesture") {
        expect(3);
        scene.gestures.push_back({std::string(t[1]), std::string(t[2])});
      } else if (key == "crane") {
        expect(2);
        scene.crane_source = std::string(t[1]);
      } else if (key == "crane_rect") {
        expect(9);
        for (std::size_t i = 0; i < 4; ++i) scene.crane.corners[i] = {num(1 + 2 * i), num(2 + 2 * i)};
      } else if (key == "crane_heights") {
        expect(4);
        scene.crane.heights = {num(1), num(2), num(3)};
      } else if (key == "crane_speed") {
        expect(2);
        scene.crane.speed = num(1);
      } else if (key == "crane_clips") {
        expect(3);
        scene.crane_move_clip = std::string(t[1]);
        scene.crane_lift_clip = std::string(t[2]);
      } else if (key == "listener") {
        expect(5);
        scene.listener.position = {num(1), num(2), num(3)};
        scene.listener.yaw = num(4);
      } else if (key == "preset") {
        expect(3);
        RoomPreset p = load_preset(resolve(t[2]));
        if (t[1] == "factory") {
          if (p.name != RoomName::Factory) text::fail(line, "preset file is not a factory preset");
          scene.factory_preset = p;
        } else if (t[1] == "church") {
          if (p.name != RoomName::Church) text::fail(line, "preset file is not a church preset");
          scene.church_preset = p;
        } else {
          text::fail(line, "preset slot must be factory or church");
        }
      } else if (key == "direct_level_db") {
        expect(2);
        scene.direct_level_db = num(1);
      } else if (key == "early_level_db") {
        expect(2);
        scene.early_level_db = num(1);
      } else if (key == "late_level_db") {
        expect(2);
        scene.late_level_db = num(1);
      } else if (key == "hysteresis") {
        expect(2);
        scene.room_hysteresis = num(1);
      } else {
        text::fail(line, "unknown key '" + std::string(key) + "'");
      }
    } catch (const IoError& e) {
      text::fail(line, e.what());
    }
  });
  if (!scene.crane_source.empty()) crane_placed = true;
  if (crane_placed) scene.crane.place(0, 0);
  for (auto& s : scene.sources)
    for (const auto& [clip, src] : scene.clip_source)
      if (src == s.id) s.attached_clips.push_back(clip);
  for (auto& s : scene.sources) std::sort(s.attached_clips.begin(), s.attached_clips.end());
  try {
    scene.validate();
  } catch (const std::invalid_argument& e) {
    text::fail(last_line, e.what());
  }
  return scene;
}

SceneConfig load_scene(const std::string& path, double sample_rate) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file " + path);
  return parse_scene(in, std::filesystem::path(path).parent_path().string(), sample_rate);
}

SceneConfig default_scene(double sample_rate) {
  SceneConfig s;
  s.sources = {
      {"machineA", {-1.5, 0.8, 1.0}, {}, SourceKind::MachineA},
      {"machineB", {1.5, 0.8, 1.0}, {}, SourceKind::MachineB},
      {"crane", {-2.5, 0.0, 1.0}, {}, SourceKind::Crane},
      {"pad", {0.0, 1.2, 1.5}, {}, SourceKind::GesturePad},
  };
  struct Def {
    const char* id;
    ClipKind kind;
    const char* source;
    const char* bound_to;
  };
  const Def defs[] = {
      {"loop_a", ClipKind::Loop, "synth:click:1.0", "machineA"},
      {"loop_b", ClipKind::Loop, "synth:sine:110:0.5", "machineA"},
      {"hit_a", ClipKind::OneShot, "synth:click:0.25", "machineA"},
      {"hit_b", ClipKind::OneShot, "synth:noise:0.2:7", "machineA"},
      {"maracas", ClipKind::OneShot, "synth:noise:0.15:3", "machineB"},
      {"udu", ClipKind::OneShot, "synth:sine:196:0.4", "machineB"},
      {"sparkle", ClipKind::OneShot, "synth:sine:880:0.3", "pad"},
      {"crane_move", ClipKind::OneShot, "synth:noise:0.6:11", "crane"},
      {"crane_lift", ClipKind::OneShot, "synth:sine:80:0.6", "crane"},
  };
  for (const auto& d : defs) {
    s.clips.push_back(make_clip(d.id, d.kind, kBaseBpm, d.source, {}, sample_rate));
    s.clip_source[d.id] = d.bound_to;
  }
  for (auto& src : s.sources)
    for (const auto& d : defs)
      if (src.id == d.bound_to) src.attached_clips.push_back(d.id);
  s.gestures = {{"maracas", "maracas"}, {"udu", "udu"}, {"conductor", "sparkle"}};
  s.crane_source = "crane";
  s.crane.corners = {Eigen::Vector2d(-2.5, 0.0), Eigen::Vector2d(-0.5, 0.0),
                     Eigen::Vector2d(-0.5, 1.5), Eigen::Vector2d(-2.5, 1.5)};
  s.crane.heights = {1.0, 2.0, 2.8};
  s.crane.speed = 1.0;
  s.crane.place(0, 0);
  s.crane_move_clip = "crane_move";
  s.crane_lift_clip = "crane_lift";
  s.listener.position = {-1.0, -0.5, 1.7};
  s.validate();
  return s;
}

// --- Status -----------------------------------------------------------------------

std::string format_status(const StatusSnapshot& st) {
  std::string out;
  char buf[160];
  // BPM is truncated, not rounded: one step up reads 127.13.
  const double bpm = std::floor(st.bpm * 100.0 + 1e-6) / 100.0;
  std::snprintf(buf, sizeof buf, "BPM %.2f ROOM %s LOOPS %d STEP %d XFADE %.2f VOICES %d BLOCK %llu",
                bpm, std::string(to_string(st.room)).c_str(), st.loops, st.tempo_step, st.crossfade,
                st.voices, static_cast<unsigned long long>(st.block));
  out += buf;
  std::snprintf(buf, sizeof buf, " LISTENER %.3f %.3f %.3f %.3f", st.listener.position.x(),
                st.listener.position.y(), st.listener.position.z(), st.listener.yaw);
  out += buf;
  out += " METERS";
  for (Eigen::Index b = 0; b < st.bus_rms.size(); ++b) {
    const double rms = st.bus_rms(b);
    const double db = rms > 1e-6 ? 20.0 * std::log10(rms) : -120.0;
    std::snprintf(buf, sizeof buf, " %.1f", std::max(db, -120.0));
    out += buf;
  }
  std::snprintf(buf, sizeof buf, " DROPPED %llu REJECTED %llu FLUSHED %llu MALFORMED %llu",
                static_cast<unsigned long long>(st.dropped), static_cast<unsigned long long>(st.rejected),
                static_cast<unsigned long long>(st.flushed), static_cast<unsigned long long>(st.malformed));
  out += buf;
  return out;
}

// --- Engine -------------------------------------------------------------------------

Engine::Engine(LoudspeakerLayout layout, SceneConfig scene, EngineConfig config)
    : config_(config),
      layout_(std::move(layout)),
      scene_(std::move(scene)),
      sequencer_(config.sample_rate, config.max_voices),
      panner_(layout_),
      room_(RoomName::Factory, 0.1),
      queue_(config.queue_capacity) {
  layout_.validate();
  scene_.validate();
  if (config_.block_size < 1) throw std::invalid_argument("block size must be positive");

  sources_ = scene_.sources;
  for (auto& s : sources_) s.position = clamp_source(s.position, layout_);
  listener_ = clamp_to_room(scene_.listener, layout_);
  room_ = RoomSwitcher(RoomSwitcher::room_for(room_half(listener_, layout_.room_width)),
                       scene_.room_hysteresis);

  for (const auto& c : scene_.clips)
    sequencer_.add_clip(std::make_shared<const Clip>(c), source_index(scene_.clip_source.at(c.id)));
  for (const auto& g : scene_.gestures) gestures_[g.gesture_id] = {ShakeDetector{}, g.clip_id};
  if (!scene_.crane_source.empty()) {
    crane_index_ = source_index(scene_.crane_source);
    sources_[static_cast<std::size_t>(crane_index_)].position = scene_.crane.position;
  }

  const RoomPreset presets[2] = {scene_.factory_preset.value_or(RoomPreset::factory()),
                                 scene_.church_preset.value_or(RoomPreset::church())};
  for (std::size_t p = 0; p < 2; ++p) {
    early_[p] = std::make_unique<EarlyReflectionBanks>(
        std::make_shared<const EarlyReflectionSet>(presets[p], config_.sample_rate, config_.block_size));
    for (const auto& s : sources_) early_[p]->allocate(s.id);
    late_[p] = std::make_unique<LateField>(presets[p], config_.sample_rate, layout_.bus_count);
    early_spread_[p] = presets[p].early_send_spread;
  }

  const auto b = static_cast<Eigen::Index>(config_.block_size);
  const auto n_src = static_cast<Eigen::Index>(sources_.size());
  const auto n_bus = static_cast<Eigen::Index>(layout_.bus_count);
  dry_ = Eigen::MatrixXd::Zero(b, n_src);
  direct_gain_ = Eigen::MatrixXd::Zero(n_bus, n_src);
  early_gain_ = Eigen::MatrixXd::Zero(n_bus, 2 * n_src);
  new_gain_ = Eigen::VectorXd::Zero(n_bus);
  church_weight_ = Eigen::VectorXd::Zero(b);
  late_in_ = Eigen::VectorXd::Zero(b);
  early_sig_ = Eigen::VectorXd::Zero(b);
  for (std::size_t p = 0; p < 2; ++p) {
    early_mix_[p] = Eigen::VectorXd::Zero(b);
    late_out_[p] = Eigen::MatrixXd::Zero(b, n_bus);
  }
  gains_primed_.assign(sources_.size(), false);
  last_azimuth_.assign(sources_.size(), 0.0);
  bus_rms_ = Eigen::VectorXd::Zero(n_bus);
  pending_.reserve(config_.queue_capacity);

  direct_scale_ = db_to_gain(scene_.direct_level_db);
  early_scale_ = db_to_gain(scene_.early_level_db);
  late_scale_ = db_to_gain(scene_.late_level_db);
  publish();
}

int Engine::source_index(const std::string& id) const {
  for (std::size_t i = 0; i < sources_.size(); ++i)
    if (sources_[i].id == id) return static_cast<int>(i);
  return -1;
}

const CraneAutomation* Engine::crane() const {
  return crane_index_ >= 0 ? &scene_.crane : nullptr;
}

void Engine::post(ControlMessage message) { queue_.push(std::move(message)); }

void Engine::apply(const ControlMessage& message) {
  auto reject = [&] { ++rejected_; };
  std::visit(
      overloaded{
          [&](const ListenerPosition& m) {
            ListenerPose pose;
            pose.position = {m.x, m.y, m.z};
            pose.yaw = m.yaw;
            listener_ = clamp_to_room(pose, layout_);
          },
          [&](const SourcePosition& m) {
            const int i = source_index(m.id);
            if (i < 0 || i == crane_index_) return reject();
            sources_[static_cast<std::size_t>(i)].position = clamp_source({m.x, m.y, m.z}, layout_);
          },
          [&](const TriggerClip& m) {
            if (!sequencer_.has_clip(m.clip_id)) return reject();
            sequencer_.trigger(m.clip_id);
          },
          [&](const LoopSwitch& m) {
            const Clip* c = sequencer_.clip(m.loop_id);
            if (!c || c->kind != ClipKind::Loop) return reject();
            sequencer_.set_loop(m.loop_id, m.on);
          },
          [&](const TempoChange& m) { sequencer_.tempo_step(m.direction); },
          [&](const ShakeGesture& m) {
            auto it = gestures_.find(m.gesture_id);
            if (it == gestures_.end()) return reject();
            if (shake_update(it->second.first, m.accel_value)) sequencer_.trigger(it->second.second);
          },
          [&](const CraneMove& m) {
            if (crane_index_ < 0) return reject();
            if (!scene_.crane.apply(m.command)) return;
            const auto& clip = m.command == CraneCommand::NextWaypoint ? scene_.crane_move_clip
                                                                       : scene_.crane_lift_clip;
            if (!clip.empty()) sequencer_.retrigger(clip);
          },
          [&](const StatusQuery&) {},
      },
      message);
}

void Engine::render_block(Eigen::Ref<Eigen::MatrixXd> out) {
  const Eigen::Index frames = config_.block_size;
  if (out.rows() != frames || out.cols() != layout_.bus_count)
    throw std::invalid_argument("output block has the wrong shape");
  const double fs = config_.sample_rate;

  queue_.drain(pending_);
  for (const auto& m : pending_) apply(m);

  if (crane_index_ >= 0) {
    scene_.crane.advance(static_cast<double>(frames) / fs);
    sources_[static_cast<std::size_t>(crane_index_)].position = scene_.crane.position;
  }
  room_.update(listener_, frames, fs, church_weight_);

  dry_.setZero();
  sequencer_.render(dry_);
  for (Eigen::Index i = 0; i < dry_.size(); ++i) {
    if (!std::isfinite(dry_.data()[i])) {
      dry_.data()[i] = 0.0;
      ++flushed_;
    }
  }
  out.setZero();
  late_in_.setZero();

  const auto ramp_into = [&](const Eigen::VectorXd& signal, auto&& previous, const Eigen::VectorXd& next) {
    for (Eigen::Index b = 0; b < out.cols(); ++b) {
      const double g0 = previous(b), g1 = next(b);
      if (g0 == 0.0 && g1 == 0.0) continue;
      const double step = (g1 - g0) / static_cast<double>(frames);
      auto col = out.col(b);
      for (Eigen::Index n = 0; n < frames; ++n) col(n) += signal(n) * (g0 + step * static_cast<double>(n + 1));
    }
    previous = next;
  };

  for (std::size_t s = 0; s < sources_.size(); ++s) {
    const Eigen::VectorXd dry = dry_.col(static_cast<Eigen::Index>(s));
    const Vec3& pos = sources_[s].position;
    const Eigen::Vector2d horizontal = (pos - listener_.position).head<2>();
    if (horizontal.norm() > kMinHorizontalDistance) last_azimuth_[s] = world_azimuth(listener_.position, pos);
    const double azimuth = last_azimuth_[s];
    const double level = direct_level(relative_distance(listener_, pos));
    const bool primed = gains_primed_[s];
    gains_primed_[s] = true;

    panner_.pan(azimuth, listener_, SpreadParam(0.0), new_gain_);
    new_gain_ *= level * direct_scale_;
    auto direct_prev = direct_gain_.col(static_cast<Eigen::Index>(s));
    if (!primed) direct_prev = new_gain_;
    if (config_.direct_enabled) ramp_into(dry, direct_prev, new_gain_);

    for (std::size_t p = 0; p < 2; ++p) {
      early_[p]->process_mix(s, dry.data(), early_mix_[p]);
      panner_.pan(azimuth, listener_, early_spread_[p], new_gain_);
      new_gain_ *= level * early_scale_;
      auto early_prev = early_gain_.col(static_cast<Eigen::Index>(2 * s + p));
      if (!primed) early_prev = new_gain_;
      if (!config_.early_enabled) {
        early_prev = new_gain_;
        continue;
      }
      // factory weight is 1 - w
      if (p == 0)
        early_sig_ = early_mix_[p].array() * (1.0 - church_weight_.array());
      else
        early_sig_ = early_mix_[p].cwiseProduct(church_weight_);
      ramp_into(early_sig_, early_prev, new_gain_);
    }
    late_in_ += dry;
  }

  if (config_.late_enabled) {
    for (std::size_t p = 0; p < 2; ++p) {
      late_[p]->process(std::span<const double>(late_in_.data(), static_cast<std::size_t>(frames)),
                        late_out_[p]);
      if (p == 0)
        early_sig_ = 1.0 - church_weight_.array();
      else
        early_sig_ = church_weight_;
      out += late_scale_ * (late_out_[p].array().colwise() * early_sig_.array()).matrix();
    }
  }

  for (Eigen::Index b = 0; b < out.cols(); ++b) {
    auto col = out.col(b);
    for (Eigen::Index n = 0; n < frames; ++n) {
      const double v = col(n);
      if (!std::isfinite(v) || (v != 0.0 && std::abs(v) < kFlushThreshold)) {
        col(n) = 0.0;
        ++flushed_;
      }
    }
    bus_rms_(b) = std::sqrt(col.squaredNorm() / static_cast<double>(frames));
  }
  ++block_;
  publish();
}

StatusSnapshot Engine::snapshot() const {
  StatusSnapshot st;
  const auto& clock = sequencer_.clock();
  st.bpm = clock.current_bpm();
  st.tempo_step = clock.step_index();
  st.room = room_.state().active;
  st.crossfade = room_.state().crossfade_progress;
  st.loops = sequencer_.active_loop_count();
  st.voices = sequencer_.active_voice_count();
  st.block = block_;
  st.listener = listener_;
  for (const auto& s : sources_) st.sources.emplace_back(s.id, s.position);
  st.bus_rms = bus_rms_;
  st.dropped = queue_.dropped();
  st.rejected = rejected_;
  st.flushed = flushed_;
  return st;
}

void Engine::publish() {
  std::unique_lock lock(publish_mutex_, std::try_to_lock);
  if (lock.owns_lock()) published_ = snapshot();
}

StatusSnapshot Engine::published_snapshot() const {
  std::lock_guard lock(publish_mutex_);
  return published_;
}

}  // namespace orchestra
