#include "orchestra/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "orchestra/audio_file.hpp"
#include "orchestra/errors.hpp"
#include "text.hpp"

namespace orchestra {

// --- TempoClock --------------------------------------------------------------

TempoClock::TempoClock(double sample_rate, double base_bpm)
    : sample_rate_(sample_rate), base_bpm_(base_bpm) {
  if (!(sample_rate > 0.0) || !(base_bpm > 0.0))
    throw std::invalid_argument("sample rate and base BPM must be positive");
}

double TempoClock::rate() const { return std::exp2(static_cast<double>(step_) / 12.0); }

void TempoClock::step(int direction) {
  anchor_beat_ = beat_at(sample_);
  anchor_sample_ = sample_;
  step_ = std::clamp(step_ + (direction > 0 ? 1 : direction < 0 ? -1 : 0), -kMaxTempoStep,
                     kMaxTempoStep);
}

double TempoClock::beat_at(std::int64_t sample) const {
  return anchor_beat_ +
         static_cast<double>(sample - anchor_sample_) * current_bpm() / (60.0 * sample_rate_);
}

std::int64_t TempoClock::next_beat_sample() const {
  constexpr double eps = 1e-9;
  const double beat = beat_position();
  const double target = std::ceil(beat - eps);
  if (target - beat <= eps) return sample_;
  const double samples_per_beat = 60.0 * sample_rate_ / current_bpm();
  const auto offset =
      static_cast<std::int64_t>(std::ceil((target - anchor_beat_) * samples_per_beat - eps));
  return std::max(sample_, anchor_sample_ + offset);
}

TempoClock tempo_step(TempoClock clock, int direction) {
  clock.step(direction);
  return clock;
}

// --- Clips -------------------------------------------------------------------

void Clip::validate() const {
  if (id.empty()) throw std::invalid_argument("clip id must not be empty");
  if (samples.size() == 0) throw std::invalid_argument("clip '" + id + "' has no samples");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("clip '" + id + "' has no sample rate");
  if (!samples.allFinite()) throw std::invalid_argument("clip '" + id + "' has non-finite samples");
  if (kind == ClipKind::Loop && native_bpm != kBaseBpm)
    throw std::invalid_argument("loop clip '" + id + "' must be recorded at 120 BPM");
}

Clip make_clip(const std::string& id, ClipKind kind, double native_bpm, const std::string& source,
               const std::string& base_dir, double engine_rate) {
  Clip clip;
  clip.id = id;
  clip.kind = kind;
  clip.native_bpm = native_bpm;
  clip.sample_rate = engine_rate;

  if (source.rfind("synth:", 0) == 0) {
    const auto parts = [&] {
      std::vector<std::string> out;
      std::size_t start = 6;
      while (start <= source.size()) {
        const auto colon = source.find(':', start);
        out.push_back(source.substr(start, colon == std::string::npos ? std::string::npos : colon - start));
        if (colon == std::string::npos) break;
        start = colon + 1;
      }
      return out;
    }();
    auto num = [&](std::size_t i) {
      if (i >= parts.size()) throw std::invalid_argument("generator '" + source + "' is missing arguments");
      auto v = text::to_double(parts[i]);
      if (!v) throw std::invalid_argument("generator '" + source + "' has a bad argument");
      return *v;
    };
    auto frames = [&](double seconds) {
      if (!(seconds > 0.0)) throw std::invalid_argument("generator duration must be positive");
      return static_cast<Eigen::Index>(std::lround(seconds * engine_rate));
    };
    const std::string& kind_name = parts.at(0);
    if (kind_name == "sine") {
      const double hz = num(1);
      clip.samples.resize(frames(num(2)));
      for (Eigen::Index n = 0; n < clip.samples.size(); ++n)
        clip.samples(n) = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(n) / engine_rate);
    } else if (kind_name == "click") {
      clip.samples.resize(frames(num(1)));
      const double tau = 0.003 * engine_rate;
      for (Eigen::Index n = 0; n < clip.samples.size(); ++n)
        clip.samples(n) = std::exp(-static_cast<double>(n) / tau) * ((n / 12) % 2 ? -1.0 : 1.0);
    } else if (kind_name == "noise") {
      clip.samples.resize(frames(num(1)));
      std::mt19937 rng(static_cast<std::uint32_t>(num(2)));
      for (Eigen::Index n = 0; n < clip.samples.size(); ++n)
        clip.samples(n) = 0.5 * (static_cast<double>(rng()) / 2147483648.0 - 1.0);
    } else if (kind_name == "impulse") {
      clip.samples = Eigen::VectorXd::Zero(1);
      clip.samples(0) = 1.0;
    } else {
      throw std::invalid_argument("unknown generator '" + source + "'");
    }
  } else {
    std::filesystem::path p(source);
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    const AudioBuffer buf = read_wav(p.string());
    clip.sample_rate = buf.sample_rate;
    clip.samples = downmix_to_mono(buf);
  }
  clip.validate();
  return clip;
}

std::vector<Clip> parse_clip_manifest(std::istream& in, const std::string& base_dir,
                                      double engine_rate) {
  std::vector<Clip> clips;
  text::for_each_line(in, [&](const std::vector<std::string_view>& t, std::size_t line) {
    if (t.size() != 4) text::fail(line, "clip lines are '<id> <loop|oneshot> <bpm|-> <source>'");
    ClipKind kind;
    if (t[1] == "loop") {
      kind = ClipKind::Loop;
    } else if (t[1] == "oneshot") {
      kind = ClipKind::OneShot;
    } else {
      text::fail(line, "clip kind must be 'loop' or 'oneshot'");
    }
    const double bpm = t[2] == "-" ? kBaseBpm : text::need_double(t[2], line);
    for (const auto& c : clips)
      if (c.id == t[0]) text::fail(line, "duplicate clip id '" + std::string(t[0]) + "'");
    try {
      clips.push_back(make_clip(std::string(t[0]), kind, bpm, std::string(t[3]), base_dir, engine_rate));
    } catch (const std::invalid_argument& e) {
      text::fail(line, e.what());
    } catch (const IoError& e) {
      text::fail(line, e.what());
    }
  });
  return clips;
}

std::vector<Clip> load_clip_manifest(const std::string& path, double engine_rate) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open clip manifest " + path);
  return parse_clip_manifest(in, std::filesystem::path(path).parent_path().string(), engine_rate);
}

// --- Shake detection -----------------------------------------------------------

bool ShakeDetector::update(double accel_value) {
  const bool outside = std::abs(accel_value) > threshold_;
  if (armed_ && outside) {
    armed_ = false;
    return true;
  }
  if (!armed_ && !outside) armed_ = true;
  return false;
}

std::optional<TriggerEvent> shake_update(ShakeDetector& detector, double accel_value) {
  if (detector.update(accel_value)) return TriggerEvent{accel_value};
  return std::nullopt;
}

// --- Playback ----------------------------------------------------------------------

double cubic_read(const Eigen::VectorXd& x, double position, bool wrap) {
  const Eigen::Index n = x.size();
  const double fl = std::floor(position);
  const double t = position - fl;
  const auto i1 = static_cast<Eigen::Index>(fl);
  auto at = [&](Eigen::Index i) -> double {
    if (wrap) {
      i %= n;
      if (i < 0) i += n;
      return x(i);
    }
    return (i >= 0 && i < n) ? x(i) : 0.0;
  };
  const double y0 = at(i1 - 1), y1 = at(i1), y2 = at(i1 + 1), y3 = at(i1 + 2);
  if (t == 0.0) return y1;
  const double c1 = 0.5 * (y2 - y0);
  const double c2 = y0 - 2.5 * y1 + 2.0 * y2 - 0.5 * y3;
  const double c3 = 0.5 * (y3 - y0) + 1.5 * (y1 - y2);
  return ((c3 * t + c2) * t + c1) * t + y1;
}

Sequencer::Sequencer(double sample_rate, int max_voices)
    : sample_rate_(sample_rate), clock_(sample_rate), voices_(static_cast<std::size_t>(max_voices)) {
  if (max_voices < 1) throw std::invalid_argument("voice pool must not be empty");
}

void Sequencer::add_clip(std::shared_ptr<const Clip> clip, int source) {
  clip->validate();
  if (source < 0) throw std::invalid_argument("source index must be non-negative");
  if (auto it = clips_.find(clip->id); it != clips_.end()) stop_voices(*it->second.first);
  const std::string id = clip->id;
  clips_[id] = {std::move(clip), source};
}

const Clip* Sequencer::clip(const std::string& id) const {
  auto it = clips_.find(id);
  return it == clips_.end() ? nullptr : it->second.first.get();
}

int Sequencer::source_of(const std::string& id) const {
  auto it = clips_.find(id);
  if (it == clips_.end()) throw UnknownClip("unknown clip '" + id + "'");
  return it->second.second;
}

const Clip& Sequencer::require(const std::string& id) const {
  const Clip* c = clip(id);
  if (!c) throw UnknownClip("unknown clip '" + id + "'");
  return *c;
}

void Sequencer::start_voice(const Clip& clip, std::int64_t start_sample) {
  auto slot = std::find_if(voices_.begin(), voices_.end(), [](const Voice& v) { return !v.active; });
  if (slot == voices_.end())
    slot = std::min_element(voices_.begin(), voices_.end(),
                            [](const Voice& a, const Voice& b) { return a.serial < b.serial; });
  *slot = Voice{&clip, clips_.at(clip.id).second, 0.0, start_sample, next_serial_++, true};
}

void Sequencer::stop_voices(const Clip& clip) {
  for (auto& v : voices_)
    if (v.active && v.clip == &clip) v.active = false;
}

void Sequencer::trigger(const std::string& clip_id) {
  const Clip& c = require(clip_id);
  if (c.kind == ClipKind::Loop) {
    set_loop(clip_id, !loop_enabled(clip_id));
  } else {
    start_voice(c, clock_.sample_counter());
  }
}

void Sequencer::retrigger(const std::string& clip_id) {
  const Clip& c = require(clip_id);
  stop_voices(c);
  start_voice(c, clock_.sample_counter());
}

void Sequencer::set_loop(const std::string& clip_id, bool on) {
  const Clip& c = require(clip_id);
  if (c.kind != ClipKind::Loop) throw UnknownClip("clip '" + clip_id + "' is not a loop");
  const bool enabled = loop_enabled(clip_id);
  if (on && !enabled) start_voice(c, clock_.next_beat_sample());
  if (!on && enabled) stop_voices(c);
}

bool Sequencer::loop_enabled(const std::string& clip_id) const {
  const Clip* c = clip(clip_id);
  if (!c) return false;
  return std::any_of(voices_.begin(), voices_.end(),
                     [&](const Voice& v) { return v.active && v.clip == c; });
}

int Sequencer::active_loop_count() const {
  return static_cast<int>(std::count_if(voices_.begin(), voices_.end(), [](const Voice& v) {
    return v.active && v.clip->kind == ClipKind::Loop;
  }));
}

int Sequencer::active_voice_count() const {
  return static_cast<int>(
      std::count_if(voices_.begin(), voices_.end(), [](const Voice& v) { return v.active; }));
}

double Sequencer::voice_rate(const Clip& clip) const {
  const double tempo = clip.kind == ClipKind::Loop ? clock_.current_bpm() / clip.native_bpm
                                                   : clock_.rate();
  return tempo * clip.sample_rate / sample_rate_;
}

void Sequencer::render(Eigen::Ref<Eigen::MatrixXd> out) {
  const Eigen::Index frames = out.rows();
  const std::int64_t block_start = clock_.sample_counter();
  for (auto& v : voices_) {
    if (!v.active || v.source >= out.cols()) continue;
    const Clip& clip = *v.clip;
    const bool loop = clip.kind == ClipKind::Loop;
    const double rate = voice_rate(clip);
    const auto length = static_cast<double>(clip.samples.size());
    auto col = out.col(v.source);
    Eigen::Index first = 0;
    if (v.start_sample > block_start) {
      if (v.start_sample >= block_start + frames) continue;
      first = static_cast<Eigen::Index>(v.start_sample - block_start);
    }
    for (Eigen::Index n = first; n < frames; ++n) {
      if (!loop && v.position >= length) {
        v.active = false;
        break;
      }
      col(n) += cubic_read(clip.samples, v.position, loop);
      v.position += rate;
      if (loop && v.position >= length) v.position -= length;
    }
    if (!loop && v.position >= length) v.active = false;
  }
  clock_.advance(frames);
}

}  // namespace orchestra
