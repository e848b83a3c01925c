#pragma once

// Tempo-locked clip playback. Tempo moves in semitone steps: every step
// scales the playback rate of all sounds by 2^(1/12), so pitch and duration
// change together.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace orchestra {

inline constexpr double kBaseBpm = 120.0;
inline constexpr int kMaxTempoStep = 24;

/// Semitone-stepped clock. Beat 0 is render sample 0; the beat grid is
/// re-anchored at every tempo change so it never drifts.
class TempoClock {
 public:
  explicit TempoClock(double sample_rate = 48000.0, double base_bpm = kBaseBpm);

  double base_bpm() const { return base_bpm_; }
  int step_index() const { return step_; }
  /// 2^(step/12); exact at whole octaves.
  double rate() const;
  double current_bpm() const { return base_bpm_ * rate(); }
  double sample_rate() const { return sample_rate_; }
  std::int64_t sample_counter() const { return sample_; }

  /// Clamped to [-24, 24]; the beat grid is re-anchored at the current sample.
  void step(int direction);
  void advance(std::int64_t frames) { sample_ += frames; }

  double beat_position() const { return beat_at(sample_); }
  double beat_at(std::int64_t sample) const;
  /// First sample at or after the current one that lies on a whole beat.
  std::int64_t next_beat_sample() const;

 private:
  double sample_rate_;
  double base_bpm_;
  int step_ = 0;
  std::int64_t sample_ = 0;
  std::int64_t anchor_sample_ = 0;
  double anchor_beat_ = 0.0;
};

/// Value-style tempo step.
TempoClock tempo_step(TempoClock clock, int direction);

enum class ClipKind { Loop, OneShot };

struct Clip {
  std::string id;
  Eigen::VectorXd samples;  ///< mono
  double sample_rate = 48000.0;
  ClipKind kind = ClipKind::OneShot;
  double native_bpm = kBaseBpm;  ///< loops only

  void validate() const;
};

/// Reads clip ids, kinds, native BPM and sources from a manifest. Lines are
/// `<id> <loop|oneshot> <bpm|-> <source>`; a source is a path to a WAV file
/// (relative to the manifest) or a generator `synth:sine:<hz>:<sec>`,
/// `synth:click:<sec>`, `synth:noise:<sec>:<seed>`, `synth:impulse`.
std::vector<Clip> parse_clip_manifest(std::istream& in, const std::string& base_dir,
                                      double engine_rate = 48000.0);
std::vector<Clip> load_clip_manifest(const std::string& path, double engine_rate = 48000.0);
Clip make_clip(const std::string& id, ClipKind kind, double native_bpm, const std::string& source,
               const std::string& base_dir, double engine_rate);

/// Emits once when |accel| first exceeds 1 g; re-arms inside [-1, 1].
class ShakeDetector {
 public:
  explicit ShakeDetector(double threshold = 1.0) : threshold_(threshold) {}
  bool update(double accel_value);
  bool armed() const { return armed_; }
  double threshold() const { return threshold_; }

 private:
  double threshold_;
  bool armed_ = true;
};

struct TriggerEvent {
  double accel_value = 0.0;
};

std::optional<TriggerEvent> shake_update(ShakeDetector& detector, double accel_value);

/// 4-point cubic (Catmull-Rom) read at fractional `position`. Samples
/// outside the clip are zero unless `wrap` is set.
double cubic_read(const Eigen::VectorXd& x, double position, bool wrap);

/// Voice pool rendering clips into per-source dry signals.
class Sequencer {
 public:
  explicit Sequencer(double sample_rate = 48000.0, int max_voices = 64);

  /// Binds a clip to a source column. Replaces an existing clip of that id.
  void add_clip(std::shared_ptr<const Clip> clip, int source);
  bool has_clip(const std::string& id) const { return clips_.count(id) != 0; }
  const Clip* clip(const std::string& id) const;
  int source_of(const std::string& id) const;

  const TempoClock& clock() const { return clock_; }
  void tempo_step(int direction) { clock_.step(direction); }

  /// OneShot: starts now. Loop: toggles, starting on the next beat.
  void trigger(const std::string& clip_id);
  /// OneShot restarted from its first sample, cutting earlier voices of it.
  void retrigger(const std::string& clip_id);
  void set_loop(const std::string& clip_id, bool on);
  bool loop_enabled(const std::string& clip_id) const;
  int active_loop_count() const;
  int active_voice_count() const;

  /// Renders `out.rows()` frames, accumulating into column `source`.
  void render(Eigen::Ref<Eigen::MatrixXd> out);

 private:
  struct Voice {
    const Clip* clip = nullptr;
    int source = 0;
    double position = 0.0;
    std::int64_t start_sample = 0;
    std::uint64_t serial = 0;
    bool active = false;
  };

  const Clip& require(const std::string& id) const;
  void start_voice(const Clip& clip, std::int64_t start_sample);
  void stop_voices(const Clip& clip);
  double voice_rate(const Clip& clip) const;

  double sample_rate_;
  TempoClock clock_;
  std::unordered_map<std::string, std::pair<std::shared_ptr<const Clip>, int>> clips_;
  std::vector<Voice> voices_;
  std::uint64_t next_serial_ = 1;
};

}  // namespace orchestra
