// Acceptance suite: one PASS/FAIL line per criterion, tolerances inline.
// Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <unsupported/Eigen/FFT>

#include "orchestra/render.hpp"
#include "orchestra/reverb.hpp"
#include "orchestra/scene.hpp"
#include "orchestra/sequencer.hpp"
#include "orchestra/spatial.hpp"
#include "orchestra/vbap.hpp"

using namespace orchestra;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double fs = 48000.0;
const std::string config_dir = ORCHESTRA_CONFIG_DIR;
const std::string tmp = TEST_TMP_DIR;
int failures = 0;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %2d %-22s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

ListenerPose pose(double x, double y, double yaw = 0.0) {
  ListenerPose p;
  p.position = {x, y, 1.7};
  p.yaw = yaw;
  return p;
}

std::span<const double> view(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Scenario scenario(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in);
}

// Single source at `pos` carrying the given clips.
SceneConfig one_source(const Vec3& pos, const std::vector<std::pair<std::string, std::string>>& clips,
                       double listener_x) {
  SceneConfig s;
  s.sources.push_back({"src", pos, {}, SourceKind::MachineA});
  for (const auto& [id, src] : clips) {
    s.clips.push_back(make_clip(id, ClipKind::OneShot, kBaseBpm, src, {}, fs));
    s.clip_source[id] = "src";
  }
  s.listener = pose(listener_x, -0.5);
  return s;
}

void aliasing() {
  const auto t0 = Clock::now();
  const auto rep = aliasing_frequency(load_layout(config_dir + "/canonical_layout.txt"), 340.0);
  const double t = since(t0);
  const bool ok = std::abs(rep.min_spacing_d - 1.94) < 1e-9 && rep.f_al >= 86 && rep.f_al <= 89 && t < 1.0;
  report(1, "aliasing figure", ok,
         fmt("d=%.3f m f_al=%.2f Hz in %.4f s (want d=1.94, f_al in [86,89] Hz, < 1 s)", rep.min_spacing_d,
             rep.f_al, t));
}

void vbap_power() {
  const auto t0 = Clock::now();
  const auto layout = canonical_layout();
  Panner panner(layout);
  Eigen::VectorXd g(layout.bus_count);
  double worst = 0.0;
  int max_active = 0;
  const ListenerPose listeners[] = {pose(0, 0), pose(-3.5, 1.0, 0.4), pose(3.0, -1.2, -1.1), pose(-0.4, 0.9, 2.5),
                                    pose(4.2, 1.3, -2.8)};
  for (const auto& l : listeners)
    for (int i = 0; i < 3600; ++i) {
      const double s = -pi + 2 * pi * i / 3600.0;
      for (const double spread : {0.0, 50.0}) {
        panner.pan(s, l, SpreadParam(spread), g);
        worst = std::max(worst, std::abs(g.squaredNorm() - 1.0));
        if (spread == 0.0) max_active = std::max(max_active, static_cast<int>((g.array() > 0).count()));
      }
    }
  const double a = std::atan2(2.54, 1.5), b = pi / 2;  // speakers 3 and 4, buses 1 and 2
  panner.pan(0.5 * (a + b), pose(0, 0), SpreadParam(0), g);
  const double bisector = std::max(std::abs(g(1) - 1 / std::sqrt(2.0)), std::abs(g(2) - 1 / std::sqrt(2.0)));
  const double t = since(t0);
  report(2, "VBAP power", worst <= 1e-9 && max_active <= 2 && bisector <= 1e-9 && t < 10.0,
         fmt("max|sum g^2 - 1|=%.2e, spread-0 max active=%d, bisector err=%.2e, %.2f s "
             "(want <= 1e-9, <= 2, <= 1e-9, < 10 s)",
             worst, max_active, bisector, t));
}

// Brute-force pairwise VBAP in the listener frame with explicit trig.
Eigen::VectorXd oracle_gains(const std::vector<Eigen::Vector2d>& speakers, const ListenerPose& l, double source) {
  const Eigen::Vector2d fwd(std::sin(l.yaw), std::cos(l.yaw)), right(std::cos(l.yaw), -std::sin(l.yaw));
  std::vector<double> az;
  for (const auto& p : speakers) {
    const Eigen::Vector2d v = p - l.position.head<2>();
    az.push_back(std::atan2(v.dot(right), v.dot(fwd)));
  }
  const double s = std::remainder(source - l.yaw, 2 * pi);
  auto ccw = [](double from, double to) {
    double d = std::fmod(to - from, 2 * pi);
    return d < 0 ? d + 2 * pi : d;
  };
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(speakers.size()));
  for (std::size_t i = 0; i < az.size(); ++i)
    for (std::size_t j = 0; j < az.size(); ++j) {
      if (i == j) continue;
      const double width = ccw(az[i], az[j]);
      if (ccw(az[i], s) > width) continue;
      bool adjacent = true;
      for (std::size_t k = 0; k < az.size(); ++k)
        if (k != i && k != j && ccw(az[i], az[k]) < width) adjacent = false;
      if (!adjacent) continue;
      const double gi = std::sin(az[j] - s) / std::sin(az[j] - az[i]);
      const double gj = std::sin(s - az[i]) / std::sin(az[j] - az[i]);
      const double n = std::hypot(gi, gj);
      g(static_cast<Eigen::Index>(i)) = gi / n;
      g(static_cast<Eigen::Index>(j)) = gj / n;
      return g;
    }
  return g;
}

void listener_correction() {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0.0;
  int done = 0;
  while (done < 100) {
    const int n = 5 + static_cast<int>(rng() % 6);
    const Eigen::Vector2d centre(2 * u(rng), 0.8 * u(rng));
    LoudspeakerLayout layout;
    layout.bus_count = n;
    std::vector<Eigen::Vector2d> flat;
    for (int i = 0; i < n; ++i) {
      const double a = 2 * pi * (i + 0.3 * u(rng)) / n;
      const double r = 3.0 + u(rng);
      flat.emplace_back(centre.x() + r * std::sin(a), centre.y() + r * std::cos(a));
      layout.speakers.push_back({i + 1, {flat.back().x(), flat.back().y(), 2.5 + 0.5 * u(rng)}, i});
    }
    const ListenerPose l = pose(centre.x() + 0.6 * u(rng), centre.y() + 0.6 * u(rng), pi * u(rng));
    // skip layouts that leave an arc of pi or more around the listener
    std::vector<double> az;
    for (const auto& s : layout.speakers) az.push_back(relative_azimuth(l, s.position));
    std::sort(az.begin(), az.end());
    double gap = az.front() + 2 * pi - az.back();
    for (std::size_t i = 1; i < az.size(); ++i) gap = std::max(gap, az[i] - az[i - 1]);
    if (gap >= 0.95 * pi) continue;
    const double source = pi * u(rng);
    const auto ours = pan(source, l, layout, SpreadParam(0)).gains;
    worst = std::max(worst, (ours - oracle_gains(flat, l, source)).cwiseAbs().maxCoeff());
    ++done;
  }
  report(3, "listener correction", worst <= 1e-9,
         fmt("100 random configs, max |gain - oracle|=%.2e (want <= 1e-9)", worst));
}

// Peak frequency of `x` with a Hann window, zero padding and parabolic refinement.
double peak_hz(const Eigen::VectorXd& x) {
  const Eigen::Index nfft = 1 << 18;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(nfft);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    w(i) = x(i) * (0.5 - 0.5 * std::cos(2 * pi * static_cast<double>(i) / static_cast<double>(x.size() - 1)));
  Eigen::FFT<double> fft;
  Eigen::VectorXcd spectrum;
  fft.fwd(spectrum, w);
  Eigen::Index k = 1;
  for (Eigen::Index i = 1; i < nfft / 2; ++i)
    if (std::abs(spectrum(i)) > std::abs(spectrum(k))) k = i;
  const double a = std::log(std::abs(spectrum(k - 1))), b = std::log(std::abs(spectrum(k))), c = std::log(std::abs(spectrum(k + 1)));
  const double delta = 0.5 * (a - c) / (a - 2 * b + c);
  return (static_cast<double>(k) + delta) * fs / static_cast<double>(nfft);
}

void tempo_pitch() {
  // pitch: the engine's direct path, one source, reverb off
  EngineConfig cfg;
  cfg.early_enabled = cfg.late_enabled = false;
  RenderOptions opt;
  opt.engine = cfg;
  const auto scene = one_source({0, 1.2, 1.5}, {{"tone", "synth:sine:440:2"}}, 0.0);
  const auto r = render_offline(canonical_layout(), scene,
                                scenario("0 TEMPO +\n0 TRIG tone\n").events, 1.0, opt);
  const Eigen::VectorXd mono = r.audio.rowwise().sum();
  const double hz = peak_hz(mono.segment(2048, 32768));
  const double want = 440.0 * std::exp2(1.0 / 12.0);
  const double rel = std::abs(hz / want - 1.0);

  // octave: twelve steps, exact rate 2 reads every other source sample
  Sequencer seq(fs);
  Clip ramp;
  ramp.id = "ramp";
  ramp.samples = Eigen::VectorXd::LinSpaced(4096, 0.0, 1.0);
  seq.add_clip(std::make_shared<const Clip>(ramp), 0);
  for (int i = 0; i < 12; ++i) seq.tempo_step(+1);
  seq.trigger("ramp");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(1024, 1);
  seq.render(out);
  bool exact = seq.clock().rate() == 2.0 && seq.clock().current_bpm() == 240.0;
  for (Eigen::Index n = 0; n < 1024; ++n) exact = exact && out(n, 0) == ramp.samples(2 * n);
  report(4, "tempo/pitch law", rel <= 0.005 && exact,
         fmt("peak %.2f Hz vs %.2f Hz (err %.3f%%, want <= 0.5%%); 12 steps rate=%.17g bpm=%.17g exact=%s", hz,
             want, 100 * rel, seq.clock().rate(), seq.clock().current_bpm(), exact ? "yes" : "no"));
}

// Per-bus late impulse responses rendered by the engine.
Eigen::MatrixXd late_irs(double listener_x, double seconds) {
  EngineConfig cfg;
  cfg.direct_enabled = cfg.early_enabled = false;
  RenderOptions opt;
  opt.engine = cfg;
  const auto scene = one_source({0, 1.2, 1.5}, {{"imp", "synth:impulse"}}, listener_x);
  return render_offline(canonical_layout(), scene, scenario("0 TRIG imp\n").events, seconds, opt).audio;
}

void room_rts() {
  std::string detail;
  bool ok = true;
  for (const auto& [name, x, target] : {std::tuple{"Factory", -1.0, 1.2}, std::tuple{"Church", 1.0, 7.0}}) {
    const auto irs = late_irs(x, target + 2.0);
    double worst_t20 = 0.0, worst_agree = 0.0, mean = 0.0;
    for (Eigen::Index b = 0; b < irs.cols(); ++b) {
      const Eigen::VectorXd ir = irs.col(b);
      const double t20 = measure_rt(view(ir), fs, RtMethod::SchroederT20).rt60;
      const double slope = measure_rt(view(ir), fs, RtMethod::SlopeWindow).rt60;
      worst_t20 = std::max(worst_t20, std::abs(t20 / target - 1));
      worst_agree = std::max(worst_agree, std::abs(slope / t20 - 1));
      mean += t20 / static_cast<double>(irs.cols());
    }
    ok = ok && worst_t20 <= 0.15 && worst_agree <= 0.20;
    detail += fmt("%s T20 %.3f s (max err %.1f%%, slope/T20 max dev %.1f%%) ", name, mean, 100 * worst_t20,
                  100 * worst_agree);
  }
  report(5, "room RTs", ok, detail + "(want <= 15%, <= 20%)");
}

void late_isotropy() {
  std::string detail;
  bool ok = true;
  EngineConfig cfg;
  cfg.direct_enabled = cfg.early_enabled = false;
  RenderOptions opt;
  opt.engine = cfg;
  for (const auto& [name, x] : {std::pair{"Factory", -1.0}, std::pair{"Church", 1.0}}) {
    const auto scene = one_source({-2.0, 1.0, 1.5}, {{"noise", "synth:noise:5:99"}}, x);
    const auto out = render_offline(canonical_layout(), scene, scenario("0 TRIG noise\n").events, 5.0, opt).audio;
    Eigen::VectorXd db(out.cols());
    for (Eigen::Index b = 0; b < out.cols(); ++b) db(b) = 10 * std::log10(out.col(b).squaredNorm() / out.rows());
    const double spread = db.maxCoeff() - db.minCoeff();
    ok = ok && spread < 0.5;
    detail += fmt("%s spread %.3f dB ", name, spread);
  }
  report(6, "late-field isotropy", ok, detail + "(want < 0.5 dB)");
}

double max_xcorr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::Index nfft = 1;
  while (nfft < a.size() + b.size()) nfft *= 2;
  Eigen::VectorXd pa = Eigen::VectorXd::Zero(nfft), pb = Eigen::VectorXd::Zero(nfft);
  pa.head(a.size()) = a;
  pb.head(b.size()) = b;
  Eigen::FFT<double> fft;
  Eigen::VectorXcd fa, fb;
  fft.fwd(fa, pa);
  fft.fwd(fb, pb);
  Eigen::VectorXcd prod = fa.cwiseProduct(fb.conjugate());
  Eigen::VectorXd xc;
  fft.inv(xc, prod);
  return xc.cwiseAbs().maxCoeff() / std::sqrt(a.squaredNorm() * b.squaredNorm());
}

void early_decorrelation() {
  std::string detail;
  bool ok = true;
  for (const auto& p : {RoomPreset::factory(), RoomPreset::church()}) {
    const EarlyReflectionSet set(p, fs, 256);
    const auto& irs = set.impulse_responses();
    double worst = 0.0;
    for (int i = 0; i < irs.cols(); ++i)
      for (int j = i + 1; j < irs.cols(); ++j)
        if (i / 2 != j / 2) worst = std::max(worst, max_xcorr(irs.col(i), irs.col(j)));
    ok = ok && worst < 0.9;
    detail += fmt("%s max %.3f ", std::string(to_string(p.name)).c_str(), worst);
  }
  report(7, "early decorrelation", ok, detail + "(all lags, distinct units; want < 0.9)");
}

void room_switching() {
  // walk from x=-1 to x=+1 in 2 cm steps with +/-5 cm tracking jitter
  std::string text;
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (int i = 0; i <= 100; ++i) {
    const double x = -1.0 + 0.02 * i + (i > 0 && i < 100 ? jitter(rng) : 0.0);
    text += fmt("%.4f POS LISTENER %.4f -0.5 1.7 0\n", 0.02 * i, x);
  }
  const auto scene = default_scene();
  std::vector<SourceState> before;
  const auto r = render_offline(canonical_layout(), scene, scenario(text).events, 2.5, [&] {
    RenderOptions o;
    o.on_block = [&](const Engine& e, const auto&) {
      if (before.empty()) before = e.sources();
    };
    return o;
  }());
  int flips = 0;
  for (std::size_t i = 1; i < r.trace.size(); ++i) flips += r.trace[i].room != r.trace[i - 1].room;
  bool same = before.size() == r.final_status.sources.size();
  for (std::size_t i = 0; same && i < before.size(); ++i)
    same = before[i].position == r.final_status.sources[i].second;
  const bool start_factory = r.trace.front().room == RoomName::Factory;
  const bool end_church = format_status(r.final_status).find("ROOM CHURCH") != std::string::npos;
  report(8, "room switching", flips == 1 && same && start_factory && end_church,
         fmt("room changes=%d, first=%s, final STATUS church=%s, sources unchanged=%s (want 1, FACTORY, yes, yes)",
             flips, start_factory ? "FACTORY" : "CHURCH", end_church ? "yes" : "no", same ? "yes" : "no"));
}

void shake() {
  ShakeDetector d;
  int triggers = 0;
  for (double v : {0.9, 1.3, 1.5, 0.5, 1.2}) triggers += shake_update(d, v).has_value();
  // the same trace through the protocol path
  Engine e(canonical_layout(), default_scene());
  for (double v : {0.9, 1.3, 1.5, 0.5, 1.2}) e.apply(ShakeGesture{"maracas", v});
  const int voices = e.sequencer().active_voice_count();
  report(9, "shake hysteresis", triggers == 2 && voices == 2,
         fmt("detector triggers=%d, engine voices started=%d (want 2, 2)", triggers, voices));
}

void determinism() {
  const auto sc = load_scenario(config_dir + "/scenarios/demo.txt");
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  RenderOptions a, b;
  a.out_path = tmp + "/accept_a.wav";
  b.out_path = tmp + "/accept_b.wav";
  render_scenario(sc, 8.0, a);
  render_scenario(sc, 8.0, b);
  const auto fa = slurp(a.out_path), fb = slurp(b.out_path);
  report(10, "determinism", !fa.empty() && fa == fb,
         fmt("demo scenario 8 s x 8 ch, %zu bytes each, identical=%s", fa.size(), fa == fb ? "yes" : "no"));
}

void linearity() {
  const std::string common = "0 POS LISTENER -0.8 -0.3 1.7 0.2\n";
  const std::string a = "0 LOOP loop_a ON\n0.4 TRIG hit_b\n";
  const std::string b = "0.1 TRIG udu\n0.7 SHAKE maracas 1.5\n";
  const auto both = render_scenario(scenario(common + "0 LOOP loop_a ON\n0.1 TRIG udu\n0.4 TRIG hit_b\n"
                                                      "0.7 SHAKE maracas 1.5\n"),
                                    2.0);
  const auto ra = render_scenario(scenario(common + a), 2.0);
  const auto rb = render_scenario(scenario(common + b), 2.0);
  const Eigen::MatrixXd sum = ra.audio + rb.audio;
  const double rel = (both.audio - sum).norm() / sum.norm();
  report(11, "mix linearity", rel <= 1e-6, fmt("relative RMS error %.2e (want <= 1e-6)", rel));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const std::pair<const char*, void (*)()> criteria[] = {
      {"aliasing", aliasing},       {"vbap", vbap_power},         {"listener", listener_correction},
      {"tempo", tempo_pitch},       {"rt", room_rts},             {"isotropy", late_isotropy},
      {"early", early_decorrelation}, {"rooms", room_switching},  {"shake", shake},
      {"determinism", determinism}, {"linearity", linearity},
  };
  int id = 0;
  for (const auto& [name, fn] : criteria) {
    ++id;
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, name, false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d failed, %.1f s\n", failures, since(t0));
  return failures;
}
