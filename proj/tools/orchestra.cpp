// orchestra: offline render, live serve, and layout / reverb analysis.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "orchestra/audio_file.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/render.hpp"
#include "orchestra/reverb.hpp"
#include "orchestra/scene.hpp"
#include "orchestra/server.hpp"
#include "orchestra/spatial.hpp"

using namespace orchestra;

namespace {

RoomPreset preset_arg(const std::string& s) {
  if (s == "factory") return RoomPreset::factory();
  if (s == "church") return RoomPreset::church();
  return load_preset(s);
}

int do_render(const std::string& scenario_path, const std::string& out, double duration) {
  const Scenario sc = load_scenario(scenario_path);
  RenderOptions opt;
  opt.out_path = out;
  const auto r = render_scenario(sc, duration, opt);
  std::printf("wrote %s: %lld frames x %lld buses at %.0f Hz\n", out.c_str(),
              static_cast<long long>(r.audio.rows()), static_cast<long long>(r.audio.cols()),
              opt.engine.sample_rate);
  std::printf("%s\n", format_status(r.final_status).c_str());
  return 0;
}

int do_analyze(const std::string& layout_path, double c) {
  const auto layout = layout_path.empty() ? canonical_layout() : load_layout(layout_path);
  const auto rep = aliasing_frequency(layout, c);
  std::printf("speakers %zu buses %d\n", layout.speakers.size(), layout.bus_count);
  std::printf("min_spacing_d %.3f m\nspeed_of_sound_c %.1f m/s\nf_al %.2f Hz\n", rep.min_spacing_d,
              rep.speed_of_sound_c, rep.f_al);
  return 0;
}

int do_measure(const std::string& ir_path, const std::string& method, int channel) {
  const auto buf = read_wav(ir_path);
  Eigen::VectorXd ir;
  if (channel < 0) {
    ir = downmix_to_mono(buf);
  } else {
    if (channel >= buf.channels()) throw std::invalid_argument("channel out of range");
    ir = buf.samples.col(channel);
  }
  const auto m = method == "slope" ? RtMethod::SlopeWindow : RtMethod::SchroederT20;
  const auto est = measure_rt({ir.data(), static_cast<std::size_t>(ir.size())}, buf.sample_rate, m);
  std::printf("RT60 %.3f s method %s residual %.3f dB\n", est.rt60, method.c_str(), est.fit_residual);
  return 0;
}

int do_export_ir(const std::string& preset, const std::string& kind, const std::string& out, double seconds) {
  constexpr double fs = 48000.0;
  const RoomPreset p = preset_arg(preset);
  Eigen::MatrixXd irs;
  if (kind == "early") {
    EarlyReflectionSet set(p, fs, 256);
    irs = set.impulse_responses();
  } else {
    const auto n = static_cast<Eigen::Index>(std::llround(seconds * fs));
    LateField late(p, fs, kStreamsPerBank);
    std::vector<double> impulse(static_cast<std::size_t>(n), 0.0);
    if (n > 0) impulse[0] = 1.0;
    irs.resize(n, kStreamsPerBank);
    late.process_streams(impulse, irs);
  }
  write_wav(out, irs, fs);
  std::printf("wrote %s: %lld frames x %lld channels\n", out.c_str(), static_cast<long long>(irs.rows()),
              static_cast<long long>(irs.cols()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging_from_env();
  CLI::App app{"Spatial audio engine for the factory orchestra installation"};
  app.require_subcommand(1);

  std::string scenario, out;
  double duration = 10.0;
  auto* render = app.add_subcommand("render", "Render a scenario offline to an 8-channel float WAV");
  render->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  render->add_option("--out", out, "Output WAV")->required();
  render->add_option("--duration", duration, "Seconds")->check(CLI::NonNegativeNumber);

  ServeOptions serve_opt;
  std::string layout_path, scene_path;
  double serve_seconds = 0.0;
  bool no_realtime = false;
  auto* serve = app.add_subcommand("serve", "Run the live engine on a UDP port");
  serve->add_option("--port", serve_opt.port, "UDP port")->check(CLI::Range(0, 65535));
  serve->add_option("--bind", serve_opt.bind_address, "UDP bind address");
  serve->add_option("--layout", layout_path, "Layout file (default: canonical)")->check(CLI::ExistingFile);
  serve->add_option("--scene", scene_path, "Scene file (default: built-in)")->check(CLI::ExistingFile);
  serve->add_option("--bridge-port", serve_opt.bridge_port, "Localhost HTTP bridge port for the UI");
  serve->add_option("--out", serve_opt.wav_path, "WAV file sink");
  serve->add_option("--log", serve_opt.log_path, "Applied-message log (scenario format)");
  serve->add_option("--meters", serve_opt.meter_path, "Per-block meter trace");
  serve->add_option("--seconds", serve_seconds, "Stop after this many seconds (0: run until signalled)");
  serve->add_flag("--no-realtime", no_realtime, "Render as fast as possible");

  double c = kDefaultSpeedOfSound;
  std::string analyze_layout;
  auto* analyze = app.add_subcommand("analyze", "Report the spatial aliasing frequency of a layout");
  analyze->add_option("--layout", analyze_layout, "Layout file (default: canonical)")->check(CLI::ExistingFile);
  analyze->add_option("--c", c, "Speed of sound, m/s")->check(CLI::PositiveNumber);

  std::string ir_path, method = "schroeder";
  int channel = -1;
  auto* measure = app.add_subcommand("measure-rt", "Estimate RT60 of an impulse response WAV");
  measure->add_option("--ir", ir_path, "Impulse response WAV")->required()->check(CLI::ExistingFile);
  measure->add_option("--method", method, "schroeder or slope")->check(CLI::IsMember({"schroeder", "slope"}));
  measure->add_option("--channel", channel, "Channel to analyse (default: mono downmix)");

  std::string preset = "factory", kind = "late", ir_out;
  double ir_seconds = 10.0;
  auto* export_ir = app.add_subcommand("export-ir", "Write a preset's late streams or early IRs to WAV");
  export_ir->add_option("--preset", preset, "factory, church or a preset file");
  export_ir->add_option("--kind", kind, "late or early")->check(CLI::IsMember({"late", "early"}));
  export_ir->add_option("--out", ir_out, "Output WAV")->required();
  export_ir->add_option("--seconds", ir_seconds, "Late IR length")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*render) return do_render(scenario, out, duration);
    if (*analyze) return do_analyze(analyze_layout, c);
    if (*measure) return do_measure(ir_path, method, channel);
    if (*export_ir) return do_export_ir(preset, kind, ir_out, ir_seconds);
    if (*serve) {
      const auto layout = layout_path.empty() ? canonical_layout() : load_layout(layout_path);
      const auto scene = scene_path.empty() ? default_scene() : load_scene(scene_path);
      serve_opt.layout_path = layout_path;
      serve_opt.scene_path = scene_path;
      serve_opt.realtime = !no_realtime;
      run_live(layout, scene, serve_opt, serve_seconds);
      return 0;
    }
  } catch (const ParseError& e) {
    spdlog::error("parse error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
