#pragma once

// Live engine node: a UDP socket carrying the text protocol, a render
// thread paced to the audio clock, and an optional localhost HTTP bridge
// for browser control surfaces.
//
// There is no audio device backend; blocks go to an optional WAV sink.
// STATUS datagrams are answered on the same socket with one status line.

#include <atomic>
#include <condition_variable>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "orchestra/audio_file.hpp"
#include "orchestra/control.hpp"
#include "orchestra/scene.hpp"

namespace orchestra {

struct ServeOptions {
  int port = 9000;                       ///< 0: pick a free port
  std::string bind_address = "127.0.0.1";
  int bridge_port = -1;                  ///< < 0: no bridge, 0: pick a free port
  std::string wav_path;                  ///< empty: null sink
  std::string log_path;                  ///< applied messages, scenario format
  std::string meter_path;                ///< per-block bus RMS, one line per block
  std::string layout_path, scene_path;   ///< echoed into the message log header
  bool realtime = true;
  bool record_trace = false;             ///< keep log and meters in memory
  EngineConfig engine;
};

struct DatagramResult {
  bool accepted = false;
  std::string reply;  ///< STATUS line, empty otherwise
  std::string error;  ///< parse error for rejected input
};

class LiveServer {
 public:
  LiveServer(LoudspeakerLayout layout, SceneConfig scene, ServeOptions options);
  ~LiveServer();
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  /// Binds sockets and starts the threads. Throws IoError if a port is busy.
  void start();
  void stop();
  bool running() const { return running_; }

  int port() const { return port_; }
  int bridge_port() const { return bridge_port_; }

  /// What the socket does with one datagram: queue it, answer STATUS, or
  /// count it as malformed.
  DatagramResult handle_datagram(std::string_view datagram);

  StatusSnapshot status() const;
  std::string status_line() const { return format_status(status()); }
  std::uint64_t malformed() const { return malformed_; }
  std::uint64_t blocks() const { return blocks_; }
  /// Blocks until at least `count` blocks are rendered or the timeout passes.
  bool wait_for_blocks(std::uint64_t count, std::chrono::milliseconds timeout);

  /// With record_trace: applied messages timed at their block start, and
  /// the per-block meters (blocks x buses).
  Scenario message_log() const;
  Eigen::MatrixXd meter_trace() const;

 private:
  void udp_loop();
  void render_loop();

  ServeOptions options_;
  Engine engine_;
  ControlQueue queue_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> malformed_{0};
  std::atomic<std::uint64_t> blocks_{0};
  int socket_ = -1;
  int port_ = 0;
  int bridge_port_ = -1;

  std::thread udp_thread_, render_thread_, bridge_thread_;
  struct Bridge;
  std::unique_ptr<Bridge> bridge_;

  std::unique_ptr<WavWriter> wav_;
  std::ofstream log_, meters_;

  mutable std::mutex trace_mutex_;
  std::vector<ScenarioEvent> log_events_;
  std::vector<Eigen::VectorXd> meter_rows_;
  std::condition_variable block_cv_;
  std::mutex block_mutex_;
};

/// Serves until SIGINT/SIGTERM, or for `seconds` when positive.
void run_live(const LoudspeakerLayout& layout, const SceneConfig& scene, const ServeOptions& options,
              double seconds = 0.0);

/// Sets the log level from ORCHESTRA_LOG_LEVEL (trace..critical, off).
void init_logging_from_env();

}  // namespace orchestra
