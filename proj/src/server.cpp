#include "orchestra/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <charconv>
#include <csignal>
#include <cstdlib>
#include <cstring>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "orchestra/errors.hpp"

namespace orchestra {
namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::string seconds_text(double t) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), t);
  return {buf.data(), res.ptr};
}

}  // namespace

struct LiveServer::Bridge {
  httplib::Server http;
};

LiveServer::LiveServer(LoudspeakerLayout layout, SceneConfig scene, ServeOptions options)
    : options_(std::move(options)),
      engine_(std::move(layout), std::move(scene), options_.engine),
      queue_(options_.engine.queue_capacity) {}

LiveServer::~LiveServer() { stop(); }

void LiveServer::start() {
  if (running_) return;
  socket_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (socket_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(options_.port));
  if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(socket_);
    throw IoError("invalid bind address " + options_.bind_address);
  }
  if (::bind(socket_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(socket_);
    socket_ = -1;
    throw IoError("cannot bind UDP port " + std::to_string(options_.port) + ": " + std::strerror(err));
  }
  socklen_t len = sizeof addr;
  ::getsockname(socket_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  timeval tv{0, 50000};
  ::setsockopt(socket_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);

  if (options_.bridge_port >= 0) {
    bridge_ = std::make_unique<Bridge>();
    auto& http = bridge_->http;
    http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    http.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(status_line() + "\n", "text/plain");
    });
    // One message per line; replies (STATUS) are returned in order.
    http.Post("/control", [this](const httplib::Request& req, httplib::Response& res) {
      std::string reply;
      std::size_t start = 0;
      while (start < req.body.size()) {
        std::size_t end = req.body.find('\n', start);
        if (end == std::string::npos) end = req.body.size();
        std::string_view line(req.body.data() + start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        start = end + 1;
        if (line.empty()) continue;
        auto r = handle_datagram(line);
        if (!r.accepted) {
          res.status = 400;
          res.set_content(r.error + "\n", "text/plain");
          return;
        }
        reply += r.reply.empty() ? "OK\n" : r.reply + "\n";
      }
      res.set_content(reply, "text/plain");
    });
    if (options_.bridge_port == 0) {
      bridge_port_ = http.bind_to_any_port("127.0.0.1");
    } else if (http.bind_to_port("127.0.0.1", options_.bridge_port)) {
      bridge_port_ = options_.bridge_port;
    } else {
      bridge_port_ = -1;
    }
    if (bridge_port_ < 0) {
      ::close(socket_);
      socket_ = -1;
      bridge_.reset();
      throw IoError("cannot bind bridge port " + std::to_string(options_.bridge_port));
    }
  }

  if (!options_.wav_path.empty()) {
    wav_ = std::make_unique<WavWriter>(options_.wav_path, engine_.bus_count(), options_.engine.sample_rate);
  } else {
    spdlog::warn("no audio device backend; rendering to a null sink (use --out for a file sink)");
  }
  if (!options_.log_path.empty()) {
    log_.open(options_.log_path);
    if (!log_) throw IoError("cannot open message log " + options_.log_path);
    if (!options_.layout_path.empty()) log_ << "layout " << options_.layout_path << '\n';
    if (!options_.scene_path.empty()) log_ << "scene " << options_.scene_path << '\n';
  }
  if (!options_.meter_path.empty()) {
    meters_.open(options_.meter_path);
    if (!meters_) throw IoError("cannot open meter trace " + options_.meter_path);
  }

  stopping_ = false;
  running_ = true;
  render_thread_ = std::thread([this] { render_loop(); });
  udp_thread_ = std::thread([this] { udp_loop(); });
  if (bridge_) bridge_thread_ = std::thread([this] { bridge_->http.listen_after_bind(); });
  spdlog::info("listening on udp {}:{}{}", options_.bind_address, port_,
               bridge_ ? " bridge http://127.0.0.1:" + std::to_string(bridge_port_) : std::string());
}

void LiveServer::stop() {
  if (!running_) return;
  stopping_ = true;
  if (bridge_) bridge_->http.stop();
  if (bridge_thread_.joinable()) bridge_thread_.join();
  if (udp_thread_.joinable()) udp_thread_.join();
  if (render_thread_.joinable()) render_thread_.join();
  if (socket_ >= 0) ::close(socket_);
  socket_ = -1;
  if (wav_) wav_->close();
  if (log_.is_open()) log_.close();
  if (meters_.is_open()) meters_.close();
  running_ = false;
  spdlog::info("stopped after {} blocks, {} malformed datagrams", blocks_.load(), malformed_.load());
}

DatagramResult LiveServer::handle_datagram(std::string_view datagram) {
  DatagramResult r;
  try {
    auto message = parse_message(datagram);
    r.accepted = true;
    if (std::holds_alternative<StatusQuery>(message))
      r.reply = status_line();
    else
      queue_.push(std::move(message));
  } catch (const ParseError& e) {
    ++malformed_;
    r.error = e.what();
    spdlog::debug("malformed datagram: {}", e.what());
  }
  return r;
}

StatusSnapshot LiveServer::status() const {
  StatusSnapshot st = engine_.published_snapshot();
  st.malformed = malformed_;
  st.dropped = queue_.dropped();
  return st;
}

bool LiveServer::wait_for_blocks(std::uint64_t count, std::chrono::milliseconds timeout) {
  std::unique_lock lock(block_mutex_);
  return block_cv_.wait_for(lock, timeout, [&] { return blocks_ >= count; });
}

Scenario LiveServer::message_log() const {
  std::lock_guard lock(trace_mutex_);
  Scenario sc;
  sc.layout_path = options_.layout_path;
  sc.scene_path = options_.scene_path;
  sc.events = log_events_;
  return sc;
}

Eigen::MatrixXd LiveServer::meter_trace() const {
  std::lock_guard lock(trace_mutex_);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(meter_rows_.size()), engine_.bus_count());
  for (std::size_t i = 0; i < meter_rows_.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = meter_rows_[i];
  return m;
}

void LiveServer::udp_loop() {
  std::array<char, 2048> buf{};
  while (!stopping_) {
    sockaddr_in from{};
    socklen_t len = sizeof from;
    const auto n = ::recvfrom(socket_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) continue;  // timeout or interrupted
    auto r = handle_datagram(std::string_view(buf.data(), static_cast<std::size_t>(n)));
    if (!r.reply.empty())
      ::sendto(socket_, r.reply.data(), r.reply.size(), 0, reinterpret_cast<sockaddr*>(&from), len);
  }
}

void LiveServer::render_loop() {
  const auto& cfg = options_.engine;
  const auto block_period = std::chrono::duration<double>(cfg.block_size / cfg.sample_rate);
  const auto t0 = std::chrono::steady_clock::now();
  Eigen::MatrixXd out(cfg.block_size, engine_.bus_count());
  std::vector<ControlMessage> pending;
  pending.reserve(cfg.queue_capacity);
  std::uint64_t block = 0;
  while (!stopping_) {
    queue_.drain(pending);
    const double t = static_cast<double>(block) * cfg.block_size / cfg.sample_rate;
    for (const auto& m : pending) {
      engine_.apply(m);
      if (log_.is_open()) log_ << seconds_text(t) << ' ' << format_message(m) << '\n';
      if (options_.record_trace) {
        std::lock_guard lock(trace_mutex_);
        log_events_.push_back({t, m});
      }
    }
    engine_.render_block(out);
    if (wav_) wav_->write(out);
    if (meters_.is_open()) {
      meters_ << block;
      for (Eigen::Index b = 0; b < out.cols(); ++b) meters_ << ' ' << engine_.bus_rms()(b);
      meters_ << '\n';
    }
    if (options_.record_trace) {
      std::lock_guard lock(trace_mutex_);
      meter_rows_.push_back(engine_.bus_rms());
    }
    ++block;
    {
      std::lock_guard lock(block_mutex_);
      blocks_ = block;
    }
    block_cv_.notify_all();
    if (options_.realtime) {
      const auto deadline = t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                     block_period * static_cast<double>(block));
      if (std::chrono::steady_clock::now() > deadline + block_period)
        spdlog::debug("render thread behind schedule at block {}", block);
      std::this_thread::sleep_until(deadline);
    }
  }
}

void run_live(const LoudspeakerLayout& layout, const SceneConfig& scene, const ServeOptions& options,
              double seconds) {
  LiveServer server(layout, scene, options);
  server.start();
  g_interrupted = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto t0 = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    if (seconds > 0.0 && std::chrono::steady_clock::now() - t0 >= std::chrono::duration<double>(seconds)) break;
  }
  server.stop();
}

void init_logging_from_env() {
  const char* level = std::getenv("ORCHESTRA_LOG_LEVEL");
  if (!level) return;
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace orchestra
