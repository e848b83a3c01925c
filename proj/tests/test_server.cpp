#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "orchestra/errors.hpp"
#include "orchestra/render.hpp"
#include "orchestra/server.hpp"

// after Eigen: resolv.h defines _res
#include <httplib.h>

using namespace orchestra;
using namespace std::chrono_literals;

namespace {

class UdpClient {
 public:
  explicit UdpClient(int port) : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
    addr_.sin_family = AF_INET;
    addr_.sin_port = htons(static_cast<std::uint16_t>(port));
    ::inet_pton(AF_INET, "127.0.0.1", &addr_.sin_addr);
    timeval tv{2, 0};
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }
  ~UdpClient() { ::close(fd_); }

  void send(const std::string& msg) {
    ::sendto(fd_, msg.data(), msg.size(), 0, reinterpret_cast<const sockaddr*>(&addr_), sizeof addr_);
  }
  std::string status() {
    send("STATUS\n");
    char buf[2048];
    const auto n = ::recv(fd_, buf, sizeof buf, 0);
    return n > 0 ? std::string(buf, static_cast<std::size_t>(n)) : std::string();
  }
  // Polls STATUS until it starts with `prefix` or contains `needle`.
  bool await(const std::string& needle, std::chrono::milliseconds timeout = 3000ms) {
    const auto end = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < end) {
      if (status().find(needle) != std::string::npos) return true;
      std::this_thread::sleep_for(10ms);
    }
    return false;
  }

 private:
  int fd_;
  sockaddr_in addr_{};
};

ServeOptions ephemeral() {
  ServeOptions o;
  o.port = 0;
  return o;
}

}  // namespace

TEST_CASE("STATUS over the socket, tempo step, malformed datagrams") {
  LiveServer server(canonical_layout(), default_scene(), ephemeral());
  server.start();
  REQUIRE(server.port() > 0);
  UdpClient c(server.port());
  const auto first = c.status();
  CHECK(first.rfind("BPM 120.00 ROOM FACTORY LOOPS 0", 0) == 0);

  c.send("TEMPO +");
  CHECK(c.await("BPM 127.13 "));

  c.send("TEMPO sideways");
  c.send("POS LISTENER 1 2");
  c.send(std::string(600, 'A'));
  CHECK(c.await("MALFORMED 3"));
  CHECK(c.status().rfind("BPM 127.13 ROOM FACTORY", 0) == 0);
  CHECK(server.malformed() == 3);
  server.stop();
  CHECK_FALSE(server.running());
}

TEST_CASE("a busy port is reported") {
  LiveServer a(canonical_layout(), default_scene(), ephemeral());
  a.start();
  ServeOptions o;
  o.port = a.port();
  LiveServer b(canonical_layout(), default_scene(), o);
  CHECK_THROWS_AS(b.start(), IoError);
  a.stop();
}

TEST_CASE("listener in the left half reports the factory, right half the church") {
  LiveServer server(canonical_layout(), default_scene(), ephemeral());
  server.start();
  UdpClient c(server.port());
  c.send("POS LISTENER 2.0 0 1.7 0");
  CHECK(c.await("ROOM CHURCH"));
  c.send("POS LISTENER -2.0 0 1.7 0");
  CHECK(c.await("ROOM FACTORY"));
  server.stop();
}

TEST_CASE("HTTP bridge forwards protocol lines and serves STATUS") {
  auto opt = ephemeral();
  opt.bridge_port = 0;
  LiveServer server(canonical_layout(), default_scene(), opt);
  server.start();
  REQUIRE(server.bridge_port() > 0);
  httplib::Client http("127.0.0.1", server.bridge_port());
  auto r = http.Post("/control", "TEMPO +\nSHAKE maracas 1.4\nSHAKE maracas 0.0\n", "text/plain");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == "OK\nOK\nOK\n");
  CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");

  r = http.Post("/control", "TEMPO ?", "text/plain");
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(r->body.find("byte 6") != std::string::npos);

  bool seen = false;
  for (int i = 0; i < 300 && !seen; ++i) {
    auto s = http.Get("/status");
    REQUIRE(s);
    seen = s->body.rfind("BPM 127.13", 0) == 0;
    if (!seen) std::this_thread::sleep_for(10ms);
  }
  CHECK(seen);
  r = http.Post("/control", "STATUS", "text/plain");
  REQUIRE(r);
  CHECK(r->body.rfind("BPM 127.13", 0) == 0);
  server.stop();
}

TEST_CASE("offline replay of a live message log matches the live meters") {
  auto opt = ephemeral();
  opt.record_trace = true;
  opt.log_path = std::string(TEST_TMP_DIR) + "/live_log.txt";
  const auto scene = default_scene();
  LiveServer server(canonical_layout(), scene, opt);
  server.start();
  UdpClient c(server.port());
  const char* script[] = {"LOOP loop_a ON", "TRIG hit_b", "POS LISTENER 0.8 0.2 1.7 0.1", "SHAKE udu 1.5",
                          "CRANE NEXT", "TEMPO -", "POS SOURCE machineB 2 -1 1.5"};
  for (const char* m : script) {
    c.send(m);
    server.wait_for_blocks(server.blocks() + 7, 2000ms);
  }
  server.wait_for_blocks(server.blocks() + 20, 2000ms);
  server.stop();

  const auto log = server.message_log();
  CHECK(log.events.size() == std::size(script));
  const auto live = server.meter_trace();
  const double seconds = static_cast<double>(live.rows()) * 256 / 48000.0;
  const auto offline = render_offline(canonical_layout(), scene, log.events, seconds);
  REQUIRE(offline.meters.rows() == live.rows());
  double worst = 0.0;
  for (Eigen::Index b = 0; b < live.rows(); ++b)
    worst = std::max(worst, std::sqrt((offline.meters.row(b) - live.row(b)).squaredNorm() / 8));
  CHECK(worst < 1e-6);
  CHECK(live.maxCoeff() > 0.0);

  // the log file replays the same way
  const auto from_file = load_scenario(opt.log_path);
  REQUIRE(from_file.events.size() == log.events.size());
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    CHECK(from_file.events[i].time == log.events[i].time);
    CHECK(from_file.events[i].message == log.events[i].message);
  }
}
