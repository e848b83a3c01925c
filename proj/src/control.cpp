#include "orchestra/control.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "orchestra/errors.hpp"
#include "text.hpp"

namespace orchestra {
namespace {

constexpr double kMaxCoordinate = 1000.0;

struct Token {
  std::string_view text;
  std::size_t offset;
};

[[noreturn]] void fail_at(std::size_t offset, const std::string& msg) {
  throw ParseError("byte " + std::to_string(offset) + ": " + msg, offset);
}

std::vector<Token> tokenize(std::string_view msg) {
  std::vector<Token> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= msg.size(); ++i) {
    if (i == msg.size() || msg[i] == ' ') {
      if (i == start) fail_at(i, "empty field");
      out.push_back({msg.substr(start, i - start), start});
      start = i + 1;
    } else if (static_cast<unsigned char>(msg[i]) < 0x21 || static_cast<unsigned char>(msg[i]) > 0x7E) {
      fail_at(i, "invalid character");
    }
  }
  return out;
}

std::string identifier(const Token& t) {
  if (t.text.size() > kMaxIdLength) fail_at(t.offset, "identifier longer than 64 bytes");
  for (std::size_t i = 0; i < t.text.size(); ++i) {
    const char c = t.text[i];
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) fail_at(t.offset + i, "invalid identifier character");
  }
  return std::string(t.text);
}

double number(const Token& t, double limit) {
  for (std::size_t i = 0; i < t.text.size(); ++i) {
    const char c = t.text[i];
    if (!((c >= '0' && c <= '9') || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E'))
      fail_at(t.offset + i, "invalid number");
  }
  auto v = text::to_double(t.text);
  if (!v) fail_at(t.offset, "invalid number '" + std::string(t.text) + "'");
  if (std::abs(*v) > limit) fail_at(t.offset, "value out of range");
  return *v;
}

void arity(const std::vector<Token>& toks, std::size_t n, std::size_t end) {
  if (toks.size() < n) fail_at(end, "missing field");
  if (toks.size() > n) fail_at(toks[n].offset, "unexpected field");
}

void append_number(std::string& out, double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), res.ptr);
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

ControlMessage parse_message(std::string_view datagram) {
  if (datagram.size() > kMaxDatagramBytes) fail_at(kMaxDatagramBytes, "datagram exceeds 512 bytes");
  if (!datagram.empty() && datagram.back() == '\n') datagram.remove_suffix(1);
  if (datagram.empty()) fail_at(0, "empty message");
  const auto toks = tokenize(datagram);
  const auto end = datagram.size();
  const auto& verb = toks[0].text;

  if (verb == "POS") {
    if (toks.size() < 2) fail_at(end, "missing POS target");
    if (toks[1].text == "LISTENER") {
      arity(toks, 6, end);
      return ListenerPosition{number(toks[2], kMaxCoordinate), number(toks[3], kMaxCoordinate),
                              number(toks[4], kMaxCoordinate), number(toks[5], kMaxCoordinate)};
    }
    if (toks[1].text == "SOURCE") {
      arity(toks, 6, end);
      return SourcePosition{identifier(toks[2]), number(toks[3], kMaxCoordinate),
                            number(toks[4], kMaxCoordinate), number(toks[5], kMaxCoordinate)};
    }
    fail_at(toks[1].offset, "POS target must be LISTENER or SOURCE");
  }
  if (verb == "TRIG") {
    arity(toks, 2, end);
    return TriggerClip{identifier(toks[1])};
  }
  if (verb == "LOOP") {
    arity(toks, 3, end);
    if (toks[2].text != "ON" && toks[2].text != "OFF") fail_at(toks[2].offset, "LOOP state must be ON or OFF");
    return LoopSwitch{identifier(toks[1]), toks[2].text == "ON"};
  }
  if (verb == "TEMPO") {
    arity(toks, 2, end);
    if (toks[1].text == "+") return TempoChange{+1};
    if (toks[1].text == "-") return TempoChange{-1};
    fail_at(toks[1].offset, "TEMPO direction must be + or -");
  }
  if (verb == "SHAKE") {
    arity(toks, 3, end);
    return ShakeGesture{identifier(toks[1]), number(toks[2], kMaxCoordinate)};
  }
  if (verb == "CRANE") {
    arity(toks, 2, end);
    if (toks[1].text == "NEXT") return CraneMove{CraneCommand::NextWaypoint};
    if (toks[1].text == "UP") return CraneMove{CraneCommand::HeightUp};
    if (toks[1].text == "DOWN") return CraneMove{CraneCommand::HeightDown};
    fail_at(toks[1].offset, "CRANE command must be NEXT, UP or DOWN");
  }
  if (verb == "STATUS") {
    arity(toks, 1, end);
    return StatusQuery{};
  }
  fail_at(0, "unknown verb '" + std::string(verb) + "'");
}

std::string format_message(const ControlMessage& message) {
  std::string out;
  auto num = [&](double v) {
    out += ' ';
    append_number(out, v);
  };
  std::visit(overloaded{
                 [&](const ListenerPosition& m) {
                   out = "POS LISTENER";
                   num(m.x), num(m.y), num(m.z), num(m.yaw);
                 },
                 [&](const SourcePosition& m) {
                   out = "POS SOURCE " + m.id;
                   num(m.x), num(m.y), num(m.z);
                 },
                 [&](const TriggerClip& m) { out = "TRIG " + m.clip_id; },
                 [&](const LoopSwitch& m) { out = "LOOP " + m.loop_id + (m.on ? " ON" : " OFF"); },
                 [&](const TempoChange& m) { out = m.direction > 0 ? "TEMPO +" : "TEMPO -"; },
                 [&](const ShakeGesture& m) {
                   out = "SHAKE " + m.gesture_id;
                   num(m.accel_value);
                 },
                 [&](const CraneMove& m) {
                   out = m.command == CraneCommand::NextWaypoint ? "CRANE NEXT"
                         : m.command == CraneCommand::HeightUp   ? "CRANE UP"
                                                                 : "CRANE DOWN";
                 },
                 [&](const StatusQuery&) { out = "STATUS"; },
             },
             message);
  return out;
}

// --- ControlQueue -----------------------------------------------------------------

ControlQueue::ControlQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("queue capacity must be positive");
}

void ControlQueue::push(ControlMessage message) {
  std::lock_guard lock(mutex_);
  if (items_.size() == capacity_) {
    items_.pop_front();
    ++dropped_;
  }
  items_.push_back(std::move(message));
}

void ControlQueue::drain(std::vector<ControlMessage>& out) {
  out.clear();
  std::lock_guard lock(mutex_);
  for (auto& m : items_) out.push_back(std::move(m));
  items_.clear();
}

std::uint64_t ControlQueue::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

std::size_t ControlQueue::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

// --- Scenario ---------------------------------------------------------------------

Scenario parse_scenario(std::istream& in, const std::string& base_dir) {
  Scenario sc;
  auto resolve = [&](std::string_view p) {
    std::filesystem::path path{std::string(p)};
    if (path.is_relative() && !base_dir.empty()) path = std::filesystem::path(base_dir) / path;
    return path.string();
  };
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto body = text::strip_comment(line);
    auto toks = text::split(body);
    if (toks.empty()) continue;
    if (toks[0] == "layout" || toks[0] == "scene") {
      if (toks.size() != 2) text::fail(number, std::string(toks[0]) + " expects one path");
      (toks[0] == "layout" ? sc.layout_path : sc.scene_path) = resolve(toks[1]);
      continue;
    }
    const double t = text::need_double(toks[0], number);
    if (t < 0.0) text::fail(number, "event time must be >= 0");
    if (!sc.events.empty() && t < sc.events.back().time) text::fail(number, "events must be sorted by time");
    // The message is the rest of the line after the time field, trimmed.
    std::string_view rest = body.substr(static_cast<std::size_t>(toks[0].data() + toks[0].size() - body.data()));
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
    while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\t' || rest.back() == '\r')) rest.remove_suffix(1);
    try {
      sc.events.push_back({t, parse_message(rest)});
    } catch (const ParseError& e) {
      text::fail(number, e.what());
    }
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario " + path);
  return parse_scenario(in, std::filesystem::path(path).parent_path().string());
}

std::string format_scenario(const Scenario& sc) {
  std::string out;
  if (!sc.layout_path.empty()) out += "layout " + sc.layout_path + "\n";
  if (!sc.scene_path.empty()) out += "scene " + sc.scene_path + "\n";
  for (const auto& e : sc.events) {
    append_number(out, e.time);
    out += ' ' + format_message(e.message) + '\n';
  }
  return out;
}

}  // namespace orchestra
