#include "orchestra/spatial.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "text.hpp"

namespace orchestra {
namespace {

constexpr double kSpacingTolerance = 1e-9;

struct Violation {
  std::string message;
  int speaker_index = -1;  // -1: layout-level
};

std::optional<Violation> find_violation(const LoudspeakerLayout& layout) {
  if (layout.bus_count < 1) return Violation{"bus_count must be >= 1"};
  if (!(layout.room_width > 0.0) || !(layout.room_depth > 0.0) || !(layout.room_height > 0.0))
    return Violation{"room dimensions must be positive"};
  if (layout.speakers.size() < 2) return Violation{"layout needs at least two speakers"};

  std::set<int> ids;
  std::vector<int> bus_refs(static_cast<std::size_t>(layout.bus_count), 0);
  for (std::size_t i = 0; i < layout.speakers.size(); ++i) {
    const auto& s = layout.speakers[i];
    const int idx = static_cast<int>(i);
    if (!s.position.allFinite()) return Violation{"speaker position is not finite", idx};
    if (!(s.position.z() > 0.0)) return Violation{"speaker height must be > 0", idx};
    if (s.bus < 0 || s.bus >= layout.bus_count)
      return Violation{"bus " + std::to_string(s.bus) + " outside [0, " +
                           std::to_string(layout.bus_count) + ")",
                       idx};
    if (!ids.insert(s.id).second)
      return Violation{"duplicate speaker id " + std::to_string(s.id), idx};
    ++bus_refs[static_cast<std::size_t>(s.bus)];
  }
  for (int b = 0; b < layout.bus_count; ++b)
    if (bus_refs[static_cast<std::size_t>(b)] == 0)
      return Violation{"bus " + std::to_string(b) + " has no speaker"};

  const std::size_t n = layout.speakers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = layout.speakers[i];
    const auto& b = layout.speakers[(i + 1) % n];
    if (a.bus == b.bus) continue;
    const double d = (a.position - b.position).norm();
    if (d + kSpacingTolerance < layout.min_spacing) {
      std::ostringstream msg;
      msg << "speakers " << a.id << " and " << b.id << " are " << d
          << " m apart, below min_spacing " << layout.min_spacing;
      return Violation{msg.str(), static_cast<int>((i + 1) % n)};
    }
  }
  for (int b : layout.subwoofer_buses)
    if (b < 0 || b >= layout.bus_count)
      return Violation{"subwoofer bus " + std::to_string(b) + " out of range"};
  return std::nullopt;
}

}  // namespace

void LoudspeakerLayout::validate() const {
  if (auto v = find_violation(*this)) throw InvalidLayout(v->message);
}

LoudspeakerLayout canonical_layout() {
  // Ring order, clockwise seen from above, starting at the front-center
  // pair. Exact coordinates are not published; these honour the spacing
  // constraints (1.2 m shared front pair, >= 1.94 m elsewhere).
  LoudspeakerLayout layout;
  layout.room_width = 9.6;
  layout.room_depth = 3.0;
  layout.room_height = 3.0;
  layout.bus_count = 8;
  layout.min_spacing = 1.94;
  const double z = 3.2;
  layout.speakers = {
      {1, {-0.6, 1.5, z}, 0},   {2, {0.6, 1.5, z}, 0},    // front center, shared
      {3, {2.54, 1.5, z}, 1},   {4, {4.8, 0.0, z}, 2},    // front right, side right
      {5, {2.54, -1.5, z}, 3},  {6, {0.6, -1.5, z}, 4},   // rear right, rear center
      {7, {-0.6, -1.5, z}, 4},  {8, {-2.54, -1.5, z}, 5}, // rear center, rear left
      {9, {-4.8, 0.0, z}, 6},   {10, {-2.54, 1.5, z}, 7}, // side left, front left
  };
  return layout;
}

LoudspeakerLayout parse_layout(std::istream& in) {
  LoudspeakerLayout layout;
  layout.speakers.clear();
  std::vector<std::size_t> speaker_lines;
  std::size_t bus_count_line = 0;
  std::size_t last_line = 0;

  text::for_each_line(in, [&](const std::vector<std::string_view>& t, std::size_t line) {
    last_line = line;
    const auto& key = t[0];
    auto expect = [&](std::size_t n) {
      if (t.size() != n)
        text::fail(line, "'" + std::string(key) + "' expects " + std::to_string(n - 1) + " value(s)");
    };
    if (key == "room_width") {
      expect(2);
      layout.room_width = text::need_double(t[1], line);
    } else if (key == "room_depth") {
      expect(2);
      layout.room_depth = text::need_double(t[1], line);
    } else if (key == "room_height") {
      expect(2);
      layout.room_height = text::need_double(t[1], line);
    } else if (key == "bus_count") {
      expect(2);
      layout.bus_count = static_cast<int>(text::need_int(t[1], line));
      bus_count_line = line;
    } else if (key == "min_spacing") {
      expect(2);
      layout.min_spacing = text::need_double(t[1], line);
    } else if (key == "subwoofer_buses") {
      layout.subwoofer_buses.clear();
      for (std::size_t i = 1; i < t.size(); ++i)
        layout.subwoofer_buses.push_back(static_cast<int>(text::need_int(t[i], line)));
    } else if (text::to_int(key)) {
      if (t.size() != 5) text::fail(line, "speaker lines are 'id bus x y z'");
      Loudspeaker s;
      s.id = static_cast<int>(text::need_int(t[0], line));
      s.bus = static_cast<int>(text::need_int(t[1], line));
      s.position = {text::need_double(t[2], line), text::need_double(t[3], line),
                    text::need_double(t[4], line)};
      layout.speakers.push_back(s);
      speaker_lines.push_back(line);
    } else {
      text::fail(line, "unknown key '" + std::string(key) + "'");
    }
  });

  if (auto v = find_violation(layout)) {
    std::size_t line = v->speaker_index >= 0
                           ? speaker_lines[static_cast<std::size_t>(v->speaker_index)]
                           : (bus_count_line ? bus_count_line : last_line);
    text::fail(line, v->message);
  }
  return layout;
}

LoudspeakerLayout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layout file " + path);
  return parse_layout(in);
}

std::string format_layout(const LoudspeakerLayout& layout) {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "room_width " << layout.room_width << "\n"
      << "room_depth " << layout.room_depth << "\n"
      << "room_height " << layout.room_height << "\n"
      << "bus_count " << layout.bus_count << "\n"
      << "min_spacing " << layout.min_spacing << "\n";
  if (!layout.subwoofer_buses.empty()) {
    out << "subwoofer_buses";
    for (int b : layout.subwoofer_buses) out << ' ' << b;
    out << "\n";
  }
  for (const auto& s : layout.speakers)
    out << s.id << ' ' << s.bus << ' ' << s.position.x() << ' ' << s.position.y() << ' '
        << s.position.z() << "\n";
  return out.str();
}

AliasingReport aliasing_frequency(const LoudspeakerLayout& layout, double speed_of_sound) {
  if (!(speed_of_sound > 0.0)) throw std::invalid_argument("speed of sound must be positive");
  const std::size_t n = layout.speakers.size();
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n && n >= 2; ++i) {
    const auto& a = layout.speakers[i];
    const auto& b = layout.speakers[(i + 1) % n];
    if (a.bus != b.bus) d = std::min(d, (a.position - b.position).norm());
  }
  if (!std::isfinite(d) || !(d > 0.0))
    throw InvalidLayout("aliasing analysis needs at least two speakers on distinct buses");
  return {d, speed_of_sound, speed_of_sound / (2.0 * d)};
}

ListenerPose clamp_to_room(ListenerPose pose, const LoudspeakerLayout& layout) {
  const double hx = layout.room_width / 2.0;
  const double hy = layout.room_depth / 2.0;
  auto& p = pose.position;
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(p[i])) p[i] = 0.0;
  p.x() = std::clamp(p.x(), -hx, hx);
  p.y() = std::clamp(p.y(), -hy, hy);
  p.z() = std::clamp(p.z(), 0.0, layout.room_height);
  if (!std::isfinite(pose.yaw)) pose.yaw = 0.0;
  return pose;
}

}  // namespace orchestra
