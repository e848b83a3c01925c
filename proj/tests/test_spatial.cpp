#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "orchestra/spatial.hpp"

using namespace orchestra;
using doctest::Approx;

namespace {

ListenerPose at(double x, double y, double z = 0.0, double yaw = 0.0) {
  ListenerPose p;
  p.position = {x, y, z};
  p.yaw = yaw;
  return p;
}

}  // namespace

TEST_CASE("relative azimuth: axes and translated listener") {
  CHECK(relative_azimuth(at(0, 0), Vec3(0, 2, 3.2)) == Approx(0.0));
  CHECK(relative_azimuth(at(0, 0), Vec3(2, 0, 3.2)) == Approx(std::numbers::pi / 2));
  CHECK(relative_azimuth(at(0, 0), Vec3(-2, 0, 3.2)) == Approx(-std::numbers::pi / 2));
  CHECK(relative_azimuth(at(0, 0), Vec3(0, -2, 0)) == Approx(std::numbers::pi));
  // atan2(0.5, 1.0), computed independently
  CHECK(relative_azimuth(at(0.5, 0), Vec3(1, 1, 3.2)) == Approx(0.4636476090008061).epsilon(1e-12));
}

TEST_CASE("relative azimuth: yaw turns the frame to the right") {
  CHECK(relative_azimuth(at(0, 0, 0, std::numbers::pi / 2), Vec3(2, 0, 0)) == Approx(0.0));
  CHECK(relative_azimuth(at(0, 0, 0, std::numbers::pi / 2), Vec3(0, 2, 0)) == Approx(-std::numbers::pi / 2));
}

TEST_CASE("relative azimuth: degenerate geometry") {
  CHECK_THROWS_AS(relative_azimuth(at(1, 1, 0), Vec3(1, 1, 3)), DegenerateGeometry);
  CHECK_THROWS_AS(relative_azimuth(at(1, 1, 0), Vec3(1 + 5e-7, 1, 3)), DegenerateGeometry);
  CHECK_NOTHROW(relative_azimuth(at(1, 1, 0), Vec3(1 + 1e-5, 1, 3)));
}

TEST_CASE("relative azimuth: 2 pi yaw and common translation invariance") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int i = 0; i < 200; ++i) {
    const auto l = at(u(rng), u(rng), u(rng), u(rng));
    const Vec3 s(u(rng), u(rng), u(rng));
    auto l2 = l;
    l2.yaw += 2 * std::numbers::pi;
    const double a = relative_azimuth(l, s);
    const double b = relative_azimuth(l2, s);
    CHECK(std::abs(wrap_angle(a - b)) < 1e-12);
    const Vec3 shift(u(rng), u(rng), u(rng));
    auto l3 = l;
    l3.position += shift;
    CHECK(std::abs(wrap_angle(relative_azimuth(l3, Vec3(s + shift)) - a)) < 1e-12);
    CHECK(relative_distance(l3, Vec3(s + shift)) == Approx(relative_distance(l, s)).epsilon(1e-12));
    CHECK(a > -std::numbers::pi);
    CHECK(a <= std::numbers::pi);
  }
}

TEST_CASE("relative distance") {
  CHECK(relative_distance(at(0, 0), Vec3(0, 0, 3)) == 3.0);
  CHECK(relative_distance(at(0, 0), Vec3(3, 4, 0)) == 5.0);
}

TEST_CASE("canonical layout distances from two listener positions match a brute-force table") {
  const auto layout = canonical_layout();
  for (const auto& l : {at(0, 0), at(-2.4, 0)}) {
    std::vector<double> ours, oracle;
    for (const auto& s : layout.speakers) {
      ours.push_back(relative_distance(l, s.position));
      const double dx = s.position.x() - l.position.x(), dy = s.position.y() - l.position.y(),
                   dz = s.position.z() - l.position.z();
      oracle.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    for (std::size_t i = 0; i < ours.size(); ++i) CHECK(ours[i] == Approx(oracle[i]).epsilon(1e-14));
  }
  // moving left brings speaker 9 (left wall) closer and speaker 4 (right wall) farther
  CHECK(relative_distance(at(-2.4, 0), layout.speakers[8].position) <
        relative_distance(at(0, 0), layout.speakers[8].position));
  CHECK(relative_distance(at(-2.4, 0), layout.speakers[3].position) >
        relative_distance(at(0, 0), layout.speakers[3].position));
}

TEST_CASE("aliasing frequency") {
  const auto rep = aliasing_frequency(canonical_layout(), 340.0);
  CHECK(rep.min_spacing_d == Approx(1.94).epsilon(1e-12));
  CHECK(rep.f_al == Approx(340.0 / 3.88).epsilon(1e-12));
  CHECK(rep.f_al > 87.0);

  LoudspeakerLayout unit;
  unit.bus_count = 2;
  unit.speakers = {{1, {0, 1, 2}, 0}, {2, {1, 1, 2}, 1}};
  CHECK(aliasing_frequency(unit, 340.0).f_al == Approx(170.0));

  // homogeneity
  CHECK(aliasing_frequency(canonical_layout(), 680.0).f_al == Approx(2 * rep.f_al));
  auto big = canonical_layout();
  for (auto& s : big.speakers) s.position *= 2.0;
  CHECK(aliasing_frequency(big, 340.0).f_al == Approx(rep.f_al / 2));

  LoudspeakerLayout shared;
  shared.bus_count = 1;
  shared.speakers = {{1, {0, 1, 2}, 0}, {2, {1, 1, 2}, 0}};
  CHECK_THROWS_AS(aliasing_frequency(shared), InvalidLayout);
  CHECK_THROWS(aliasing_frequency(canonical_layout(), 0.0));
}

TEST_CASE("room half") {
  CHECK(room_half(at(-2, 0), 9.6) == RoomHalf::Left);
  CHECK(room_half(at(0.1, 0), 9.6) == RoomHalf::Right);
  CHECK(room_half(at(0, 0), 9.6) == RoomHalf::Right);
  CHECK_THROWS(room_half(at(0, 0), 0.0));
}

TEST_CASE("canonical layout invariants") {
  const auto layout = canonical_layout();
  CHECK_NOTHROW(layout.validate());
  CHECK(layout.speakers.size() == 10);
  CHECK(layout.bus_count == 8);
  const auto& s = layout.speakers;
  CHECK(s[0].bus == s[1].bus);
  CHECK((s[0].position - s[1].position).norm() == Approx(1.2));
  CHECK(s[5].bus == s[6].bus);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& a = s[i];
    const auto& b = s[(i + 1) % s.size()];
    if (a.bus != b.bus) CHECK((a.position - b.position).norm() >= 1.94 - 1e-9);
  }
}

TEST_CASE("layout parser round trip and the shipped file") {
  const auto layout = canonical_layout();
  std::istringstream in(format_layout(layout));
  const auto back = parse_layout(in);
  REQUIRE(back.speakers.size() == layout.speakers.size());
  for (std::size_t i = 0; i < back.speakers.size(); ++i) {
    CHECK(back.speakers[i].id == layout.speakers[i].id);
    CHECK(back.speakers[i].bus == layout.speakers[i].bus);
    CHECK(back.speakers[i].position == layout.speakers[i].position);
  }
  const auto file = load_layout(std::string(ORCHESTRA_CONFIG_DIR) + "/canonical_layout.txt");
  CHECK(format_layout(file) == format_layout(layout));
}

TEST_CASE("layout parser rejects invariant violations with line numbers") {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_layout(in);
    } catch (const ParseError& e) {
      return e.position();
    }
    return 0;
  };
  const std::string head = "bus_count 2\nmin_spacing 1\n";
  CHECK(line_of(head + "1 0 0 1 2\n2 1 0.5 1 2\n") == 4);     // too close
  CHECK(line_of(head + "1 0 0 1 2\n2 5 3 1 2\n") == 4);       // bus out of range
  CHECK(line_of(head + "1 0 0 1 2\n2 1 3 1 0\n") == 4);       // z must be > 0
  CHECK(line_of(head + "1 0 0 1 2\n1 1 3 1 2\n") == 4);       // duplicate id
  CHECK(line_of("bus_count 3\n1 0 0 1 2\n2 1 3 1 2\n") == 1); // bus 2 unused
  CHECK(line_of(head + "1 0 0 1 2\n2 1 x 1 2\n") == 4);       // not a number
  CHECK(line_of(head + "bogus 3\n") == 3);
  CHECK(line_of(head + "1 0 0 1 2\n2 1 3 1 2\n") == 0);
}

TEST_CASE("listener clamped into the room") {
  const auto layout = canonical_layout();
  const auto p = clamp_to_room(at(10, -5, 7), layout);
  CHECK(p.position.x() == 4.8);
  CHECK(p.position.y() == -1.5);
  CHECK(p.position.z() == layout.room_height);
  const auto q = clamp_to_room(at(1, 1, 1.7), layout);
  CHECK(q.position == Vec3(1, 1, 1.7));
}
