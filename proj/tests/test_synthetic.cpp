// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ddpc/synthetic.hpp"

using namespace ddpc;

TEST_CASE("rigid spec parsing") {
  const auto s = parse_rigid_spec("rigid:500,3,2.5");
  CHECK(s.points == 500);
  CHECK(s.frames == 3);
  CHECK(s.translation == 2.5);
  for (const char* bad : {"rigid:", "rigid:10", "rigid:10,2", "sphere:10,2,1", "rigid:0,2,1", "rigid:10,0,1",
                          "rigid:a,2,1", "rigid:10,2,1,4"})
    CHECK_THROWS_AS(parse_rigid_spec(bad), ParseError);
}

TEST_CASE("rigid sequences have exact counts and translate along x") {
  RigidSpec spec;
  spec.points = 3000;
  spec.frames = 3;
  spec.translation = 1.5;
  spec.precision_bits = 7;
  const auto f = rigid_sequence(spec);
  REQUIRE(f.size() == 3);
  for (const auto& fr : f) {
    CHECK(fr.size() == 3000);
    CHECK(fr.precision_bits == 7);
    for (const Coord& c : fr.coords()) {
      REQUIRE(c.x >= 0);
      REQUIRE(c.x < 128);
    }
  }
  // round(1.5) = 2, round(3.0) = 3
  for (size_t i = 0; i < f[0].size(); ++i) {
    CHECK(f[1].coords()[i] == Coord{f[0].coords()[i].x + 2, f[0].coords()[i].y, f[0].coords()[i].z});
    CHECK(f[2].coords()[i] == Coord{f[0].coords()[i].x + 3, f[0].coords()[i].y, f[0].coords()[i].z});
  }
}

TEST_CASE("rigid sequences are deterministic per seed") {
  RigidSpec a;
  a.points = 1000;
  RigidSpec b = a;
  b.seed = 2;
  CHECK(rigid_sequence(a)[0].coords() == rigid_sequence(a)[0].coords());
  CHECK(rigid_sequence(a)[0].coords() != rigid_sequence(b)[0].coords());
}
