#include <doctest.h>

#include <sstream>

#include "relhal/random.hpp"
#include "relhal/text.hpp"

using namespace relhal;

TEST_CASE("normalize lowercases, trims and collapses whitespace") {
  CHECK(text::normalize("  Sitting \t  ON ") == "sitting on");
  CHECK(text::normalize("") == "");
  CHECK(text::normalize_loose("Yes, it is.") == "yes it is");
}

TEST_CASE("config lines skip comments and blanks") {
  std::istringstream in("# header\n\na = b  # trailing\n  c\n");
  auto lines = text::read_config_lines(in);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].line_no == 3);
  CHECK(lines[0].content == "a = b");
  CHECK(lines[1].content == "c");
}

TEST_CASE("substitute replaces every occurrence") {
  CHECK(text::substitute("{x} and {x}", "x", "y") == "y and y");
  CHECK(text::substitute("{x}", "z", "y") == "{x}");
}

TEST_CASE("rng is reproducible and uniform_index stays in range") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    auto k = r.uniform_index(7);
    CHECK(k < 7);
    double u = r.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(stable_hash("on") == stable_hash("on"));
  CHECK(stable_hash("on") != stable_hash("under"));
}
