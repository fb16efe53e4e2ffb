#include <doctest.h>

#include <set>

#include "hic/rng.hpp"

using namespace hic;

TEST_CASE("derive_stream is a pure function of (seed, tag, index)") {
  Rng a = derive_stream(42, StreamTag::Frame, 7);
  Rng b = derive_stream(42, StreamTag::Frame, 7);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
}

TEST_CASE("neighbouring streams differ") {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 1000; ++i) firsts.insert(derive_stream(1, StreamTag::Frame, i)());
  for (std::uint64_t s = 0; s < 100; ++s) firsts.insert(derive_stream(s + 2, StreamTag::Frame, 0)());
  firsts.insert(derive_stream(1, StreamTag::Tuples, 0)());
  firsts.insert(derive_stream(1, StreamTag::Calibration, 0)());
  CHECK(firsts.size() == 1102);
}

TEST_CASE("splitmix64 reference values") {
  // Published test vector for seed 1234567.
  std::uint64_t state = 1234567;
  CHECK(splitmix64(state) == 6457827717110365317ULL);
  CHECK(splitmix64(state) == 3203168211198807973ULL);
}
