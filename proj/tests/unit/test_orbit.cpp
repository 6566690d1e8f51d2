#include <catch2/catch_amalgamated.hpp>
#include "graze/orbit.hpp"
TEST_CASE("orbit placeholder", "[.skip]") {}
