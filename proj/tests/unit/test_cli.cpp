#include <catch2/catch_amalgamated.hpp>
#include "graze/cli/commands.hpp"
TEST_CASE("cli placeholder", "[.skip]") {}
