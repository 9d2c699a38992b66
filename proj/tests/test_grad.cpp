#include "doctest.h"
#include "support/suites.hpp"

TEST_SUITE_BEGIN("grad");

TEST_CASE("finite differences confirm every op's analytic gradient") {
  std::string msg;
  const bool ok = suites::gradient_suite(20, &msg);
  INFO(msg);
  CHECK(ok);
}

TEST_SUITE_END();
