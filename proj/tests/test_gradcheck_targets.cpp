#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcdsm/error.hpp"
#include "dcdsm/gradcheck_targets.hpp"

using namespace dcdsm;

TEST_CASE("every target passes and is reproducible") {
  for (const auto& name : gradcheck_target_names()) {
    const GradcheckReport a = gradcheck_target(name, 5), b = gradcheck_target(name, 5);
    CHECK(a.passed);
    CHECK(a.max_rel_err < 1e-4);
    CHECK(a.max_rel_err == b.max_rel_err);
  }
}

TEST_CASE("unknown targets are rejected") { CHECK_THROWS_AS(gradcheck_target("nope"), InvalidArgument); }
