#include <doctest.h>

#include "tempov/cli/checks.hpp"

using namespace tempov::cli;

namespace {

void require_pass(const CheckResult& r, int id) {
  CAPTURE(r.name);
  CAPTURE(r.detail);
  CHECK(r.id == id);
  CHECK(r.passed);
  CHECK(r.measured.is_object());
}

}  // namespace

TEST_CASE("acceptance checks pass at a second seed") {
  // The bench runs them at seed 0; a different seed guards against tuning to one draw.
  const std::uint64_t seed = 17;
  require_pass(check_gradient_oracle(seed), 1);
  require_pass(check_loss_oracles(seed), 2);
  require_pass(check_identities(seed), 3);
  require_pass(check_gaussian_nll(seed), 4);
  require_pass(check_protocol(seed), 7);
  require_pass(check_metrics(seed), 8);
  require_pass(check_pipeline(seed), 9);
  require_pass(check_analysis(seed), 10);
}

TEST_CASE("check results serialize with their measurements") {
  const auto r = check_metrics(0);
  const auto j = to_json(r);
  CHECK(j.at("id") == 8);
  CHECK(j.at("passed") == true);
  CHECK(j.at("measured").size() > 0);
  CHECK_FALSE(j.contains("detail"));
}
