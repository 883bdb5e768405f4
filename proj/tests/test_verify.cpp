#include <gtest/gtest.h>

#include <algorithm>

#include "cresp/verify.hpp"

using namespace cresp;

namespace {

VerifyOptions small_options() {
  VerifyOptions opt;
  opt.identity_cases = 200;
  opt.bound_sweep = 10;
  opt.rsd_instances = 5;
  opt.upper_bound_predictors = 3;
  opt.upper_bound_samples = 4000;
  return opt;
}

const CheckResult& find(const VerifyReport& r, const std::string& name) {
  auto it = std::find_if(r.checks.begin(), r.checks.end(), [&](const auto& c) { return c.name == name; });
  if (it == r.checks.end()) throw std::runtime_error("no check " + name);
  return *it;
}

}  // namespace

TEST(Verify, DefaultSuitePasses) {
  const auto rep = run_verify(VerifyOptions{});
  for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.name << " " << c.measured.dump();
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.checks.size(), 11u);
  EXPECT_EQ(find(rep, "value-bound sweep").cases, 150);
  EXPECT_EQ(find(rep, "conjugate symmetry").cases, 1000);
}

TEST(Verify, SignFaultIsNamed) {
  VerifyOptions opt = small_options();
  opt.cf = cf_with_sign_fault();
  const auto rep = run_verify(opt);
  EXPECT_FALSE(rep.passed());
  const auto f = rep.failures();
  EXPECT_NE(std::find(f.begin(), f.end(), "conjugate symmetry"), f.end());
  EXPECT_TRUE(find(rep, "phi(0)=1").passed);
  EXPECT_TRUE(find(rep, "modulus bound").passed);
}

TEST(Verify, ReportIsDeterministic) {
  const auto a = verify_report_to_json(run_verify(small_options())).dump();
  const auto b = verify_report_to_json(run_verify(small_options())).dump();
  EXPECT_EQ(a, b);
}

TEST(Verify, SweepSizeFollowsOption) {
  VerifyOptions opt = small_options();
  opt.bound_sweep = 4;
  const auto s = check_value_bound_sweep(opt);
  EXPECT_EQ(s.sweep.cases, 12);
  EXPECT_EQ(s.identity.cases, 4);
  EXPECT_TRUE(s.sweep.passed);
}

TEST(Verify, DistinguishingPairSeparates) {
  const auto r = check_distinguishing_pair(small_options());
  EXPECT_TRUE(r.passed);
  EXPECT_GE(r.measured.at("max_difference").get<double>(), 1e-6);
}
