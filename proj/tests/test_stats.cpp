#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "advpol/stats.hpp"

using namespace advpol;

namespace {

struct WelchCase {
  std::vector<double> a;
  std::vector<double> b;
  double t;
  double df;
  double p;
};

// Frozen reference table computed with independent statistical software
// (scipy 1.15.3: ttest_ind(equal_var=False, alternative='greater')) before
// this implementation was written.
const WelchCase kWelchOracle[] = {
    {{1.1, 1.2, 1.3}, {0.1, 0.2, 0.3}, 12.24744871391589, 3.9999999999999996, 0.00012760837472096341},
    {{1.0, 2.0, 3.0, 4.0}, {1.5, 2.5, 3.5}, 0, 4.9591836734693873, 0.5},
    {{0.0, 0.0, 1.0}, {0.0, 1.0, 1.0}, -0.70710678118654746, 4, 0.74074074074074092},
    {{5.0, 5.1, 4.9, 5.2}, {5.0, 5.1, 4.9, 5.2}, 0, 6, 0.5},
    {{2.0, 4.0, 6.0, 8.0, 10.0}, {5.9, 6.0, 6.1}, 0, 4.0133221482102881, 0.5},
    {{-1.0, -2.0, -3.0}, {-4.0, -5.0, -6.0, -7.0}, 4.0414518843273806, 4.9591836734693873, 0.0050384716739944263},
    {{0.5, 0.6}, {0.4, 0.3}, 2.8284271247461912, 2, 0.052786404500042038},
    {{10.0, 11.0, 9.0, 10.5, 9.5, 10.2}, {9.8, 10.1}, 0.2548235957188148, 5.9185360283019666, 0.40374113894582991},
    {{0.001, 0.002, 0.003}, {0.0011, 0.0021, 0.0029}, -0.042874646285626955, 3.9580569227476987, 0.51606148569114951},
    {{3.0, 3.0, 3.0, 3.1}, {2.9, 3.0, 3.0, 3.0}, 1.4142135623730889, 6, 0.10351562500000082},
};

}  // namespace

TEST_CASE("sem basics") {
  CHECK(sem({"g", {1.0, 1.0, 1.0, 1.0}}) == 0.0);
  CHECK(sem({"g", {0.0, 2.0}}) == Catch::Approx(1.0));
  CHECK(sem({"g", {1.0, 2.0, 3.0}}) == Catch::Approx(0.5773502691896258).epsilon(1e-12));
  CHECK_THROWS(sem({"g", {1.0}}));
}

TEST_CASE("sem and mean are permutation invariant") {
  SampleGroup g{"g", {3.0, -1.0, 4.5, 0.25, 7.0}};
  SampleGroup shuffled{"g", {7.0, 0.25, -1.0, 4.5, 3.0}};
  CHECK(mean_of(g.values) == mean_of(shuffled.values));
  CHECK(sem(g) == sem(shuffled));
}

TEST_CASE("welch one-sided p values match the frozen oracle table") {
  for (const auto& c : kWelchOracle) {
    WelchResult r = welch_t_one_sided({"a", c.a}, {"b", c.b});
    INFO("a0=" << c.a[0] << " b0=" << c.b[0]);
    CHECK(std::fabs(r.t - c.t) <= 1e-9 * std::max(1.0, std::fabs(c.t)));
    CHECK(std::fabs(r.df - c.df) <= 1e-9 * std::max(1.0, std::fabs(c.df)));
    CHECK(std::fabs(r.p - c.p) <= 1e-6);
  }
}

TEST_CASE("welch edge conventions") {
  SECTION("identical groups give p = 0.5") {
    WelchResult r = welch_t_one_sided({"a", {1.0, 2.0, 3.0}}, {"b", {1.0, 2.0, 3.0}});
    CHECK(r.t == 0.0);
    CHECK(r.p == 0.5);
  }
  SECTION("both groups constant and equal give p = 0.5 by convention") {
    WelchResult r = welch_t_one_sided({"a", {2.0, 2.0}}, {"b", {2.0, 2.0}});
    CHECK(r.p == 0.5);
  }
  SECTION("swapping a and b maps p to 1 - p") {
    SampleGroup a{"a", {1.0, 1.4, 0.9, 1.2}};
    SampleGroup b{"b", {0.7, 0.8, 1.1}};
    WelchResult r1 = welch_t_one_sided(a, b);
    WelchResult r2 = welch_t_one_sided(b, a);
    CHECK(r1.p + r2.p == Catch::Approx(1.0).epsilon(1e-12));
  }
  SECTION("insufficient n is a signaled error") {
    CHECK_THROWS(welch_t_one_sided({"a", {1.0}}, {"b", {1.0, 2.0}}));
  }
}

TEST_CASE("student t tail sanity") {
  CHECK(student_t_upper_tail(0.0, 5.0) == Catch::Approx(0.5));
  CHECK(student_t_upper_tail(100.0, 3.0) < 1e-5);
  CHECK(student_t_upper_tail(-100.0, 3.0) > 1.0 - 1e-5);
  // symmetry
  CHECK(student_t_upper_tail(1.7, 7.3) + student_t_upper_tail(-1.7, 7.3) ==
        Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("aggregate_curves") {
  Curve r1{{0, 1.0}, {100, 2.0}, {200, 3.0}};
  Curve r2{{0, 3.0}, {100, 2.0}, {200, 5.0}};

  SECTION("two runs give per-point mean and sem") {
    auto agg = aggregate_curves({r1, r2});
    REQUIRE(agg.size() == 3);
    CHECK(agg[0].mean == Catch::Approx(2.0));
    CHECK(agg[1].sem == Catch::Approx(0.0));
    CHECK(agg[2].mean == Catch::Approx(4.0));
    CHECK(agg[2].n == 2);
  }

  SECTION("single run: mean equals the run, sem signaled as NaN") {
    auto agg = aggregate_curves({r1});
    CHECK(agg[1].mean == 2.0);
    CHECK(std::isnan(agg[1].sem));
    CHECK(agg[1].n == 1);
  }

  SECTION("identical runs have zero sem everywhere") {
    auto agg = aggregate_curves({r1, r1, r1});
    for (const auto& p : agg) CHECK(p.sem == 0.0);
  }

  SECTION("mismatched step grids are a hard error naming the offender") {
    Curve bad{{0, 1.0}, {150, 2.0}, {200, 3.0}};
    CHECK_THROWS_WITH(aggregate_curves({r1, bad}),
                      Catch::Matchers::ContainsSubstring("run 1"));
  }

  SECTION("csv format contract") {
    auto agg = aggregate_curves({r1, r2});
    const std::string csv = curves_csv(agg);
    CHECK(csv.rfind("step,mean,sem,n\n", 0) == 0);
    CHECK(csv.find("0,2,1,2\n") != std::string::npos);
  }
}
