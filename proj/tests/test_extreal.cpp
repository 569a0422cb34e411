#include <array>
#include <random>
#include <vector>

#include "doctest.h"
#include "epikit/extreal.hpp"

using epikit::ExtReal;

namespace {

const ExtReal kPlus = ExtReal::plus_inf();
const ExtReal kMinus = ExtReal::minus_inf();

}  // namespace

TEST_CASE("NaN is rejected at construction") {
  CHECK_THROWS_AS(ExtReal(std::nan("")), std::invalid_argument);
}

TEST_CASE("subtraction follows the integral conventions") {
  CHECK(epikit::sub_conv(kPlus, kPlus).is_plus_inf());
  CHECK(epikit::sub_conv(kPlus, kMinus).is_plus_inf());
  CHECK(epikit::sub_conv(kPlus, 7.0).is_plus_inf());
  CHECK(epikit::sub_conv(3.0, kPlus).is_minus_inf());
  CHECK(epikit::sub_conv(2.0, 0.5).value() == doctest::Approx(1.5));
  CHECK(epikit::sub_conv(kMinus, 1.0).is_minus_inf());
  CHECK(epikit::sub_conv(1.0, kMinus).is_plus_inf());
}

TEST_CASE("addition is absorbed by +inf") {
  CHECK(epikit::add_conv(kPlus, kMinus).is_plus_inf());
  CHECK(epikit::add_conv(kMinus, kPlus).is_plus_inf());
  CHECK(epikit::add_conv(kMinus, 2.0).is_minus_inf());
  CHECK(epikit::add_conv(1.0, 2.0).value() == 3.0);
}

TEST_CASE("positive and negative parts") {
  CHECK(epikit::plus_part(kMinus).value() == 0.0);
  CHECK(epikit::minus_part(kMinus).is_plus_inf());
  CHECK(epikit::plus_part(kPlus).is_plus_inf());
  CHECK(epikit::minus_part(kPlus).value() == 0.0);
  CHECK(epikit::plus_part(-2.5).value() == 0.0);
  CHECK(epikit::minus_part(-2.5).value() == 2.5);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const ExtReal a(u(rng));
    CHECK(epikit::sub_conv(epikit::plus_part(a), epikit::minus_part(a)) == a);
    CHECK(epikit::plus_part(a) >= ExtReal(0.0));
    CHECK(epikit::minus_part(a) >= ExtReal(0.0));
  }
}

TEST_CASE("scaling by zero kills infinities") {
  CHECK(epikit::scale_nonneg(kPlus, 0.0).value() == 0.0);
  CHECK(epikit::scale_nonneg(kMinus, 0.0).value() == 0.0);
  CHECK(epikit::scale_nonneg(kPlus, 0.5).is_plus_inf());
  CHECK(epikit::scale_nonneg(-4.0, 0.25).value() == -1.0);
}

TEST_CASE("tail infimum and supremum") {
  const std::vector<ExtReal> osc{1.0, 0.0, 1.0, 0.0, 1.0, 0.0};
  CHECK(epikit::liminf_seq(osc, 0).value() == 0.0);
  CHECK(epikit::limsup_seq(osc, 0).value() == 1.0);
  const std::vector<ExtReal> ev{kMinus, 5.0, 5.0, 5.0};
  CHECK(epikit::liminf_seq(ev, 1).value() == 5.0);
  CHECK(epikit::liminf_seq(ev, 0).is_minus_inf());
  CHECK_THROWS_AS(epikit::liminf_seq(std::vector<ExtReal>{}, 0), std::invalid_argument);
  CHECK_THROWS_AS(epikit::liminf_seq(ev, 4), std::invalid_argument);
}

TEST_CASE("positive part commutes with the tail infimum, exhaustively") {
  const std::array<ExtReal, 5> alphabet{kMinus, ExtReal(-1.0), ExtReal(0.0), ExtReal(1.0), kPlus};
  int checked = 0;
  for (std::size_t len = 1; len <= 5; ++len) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < len; ++i) combos *= alphabet.size();
    for (std::size_t code = 0; code < combos; ++code) {
      std::vector<ExtReal> s(len);
      std::vector<ExtReal> sp(len);
      std::size_t c = code;
      for (std::size_t i = 0; i < len; ++i) {
        s[i] = alphabet[c % alphabet.size()];
        sp[i] = epikit::plus_part(s[i]);
        c /= alphabet.size();
      }
      for (std::size_t ts = 0; ts < len; ++ts) {
        // Oracle: plain loop over the tail.
        ExtReal lo = kPlus;
        ExtReal lop = kPlus;
        for (std::size_t i = ts; i < len; ++i) {
          if (s[i] < lo) lo = s[i];
          if (sp[i] < lop) lop = sp[i];
        }
        REQUIRE(epikit::liminf_seq(s, ts) == lo);
        REQUIRE(epikit::plus_part(epikit::liminf_seq(s, ts)) == epikit::liminf_seq(sp, ts));
        REQUIRE(epikit::plus_part(lo) == lop);
        ++checked;
      }
    }
  }
  CHECK(checked > 3000);
}

TEST_CASE("sums split into parts before combining") {
  const std::vector<ExtReal> t{kPlus, kMinus, 1.0};
  CHECK(epikit::sum_conv(t).is_plus_inf());
  const std::vector<ExtReal> u{kMinus, 1.0, 2.0};
  CHECK(epikit::sum_conv(u).is_minus_inf());
  const std::vector<ExtReal> v{1.5, -0.5, 2.0};
  CHECK(epikit::sum_conv(v).value() == doctest::Approx(3.0));
}

TEST_CASE("string form") {
  CHECK(epikit::to_string(kPlus) == "+inf");
  CHECK(epikit::to_string(kMinus) == "-inf");
  CHECK(epikit::to_string(ExtReal(0.25)) == "0.25");
  CHECK(epikit::approx_equal(1.0, 1.0 + 1e-13));
  CHECK_FALSE(epikit::approx_equal(kPlus, 1e300));
}
