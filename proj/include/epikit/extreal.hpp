// Extended-real scalar with the integral conventions used throughout epikit.
//
// Values are finite doubles or +/-infinity. NaN is never representable.
// Subtraction follows the convention (+inf) - a = +inf for every a and
// b - (+inf) = -inf for finite b, so (+inf) - (+inf) = +inf. Addition
// follows (+inf) + a = +inf for every a.
#ifndef EPIKIT_EXTREAL_HPP
#define EPIKIT_EXTREAL_HPP

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace epikit {

class ExtReal {
 public:
  constexpr ExtReal() = default;
  // Throws std::invalid_argument on NaN.
  ExtReal(double v) : v_(v) {  // NOLINT(google-explicit-constructor)
    if (std::isnan(v)) throw std::invalid_argument("ExtReal: NaN is not an extended real");
  }

  static ExtReal plus_inf() { return ExtReal(std::numeric_limits<double>::infinity()); }
  static ExtReal minus_inf() { return ExtReal(-std::numeric_limits<double>::infinity()); }

  double value() const { return v_; }
  bool is_finite() const { return std::isfinite(v_); }
  bool is_plus_inf() const { return v_ == std::numeric_limits<double>::infinity(); }
  bool is_minus_inf() const { return v_ == -std::numeric_limits<double>::infinity(); }

  friend bool operator==(ExtReal a, ExtReal b) { return a.v_ == b.v_; }
  friend auto operator<=>(ExtReal a, ExtReal b) { return a.v_ <=> b.v_; }

 private:
  double v_ = 0.0;
};

/// a - b with (+inf) - a = +inf and b - (+inf) = -inf.
ExtReal sub_conv(ExtReal a, ExtReal b);

/// a + b with (+inf) + a = +inf (so (+inf) + (-inf) = +inf).
ExtReal add_conv(ExtReal a, ExtReal b);

/// a * s for a finite scalar s >= 0 with 0 * (+/-inf) = 0.
ExtReal scale_nonneg(ExtReal a, double s);

ExtReal plus_part(ExtReal a);
ExtReal minus_part(ExtReal a);

inline ExtReal min(ExtReal a, ExtReal b) { return b < a ? b : a; }
inline ExtReal max(ExtReal a, ExtReal b) { return a < b ? b : a; }

/// Tail infimum inf_{k >= tail_start} a_k of a finite sequence.
///
/// This is the finite-prefix stand-in for liminf: the textbook
/// sup_n inf_{k>=n} over a finite sequence collapses to its last element, so
/// the tail start is the declared point from which the sequence is
/// considered "eventually". Throws std::invalid_argument on an empty sequence
/// or a tail start past the end.
ExtReal liminf_seq(std::span<const ExtReal> a, std::size_t tail_start = 0);
/// Tail supremum sup_{k >= tail_start} a_k.
ExtReal limsup_seq(std::span<const ExtReal> a, std::size_t tail_start = 0);

/// |a - b| <= tol for finite values, exact category match otherwise.
bool approx_equal(ExtReal a, ExtReal b, double tol = 1e-12);

/// "+inf", "-inf", or the shortest round-trip decimal representation.
std::string to_string(ExtReal a);

/// Deterministic sum over a sequence: positive and negative parts are
/// accumulated separately and combined with sub_conv.
ExtReal sum_conv(std::span<const ExtReal> terms);

}  // namespace epikit

#endif  // EPIKIT_EXTREAL_HPP
