#include "epikit/extreal.hpp"

#include <algorithm>
#include <charconv>

namespace epikit {

ExtReal sub_conv(ExtReal a, ExtReal b) {
  if (a.is_plus_inf()) return ExtReal::plus_inf();
  if (b.is_plus_inf()) return ExtReal::minus_inf();
  // a < +inf and b < +inf here; a - (-inf) = +inf, (-inf) - finite = -inf.
  if (b.is_minus_inf()) return ExtReal::plus_inf();
  return ExtReal(a.value() - b.value());
}

ExtReal add_conv(ExtReal a, ExtReal b) {
  if (a.is_plus_inf() || b.is_plus_inf()) return ExtReal::plus_inf();
  if (a.is_minus_inf() || b.is_minus_inf()) return ExtReal::minus_inf();
  return ExtReal(a.value() + b.value());
}

ExtReal scale_nonneg(ExtReal a, double s) {
  if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("scale_nonneg: scale must be finite and >= 0");
  if (s == 0.0) return ExtReal(0.0);
  return ExtReal(a.value() * s);
}

ExtReal plus_part(ExtReal a) { return a.value() > 0.0 ? a : ExtReal(0.0); }

ExtReal minus_part(ExtReal a) { return a.value() < 0.0 ? ExtReal(-a.value()) : ExtReal(0.0); }

ExtReal liminf_seq(std::span<const ExtReal> a, std::size_t tail_start) {
  if (a.empty()) throw std::invalid_argument("liminf_seq: empty sequence");
  if (tail_start >= a.size()) throw std::invalid_argument("liminf_seq: tail start past end of sequence");
  return *std::min_element(a.begin() + static_cast<std::ptrdiff_t>(tail_start), a.end());
}

ExtReal limsup_seq(std::span<const ExtReal> a, std::size_t tail_start) {
  if (a.empty()) throw std::invalid_argument("limsup_seq: empty sequence");
  if (tail_start >= a.size()) throw std::invalid_argument("limsup_seq: tail start past end of sequence");
  return *std::max_element(a.begin() + static_cast<std::ptrdiff_t>(tail_start), a.end());
}

bool approx_equal(ExtReal a, ExtReal b, double tol) {
  if (a.is_finite() && b.is_finite()) return std::abs(a.value() - b.value()) <= tol;
  return a == b;
}

std::string to_string(ExtReal a) {
  if (a.is_plus_inf()) return "+inf";
  if (a.is_minus_inf()) return "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), a.value());
  return std::string(buf, res.ptr);
}

ExtReal sum_conv(std::span<const ExtReal> terms) {
  double pos = 0.0;
  double neg = 0.0;
  for (ExtReal t : terms) {
    pos += plus_part(t).value();
    neg += minus_part(t).value();
  }
  return sub_conv(ExtReal(pos), ExtReal(neg));
}

}  // namespace epikit
