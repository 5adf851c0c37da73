#include "wakenllm/rational.hpp"

#include <charconv>
#include <cstdlib>

namespace wakenllm {

Rational ratio_or_zero(std::int64_t num, std::int64_t den) {
  if (den == 0) return Rational{0};
  return Rational{num, den};
}

std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

std::string to_key(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + ":" + std::to_string(r.denominator());
}

namespace {

std::optional<std::int64_t> parse_int(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace

std::optional<Rational> parse_rational(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (auto slash = text.find_first_of("/:"); slash != std::string_view::npos) {
    auto num = parse_int(text.substr(0, slash));
    auto den = parse_int(text.substr(slash + 1));
    if (!num || !den || *den == 0) return std::nullopt;
    return Rational{*num, *den};
  }
  bool negative = false;
  if (text.front() == '-') {
    negative = true;
    text.remove_prefix(1);
  }
  auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() && frac.empty()) return std::nullopt;
  if (frac.size() > 15) return std::nullopt;
  for (char c : frac)
    if (c < '0' || c > '9') return std::nullopt;
  std::int64_t w = 0;
  if (!whole.empty()) {
    auto parsed = parse_int(whole);
    if (!parsed || *parsed < 0) return std::nullopt;
    w = *parsed;
  }
  std::int64_t scale = 1;
  std::int64_t f = 0;
  for (char c : frac) {
    scale *= 10;
    f = f * 10 + (c - '0');
  }
  Rational value = Rational{w} + Rational{f, scale};
  return negative ? -value : value;
}

std::string format_percent(const Rational& r) {
  // Work in hundredths of a percent: x = r * 10000, then round half-to-even.
  const Rational x = r * Rational{10000};
  std::int64_t q = x.numerator() / x.denominator();
  if (x.numerator() % x.denominator() != 0 && x.numerator() < 0) --q;  // floor
  const Rational frac = x - Rational{q};
  const Rational half{1, 2};
  if (frac > half || (frac == half && q % 2 != 0)) ++q;
  const bool negative = q < 0;
  const std::int64_t magnitude = negative ? -q : q;
  std::string out = negative ? "-" : "";
  out += std::to_string(magnitude / 100);
  out += '.';
  const std::int64_t cents = magnitude % 100;
  if (cents < 10) out += '0';
  out += std::to_string(cents);
  return out;
}

double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

}  // namespace wakenllm
