#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <boost/rational.hpp>

namespace wakenllm {

/// Exact ratio of two 64-bit integers. Every rate in the engine is one of these;
/// decimals only appear when a value is displayed.
using Rational = boost::rational<std::int64_t>;

/// Ratio num/den, or 0 when den is 0. Callers that care about the empty case
/// track it separately.
Rational ratio_or_zero(std::int64_t num, std::int64_t den);

/// "p/q" (or "p" when q == 1).
std::string to_string(const Rational& r);

/// Accepts "p/q", integers, and finite decimals ("0.6667" -> 6667/10000).
std::optional<Rational> parse_rational(std::string_view text);

/// Percentage with two decimals, rounded half-to-even on the exact value.
/// 0.64245 -> "64.24", 0.6425 -> "64.25", -0.421 -> "-42.10".
std::string format_percent(const Rational& r);

/// Compact form used inside identifiers: "p:q", or "p" for integers.
std::string to_key(const Rational& r);

double to_double(const Rational& r);

}  // namespace wakenllm
