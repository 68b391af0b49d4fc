#include "hcma/numeric.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <system_error>

#include "hcma/error.hpp"

namespace hcma {

std::string format_double(double value) {
  if (!std::isfinite(value)) {
    if (std::isnan(value)) return "nan";
    return value > 0 ? "inf" : "-inf";
  }
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw Error("format_double: to_chars failed");
  return std::string(buf.data(), end);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw ParseError("not a number: '" + std::string(text) + "'");
  return out;
}

std::int64_t parse_int(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw ParseError("not an integer: '" + std::string(text) + "'");
  return out;
}

}  // namespace hcma
