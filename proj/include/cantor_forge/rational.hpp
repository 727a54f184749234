#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <gmpxx.h>
#include <json.hpp>

namespace cantor {

/// Exact rational. Always kept canonical (lowest terms, positive denominator).
using Rat = mpq_class;
using json = nlohmann::json;

/// Library error. `kind()` is the stable error name used by tests and reports.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& detail, int level = -1)
        : std::runtime_error(kind + (detail.empty() ? "" : ": " + detail)),
          kind_(std::move(kind)), level_(level) {}
    const std::string& kind() const { return kind_; }
    int level() const { return level_; }

private:
    std::string kind_;
    int level_;
};

Rat rat(long num, long den = 1);

/// Parses "3", "-1/10", "0.125", "1e-3".
Rat parse_rat(std::string_view s);

/// Accepts [num, den] pairs (ints or digit strings), strings, or plain JSON numbers.
/// A JSON float is read through its shortest decimal form, so 0.1 becomes 1/10.
Rat rat_from_json(const json& j);
json rat_to_json(const Rat& r);

std::string to_string(const Rat& r);
double to_double(const Rat& r);

Rat abs(const Rat& r);
Rat min(const Rat& a, const Rat& b);
Rat max(const Rat& a, const Rat& b);

/// 2^e for any integer e.
Rat pow2(int e);
Rat pow(const Rat& base, unsigned e);

/// floor(r * 2^m) and ceil(r * 2^m).
std::int64_t floor_scaled(const Rat& r, int m);
std::int64_t ceil_scaled(const Rat& r, int m);

/// Largest multiple of 2^-bits that is <= r (round_down) or >= r (round_up).
Rat round_down(const Rat& r, int bits);
Rat round_up(const Rat& r, int bits);

/// Exact double -> rational.
Rat from_double(double x);

/// Rational bounds on sqrt(r) with `bits` fractional bits; exact when r is a square.
Rat sqrt_down(const Rat& r, int bits);
Rat sqrt_up(const Rat& r, int bits);

} // namespace cantor
