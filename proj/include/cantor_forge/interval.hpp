#pragma once

#include <algorithm>
#include <ostream>

#include <Eigen/Core>

#include "cantor_forge/rational.hpp"

namespace cantor {

/// Closed interval [lo, hi]. With T = Rat the four field operations are exact;
/// transcendental functions round outward.
template <class T>
struct Interval {
    T lo{}, hi{};

    Interval() = default;
    Interval(int v) : lo(v), hi(v) {}
    Interval(const T& v) : lo(v), hi(v) {}
    Interval(const T& l, const T& h) : lo(l), hi(h) {
        if (h < l) throw Error("InvalidInterval", "lo > hi");
    }

    T length() const { return hi - lo; }
    T mid() const { return (lo + hi) / 2; }
    bool is_point() const { return lo == hi; }
    bool contains(const T& x) const { return lo <= x && x <= hi; }
    bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
    bool contains_zero() const { return lo <= 0 && 0 <= hi; }

    Interval& operator+=(const Interval& o) { lo += o.lo; hi += o.hi; return *this; }
    Interval& operator-=(const Interval& o) { T l = lo - o.hi; hi = hi - o.lo; lo = l; return *this; }
    Interval& operator*=(const Interval& o) { return *this = *this * o; }
    Interval& operator/=(const Interval& o) { return *this = *this / o; }

    friend Interval operator+(Interval a, const Interval& b) { return a += b; }
    friend Interval operator-(Interval a, const Interval& b) { return a -= b; }
    friend Interval operator-(const Interval& a) { return Interval(T(-a.hi), T(-a.lo)); }
    friend Interval operator*(const Interval& a, const Interval& b) {
        T p[4] = {T(a.lo * b.lo), T(a.lo * b.hi), T(a.hi * b.lo), T(a.hi * b.hi)};
        return Interval(*std::min_element(p, p + 4), *std::max_element(p, p + 4));
    }
    friend Interval operator/(const Interval& a, const Interval& b) {
        if (b.contains_zero()) throw Error("DivisionByZero", "interval divisor contains 0");
        T q[4] = {T(a.lo / b.lo), T(a.lo / b.hi), T(a.hi / b.lo), T(a.hi / b.hi)};
        return Interval(*std::min_element(q, q + 4), *std::max_element(q, q + 4));
    }
    friend bool operator==(const Interval& a, const Interval& b) { return a.lo == b.lo && a.hi == b.hi; }
    friend bool operator!=(const Interval& a, const Interval& b) { return !(a == b); }
    friend std::ostream& operator<<(std::ostream& os, const Interval& a) {
        return os << '[' << a.lo << ", " << a.hi << ']';
    }
};

using Interval1 = Interval<Rat>;
using RatInterval = Interval<Rat>;

inline Interval1 hull(const Interval1& a, const Interval1& b) {
    return {min(a.lo, b.lo), max(a.hi, b.hi)};
}

/// Distance between two intervals; 0 when they overlap or touch.
inline Rat distance(const Interval1& a, const Interval1& b) {
    if (a.hi < b.lo) return b.lo - a.hi;
    if (b.hi < a.lo) return a.lo - b.hi;
    return 0;
}

json interval_to_json(const Interval1& iv);
Interval1 interval_from_json(const json& j);

/// Working precision (bits) for the outward-rounded elementary functions below.
constexpr int kElementaryBits = 160;

RatInterval abs(const RatInterval& x);
RatInterval sqrt(const RatInterval& x);
RatInterval exp(const RatInterval& x);
RatInterval log(const RatInterval& x);
RatInterval sin(const RatInterval& x);
RatInterval cos(const RatInterval& x);
/// x^a. Exact for a point non-negative integer exponent; otherwise needs x > 0
/// (or x >= 0 with a > 0) and evaluates the monotone corners with directed rounding.
RatInterval pow(const RatInterval& x, const RatInterval& a);

/// Outward rounding of each endpoint to `bits` fractional bits.
inline RatInterval round_out(const RatInterval& x, int bits) {
    return {round_down(x.lo, bits), round_up(x.hi, bits)};
}

} // namespace cantor

namespace Eigen {
template <>
struct NumTraits<cantor::RatInterval> : GenericNumTraits<cantor::RatInterval> {
    using Real = cantor::RatInterval;
    using NonInteger = cantor::RatInterval;
    using Nested = cantor::RatInterval;
    using Literal = cantor::RatInterval;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = 4,
        AddCost = 16,
        MulCost = 64
    };
    static inline int digits10() { return 0; }
};
} // namespace Eigen
