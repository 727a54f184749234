#include "cantor_forge/rational.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace cantor {

Rat rat(long num, long den) {
    Rat r(num, den);
    r.canonicalize();
    return r;
}

Rat parse_rat(std::string_view sv) {
    std::string s(sv);
    auto bad = [&] { return Error("ConfigError", "not a rational: '" + s + "'"); };
    if (s.empty()) throw bad();
    try {
        if (s.find('/') != std::string::npos) {
            auto p = s.find('/');
            mpz_class n(s.substr(0, p), 10), d(s.substr(p + 1), 10);
            if (d == 0) throw bad();
            Rat r(n, d);
            r.canonicalize();
            return r;
        }
        std::string mant = s;
        long exp10 = 0;
        auto e = s.find_first_of("eE");
        if (e != std::string::npos) {
            mant = s.substr(0, e);
            exp10 = std::stol(s.substr(e + 1));
        }
        bool neg = false;
        if (!mant.empty() && (mant[0] == '-' || mant[0] == '+')) {
            neg = mant[0] == '-';
            mant = mant.substr(1);
        }
        auto dot = mant.find('.');
        std::string digits = mant;
        if (dot != std::string::npos) {
            digits = mant.substr(0, dot) + mant.substr(dot + 1);
            exp10 -= static_cast<long>(mant.size() - dot - 1);
        }
        if (digits.empty()) throw bad();
        for (char c : digits)
            if (c < '0' || c > '9') throw bad();
        mpz_class n(digits, 10), p10;
        mpz_ui_pow_ui(p10.get_mpz_t(), 10, static_cast<unsigned long>(exp10 < 0 ? -exp10 : exp10));
        Rat r = exp10 < 0 ? Rat(n, p10) : Rat(n * p10);
        r.canonicalize();
        if (neg) r = -r;
        return r;
    } catch (const std::invalid_argument&) {
        throw bad();
    } catch (const std::out_of_range&) {
        throw bad();
    }
}

namespace {

mpz_class int_from_json(const json& j) {
    if (j.is_number_integer()) {
        if (j.is_number_unsigned()) return mpz_class(std::to_string(j.get<std::uint64_t>()));
        return mpz_class(std::to_string(j.get<std::int64_t>()));
    }
    if (j.is_string()) {
        try {
            return mpz_class(j.get<std::string>(), 10);
        } catch (const std::invalid_argument&) {
        }
    }
    throw Error("ConfigError", "expected integer, got " + j.dump());
}

json int_to_json(const mpz_class& z) {
    if (z.fits_slong_p()) return json(static_cast<std::int64_t>(z.get_si()));
    return json(z.get_str());
}

} // namespace

Rat rat_from_json(const json& j) {
    if (j.is_array()) {
        if (j.size() != 2) throw Error("ConfigError", "rational pair must have 2 entries: " + j.dump());
        mpz_class n = int_from_json(j[0]), d = int_from_json(j[1]);
        if (d == 0) throw Error("ConfigError", "zero denominator: " + j.dump());
        Rat r(n, d);
        r.canonicalize();
        return r;
    }
    if (j.is_string()) return parse_rat(j.get<std::string>());
    if (j.is_number_integer()) return Rat(int_from_json(j));
    if (j.is_number_float()) {
        // nlohmann prints the shortest round-tripping decimal
        return parse_rat(j.dump());
    }
    throw Error("ConfigError", "expected rational, got " + j.dump());
}

json rat_to_json(const Rat& r) {
    return json::array({int_to_json(r.get_num()), int_to_json(r.get_den())});
}

std::string to_string(const Rat& r) { return r.get_str(); }

double to_double(const Rat& r) { return r.get_d(); }

Rat abs(const Rat& r) { return r < 0 ? Rat(-r) : r; }
Rat min(const Rat& a, const Rat& b) { return b < a ? b : a; }
Rat max(const Rat& a, const Rat& b) { return a < b ? b : a; }

Rat pow2(int e) {
    mpz_class p = 1;
    mpz_mul_2exp(p.get_mpz_t(), p.get_mpz_t(), static_cast<unsigned long>(e < 0 ? -e : e));
    return e < 0 ? Rat(mpz_class(1), p) : Rat(p);
}

Rat pow(const Rat& base, unsigned e) {
    Rat r;
    mpz_pow_ui(r.get_num_mpz_t(), base.get_num_mpz_t(), e);
    mpz_pow_ui(r.get_den_mpz_t(), base.get_den_mpz_t(), e);
    return r;
}

namespace {

mpz_class scaled_num(const Rat& r, int m) {
    mpz_class n = r.get_num();
    if (m >= 0) mpz_mul_2exp(n.get_mpz_t(), n.get_mpz_t(), static_cast<unsigned long>(m));
    return n;
}

mpz_class scaled_den(const Rat& r, int m) {
    mpz_class d = r.get_den();
    if (m < 0) mpz_mul_2exp(d.get_mpz_t(), d.get_mpz_t(), static_cast<unsigned long>(-m));
    return d;
}

std::int64_t checked(const mpz_class& z) {
    if (!z.fits_slong_p()) throw Error("Overflow", "cube coordinate exceeds 64 bits");
    return z.get_si();
}

} // namespace

std::int64_t floor_scaled(const Rat& r, int m) {
    mpz_class q;
    mpz_fdiv_q(q.get_mpz_t(), scaled_num(r, m).get_mpz_t(), scaled_den(r, m).get_mpz_t());
    return checked(q);
}

std::int64_t ceil_scaled(const Rat& r, int m) {
    mpz_class q;
    mpz_cdiv_q(q.get_mpz_t(), scaled_num(r, m).get_mpz_t(), scaled_den(r, m).get_mpz_t());
    return checked(q);
}

namespace {

bool dyadic_within(const Rat& r, int bits) {
    const mpz_srcptr d = r.get_den_mpz_t();
    const size_t width = mpz_sizeinbase(d, 2) - 1;
    return mpz_scan1(d, 0) == width && width <= static_cast<size_t>(bits);
}

// q / 2^bits in lowest terms
Rat dyadic(mpz_class q, int bits) {
    unsigned long shift = static_cast<unsigned long>(bits);
    if (q == 0) return Rat(0);
    unsigned long tz = mpz_scan1(q.get_mpz_t(), 0);
    if (tz > shift) tz = shift;
    mpz_fdiv_q_2exp(q.get_mpz_t(), q.get_mpz_t(), tz);
    Rat out;
    mpz_swap(out.get_num_mpz_t(), q.get_mpz_t());
    mpz_set_ui(out.get_den_mpz_t(), 1);
    mpz_mul_2exp(out.get_den_mpz_t(), out.get_den_mpz_t(), shift - tz);
    return out;
}

} // namespace

Rat round_down(const Rat& r, int bits) {
    if (dyadic_within(r, bits)) return r;
    mpz_class q;
    mpz_mul_2exp(q.get_mpz_t(), r.get_num_mpz_t(), static_cast<unsigned long>(bits));
    mpz_fdiv_q(q.get_mpz_t(), q.get_mpz_t(), r.get_den_mpz_t());
    return dyadic(std::move(q), bits);
}

Rat round_up(const Rat& r, int bits) {
    if (dyadic_within(r, bits)) return r;
    mpz_class q;
    mpz_mul_2exp(q.get_mpz_t(), r.get_num_mpz_t(), static_cast<unsigned long>(bits));
    mpz_cdiv_q(q.get_mpz_t(), q.get_mpz_t(), r.get_den_mpz_t());
    return dyadic(std::move(q), bits);
}

Rat from_double(double x) {
    if (!std::isfinite(x)) throw Error("NonFinite", "cannot convert non-finite double");
    Rat r(x); // mpq_set_d is exact
    return r;
}

Rat sqrt_down(const Rat& r, int bits) {
    if (r < 0) throw Error("Domain", "sqrt of negative");
    mpz_class n = r.get_num(), d = r.get_den();
    if (mpz_perfect_square_p(n.get_mpz_t()) && mpz_perfect_square_p(d.get_mpz_t())) {
        mpz_class sn, sd;
        mpz_sqrt(sn.get_mpz_t(), n.get_mpz_t());
        mpz_sqrt(sd.get_mpz_t(), d.get_mpz_t());
        return Rat(sn, sd);
    }
    // floor(sqrt(r * 4^bits)) / 2^bits
    mpz_class num = n;
    mpz_mul_2exp(num.get_mpz_t(), num.get_mpz_t(), static_cast<unsigned long>(2 * bits));
    mpz_class q;
    mpz_fdiv_q(q.get_mpz_t(), num.get_mpz_t(), d.get_mpz_t());
    mpz_class s;
    mpz_sqrt(s.get_mpz_t(), q.get_mpz_t());
    Rat out(s, 1);
    mpz_mul_2exp(out.get_den_mpz_t(), out.get_den_mpz_t(), static_cast<unsigned long>(bits));
    out.canonicalize();
    return out;
}

Rat sqrt_up(const Rat& r, int bits) {
    Rat lo = sqrt_down(r, bits);
    if (lo * lo == r) return lo;
    Rat up = lo + pow2(-bits);
    while (up * up < r) up += pow2(-bits);
    return up;
}

} // namespace cantor
