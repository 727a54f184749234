#include "cantor_forge/interval.hpp"

#include <mpfr.h>

namespace cantor {

json interval_to_json(const Interval1& iv) {
    return json::array({rat_to_json(iv.lo), rat_to_json(iv.hi)});
}

Interval1 interval_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) throw Error("ConfigError", "interval must be [lo, hi]: " + j.dump());
    Rat lo = rat_from_json(j[0]), hi = rat_from_json(j[1]);
    if (hi < lo) throw Error("ConfigError", "interval lo > hi: " + j.dump());
    return {lo, hi};
}

namespace {

// RAII holder for an MPFR value at the module precision.
struct Mp {
    mpfr_t v;
    Mp() { mpfr_init2(v, kElementaryBits); }
    explicit Mp(const Rat& q, mpfr_rnd_t rnd) : Mp() { mpfr_set_q(v, q.get_mpq_t(), rnd); }
    ~Mp() { mpfr_clear(v); }
    Mp(const Mp&) = delete;
    Mp& operator=(const Mp&) = delete;
    Rat get() const {
        Rat q;
        mpfr_get_q(q.get_mpq_t(), v);
        return q;
    }
};

using Unary = int (*)(mpfr_ptr, mpfr_srcptr, mpfr_rnd_t);

// f monotone increasing on the interval.
RatInterval increasing(const RatInterval& x, Unary f) {
    Mp a(x.lo, MPFR_RNDD), b(x.hi, MPFR_RNDU), ra, rb;
    f(ra.v, a.v, MPFR_RNDD);
    f(rb.v, b.v, MPFR_RNDU);
    return {ra.get(), rb.get()};
}

Rat pi_down() {
    Mp p;
    mpfr_const_pi(p.v, MPFR_RNDD);
    return p.get();
}

Rat pi_up() {
    Mp p;
    mpfr_const_pi(p.v, MPFR_RNDU);
    return p.get();
}

// Bounds of f at a single rational point, f one of sin/cos.
RatInterval point_eval(const Rat& x, Unary f) {
    Mp a(x, MPFR_RNDN), lo, hi;
    // an inexact conversion of x widens the enclosure by the conversion error
    Rat err = abs(a.get() - x);
    f(lo.v, a.v, MPFR_RNDD);
    f(hi.v, a.v, MPFR_RNDU);
    return {max(Rat(-1), lo.get() - err), min(Rat(1), hi.get() + err)};
}

// cos over [lo, hi]: endpoint values plus any interior extrema at k*pi.
RatInterval cos_range(const RatInterval& x) {
    Rat pl = pi_down(), pu = pi_up();
    if (x.length() >= 2 * pl) return {Rat(-1), Rat(1)};
    RatInterval r = hull(point_eval(x.lo, mpfr_cos), point_eval(x.hi, mpfr_cos));
    // candidates k*pi with k in [floor(lo/pi_up) - 1, ceil(hi/pi_down) + 1]
    mpz_class k0, k1;
    Rat a = x.lo / pu, b = x.hi / pl;
    mpz_fdiv_q(k0.get_mpz_t(), a.get_num_mpz_t(), a.get_den_mpz_t());
    mpz_cdiv_q(k1.get_mpz_t(), b.get_num_mpz_t(), b.get_den_mpz_t());
    for (mpz_class k = k0 - 1; k <= k1 + 1; ++k) {
        Rat kl = Rat(k) * (k >= 0 ? pl : pu), kh = Rat(k) * (k >= 0 ? pu : pl);
        // the extremum k*pi lies in [kl, kh]; if that may touch x, include its value
        if (kh >= x.lo && kl <= x.hi) {
            if (mpz_even_p(k.get_mpz_t())) r.hi = 1;
            else r.lo = -1;
        }
    }
    return r;
}

} // namespace

RatInterval abs(const RatInterval& x) {
    if (x.lo >= 0) return x;
    if (x.hi <= 0) return -x;
    return {Rat(0), max(Rat(-x.lo), x.hi)};
}

RatInterval sqrt(const RatInterval& x) {
    if (x.lo < 0) throw Error("Domain", "sqrt of interval with negative part");
    return {sqrt_down(x.lo, kElementaryBits), sqrt_up(x.hi, kElementaryBits)};
}

RatInterval exp(const RatInterval& x) { return increasing(x, mpfr_exp); }

RatInterval log(const RatInterval& x) {
    if (x.lo <= 0) throw Error("Domain", "log of non-positive interval");
    return increasing(x, mpfr_log);
}

RatInterval cos(const RatInterval& x) { return cos_range(x); }

RatInterval sin(const RatInterval& x) {
    // sin(x) = cos(x - pi/2); carry the pi enclosure through
    RatInterval shifted(x.lo - pi_up() / 2, x.hi - pi_down() / 2);
    return cos_range(shifted);
}

RatInterval pow(const RatInterval& x, const RatInterval& a) {
    if (a.is_point() && a.lo.get_den() == 1 && a.lo >= 0 && a.lo.get_num().fits_uint_p()) {
        unsigned n = static_cast<unsigned>(a.lo.get_num().get_ui());
        if (n == 0) return RatInterval(Rat(1));
        Rat pl = pow(x.lo, n), ph = pow(x.hi, n);
        if (n % 2 == 1 || x.lo >= 0) return {min(pl, ph), max(pl, ph)};
        if (x.hi <= 0) return {ph, pl};
        return {Rat(0), max(pl, ph)};
    }
    if (x.lo < 0 || (x.lo == 0 && a.lo <= 0))
        throw Error("Domain", "non-integer power needs a positive base");
    Rat lo, hi;
    bool first = true;
    for (const Rat* xb : {&x.lo, &x.hi}) {
        for (const Rat* ab : {&a.lo, &a.hi}) {
            Mp bx(*xb, MPFR_RNDD), bxu(*xb, MPFR_RNDU), ea(*ab, MPFR_RNDD), eau(*ab, MPFR_RNDU), d, u;
            // pow is monotone in each argument on this quadrant, so bracket the
            // rounded inputs on both sides and take the extremes
            Rat cand[2];
            mpfr_pow(d.v, bx.v, ea.v, MPFR_RNDD);
            Rat v1 = d.get();
            mpfr_pow(d.v, bx.v, eau.v, MPFR_RNDD);
            Rat v2 = d.get();
            mpfr_pow(d.v, bxu.v, ea.v, MPFR_RNDD);
            Rat v3 = d.get();
            mpfr_pow(d.v, bxu.v, eau.v, MPFR_RNDD);
            Rat v4 = d.get();
            cand[0] = min(min(v1, v2), min(v3, v4));
            mpfr_pow(u.v, bx.v, ea.v, MPFR_RNDU);
            Rat w1 = u.get();
            mpfr_pow(u.v, bx.v, eau.v, MPFR_RNDU);
            Rat w2 = u.get();
            mpfr_pow(u.v, bxu.v, ea.v, MPFR_RNDU);
            Rat w3 = u.get();
            mpfr_pow(u.v, bxu.v, eau.v, MPFR_RNDU);
            Rat w4 = u.get();
            cand[1] = max(max(w1, w2), max(w3, w4));
            if (first) {
                lo = cand[0];
                hi = cand[1];
                first = false;
            } else {
                lo = min(lo, cand[0]);
                hi = max(hi, cand[1]);
            }
        }
    }
    return {lo, hi};
}

} // namespace cantor
