#include "cantor_forge/applications.hpp"

#include <cctype>
#include <limits>

#include "cantor_forge/parallel.hpp"

namespace cantor {

// ---------------------------------------------------------------- expressions

namespace {

class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    std::shared_ptr<const Expr> parse() {
        auto e = sum();
        skip();
        if (i_ != s_.size()) fail("unexpected '" + std::string(1, s_[i_]) + "'");
        return e;
    }

private:
    using P = std::shared_ptr<const Expr>;

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error("ConfigError", "expression '" + std::string(s_) + "': " + msg);
    }
    void skip() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    }
    bool eat(char c) {
        skip();
        if (i_ < s_.size() && s_[i_] == c) {
            ++i_;
            return true;
        }
        return false;
    }
    static P node(Expr::Op op, P l = nullptr, P r = nullptr) {
        auto e = std::make_shared<Expr>();
        e->op = op;
        e->l = std::move(l);
        e->r = std::move(r);
        return e;
    }
    P sum() {
        P e = product();
        while (true) {
            if (eat('+')) e = node(Expr::Add, e, product());
            else if (eat('-')) e = node(Expr::Sub, e, product());
            else return e;
        }
    }
    P product() {
        P e = unary();
        while (true) {
            if (eat('*')) e = node(Expr::Mul, e, unary());
            else if (eat('/')) e = node(Expr::Div, e, unary());
            else return e;
        }
    }
    P unary() {
        if (eat('-')) return node(Expr::Neg, unary());
        if (eat('+')) return unary();
        return power();
    }
    P power() {
        P base = primary();
        if (eat('^')) return node(Expr::Pow, base, unary());
        return base;
    }
    P primary() {
        skip();
        if (eat('(')) {
            P e = sum();
            if (!eat(')')) fail("missing ')'");
            return e;
        }
        if (i_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[i_])) || s_[i_] == '.')) {
            size_t j = i_;
            while (j < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[j])) || s_[j] == '.')) ++j;
            auto e = std::make_shared<Expr>();
            e->op = Expr::Num;
            e->value = parse_rat(s_.substr(i_, j - i_));
            i_ = j;
            return e;
        }
        size_t j = i_;
        while (j < s_.size() && std::isalpha(static_cast<unsigned char>(s_[j]))) ++j;
        std::string id(s_.substr(i_, j - i_));
        i_ = j;
        if (id == "a") return node(Expr::A);
        if (id == "x") return node(Expr::X);
        if (id == "y") return node(Expr::Y);
        static const std::pair<const char*, Expr::Op> fns[] = {{"sqrt", Expr::Sqrt}, {"exp", Expr::Exp},
                                                               {"log", Expr::Log},   {"sin", Expr::Sin},
                                                               {"cos", Expr::Cos},   {"abs", Expr::Abs}};
        for (auto& [name, op] : fns)
            if (id == name) {
                if (!eat('(')) fail("expected '(' after " + id);
                P arg = sum();
                if (!eat(')')) fail("missing ')'");
                return node(op, arg);
            }
        fail(id.empty() ? "expected a term" : "unknown name '" + id + "'");
    }

    std::string_view s_;
    size_t i_ = 0;
};

} // namespace

std::shared_ptr<const Expr> parse_expr(std::string_view text) { return Parser(text).parse(); }

// ---------------------------------------------------------------- HSpec

HSpec HSpec::custom(const std::string& h, const std::string& hx, const std::string& hy, const Interval1& q1,
                    const Interval1& q2) {
    HSpec s;
    s.family = HFamily::Custom;
    s.q1 = q1;
    s.q2 = q2;
    s.text = h;
    s.text_x = hx;
    s.text_y = hy;
    s.h = parse_expr(h);
    s.hx = parse_expr(hx);
    s.hy = parse_expr(hy);
    return s;
}

HSpec HSpec::affine_sum(const Interval1& q1, const Interval1& q2) {
    HSpec s = custom("a*x + y", "a", "1", q1, q2);
    s.family = HFamily::AffineSum;
    return s;
}

HSpec HSpec::alpha_norm(int dim, const Interval1& q1, const Interval1& q2) {
    if (dim < 2 || dim % 2 != 0) throw Error("InvalidParameter", "alpha-norm family needs an even dimension >= 2");
    if (q2.contains_zero()) throw Error("InvalidParameter", "alpha-norm family needs the y range bounded away from 0");
    HSpec s = custom("abs(x)^a + abs(y)^a", "a*x^(a-1)", "a*y^(a-1)", q1, q2);
    s.family = HFamily::AlphaNorm;
    s.dim = dim;
    return s;
}

HSpec HSpec::from_config(const json& j) {
    try {
        std::string fam = j.at("family").get<std::string>();
        Interval1 q1 = j.contains("q1") ? interval_from_json(j["q1"]) : Interval1(0, 1);
        Interval1 q2 = j.contains("q2") ? interval_from_json(j["q2"]) : Interval1(0, 2);
        if (fam == "affine-sum") return affine_sum(q1, q2);
        if (fam == "alpha-norm")
            return alpha_norm(j.value("dim", 2), q1, j.contains("q2") ? q2 : Interval1(Rat(1, 100), 2));
        if (fam == "custom-1d")
            return custom(j.at("h").get<std::string>(), j.at("hx").get<std::string>(), j.at("hy").get<std::string>(),
                          q1, q2);
        throw Error("ConfigError", "unknown H family '" + fam + "'");
    } catch (const json::exception& e) {
        throw Error("ConfigError", std::string("h: ") + e.what());
    }
}

std::string HSpec::family_name() const {
    switch (family) {
    case HFamily::AffineSum: return "affine-sum";
    case HFamily::AlphaNorm: return "alpha-norm";
    case HFamily::Custom: return "custom-1d";
    }
    return "?";
}

SliceResult implicit_slice(const HSpec& h, double c, double a, double x, const SolverOptions& opt) {
    if (h.family == HFamily::AlphaNorm && a <= 1) throw Error("InvalidParameter", "alpha must exceed 1");
    double y = solve_slice<double>(h, c, a, x, opt.tol, opt.max_iters);
    return {y, std::abs(h.H(a, x, y) - c)};
}

// ---------------------------------------------------------------- enclosures

namespace {

RatInterval ri(const Interval1& i) { return RatInterval(i.lo, i.hi); }

bool is_two(const Interval1& a) { return a.is_point() && a.lo == 2; }

// Enclosure for a custom H: discard y-pieces where H - c provably has no zero.
Interval1 bisection_enclosure(const HSpec& h, const Interval1& c, const Interval1& a, const Interval1& x) {
    std::vector<Interval1> pieces;
    const int n0 = 64;
    for (int i = 0; i < n0; ++i)
        pieces.push_back({grid_point(h.q2.lo, h.q2.hi, n0 + 1, i), grid_point(h.q2.lo, h.q2.hi, n0 + 1, i + 1)});
    auto may_vanish = [&](const Interval1& y) {
        try {
            RatInterval f = h.H(ri(a), ri(x), ri(y)) - ri(c);
            return f.contains_zero();
        } catch (const Error&) {
            return true;
        }
    };
    for (int round = 0; round < 12; ++round) {
        std::vector<Interval1> keep;
        for (auto& p : pieces)
            if (may_vanish(p)) keep.push_back(p);
        if (keep.empty()) throw Error("NoBracket", "slice leaves the y bracket");
        pieces.clear();
        // split only the two extreme pieces; interior ones do not move the hull
        for (size_t i = 0; i < keep.size(); ++i) {
            if (i == 0 || i + 1 == keep.size()) {
                Rat m = keep[i].mid();
                pieces.push_back({keep[i].lo, m});
                pieces.push_back({m, keep[i].hi});
            } else {
                pieces.push_back(keep[i]);
            }
        }
    }
    std::vector<Interval1> keep;
    for (auto& p : pieces)
        if (may_vanish(p)) keep.push_back(p);
    if (keep.empty()) throw Error("NoBracket", "slice leaves the y bracket");
    return {keep.front().lo, keep.back().hi};
}

// Point enclosure for a custom H: Newton guess, then an interval sign check on each side.
Interval1 custom_point_enclosure(const HSpec& h, const Rat& c, const Rat& a, const Rat& x) {
    double y = solve_slice<double>(h, c.get_d(), a.get_d(), x.get_d(), 1e-14, 200);
    Rat ym = from_double(y);
    Rat eps = from_double(1e-12 * (1 + std::abs(y)));
    for (int tries = 0; tries < 40; ++tries, eps *= 4) {
        Rat lo = max(h.q2.lo, ym - eps), hi = min(h.q2.hi, ym + eps);
        RatInterval fl = h.H(RatInterval(a), RatInterval(x), RatInterval(lo)) - RatInterval(c);
        RatInterval fh = h.H(RatInterval(a), RatInterval(x), RatInterval(hi)) - RatInterval(c);
        if ((fl.hi < 0 && fh.lo > 0) || (fl.lo > 0 && fh.hi < 0)) return {lo, hi};
        if (fl.lo == 0 && fl.hi == 0) return {lo, lo};
        if (fh.lo == 0 && fh.hi == 0) return {hi, hi};
    }
    return bisection_enclosure(h, Interval1(c), Interval1(a), Interval1(x));
}

} // namespace

Interval1 slice_enclosure(const HSpec& h, const Interval1& c_box, const Interval1& a_box, const Interval1& x_box) {
    switch (h.family) {
    case HFamily::AffineSum: {
        RatInterval y = ri(c_box) - ri(a_box) * ri(x_box);
        return {y.lo, y.hi};
    }
    case HFamily::AlphaNorm: {
        if (a_box.lo <= 1) throw Error("InvalidParameter", "alpha must exceed 1");
        RatInterval inner = ri(c_box) - pow(abs(ri(x_box)), ri(a_box));
        if (inner.hi <= 0) throw Error("NoBracket", "c below x^alpha: no positive slice");
        if (inner.lo < 0) inner.lo = 0;
        RatInterval y = is_two(a_box) ? sqrt(inner) : pow(inner, RatInterval(Rat(1)) / ri(a_box));
        return {y.lo, y.hi};
    }
    case HFamily::Custom:
        if (c_box.is_point() && a_box.is_point() && x_box.is_point())
            return custom_point_enclosure(h, c_box.lo, a_box.lo, x_box.lo);
        return bisection_enclosure(h, c_box, a_box, x_box);
    }
    throw Error("InternalError", "bad family");
}

namespace {

struct Partials {
    RatInterval hx, hy;
};

Partials partials(const HSpec& h, const Interval1& c_box, const Interval1& a_box, const Interval1& x_box) {
    Interval1 y = slice_enclosure(h, c_box, a_box, x_box);
    try {
        Partials p{h.Hx(ri(a_box), ri(x_box), ri(y)), h.Hy(ri(a_box), ri(x_box), ri(y))};
        if (p.hx.contains_zero() || p.hy.contains_zero())
            throw Error("SignNotDefinite", "interval enclosure of H_x or H_y contains 0");
        return p;
    } catch (const Error& e) {
        if (e.kind() == "SignNotDefinite") throw;
        throw Error("SignNotDefinite", std::string("partials not sign-definite: ") + e.what());
    }
}

} // namespace

Rat derivative_bound(const HSpec& h, const Interval1& c_box, const Interval1& a_box, const Interval1& x_box) {
    const int pieces = x_box.is_point() ? 1 : 8;
    std::optional<Rat> eta;
    for (int i = 0; i < pieces; ++i) {
        Interval1 xp(grid_point(x_box.lo, x_box.hi, pieces + 1, i), grid_point(x_box.lo, x_box.hi, pieces + 1, i + 1));
        if (pieces == 1) xp = x_box;
        Partials p = partials(h, c_box, a_box, xp);
        Rat v = (abs(p.hx) / abs(p.hy)).lo;
        if (!eta || v < *eta) eta = v;
    }
    if (!(*eta > 0)) throw Error("SignNotDefinite", "derivative bound is not positive");
    return *eta;
}

bool slice_decreasing(const HSpec& h, const Interval1& c_box, const Interval1& a_box, const Interval1& x_box) {
    Partials p = partials(h, c_box, a_box, x_box);
    return (p.hx.lo > 0) == (p.hy.lo > 0);
}

GapTree nonlinear_companion(const GapTree& K1, const HSpec& h, const Interval1& c_box, const Interval1& a_box, int N,
                            const Rat& factor) {
    if (N < 1 || N > K1.depth())
        throw Error("LevelOutOfRange", "companion depth " + std::to_string(N) + " exceeds K1 depth", N);
    if (!(factor > 0 && factor < 1)) throw Error("InvalidParameter", "factor must lie in (0, 1)");
    Rat eta = derivative_bound(h, c_box, a_box, K1.hull());
    SymmetricSpec spec{slice_enclosure(h, c_box, a_box, K1.hull()), {}};
    Rat len = spec.hull.length();
    for (int n = 0; n < N; ++n) {
        Rat l = factor * eta * K1.min_gap(n);
        if (l >= len) l = len / 2;
        spec.gaps.push_back(l);
        len = (len - l) / 2;
    }
    return build_symmetric(spec);
}

// ---------------------------------------------------------------- image tree

SliceImageTree::SliceImageTree(const GapTree& k1, const HSpec& h, Rat c, Rat a, bool decreasing)
    : k1_(k1), h_(h), c_(std::move(c)), a_(std::move(a)), dec_(decreasing) {}

SliceImageTree::Node SliceImageTree::make(NodeAddress addr, GapTree::Node src) const {
    Interval1 g_lo = slice_enclosure(h_, Interval1(c_), Interval1(a_), Interval1(src.iv.lo));
    Interval1 g_hi = slice_enclosure(h_, Interval1(c_), Interval1(a_), Interval1(src.iv.hi));
    return {std::move(addr), hull(g_lo, g_hi), std::move(src)};
}

SliceImageTree::Node SliceImageTree::root() const { return make(NodeAddress(), k1_.root()); }

std::pair<SliceImageTree::Node, SliceImageTree::Node> SliceImageTree::children(const Node& n) const {
    auto [s0, s1] = k1_.children(n.src);
    if (dec_) std::swap(s0, s1);
    return {make(n.addr.child(0), std::move(s0)), make(n.addr.child(1), std::move(s1))};
}

// ---------------------------------------------------------------- verification

HReport verify_H_interior(const HSpec& h, const GapTree& K1, const GapTree& K2, const GridSpec& c_grid,
                          const GridSpec& a_grid, int N, double tol, int threads) {
    if (N < 0 || N > K1.depth() || N > K2.depth()) throw Error("LevelOutOfRange", "chain depth too large", N);
    if (c_grid.count < 1 || a_grid.count < 1) throw Error("InvalidParameter", "empty grid");
    const bool dec = slice_decreasing(h, {c_grid.lo, c_grid.hi}, {a_grid.lo, a_grid.hi}, K1.hull());
    HReport rep;
    const size_t total = static_cast<size_t>(c_grid.count) * static_cast<size_t>(a_grid.count);
    rep.points.resize(total);
    parallel_for(total, threads, [&](size_t idx) {
        HWitness& w = rep.points[idx];
        int ia = static_cast<int>(idx / static_cast<size_t>(c_grid.count));
        int ic = static_cast<int>(idx % static_cast<size_t>(c_grid.count));
        w.c = grid_point(c_grid.lo, c_grid.hi, c_grid.count, ic);
        w.alpha = grid_point(a_grid.lo, a_grid.hi, a_grid.count, ia);
        try {
            SliceImageTree img(K1, h, w.c, w.alpha, dec);
            WitnessChain chain = chain_descent(img, K2, N);
            NodeAddress src = chain.pairs.empty() ? NodeAddress() : chain.pairs.back().first;
            if (dec) src = src.flipped();
            w.k1 = K1.interval(src).lo;
            HighPrec c = lift<HighPrec>(w.c), a = lift<HighPrec>(w.alpha), x = lift<HighPrec>(w.k1);
            HighPrec y = solve_slice<HighPrec>(h, c, a, x, HighPrec("1e-45"), 400);
            w.k2 = y.str(40);
            w.residual = static_cast<double>(boost::multiprecision::abs(h.H(a, x, y) - c));
            w.bound = chain.bound;
            const Interval1& cell = chain.kt_intervals.back();
            bool inside = lift<HighPrec>(cell.lo) <= y && y <= lift<HighPrec>(cell.hi);
            w.ok = inside && w.residual <= tol;
            if (!inside) w.reason = "WitnessOutsideCover";
            else if (!w.ok) w.reason = "ResidualTooLarge";
        } catch (const Error& e) {
            w.reason = e.kind();
        }
    });
    // longest run of verified c values in the first alpha row
    int best_len = 0, best_start = 0;
    for (int i = 0, run = 0; i < c_grid.count; ++i) {
        run = rep.points[static_cast<size_t>(i)].ok ? run + 1 : 0;
        if (run > best_len) {
            best_len = run;
            best_start = i - run + 1;
        }
    }
    if (best_len > 0)
        rep.certified_c = Interval1(rep.points[static_cast<size_t>(best_start)].c,
                                    rep.points[static_cast<size_t>(best_start + best_len - 1)].c);
    return rep;
}

PinnedReport pinned_distance_demo(const PinnedOptions& opt) {
    if (!(opt.alpha > 1)) throw Error("InvalidParameter", "alpha must exceed 1");
    if (opt.d < 2 || opt.d % 2 != 0) throw Error("InvalidParameter", "dimension must be even and >= 2");
    if (opt.grid < 1) throw Error("InvalidParameter", "grid must have at least one point");
    GapTree k1 = opt.k1 ? *opt.k1 : build_binary_ifs({Rat(11, 20), Rat(13, 20)}, Rat(1, 10), 12);
    if (k1.depth() < 2) throw Error("LevelOutOfRange", "K1 needs depth >= 2", k1.depth());
    HSpec h = HSpec::alpha_norm(opt.d, k1.hull(), {Rat(1, 100), 4});
    const Interval1 a_box(opt.alpha);
    // anchor: right endpoint of the root gap; work on the part of K1 to its right
    Rat u1 = k1.gap(NodeAddress()).hi;
    GapTree tail = k1.subtree(NodeAddress::parse("1"));
    Rat c0;
    if (opt.alpha.get_den() == 1 && opt.alpha.get_num().fits_uint_p())
        c0 = 2 * pow(u1, static_cast<unsigned>(opt.alpha.get_num().get_ui()));
    else
        c0 = from_double(2 * std::pow(u1.get_d(), opt.alpha.get_d()));
    PinnedReport r{u1, c0, {c0 - opt.c_halfwidth, c0 + opt.c_halfwidth}, 0, tail, {}, std::nullopt};
    r.eta = derivative_bound(h, r.c_box, a_box, tail.hull());
    r.k2 = nonlinear_companion(tail, h, r.c_box, a_box, tail.depth());
    r.verify = verify_H_interior(h, tail, r.k2, {r.c_box.lo, r.c_box.hi, opt.grid}, {opt.alpha, opt.alpha, 1},
                                 tail.depth(), opt.tol, opt.threads);
    if (r.verify.certified_c) {
        const double inv = 1.0 / opt.alpha.get_d();
        r.distance_coverage = {std::pow(r.verify.certified_c->lo.get_d(), inv),
                               std::pow(r.verify.certified_c->hi.get_d(), inv)};
    }
    return r;
}

// ---------------------------------------------------------------- Erdős obstruction

namespace {

Rat ceil_div(const Rat& num, const Rat& den) {
    Rat q = num / den;
    mpz_class z;
    mpz_cdiv_q(z.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    return Rat(z);
}

} // namespace

ErdosReport erdos_obstruction(const GapTree& K, const std::vector<AffineMap>& family, const Interval1& window, int N,
                              const Rat& margin, const Rat& factor, int threads) {
    if (family.empty()) throw Error("InvalidParameter", "empty affine family");
    GapTree khat = build_companion(K, N, margin, factor);
    ErdosReport r{khat, gap_slack(K, khat, N), certify_difference_interior(K, khat, N), {}, 0, 0, 0, {}};
    // admissibility: scaled gaps must still dominate, and the scaled hull must fit strictly
    std::optional<Interval1> uni;
    for (size_t i = 0; i < family.size(); ++i) {
        const AffineMap& g = family[i];
        Rat al = abs(g.lambda);
        std::string why;
        if (al == 0) why = "zero scale";
        else if (!(al * r.slack > 1)) why = "gap dominance needs |lambda| > 1/slack = " + to_string(1 / r.slack);
        else if (!(al * K.hull().length() < khat.hull().length())) why = "scaled hull does not fit inside the companion";
        if (!why.empty())
            throw Error("FamilyOutOfSlack", "map " + std::to_string(i) + " (lambda " + to_string(g.lambda) + ", t " +
                                                to_string(g.t) + "): " + why);
        Rat a = g.lambda * K.hull().lo, b = g.lambda * K.hull().hi;
        Interval1 j(khat.hull().lo - min(a, b), khat.hull().hi - max(a, b));
        if (!uni) uni = j;
        else uni = Interval1(max(uni->lo, j.lo), min(uni->hi, j.hi));
        if (!(uni->lo < uni->hi)) throw Error("FamilyOutOfSlack", "no shift works for every map in the family");
    }
    r.uniform = *uni;
    r.spacing = r.uniform.length();
    // translates khat + spacing*k meeting the window
    Rat klo = ceil_div(window.lo - khat.hull().hi, r.spacing);
    Rat khi = -ceil_div(-(window.hi - khat.hull().lo), r.spacing);
    r.k_lo = klo.get_num().get_si();
    r.k_hi = khi.get_num().get_si();
    r.results.resize(family.size());
    parallel_for(family.size(), threads, [&](size_t i) {
        const AffineMap& g = family[i];
        Rat k = ceil_div(g.t - r.uniform.hi, r.spacing);
        ErdosPoint& p = r.results[i];
        p.g = g;
        p.k = k.get_num().get_si();
        p.residue = g.t - r.spacing * k;
        if (p.k < r.k_lo || p.k > r.k_hi)
            throw Error("FamilyOutOfSlack", "map " + std::to_string(i) + " needs a translate outside the window");
        WitnessChain c = find_chain(affine_image(K, g.lambda, g.t), affine_image(khat, 1, r.spacing * k), N);
        p.bound = c.bound;
    });
    return r;
}

json h_report_to_json(const HReport& r) {
    json wit = json::array(), fails = json::array();
    for (size_t i = 0; i < r.points.size(); ++i) {
        const HWitness& w = r.points[i];
        if (w.ok) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3e", w.residual);
            wit.push_back({{"c", rat_to_json(w.c)},
                           {"alpha", rat_to_json(w.alpha)},
                           {"k1", rat_to_json(w.k1)},
                           {"k2", w.k2},
                           {"residual", std::string(buf)},
                           {"bound", rat_to_json(w.bound)}});
        } else {
            fails.push_back({{"c", rat_to_json(w.c)}, {"alpha", rat_to_json(w.alpha)}, {"reason", w.reason}});
        }
    }
    json cert = r.certified_c ? interval_to_json(*r.certified_c) : json(nullptr);
    return {{"certified_c_interval", cert}, {"witnesses", wit}, {"failures", fails}};
}

} // namespace cantor
