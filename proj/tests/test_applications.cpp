#include <doctest.h>

#include <cmath>
#include <random>

#include "cantor_forge/applications.hpp"

using namespace cantor;

namespace {

template <class F>
std::string error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return "";
}

const Interval1 one(1);

HSpec circle() { return HSpec::alpha_norm(2, {0, 2}, {Rat(1, 100), 2}); }
HSpec line() { return HSpec::affine_sum({0, 1}, {-1, 2}); }

} // namespace

TEST_SUITE("applications") {

TEST_CASE("expressions") {
    auto e = parse_expr("2*x^2 - -y/(1+a)");
    CHECK(eval(*e, 1.0, 3.0, 4.0) == doctest::Approx(20.0));
    CHECK(eval(*e, RatInterval(1), RatInterval(3), RatInterval(4)) == RatInterval(20));
    auto f = parse_expr("sqrt(abs(x)) + exp(0) + cos(0) - sin(0) + log(1)");
    CHECK(eval(*f, 0.0, -4.0, 0.0) == doctest::Approx(4.0));
    CHECK(eval(*parse_expr("2^3^2"), 0.0, 0.0, 0.0) == doctest::Approx(512.0));
    CHECK(error_kind([] { parse_expr("x +"); }) != "");
    CHECK(error_kind([] { parse_expr("foo(x)"); }) != "");
}

TEST_CASE("implicit_slice") {
    SliceResult a = implicit_slice(circle(), 1, 2, 0.6);
    CHECK(a.y == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(a.residual <= 1e-12);
    SliceResult b = implicit_slice(line(), 1, 1, 0.3);
    CHECK(b.y == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(b.residual <= 1e-12);
    CHECK(error_kind([] { implicit_slice(circle(), 1, 2, 1.2); }) == "NoBracket");
    CHECK(error_kind([] { implicit_slice(circle(), 1, 2, 0.6, {1e-300, 3}); }) == "NoConvergence");

    // custom family with the same H agrees
    HSpec c = HSpec::custom("x^2 + y^2", "2*x", "2*y", {0, 2}, {0, 2});
    CHECK(implicit_slice(c, 1, 0, 0.6).y == doctest::Approx(0.8).epsilon(1e-14));
    HSpec cube = HSpec::custom("x + y^3", "1", "3*y^2", {0, 1}, {0, 2});
    CHECK(implicit_slice(cube, 2, 0, 1).y == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("slice enclosures") {
    Interval1 y = slice_enclosure(circle(), one, Interval1(2), {Rat(3, 5), Rat(4, 5)});
    CHECK(y == Interval1(Rat(3, 5), Rat(4, 5)));
    Interval1 z = slice_enclosure(circle(), {Rat(19, 20), Rat(21, 20)}, Interval1(2), {Rat(11, 20), Rat(13, 20)});
    CHECK(z.lo <= std::sqrt(0.95 - 0.4225));
    CHECK(z.hi >= std::sqrt(1.05 - 0.3025));
    CHECK(z.lo >= std::sqrt(0.95 - 0.4225) - 1e-12);
    CHECK(z.hi <= std::sqrt(1.05 - 0.3025) + 1e-12);
    HSpec c = HSpec::custom("x^2 + y^2", "2*x", "2*y", {0, 2}, {0, 2});
    Interval1 w = slice_enclosure(c, one, Interval1(0), {Rat(3, 5), Rat(4, 5)});
    CHECK(w.contains(Interval1(Rat(3, 5), Rat(4, 5))));
    CHECK(w.length() < Rat(1, 4));
}

TEST_CASE("derivative_bound") {
    CHECK(derivative_bound(circle(), one, Interval1(2), {Rat(3, 5), Rat(4, 5)}) == Rat(3, 4));
    CHECK(derivative_bound(line(), {Rat(9, 10), Rat(11, 10)}, one, {0, 1}) == 1);
    CHECK(error_kind([] { derivative_bound(circle(), one, Interval1(2), {Rat(-1, 10), Rat(1, 2)}); }) ==
          "SignNotDefinite");
    CHECK(slice_decreasing(circle(), one, Interval1(2), {Rat(3, 5), Rat(4, 5)}));

    // sampled |g'| never drops below the bound
    Interval1 cb(Rat(19, 20), Rat(21, 20)), xb(Rat(11, 20), Rat(13, 20));
    double eta = to_double(derivative_bound(circle(), cb, Interval1(2), xb));
    std::mt19937_64 g(3);
    std::uniform_real_distribution<double> uc(0.95, 1.05), ux(0.55, 0.65);
    for (int i = 0; i < 2000; ++i) {
        double c = uc(g), x = ux(g), y = std::sqrt(c - x * x);
        CHECK(x / y >= eta);
    }
}

TEST_CASE("nonlinear_companion") {
    GapTree K1 = middle_thirds(12);
    GapTree K2 = nonlinear_companion(K1, line(), {Rat(9, 10), Rat(11, 10)}, one, 12);
    CHECK(K2.hull().contains(Interval1(Rat(-1, 10), Rat(11, 10))));
    for (int n = 0; n < 12; ++n) CHECK(K2.max_gap(n) < 1 / pow(Rat(3), static_cast<unsigned>(n + 1)));
    CHECK(check_dominance(affine_image(K1, -1, 1), K2, 12).overall);

    GapTree small = build_binary_ifs({Rat(11, 20), Rat(13, 20)}, Rat(1, 10), 8);
    GapTree Z = nonlinear_companion(small, circle(), {Rat(19, 20), Rat(21, 20)}, Interval1(2), 8);
    CHECK(Z.hull().lo <= std::sqrt(0.95 - 0.4225));
    CHECK(Z.hull().hi >= std::sqrt(1.05 - 0.3025));
    CHECK(Z.hull().lo >= 0.726 - 1e-3);
    CHECK(Z.hull().hi <= 0.865 + 1e-3);

    CHECK(error_kind([] { nonlinear_companion(middle_thirds(3), line(), one, one, 5); }) == "LevelOutOfRange");
}

TEST_CASE("image gaps are at least eta times the gap") {
    GapTree K1 = build_binary_ifs({Rat(11, 20), Rat(13, 20)}, Rat(1, 10), 4);
    Interval1 cb(Rat(19, 20), Rat(21, 20));
    double eta = to_double(derivative_bound(circle(), cb, Interval1(2), K1.hull()));
    for (double c : {0.95, 1.0, 1.05})
        for (int n = 0; n < 4; ++n)
            for (auto& node : K1.level_nodes(n)) {
                Interval1 u = K1.gap(node);
                double a = std::sqrt(c - to_double(u.lo) * to_double(u.lo));
                double b = std::sqrt(c - to_double(u.hi) * to_double(u.hi));
                CHECK(std::abs(a - b) >= eta * to_double(u.length()) * (1 - 1e-12));
            }
}

TEST_CASE("slice images are monotone") {
    GapTree K1 = build_binary_ifs({Rat(11, 20), Rat(13, 20)}, Rat(1, 10), 5);
    SliceImageTree img(K1, circle(), 1, 2, true);
    auto root = img.root();
    auto [l, r] = img.children(root);
    // decreasing slice: the image of the right half lies to the left
    CHECK(l.iv.hi < r.iv.lo);
    CHECK(l.src.iv.lo > r.src.iv.lo);
    for (auto* n : {&l, &r}) {
        double lo = std::sqrt(1 - std::pow(to_double(n->src.iv.hi), 2));
        double hi = std::sqrt(1 - std::pow(to_double(n->src.iv.lo), 2));
        double mid = std::sqrt(1 - std::pow(to_double(n->src.iv.mid()), 2));
        CHECK(to_double(n->iv.lo) <= lo + 1e-12);
        CHECK(to_double(n->iv.hi) >= hi - 1e-12);
        CHECK(lo < mid);
        CHECK(mid < hi);
    }
}

TEST_CASE("verify_H_interior: affine sum") {
    GapTree K1 = middle_thirds(16);
    Interval1 cb(Rat(9, 10), Rat(11, 10));
    GapTree K2 = nonlinear_companion(K1, line(), cb, one, 16);
    HReport r = verify_H_interior(line(), K1, K2, {Rat(19, 20), Rat(21, 20), 101}, {1, 1, 1}, 16, 1e-10);
    REQUIRE(r.points.size() == 101);
    for (auto& w : r.points) {
        CHECK(w.ok);
        CHECK(w.residual <= 1e-10);
        CHECK(K1.level_intervals(0).front().contains(w.k1));
    }
    REQUIRE(r.certified_c);
    CHECK(*r.certified_c == Interval1(Rat(19, 20), Rat(21, 20)));

    HReport out = verify_H_interior(line(), K1, K2, {3, 3, 1}, {1, 1, 1}, 16, 1e-10);
    CHECK_FALSE(out.points[0].ok);
    CHECK_FALSE(out.points[0].reason.empty());
    CHECK_FALSE(out.certified_c);
    json j = h_report_to_json(out);
    CHECK(j["failures"].size() == 1);
    CHECK(j["certified_c_interval"].is_null());
}

TEST_CASE("pinned distance demo") {
    PinnedReport r = pinned_distance_demo({});
    CHECK(r.eta > 0);
    REQUIRE(r.verify.points.size() == 101);
    for (auto& w : r.verify.points) {
        CHECK(w.ok);
        CHECK(w.residual <= 1e-8);
    }
    REQUIRE(r.verify.certified_c);
    CHECK(*r.verify.certified_c == r.c_box);
    REQUIRE(r.distance_coverage);
    CHECK(r.distance_coverage->first == doctest::Approx(std::sqrt(to_double(r.c_box.lo))));

    // the first witness reproduces its c
    const HWitness& w = r.verify.points.front();
    HighPrec k1 = lift<HighPrec>(w.k1), k2(w.k2);
    CHECK(static_cast<double>(boost::multiprecision::abs(k1 * k1 + k2 * k2 - lift<HighPrec>(w.c))) < 1e-30);

    PinnedOptions bad;
    bad.alpha = 1;
    CHECK(error_kind([&] { pinned_distance_demo(bad); }) == "InvalidParameter");
    PinnedOptions odd;
    odd.d = 3;
    CHECK(error_kind([&] { pinned_distance_demo(odd); }) == "InvalidParameter");

    // higher even dimension reduces to the same slice
    PinnedOptions four;
    four.d = 4;
    four.grid = 11;
    PinnedReport r4 = pinned_distance_demo(four);
    for (auto& p : r4.verify.points) CHECK(p.ok);
}

TEST_CASE("erdos obstruction") {
    GapTree K = middle_thirds(16);
    Interval1 window(-1, 6);
    ErdosReport id = erdos_obstruction(K, {{1, 0}}, window, 16);
    CHECK(id.slack == 2);
    CHECK(id.certified == Interval1(Rat(-1, 10), Rat(1, 10)));
    REQUIRE(id.results.size() == 1);
    CHECK(id.results[0].bound < Rat(1, 10000));

    std::mt19937_64 g(99);
    std::uniform_int_distribution<int> ul(-1000, 1000), ut(0, 5000);
    std::vector<AffineMap> fam;
    for (int i = 0; i < 100; ++i) fam.push_back({1 + rat(ul(g), 100000), rat(ut(g), 1000)});
    ErdosReport r = erdos_obstruction(K, fam, window, 16);
    CHECK(r.results.size() == 100);
    CHECK(r.spacing == r.uniform.length());
    CHECK(r.spacing <= r.certified.length());
    for (auto& p : r.results) {
        CHECK(r.uniform.contains(p.residue));
        CHECK(p.residue + r.spacing * Rat(static_cast<long>(p.k)) == p.g.t);
        CHECK(p.k >= r.k_lo);
        CHECK(p.k <= r.k_hi);
    }
    // every t in the window reduces into the uniform shift interval
    for (int i = 0; i <= 700; ++i) {
        Rat t = Rat(-1) + rat(i, 100);
        mpz_class k;
        Rat q = (t - r.uniform.hi) / r.spacing;
        mpz_cdiv_q(k.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
        CHECK(r.uniform.contains(t - r.spacing * Rat(k)));
    }

    CHECK(error_kind([&] { erdos_obstruction(K, {{Rat(5, 2), 1}}, window, 16); }) == "FamilyOutOfSlack");
    CHECK(error_kind([&] { erdos_obstruction(K, {{Rat(1, 3), 1}}, window, 16); }) == "FamilyOutOfSlack");
    CHECK(error_kind([&] { erdos_obstruction(K, {{1, 40}}, window, 16); }) == "FamilyOutOfSlack");
}

TEST_CASE("H configs") {
    HSpec a = HSpec::from_config(json{{"family", "alpha-norm"}, {"dim", 4}});
    CHECK(a.family == HFamily::AlphaNorm);
    CHECK(a.dim == 4);
    HSpec c = HSpec::from_config(json{{"family", "custom-1d"}, {"h", "x*y"}, {"hx", "y"}, {"hy", "x"}, {"q2", {1, 3}}});
    CHECK(c.family_name() == "custom-1d");
    CHECK(c.q2 == Interval1(1, 3));
    CHECK(error_kind([] { HSpec::from_config(json{{"family", "quartic"}}); }) == "ConfigError");
}

} // TEST_SUITE
