#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cantor_forge/containment1d.hpp"
#include "cantor_forge/containment_rd.hpp"
#include "oracles.hpp"

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

GeometrySource thirds_square(int depth = 16) {
    return GeometrySource::product({Factor::of(middle_thirds(depth)), Factor::of(middle_thirds(depth))});
}

GeometrySource thirds_line(int depth = 16) {
    return GeometrySource::product({Factor::of(middle_thirds(depth)), Factor::at(0)});
}

Box box2(Rat a, Rat b, Rat c, Rat d) { return {Interval1(a, b), Interval1(c, d)}; }

} // namespace

TEST_SUITE("nested-rd") {

TEST_CASE("d_min on boxes") {
    CHECK(d_min(box2(0, Rat(1, 3), 0, Rat(1, 3)), box2(Rat(2, 3), 1, Rat(2, 3), 1)) == Rat(1, 3));
    CHECK(d_min(box2(0, 1, 0, 1), box2(2, 4, 3, 5)) == 1);
    CHECK(d_min(box2(0, Rat(1, 3), 0, Rat(1, 3)), box2(0, Rat(1, 3), Rat(2, 3), 1)) == 0);
    // touching counts as zero
    CHECK(d_min(box2(0, 1, 0, 1), box2(1, 2, 3, 4)) == 0);
}

TEST_CASE("kappa_ratios on boxes") {
    RatioBounds r = kappa_ratios(box2(0, Rat(1, 3), 0, Rat(1, 3)), box2(Rat(2, 3), 1, Rat(2, 3), 1));
    CHECK(r.lo == Rat(1, 3));
    CHECK(r.hi == 3);
    RatioBounds p = kappa_ratios(box2(1, 1, 2, 2), box2(2, 2, 4, 4));
    CHECK(p.lo == Rat(1, 2));
    CHECK(p.hi == 2);
    CHECK(error_kind([] { kappa_ratios(box2(0, 1, 0, 1), box2(0, 1, 2, 3)); }) == "DegeneratePair");
}

TEST_CASE("nested representation of the middle-thirds square") {
    NestedRep rep = build_nested_rep(thirds_square(), 2, 12, 2);
    CHECK(rep.root().level == 2);
    auto l4 = rep.descendants(rep.root(), 1);
    // four level-4 pieces per axis
    REQUIRE(l4.size() == 16);
    for (auto& c : l4) {
        CHECK(c.level == 4);
        for (auto& iv : c.box) CHECK(iv.length() <= Rat(1, 8));
    }
    // pairwise disjoint and inside the parent
    for (size_t i = 0; i < l4.size(); ++i)
        for (size_t j = i + 1; j < l4.size(); ++j) {
            std::vector<Cube> both;
            std::set_intersection(l4[i].cubes.begin(), l4[i].cubes.end(), l4[j].cubes.begin(), l4[j].cubes.end(),
                                  std::back_inserter(both));
            CHECK(both.empty());
        }
    NestedRep::TreeNode t = rep.materialize(8);
    CHECK(t.children.size() == 16);
    Rat parent = t.comp.diameter_sq();
    for (auto& c : t.children) CHECK(c.comp.diameter_sq() < parent);
    CHECK(rep.issues().empty());
}

TEST_CASE("single point and degenerate line") {
    GeometrySource pt = GeometrySource::product({Factor::at(Rat(1, 3)), Factor::at(Rat(1, 5))});
    NestedRep rp = build_nested_rep(pt, 1, 9, 2);
    auto ch = rp.children(rp.root());
    CHECK(ch.size() == 1);
    CHECK(ch[0].cubes.size() <= 4);

    NestedRep line = build_nested_rep(thirds_line(), 2, 12, 2);
    for (auto& c : line.descendants(line.root(), 2)) {
        // every component sits on the same horizontal strip
        CHECK(c.box[1] == line.root().box[1]);
        for (auto& q : c.cubes) CHECK((q[1] == 0 || q[1] == -1));
    }
    CHECK(error_kind([] { build_nested_rep(GeometrySource::cubes(3, {}), 1, 5, 2); }) == "EmptyGeometry");
}

TEST_CASE("outward boxes enclose the exact geometry") {
    NestedRep rep = build_nested_rep(thirds_square(), 2, 12, 2, 64);
    auto comps = rep.descendants(rep.root(), 2);
    for (auto& c : comps)
        for (size_t i = 0; i < 2; ++i) CHECK(c.box[i].contains(c.src[i]));
    for (size_t i = 0; i < comps.size(); ++i)
        for (size_t j = i + 1; j < comps.size(); ++j) {
            Rat low = d_min(comps[i], comps[j]);
            CHECK(low <= d_min(comps[i].src, comps[j].src));
        }
    // coarser rounding never reports more separation than finer rounding
    NestedRep coarse = build_nested_rep(thirds_square(), 2, 12, 2, 20);
    auto cc = coarse.descendants(coarse.root(), 2);
    REQUIRE(cc.size() == comps.size());
    for (size_t i = 0; i + 1 < cc.size(); ++i) CHECK(d_min(cc[i], cc[i + 1]) <= d_min(comps[i], comps[i + 1]));
}

TEST_CASE("certificate for the middle-thirds square") {
    NestedRep rep = build_nested_rep(thirds_square(), 2, 2 + 2 * 3 * 2, 2);
    UndCertificate c = und_certificate(rep, std::nullopt, 2, 3);
    CHECK(c.dim == 2);
    CHECK(c.depth == 3);
    REQUIRE(c.root.children.size() == 3);
    CHECK(c.root.pairs.size() == 3);
    Rat first = c.root.pairs[0].d_min;
    for (auto& p : c.root.pairs) first = min(first, p.d_min);
    CHECK(first <= Rat(1, 9));
    CHECK(first >= Rat(1, 9) * (1 - pow2(-30)));
    // diagonal picks: every pair separated on both axes by the same amount
    for (auto& ch : c.root.children) CHECK(ch.comp.box[0] == ch.comp.box[1]);
    CHECK(verify_certificate(c).empty());
    CHECK(oracle::check_certificate(c).empty());
    CHECK(certificate_level(c, 2).size() == 9);
    CHECK(certificate_level(c, 3).size() == 27);

    UndCertificate k9 = und_certificate(rep, Rat(9), 2, 3);
    CHECK(verify_certificate(k9).empty());
    CHECK(oracle::check_certificate(k9).empty());
    for (int k = 0; k < 3; ++k)
        for (auto* n : certificate_level(k9, k))
            for (auto& p : n->pairs) {
                REQUIRE(p.ratio);
                CHECK(p.ratio->lo >= Rat(1, 9));
                CHECK(p.ratio->hi <= 9);
            }
    // a looser kappa keeps succeeding
    UndCertificate k20 = und_certificate(rep, Rat(20), 2, 3);
    CHECK(oracle::check_certificate(k20).empty());
}

TEST_CASE("degenerate line fails the search") {
    NestedRep rep = build_nested_rep(thirds_line(24), 2, 2 + 2 * 8, 2);
    std::string msg;
    try {
        und_certificate(rep, std::nullopt, 8, 1);
    } catch (const Error& e) {
        CHECK(e.kind() == "CertificateNotFound");
        msg = e.what();
    }
    CHECK(msg.find("root") != std::string::npos);
    CHECK(msg.find("not a proof") != std::string::npos);
    CHECK(msg.find("x_2") != std::string::npos);
}

TEST_CASE("a separated descendant level is found once max_k reaches it") {
    // three small cubes on the diagonal: one component at levels 1 and 2, separated at level 3
    GeometrySource src = GeometrySource::cubes(6, {{0, 0}, {20, 20}, {40, 40}});
    NestedRep rep = build_nested_rep(src, 1, 8, 1);
    CHECK(error_kind([&] { und_certificate(rep, std::nullopt, 1, 1); }) == "CertificateNotFound");
    UndCertificate c = und_certificate(rep, std::nullopt, 2, 1);
    CHECK(c.root.k == 2);
    CHECK(oracle::check_certificate(c).empty());
}

TEST_CASE("rotations") {
    RotationMatrix id = RotationMatrix::identity(3);
    CHECK(id.is_identity());
    CHECK(id.defect() == 0);
    RotationMatrix t = RotationMatrix::tilt(2);
    CHECK(t.defect() < pow2(-60));
    RotationMatrix r = RotationMatrix::random(3, 42);
    CHECK(r.defect() < pow2(-40));
    CHECK(r.midpoint().isApprox(RotationMatrix::random(3, 42).midpoint()));

    // distances are preserved up to the defect
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto* m : {&t, &r}) {
        Eigen::MatrixXd M = m->midpoint();
        for (int i = 0; i < 200; ++i) {
            Eigen::VectorXd x(m->dim()), y(m->dim());
            for (int k = 0; k < m->dim(); ++k) {
                x[k] = u(g);
                y[k] = u(g);
            }
            double a = (x - y).norm(), b = (M * x - M * y).norm();
            CHECK(std::abs(a - b) <= 1e-12 + std::sqrt(to_double(m->defect()) * m->dim()) * a);
        }
    }
    IntervalMatrix bad(2, 2);
    bad << RatInterval(1), RatInterval(1), RatInterval(0), RatInterval(1);
    CHECK(error_kind([&] { RotationMatrix::from_intervals(bad, pow2(-20), "shear"); }) != "");
}

TEST_CASE("rotation search repairs the degenerate line") {
    RotationOptions o;
    o.und.kappa = Rat(11, 10);
    o.und.max_k = 2;
    o.und.depth = 2;
    RotationResult r = rotation_search(thirds_line(), {RotationMatrix::identity(2), RotationMatrix::tilt(2)}, o);
    REQUIRE(r.attempts.size() >= 2);
    CHECK_FALSE(r.attempts[0].ok);
    CHECK(r.attempts[1].ok);
    CHECK_FALSE(r.matrix.is_identity());
    CHECK(verify_certificate(r.certificate).empty());
    CHECK(oracle::check_certificate(r.certificate).empty());
    for (int k = 0; k < 2; ++k)
        for (auto* n : certificate_level(r.certificate, k))
            for (auto& p : n->pairs) {
                REQUIRE(p.ratio);
                CHECK(p.ratio->lo >= 1 - Rat(1, 1000000000));
                CHECK(p.ratio->hi <= 1 + Rat(1, 1000000000));
            }

    RotationOptions loose = o;
    loose.und.kappa = Rat(9);
    RotationResult easy = rotation_search(thirds_square(), default_rotation_candidates(2, 2, 1), loose);
    CHECK(easy.matrix.is_identity());
    CHECK(easy.attempts.size() == 1);

    CHECK(error_kind([&] { rotation_search(thirds_line(), {}, o); }) == "AllCandidatesFailed");
}

TEST_CASE("certificate json and csv") {
    NestedRep rep = build_nested_rep(thirds_square(), 2, 10, 2);
    UndCertificate c = und_certificate(rep, Rat(9), 2, 2);
    json j = certificate_to_json(c);
    UndCertificate back = certificate_from_json(json::parse(j.dump()));
    CHECK(back == c);
    CHECK(verify_certificate(back).empty());

    // tampering is caught by both checkers
    json broken = j;
    broken["root"]["pairs"][0]["d_min"] = json::array({1, 2});
    UndCertificate t = certificate_from_json(broken);
    CHECK_FALSE(verify_certificate(t).empty());
    CHECK_FALSE(oracle::check_certificate(t).empty());

    std::string csv = certificate_boxes_csv(c);
    CHECK(csv.rfind("level,lo_1,hi_1,lo_2,hi_2\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 1 + 3 + 9);

    Box b = box2(Rat(-1, 3), Rat(1, 7), 0, Rat(5, 2));
    CHECK(box_from_json(box_to_json(b)) == b);
    IntervalMatrix m = RotationMatrix::tilt(3).entries();
    IntervalMatrix mb = matrix_from_json(matrix_to_json(m));
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) CHECK(mb(i, k) == m(i, k));
}

TEST_CASE("geometry config") {
    json j = {{"kind", "product"},
              {"factors", {{{"kind", "middle-thirds"}, {"depth", 6}}, {{"point", "1/2"}}}}};
    GeometrySource g = GeometrySource::from_config(j);
    CHECK(g.dim() == 2);
    json c = {{"kind", "cubes"}, {"level", 3}, {"cubes", {{0, 0}, {1, 0}}}};
    CHECK(GeometrySource::from_config(c).dim() == 2);
    CHECK(error_kind([] { GeometrySource::from_config(json{{"kind", "blob"}}); }) == "ConfigError");
}

} // TEST_SUITE
