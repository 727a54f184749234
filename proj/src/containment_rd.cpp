#include "cantor_forge/containment_rd.hpp"

#include <cmath>

namespace cantor {

Box ProductCompanion::hull() const {
    Box b;
    for (int i = 0; i < dim; ++i) b.push_back(axis(i).hull());
    return b;
}

ProductCompanion ProductCompanion::translated(const std::vector<Rat>& t) const {
    if (static_cast<int>(t.size()) != dim) throw Error("DimensionMismatch", "translation has wrong dimension");
    ProductCompanion c = *this;
    for (size_t i = 0; i < t.size(); ++i) c.offset[i] += t[i];
    return c;
}

SeparationSequence dk_sequence(const UndCertificate& cert) {
    if (cert.depth < 1) throw Error("InvalidCertificate", "certificate has no levels");
    SeparationSequence s;
    for (int k = 1; k <= cert.depth; ++k) {
        auto nodes = certificate_level(cert, k - 1);
        if (nodes.empty()) throw Error("InvalidCertificate", "missing level " + std::to_string(k - 1), k);
        std::optional<Rat> m;
        for (auto* n : nodes) {
            if (n->pairs.empty()) throw Error("InvalidCertificate", "node without selection", k);
            for (auto& p : n->pairs) {
                if (!(p.d_min > 0)) throw Error("InvalidCertificate", "non-positive separation", k);
                if (!m || p.d_min < *m) m = p.d_min;
            }
        }
        s.d.push_back(*m);
    }
    return s;
}

ProductCompanion build_product_companion(const Box& cert_hull, const SeparationSequence& seps, const Rat& shrink,
                                         const Rat& margin) {
    if (cert_hull.empty()) throw Error("DimensionMismatch", "empty hull");
    if (seps.d.empty()) throw Error("InvalidParameter", "empty separation sequence");
    if (!(shrink > 0 && shrink < 1)) throw Error("InvalidParameter", "shrink must lie in (0, 1)");
    if (margin < 0) throw Error("InvalidParameter", "margin must be non-negative");
    Rat lo = cert_hull[0].lo, hi = cert_hull[0].hi;
    for (auto& iv : cert_hull) {
        lo = min(lo, iv.lo);
        hi = max(hi, iv.hi);
    }
    SymmetricSpec spec{{lo - margin, hi + margin}, {}};
    Rat len = spec.hull.length();
    for (size_t k = 0; k < seps.d.size(); ++k) {
        if (!(seps.d[k] > 0)) throw Error("InvalidParameter", "separations must be positive");
        Rat g = shrink * seps.d[k];
        if (g >= len) g = len / 2;
        if (!(g < seps.d[k])) throw Error("InfeasibleGaps", "gap not below separation", static_cast<int>(k + 1));
        spec.gaps.push_back(g);
        len = (len - g) / 2;
    }
    ProductCompanion c{build_symmetric(spec), static_cast<int>(cert_hull.size()),
                       std::vector<Rat>(cert_hull.size(), Rat(0))};
    return c;
}

ChainRd find_chain_rd(const UndCertificate& cert, const ProductCompanion& comp, int N) {
    if (comp.dim != cert.dim) throw Error("DimensionMismatch", "companion and certificate dimensions differ");
    if (N < 0 || N > cert.depth || N > comp.base.depth())
        throw Error("LevelOutOfRange", "chain depth exceeds certificate or companion depth", N);
    std::vector<GapTree> axes;
    std::vector<GapTree::Node> cell;
    for (int i = 0; i < comp.dim; ++i) {
        axes.push_back(comp.axis(i));
        cell.push_back(axes.back().root());
    }
    const UndNode* node = &cert.root;
    for (int i = 0; i < comp.dim; ++i)
        if (!cell[static_cast<size_t>(i)].iv.contains(node->comp.box[static_cast<size_t>(i)]))
            throw Error("SlitBlocked", "certificate hull is not inside the companion hull", 0);
    ChainRd out;
    std::vector<int> sigma;
    for (int n = 0; n < N; ++n) {
        std::vector<Interval1> slit;
        for (int i = 0; i < comp.dim; ++i) slit.push_back(axes[static_cast<size_t>(i)].gap(cell[static_cast<size_t>(i)]));
        bool moved = false;
        for (size_t c = 0; c < node->children.size() && !moved; ++c) {
            const Box& b = node->children[c].comp.box;
            std::vector<int> side;
            for (int i = 0; i < comp.dim; ++i) {
                const Interval1& s = slit[static_cast<size_t>(i)];
                const Interval1& x = b[static_cast<size_t>(i)];
                if (x.hi <= s.lo) side.push_back(0);
                else if (x.lo >= s.hi) side.push_back(1);
                else break;
            }
            if (static_cast<int>(side.size()) != comp.dim) continue;
            for (int i = 0; i < comp.dim; ++i) {
                auto [l, r] = axes[static_cast<size_t>(i)].children(cell[static_cast<size_t>(i)]);
                cell[static_cast<size_t>(i)] = side[static_cast<size_t>(i)] == 0 ? l : r;
                if (!cell[static_cast<size_t>(i)].iv.contains(b[static_cast<size_t>(i)]))
                    throw Error("SlitBlocked", "component leaves its corner cell", n + 1);
            }
            node = &node->children[c];
            sigma.push_back(static_cast<int>(c));
            ChainStepRd step{sigma, {}};
            for (auto& x : cell) step.cell.push_back(x.addr);
            out.steps.push_back(std::move(step));
            moved = true;
        }
        if (!moved) throw Error("SlitBlocked", "every selected component meets a slit at level " + std::to_string(n + 1), n + 1);
    }
    out.bound_sq = 0;
    for (size_t i = 0; i < cell.size(); ++i) {
        out.witness_component.push_back(node->comp.box[i].mid());
        out.witness_cell.push_back(cell[i].iv.mid());
        out.bound_sq += cell[i].iv.length() * cell[i].iv.length();
    }
    out.bound = std::nextafter(std::sqrt(to_double(out.bound_sq)), HUGE_VAL);
    while (from_double(out.bound) * from_double(out.bound) < out.bound_sq) out.bound = std::nextafter(out.bound, HUGE_VAL);
    return out;
}

Box certify_sum_interior_rd(const UndCertificate& cert, const ProductCompanion& comp, int N) {
    if (comp.dim != cert.dim) throw Error("DimensionMismatch", "companion and certificate dimensions differ");
    if (N < 0 || N > cert.depth || N > comp.base.depth()) throw Error("LevelOutOfRange", "depth too large", N);
    Box h = comp.hull();
    Box out;
    for (int i = 0; i < comp.dim; ++i) {
        const Interval1& c = cert.root.comp.box[static_cast<size_t>(i)];
        const Interval1& k = h[static_cast<size_t>(i)];
        if (!(k.lo < c.lo && c.hi < k.hi))
            throw Error("NoMargin", "hull containment is not strict on axis " + std::to_string(i + 1));
        out.push_back({c.hi - k.hi, c.lo - k.lo});
    }
    return out;
}

json chain_rd_to_json(const ChainRd& c) {
    json steps = json::array();
    for (auto& s : c.steps) {
        json cell = json::array();
        for (auto& a : s.cell) cell.push_back(a.str());
        steps.push_back({{"sigma", s.sigma}, {"cell", cell}});
    }
    json wc = json::array(), wk = json::array();
    for (auto& x : c.witness_component) wc.push_back(rat_to_json(x));
    for (auto& x : c.witness_cell) wk.push_back(rat_to_json(x));
    return {{"steps", steps}, {"witness", {wc, wk}}, {"bound_sq", rat_to_json(c.bound_sq)}, {"bound", c.bound}};
}

} // namespace cantor
