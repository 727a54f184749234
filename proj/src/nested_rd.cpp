#include "cantor_forge/nested_rd.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/QR>

#include "cantor_forge/parallel.hpp"

namespace cantor {

int default_precision_bits() {
    if (const char* env = std::getenv("CANTOR_FORGE_PRECISION_BITS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 24 || v > 4096)
            throw Error("ConfigError", "CANTOR_FORGE_PRECISION_BITS must be an integer in [24, 4096]");
        return static_cast<int>(v);
    }
    return 64;
}

Rat default_margin() { return pow2(-40); }

// ---------------------------------------------------------------- RotationMatrix

namespace {

Rat orthogonality_defect(const IntervalMatrix& m) {
    IntervalMatrix g = m.transpose() * m;
    Rat worst = 0;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            RatInterval e = g(i, j) - RatInterval(Rat(i == j ? 1 : 0));
            worst = max(worst, max(abs(e.lo), abs(e.hi)));
        }
    return worst;
}

} // namespace

RotationMatrix RotationMatrix::from_intervals(IntervalMatrix m, const Rat& max_defect, std::string label) {
    if (m.rows() != m.cols() || m.rows() < 1) throw Error("InvalidMatrix", "rotation must be square");
    RotationMatrix r;
    r.defect_ = orthogonality_defect(m);
    if (r.defect_ > max_defect)
        throw Error("NotOrthogonal", "orthogonality defect " + std::to_string(to_double(r.defect_)) + " too large");
    r.m_ = std::move(m);
    r.label_ = std::move(label);
    return r;
}

RotationMatrix RotationMatrix::identity(int d) {
    IntervalMatrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = RatInterval(Rat(i == j ? 1 : 0));
    return from_intervals(std::move(m), 0, "identity");
}

RotationMatrix RotationMatrix::tilt(int d, int bits) {
    if (d < 2) throw Error("InvalidMatrix", "tilt needs d >= 2");
    RatInterval s(sqrt_down(Rat(1, 2), bits), sqrt_up(Rat(1, 2), bits));
    IntervalMatrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = RatInterval(Rat(0));
    // column 0 = v1, columns 1..d-2 shift the standard basis up, last column = f_d
    m(0, 0) = -s;
    m(1, 0) = s;
    for (int i = 1; i + 1 < d; ++i) m(i + 1, i) = RatInterval(Rat(1));
    m(0, d - 1) = s;
    m(1, d - 1) = s;
    return from_intervals(std::move(m), pow2(-(bits - 4)), "tilt");
}

RotationMatrix RotationMatrix::random(int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
    IntervalMatrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = RatInterval(from_double(q(i, j)));
    return from_intervals(std::move(m), Rat(1, 1000000000), "random-" + std::to_string(seed));
}

bool RotationMatrix::is_identity() const {
    for (Eigen::Index i = 0; i < m_.rows(); ++i)
        for (Eigen::Index j = 0; j < m_.cols(); ++j)
            if (m_(i, j) != RatInterval(Rat(i == j ? 1 : 0))) return false;
    return true;
}

Eigen::MatrixXd RotationMatrix::midpoint() const {
    Eigen::MatrixXd out(m_.rows(), m_.cols());
    for (Eigen::Index i = 0; i < m_.rows(); ++i)
        for (Eigen::Index j = 0; j < m_.cols(); ++j) out(i, j) = to_double(m_(i, j).mid());
    return out;
}

// ---------------------------------------------------------------- GeometrySource

GeometrySource GeometrySource::product(std::vector<Factor> factors) {
    if (factors.empty()) throw Error("EmptyGeometry", "product needs at least one factor");
    GeometrySource g;
    g.dim_ = static_cast<int>(factors.size());
    g.factors_ = std::move(factors);
    return g;
}

GeometrySource GeometrySource::affine(std::vector<Factor> factors, IntervalMatrix m, std::vector<RatInterval> shift) {
    GeometrySource g = product(std::move(factors));
    if (m.rows() != g.dim_ || m.cols() != g.dim_) throw Error("InvalidMatrix", "matrix must be d x d");
    if (shift.empty()) shift.assign(static_cast<size_t>(g.dim_), RatInterval(Rat(0)));
    if (static_cast<int>(shift.size()) != g.dim_) throw Error("InvalidMatrix", "translation must have d entries");
    g.has_matrix_ = true;
    g.m_ = std::move(m);
    g.shift_ = std::move(shift);
    return g;
}

GeometrySource GeometrySource::cubes(int level, std::vector<Cube> cubes) {
    if (cubes.empty()) throw Error("EmptyGeometry", "empty cube list");
    GeometrySource g;
    g.dim_ = static_cast<int>(cubes.front().size());
    if (g.dim_ < 1) throw Error("EmptyGeometry", "zero-dimensional cubes");
    for (auto& c : cubes)
        if (static_cast<int>(c.size()) != g.dim_) throw Error("ConfigError", "cubes of mixed dimension");
    g.cube_level_ = level;
    g.cubes_ = std::move(cubes);
    return g;
}

GeometrySource GeometrySource::transformed(const RotationMatrix& o) const {
    if (o.dim() != dim_) throw Error("InvalidMatrix", "rotation dimension mismatch");
    if (o.is_identity()) return *this;
    GeometrySource g = *this;
    if (has_matrix_) {
        g.m_ = o.entries() * m_;
        for (int i = 0; i < dim_; ++i) {
            RatInterval acc(Rat(0));
            for (int j = 0; j < dim_; ++j) acc += o.entries()(i, j) * shift_[static_cast<size_t>(j)];
            g.shift_[static_cast<size_t>(i)] = acc;
        }
    } else {
        g.m_ = o.entries();
        g.shift_.assign(static_cast<size_t>(dim_), RatInterval(Rat(0)));
    }
    g.has_matrix_ = true;
    return g;
}

std::string GeometrySource::kind() const {
    if (!cubes_.empty()) return has_matrix_ ? "affine-cubes" : "cubes";
    return has_matrix_ ? "affine" : "product";
}

GeometrySource::AxisKind GeometrySource::axis_kind(int i, const GapTree::Node& n) const {
    if (!cubes_.empty()) return AxisKind::Solid;
    const Factor& f = factors_[static_cast<size_t>(i)];
    if (!f.tree) return AxisKind::Point;
    return n.addr.size() < f.tree->depth() ? AxisKind::Tree : AxisKind::Solid;
}

Box GeometrySource::image_box(const std::vector<GapTree::Node>& ax, int bits) const {
    Box b(static_cast<size_t>(dim_));
    if (!has_matrix_) {
        for (int i = 0; i < dim_; ++i) b[static_cast<size_t>(i)] = round_out(ax[static_cast<size_t>(i)].iv, bits);
        return b;
    }
    for (int i = 0; i < dim_; ++i) {
        RatInterval acc = shift_[static_cast<size_t>(i)];
        for (int j = 0; j < dim_; ++j) {
            const RatInterval& mij = m_(i, j);
            if (mij.is_point() && mij.lo == 0) continue;
            acc += mij * ax[static_cast<size_t>(j)].iv;
        }
        b[static_cast<size_t>(i)] = round_out(acc, bits);
    }
    return b;
}

namespace {

Rat max_extent(const Box& b) {
    Rat m = 0;
    for (auto& iv : b) m = max(m, iv.length());
    return m;
}

} // namespace

void GeometrySource::refine(const Atom& a, int level, int bits, std::vector<Atom>& out) const {
    if (level > bits - 8)
        throw Error("PrecisionExhausted", "dyadic level " + std::to_string(level) + " needs more than " +
                                              std::to_string(bits) + " bits");
    const Rat h = pow2(-level);
    const Rat floor_len = pow2(-bits);
    std::vector<Atom> stack{a};
    while (!stack.empty()) {
        Atom cur = std::move(stack.back());
        stack.pop_back();
        if (max_extent(cur.img) <= h) {
            out.push_back(std::move(cur));
            continue;
        }
        int axis = -1;
        Rat best = 0;
        for (int i = 0; i < dim_; ++i) {
            const auto& n = cur.ax[static_cast<size_t>(i)];
            AxisKind k = axis_kind(i, n);
            if (k == AxisKind::Point) continue;
            Rat len = n.iv.length();
            if (len > best && len > floor_len) {
                best = len;
                axis = i;
            }
        }
        if (axis < 0) {
            out.push_back(std::move(cur));
            continue;
        }
        const size_t ai = static_cast<size_t>(axis);
        const GapTree::Node& n = cur.ax[ai];
        GapTree::Node c0, c1;
        if (axis_kind(axis, n) == AxisKind::Tree) {
            auto ch = factors_[ai].tree->children(n);
            c0 = std::move(ch.first);
            c1 = std::move(ch.second);
        } else {
            Rat m = n.iv.mid();
            c0 = {n.addr, {n.iv.lo, m}, {n.iv.lo, m}};
            c1 = {n.addr, {m, n.iv.hi}, {m, n.iv.hi}};
        }
        Atom a1 = cur;
        cur.ax[ai] = std::move(c0);
        a1.ax[ai] = std::move(c1);
        cur.img = image_box(cur.ax, bits);
        a1.img = image_box(a1.ax, bits);
        // keep left-to-right processing order
        stack.push_back(std::move(a1));
        stack.push_back(std::move(cur));
    }
}

std::vector<Atom> GeometrySource::root_atoms(int level, int bits) const {
    std::vector<Atom> seeds;
    if (!cubes_.empty()) {
        for (auto& c : cubes_) {
            Atom a;
            for (auto j : c) {
                Interval1 iv(Rat(j) * pow2(-cube_level_), Rat(j + 1) * pow2(-cube_level_));
                a.ax.push_back({NodeAddress(), iv, iv});
            }
            seeds.push_back(std::move(a));
        }
    } else {
        Atom a;
        for (auto& f : factors_) {
            if (f.tree) a.ax.push_back(f.tree->root());
            else a.ax.push_back({NodeAddress(), Interval1(f.point), Interval1(f.point)});
        }
        seeds.push_back(std::move(a));
    }
    std::vector<Atom> out;
    for (auto& a : seeds) {
        a.img = image_box(a.ax, bits);
        refine(a, level, bits, out);
    }
    return out;
}

namespace {

IntervalMatrix parse_matrix_entries(const json& j, int d) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "tilt") return RotationMatrix::tilt(d, default_precision_bits()).entries();
        if (s == "identity") return RotationMatrix::identity(d).entries();
        throw Error("ConfigError", "unknown matrix name '" + s + "'");
    }
    return matrix_from_json(j);
}

Factor factor_from_config(const json& f) {
    if (f.is_object() && f.contains("point")) return Factor::at(rat_from_json(f.at("point")));
    return Factor::of(tree_from_config(f));
}

} // namespace

GeometrySource GeometrySource::from_config(const json& j) {
    try {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "cubes") {
            std::vector<Cube> cs;
            for (auto& c : j.at("cubes")) cs.push_back(c.get<Cube>());
            return GeometrySource::cubes(j.at("level").get<int>(), std::move(cs));
        }
        std::vector<Factor> factors;
        for (auto& f : j.at("factors")) factors.push_back(factor_from_config(f));
        if (kind == "product") return product(std::move(factors));
        if (kind == "affine") {
            int d = static_cast<int>(factors.size());
            IntervalMatrix m = parse_matrix_entries(j.at("matrix"), d);
            std::vector<RatInterval> shift;
            if (j.contains("translation"))
                for (auto& t : j.at("translation")) shift.push_back(RatInterval(rat_from_json(t)));
            return affine(std::move(factors), std::move(m), std::move(shift));
        }
        throw Error("ConfigError", "unknown geometry kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw Error("ConfigError", std::string("geometry: ") + e.what());
    }
}

// ---------------------------------------------------------------- covers

Rat Component::diameter_sq() const {
    Rat s = 0;
    for (auto& iv : box) s += iv.length() * iv.length();
    return s;
}

namespace {

struct Dsu {
    std::vector<int> p;
    explicit Dsu(size_t n) : p(n) { std::iota(p.begin(), p.end(), 0); }
    int find(int x) {
        while (p[static_cast<size_t>(x)] != x) x = p[static_cast<size_t>(x)] = p[static_cast<size_t>(p[static_cast<size_t>(x)])];
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) p[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
    }
};

Box box_hull(const Box& a, const Box& b) {
    Box out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = hull(a[i], b[i]);
    return out;
}

Box src_box(const Atom& a) {
    Box b;
    for (auto& n : a.ax) b.push_back(n.iv);
    return b;
}

bool lower_corner_less(const Component& a, const Component& b) {
    for (size_t i = 0; i < a.box.size(); ++i) {
        if (a.box[i].lo != b.box[i].lo) return a.box[i].lo < b.box[i].lo;
    }
    return a.cubes < b.cubes;
}

} // namespace

std::vector<Component> cover_components(std::vector<Atom> atoms, int level) {
    if (atoms.empty()) return {};
    const size_t d = atoms.front().img.size();
    std::vector<std::pair<Cube, int>> tagged;
    for (size_t ai = 0; ai < atoms.size(); ++ai) {
        const Box& b = atoms[ai].img;
        std::vector<std::int64_t> lo(d), hi(d);
        for (size_t i = 0; i < d; ++i) {
            lo[i] = ceil_scaled(b[i].lo, level) - 1;
            hi[i] = floor_scaled(b[i].hi, level);
        }
        Cube c = lo;
        while (true) {
            tagged.push_back({c, static_cast<int>(ai)});
            size_t i = 0;
            while (i < d && c[i] == hi[i]) {
                c[i] = lo[i];
                ++i;
            }
            if (i == d) break;
            ++c[i];
        }
    }
    std::sort(tagged.begin(), tagged.end());
    std::vector<Cube> cubes;
    std::vector<int> cube_of_tag(tagged.size());
    for (size_t t = 0; t < tagged.size(); ++t) {
        if (cubes.empty() || cubes.back() != tagged[t].first) cubes.push_back(tagged[t].first);
        cube_of_tag[t] = static_cast<int>(cubes.size() - 1);
    }
    Dsu dsu(cubes.size());
    std::vector<int> atom_cube(atoms.size(), -1);
    for (size_t t = 0; t < tagged.size(); ++t) {
        int& first = atom_cube[static_cast<size_t>(tagged[t].second)];
        if (first < 0) first = cube_of_tag[t];
        else dsu.unite(first, cube_of_tag[t]);
    }
    // closure adjacency: neighbours differing by at most 1 in every coordinate
    std::vector<std::int64_t> off(d, -1);
    std::vector<Cube> offsets;
    while (true) {
        if (std::any_of(off.begin(), off.end(), [](std::int64_t v) { return v != 0; })) offsets.push_back(off);
        size_t i = 0;
        while (i < d && off[i] == 1) {
            off[i] = -1;
            ++i;
        }
        if (i == d) break;
        ++off[i];
    }
    Cube nb(d);
    for (size_t c = 0; c < cubes.size(); ++c)
        for (auto& o : offsets) {
            for (size_t i = 0; i < d; ++i) nb[i] = cubes[c][i] + o[i];
            auto it = std::lower_bound(cubes.begin(), cubes.end(), nb);
            if (it != cubes.end() && *it == nb) dsu.unite(static_cast<int>(c), static_cast<int>(it - cubes.begin()));
        }
    std::vector<int> comp_of_root(cubes.size(), -1);
    std::vector<Component> comps;
    for (size_t c = 0; c < cubes.size(); ++c) {
        int r = dsu.find(static_cast<int>(c));
        if (comp_of_root[static_cast<size_t>(r)] < 0) {
            comp_of_root[static_cast<size_t>(r)] = static_cast<int>(comps.size());
            comps.emplace_back();
            comps.back().level = level;
        }
        comps[static_cast<size_t>(comp_of_root[static_cast<size_t>(r)])].cubes.push_back(cubes[c]);
    }
    for (size_t ai = 0; ai < atoms.size(); ++ai) {
        Component& comp = comps[static_cast<size_t>(comp_of_root[static_cast<size_t>(dsu.find(atom_cube[ai]))])];
        Box s = src_box(atoms[ai]);
        if (comp.atoms.empty()) {
            comp.box = atoms[ai].img;
            comp.src = std::move(s);
        } else {
            comp.box = box_hull(comp.box, atoms[ai].img);
            comp.src = box_hull(comp.src, s);
        }
        comp.atoms.push_back(std::move(atoms[ai]));
    }
    std::sort(comps.begin(), comps.end(), lower_corner_less);
    return comps;
}

// ---------------------------------------------------------------- NestedRep

NestedRep::NestedRep(GeometrySource src, int m0, int leaf_level, int s, int bits)
    : src_(std::make_shared<const GeometrySource>(std::move(src))), m0_(m0), leaf_(leaf_level), s_(s),
      bits_(bits < 0 ? default_precision_bits() : bits) {
    if (s_ < 1) throw Error("InvalidParameter", "refine step must be >= 1");
    if (!(m0_ < leaf_)) throw Error("InvalidParameter", "start level must be below leaf level");
    std::vector<Atom> atoms = src_->root_atoms(m0_, bits_);
    if (atoms.empty()) throw Error("EmptyGeometry", "no geometry");
    auto comps = cover_components(std::move(atoms), m0_);
    root_ = std::move(comps.front());
    for (size_t i = 1; i < comps.size(); ++i) {
        Component& c = comps[i];
        root_.cubes.insert(root_.cubes.end(), c.cubes.begin(), c.cubes.end());
        root_.box = box_hull(root_.box, c.box);
        root_.src = box_hull(root_.src, c.src);
        for (auto& a : c.atoms) root_.atoms.push_back(std::move(a));
    }
    std::sort(root_.cubes.begin(), root_.cubes.end());
}

std::vector<Component> NestedRep::descendants(const Component& c, int k) const {
    const int level = c.level + k * s_;
    std::vector<Atom> atoms;
    for (const Atom& a : c.atoms) src_->refine(a, level, bits_, atoms);
    return cover_components(std::move(atoms), level);
}

NestedRep::TreeNode NestedRep::materialize(int max_level) const {
    if (max_level < 0) max_level = leaf_;
    issues_.clear();
    std::vector<Rat> level_max; // max squared diameter per generation
    auto rec = [&](auto&& self, Component c, size_t gen) -> TreeNode {
        if (level_max.size() <= gen) level_max.push_back(c.diameter_sq());
        else level_max[gen] = max(level_max[gen], c.diameter_sq());
        TreeNode t;
        if (c.level + s_ <= max_level) {
            for (auto& ch : children(c)) t.children.push_back(self(self, std::move(ch), gen + 1));
        }
        c.atoms.clear();
        c.atoms.shrink_to_fit();
        t.comp = std::move(c);
        return t;
    };
    TreeNode root = rec(rec, root_, 0);
    for (size_t g = 1; g < level_max.size(); ++g)
        if (level_max[g - 1] > 0 && level_max[g] >= level_max[g - 1])
            issues_.push_back({m0_ + static_cast<int>(g) * s_, "NotShrinking",
                               "max component diameter did not decrease at generation " + std::to_string(g)});
    return root;
}

NestedRep build_nested_rep(const GeometrySource& src, int m0, int leaf_level, int s, int bits) {
    return NestedRep(src, m0, leaf_level, s, bits);
}

// ---------------------------------------------------------------- separations

Rat d_min(const Box& a, const Box& b) {
    if (a.size() != b.size() || a.empty()) throw Error("DimensionMismatch", "boxes of different dimension");
    Rat m = distance(a[0], b[0]);
    for (size_t i = 1; i < a.size(); ++i) m = min(m, distance(a[i], b[i]));
    return m;
}

Rat d_min(const Component& a, const Component& b) { return d_min(a.box, b.box); }

RatioBounds kappa_ratios(const Box& a, const Box& b) {
    const size_t d = a.size();
    std::vector<Rat> lo(d), hi(d);
    for (size_t i = 0; i < d; ++i) {
        lo[i] = distance(a[i], b[i]);
        if (lo[i] == 0) throw Error("DegeneratePair", "projections meet on axis " + std::to_string(i + 1));
        hi[i] = max(a[i].hi - b[i].lo, b[i].hi - a[i].lo);
    }
    if (d == 1) return {1, 1};
    RatioBounds r{lo[0] / hi[1], hi[0] / lo[1]};
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            r.lo = min(r.lo, lo[i] / hi[j]);
            r.hi = max(r.hi, hi[i] / lo[j]);
        }
    return r;
}

RatioBounds kappa_ratios(const Component& a, const Component& b) { return kappa_ratios(a.box, b.box); }

namespace {

// f_i / f_j over the vertex list, each f_i sign-definite.
template <class V, class Lo, class Hi>
std::optional<RatioBounds> vertex_ratios(const std::vector<std::vector<V>>& vals, size_t d, Lo lo_of, Hi hi_of) {
    for (size_t i = 0; i < d; ++i) {
        bool pos = true, neg = true;
        for (auto& f : vals) {
            pos = pos && lo_of(f[i]) > 0;
            neg = neg && hi_of(f[i]) < 0;
        }
        if (!pos && !neg) return std::nullopt;
    }
    std::optional<RatioBounds> r;
    for (auto& f : vals)
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) {
                if (i == j) continue;
                Rat ai = max(abs(lo_of(f[i])), abs(hi_of(f[i]))), bi = min(abs(lo_of(f[i])), abs(hi_of(f[i])));
                Rat aj = max(abs(lo_of(f[j])), abs(hi_of(f[j]))), bj = min(abs(lo_of(f[j])), abs(hi_of(f[j])));
                Rat lo = bi / aj, hi = ai / bj;
                if (!r) r = RatioBounds{lo, hi};
                else {
                    if (lo < r->lo) r->lo = lo;
                    if (hi > r->hi) r->hi = hi;
                }
            }
    return r;
}

} // namespace

std::optional<RatioBounds> source_ratio_bounds(const Box& sa, const Box& sb, const IntervalMatrix& m) {
    const size_t d = sa.size();
    if (d < 2) return RatioBounds{1, 1};
    std::vector<Interval1> w(d);
    for (size_t j = 0; j < d; ++j) w[j] = sa[j] - sb[j];
    bool point = true;
    for (Eigen::Index i = 0; i < m.size(); ++i) point = point && m.data()[i].is_point();
    const std::uint64_t nv = std::uint64_t{1} << d;
    if (point) {
        std::vector<std::vector<Rat>> vals;
        for (std::uint64_t v = 0; v < nv; ++v) {
            std::vector<Rat> f(d, Rat(0));
            for (size_t i = 0; i < d; ++i)
                for (size_t j = 0; j < d; ++j) {
                    const Rat& mij = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)).lo;
                    if (mij == 0) continue;
                    f[i] += mij * ((v >> j) & 1 ? w[j].hi : w[j].lo);
                }
            vals.push_back(std::move(f));
        }
        auto id = [](const Rat& x) -> const Rat& { return x; };
        return vertex_ratios(vals, d, id, id);
    }
    std::vector<std::vector<RatInterval>> vals;
    for (std::uint64_t v = 0; v < nv; ++v) {
        std::vector<RatInterval> f(d, RatInterval(Rat(0)));
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) {
                const RatInterval& mij = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (mij.is_point() && mij.lo == 0) continue;
                f[i] += mij * RatInterval((v >> j) & 1 ? w[j].hi : w[j].lo);
            }
        vals.push_back(std::move(f));
    }
    return vertex_ratios(
        vals, d, [](const RatInterval& x) -> const Rat& { return x.lo; },
        [](const RatInterval& x) -> const Rat& { return x.hi; });
}

namespace {

IntervalMatrix identity_matrix(int d) { return RotationMatrix::identity(d).entries(); }

// Ratio bounds actually recorded: box bounds tightened by the source-space bounds.
std::optional<RatioBounds> pair_ratio(const Component& a, const Component& b, const IntervalMatrix& m) {
    std::optional<RatioBounds> r;
    try {
        r = kappa_ratios(a, b);
    } catch (const Error&) {
        return std::nullopt;
    }
    if (auto s = source_ratio_bounds(a.src, b.src, m)) {
        r->lo = max(r->lo, s->lo);
        r->hi = min(r->hi, s->hi);
    }
    return r;
}

struct Selection {
    std::vector<int> idx;
    Rat score;
};

// Maximise the smallest pairwise separation over (d+1)-cliques of admissible pairs;
// the first clique in lexicographic index order wins ties.
std::optional<Selection> best_clique(const std::vector<std::vector<std::optional<Rat>>>& sep, int r) {
    const int n = static_cast<int>(sep.size());
    std::optional<Selection> best;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int start, const std::optional<Rat>& cur_min) -> void {
        if (static_cast<int>(cur.size()) == r) {
            if (!best || *cur_min > best->score) best = Selection{cur, *cur_min};
            return;
        }
        for (int i = start; i <= n - (r - static_cast<int>(cur.size())); ++i) {
            std::optional<Rat> m = cur_min;
            bool ok = true;
            for (int j : cur) {
                const auto& s = sep[static_cast<size_t>(j)][static_cast<size_t>(i)];
                if (!s || (best && *s <= best->score)) {
                    ok = false;
                    break;
                }
                if (!m || *s < *m) m = *s;
            }
            if (!ok) continue;
            cur.push_back(i);
            self(self, i + 1, m);
            cur.pop_back();
        }
    };
    rec(rec, 0, std::nullopt);
    return best;
}

std::string hyperplane_explanation(const std::vector<Component>& cands, int d, const Rat& margin) {
    std::ostringstream os;
    bool any = false;
    for (int axis = 0; axis < d; ++axis) {
        std::vector<Interval1> proj;
        for (auto& c : cands) proj.push_back(c.box[static_cast<size_t>(axis)]);
        std::sort(proj.begin(), proj.end(), [](const Interval1& a, const Interval1& b) { return a.lo < b.lo; });
        int clusters = 0;
        Rat reach;
        for (size_t i = 0; i < proj.size(); ++i) {
            if (i == 0 || proj[i].lo - reach > margin) {
                ++clusters;
                reach = proj[i].hi;
            } else {
                reach = max(reach, proj[i].hi);
            }
        }
        if (clusters < d + 1) {
            if (any) os << "; ";
            os << "axis " << axis + 1 << " projections form only " << clusters
               << " separated cluster(s): components look confined near hyperplanes x_" << axis + 1 << " = const";
            any = true;
        }
    }
    if (!any) return "no hyperplane pattern detected";
    return os.str();
}

struct Search {
    const NestedRep& rep;
    const UndOptions& opt;
    IntervalMatrix m;
    int d;

    UndNode run(Component c, int depth_left, const std::string& path) {
        UndNode node;
        if (depth_left == 0) {
            c.atoms.clear();
            node.comp = std::move(c);
            return node;
        }
        std::vector<Component> last;
        int last_level = c.level;
        for (int k = 1; k <= opt.max_k; ++k) {
            const int level = c.level + k * rep.step();
            if (level > rep.leaf_level() || level > rep.bits() - 8) break;
            std::vector<Component> cands = rep.descendants(c, k);
            last_level = level;
            const size_t n = cands.size();
            std::vector<std::vector<std::optional<Rat>>> sep(n, std::vector<std::optional<Rat>>(n));
            for (size_t i = 0; i < n; ++i)
                for (size_t j = i + 1; j < n; ++j) {
                    bool apart = true;
                    for (int a = 0; a < d && apart; ++a) {
                        const auto& x = cands[i].box[static_cast<size_t>(a)];
                        const auto& y = cands[j].box[static_cast<size_t>(a)];
                        apart = x.hi < y.lo || y.hi < x.lo;
                    }
                    if (!apart) continue;
                    Rat dm = d_min(cands[i], cands[j]);
                    if (!(dm > opt.margin)) continue;
                    if (opt.kappa) {
                        // box bounds first; the tighter source bounds only when those fail
                        auto within = [&](const std::optional<RatioBounds>& r) {
                            return r && r->lo >= 1 / *opt.kappa && r->hi <= *opt.kappa;
                        };
                        std::optional<RatioBounds> r = kappa_ratios(cands[i], cands[j]);
                        if (!within(r) && !within(pair_ratio(cands[i], cands[j], m))) continue;
                    }
                    sep[i][j] = sep[j][i] = dm;
                }
            auto pick = best_clique(sep, d + 1);
            if (!pick) {
                last = std::move(cands);
                continue;
            }
            node.k = k;
            for (size_t a = 0; a < pick->idx.size(); ++a)
                for (size_t b = a + 1; b < pick->idx.size(); ++b) {
                    const size_t i = static_cast<size_t>(pick->idx[a]), j = static_cast<size_t>(pick->idx[b]);
                    node.pairs.push_back(
                        {static_cast<int>(a), static_cast<int>(b), *sep[i][j], pair_ratio(cands[i], cands[j], m)});
                }
            for (size_t a = 0; a < pick->idx.size(); ++a)
                node.children.push_back(run(std::move(cands[static_cast<size_t>(pick->idx[a])]), depth_left - 1,
                                            path + "/" + std::to_string(a)));
            c.atoms.clear();
            node.comp = std::move(c);
            return node;
        }
        std::string why = last.empty() ? "no descendant levels available" : hyperplane_explanation(last, d, opt.margin);
        throw Error("CertificateNotFound",
                    "search exhausted at node '" + path + "' (level " + std::to_string(c.level) + ", max_k " +
                        std::to_string(opt.max_k) + ", deepest level tried " + std::to_string(last_level) +
                        "); this is not a proof of degeneracy. " + why,
                    static_cast<int>(std::count(path.begin(), path.end(), '/')));
    }
};

} // namespace

UndCertificate und_certificate(const NestedRep& rep, const UndOptions& opt) {
    if (opt.max_k < 1 || opt.depth < 1) throw Error("InvalidParameter", "max_k and depth must be >= 1");
    if (opt.kappa && *opt.kappa < 1) throw Error("InvalidParameter", "kappa must be >= 1");
    UndCertificate cert;
    cert.dim = rep.dim();
    cert.depth = opt.depth;
    cert.step = rep.step();
    cert.bits = rep.bits();
    cert.kappa = opt.kappa;
    cert.margin = opt.margin;
    IntervalMatrix m = rep.source().has_matrix() ? rep.source().matrix() : identity_matrix(rep.dim());
    cert.matrix = m;
    Search s{rep, opt, m, rep.dim()};
    cert.root = s.run(rep.root(), opt.depth, "root");
    return cert;
}

UndCertificate und_certificate(const NestedRep& rep, std::optional<Rat> kappa, int max_k, int depth) {
    UndOptions o;
    o.kappa = std::move(kappa);
    o.max_k = max_k;
    o.depth = depth;
    return und_certificate(rep, o);
}

bool operator==(const UndCertificate& a, const UndCertificate& b) {
    if (a.dim != b.dim || a.depth != b.depth || a.step != b.step || a.bits != b.bits || a.margin != b.margin)
        return false;
    if (a.kappa.has_value() != b.kappa.has_value() || (a.kappa && *a.kappa != *b.kappa)) return false;
    if (a.matrix.has_value() != b.matrix.has_value()) return false;
    if (a.matrix) {
        if (a.matrix->rows() != b.matrix->rows()) return false;
        for (Eigen::Index i = 0; i < a.matrix->rows(); ++i)
            for (Eigen::Index j = 0; j < a.matrix->cols(); ++j)
                if ((*a.matrix)(i, j) != (*b.matrix)(i, j)) return false;
    }
    return a.root == b.root;
}

std::vector<const UndNode*> certificate_level(const UndCertificate& c, int k) {
    std::vector<const UndNode*> cur{&c.root};
    for (int i = 0; i < k; ++i) {
        std::vector<const UndNode*> next;
        for (auto* n : cur)
            for (auto& ch : n->children) next.push_back(&ch);
        cur.swap(next);
    }
    return cur;
}

std::string verify_certificate(const UndCertificate& c) {
    IntervalMatrix m = c.matrix ? *c.matrix : identity_matrix(c.dim);
    std::string err;
    auto rec = [&](auto&& self, const UndNode& n, int depth) -> void {
        if (!err.empty()) return;
        if (depth == c.depth) {
            if (!n.children.empty()) err = "leaf at full depth has children";
            return;
        }
        if (static_cast<int>(n.children.size()) != c.dim + 1) {
            err = "node at depth " + std::to_string(depth) + " does not select d+1 components";
            return;
        }
        if (n.pairs.size() != static_cast<size_t>((c.dim + 1) * c.dim / 2)) {
            err = "wrong number of pair records";
            return;
        }
        for (auto& p : n.pairs) {
            const Component& a = n.children[static_cast<size_t>(p.p)].comp;
            const Component& b = n.children[static_cast<size_t>(p.q)].comp;
            Rat dm = d_min(a, b);
            if (dm != p.d_min || !(dm > c.margin)) {
                err = "pair separation mismatch or not above margin";
                return;
            }
            auto r = pair_ratio(a, b, m);
            if (r.has_value() != p.ratio.has_value() || (r && (r->lo != p.ratio->lo || r->hi != p.ratio->hi))) {
                err = "ratio bounds mismatch";
                return;
            }
            if (c.kappa && (!r || r->lo < 1 / *c.kappa || r->hi > *c.kappa)) {
                err = "ratio bounds outside [1/kappa, kappa]";
                return;
            }
        }
        for (auto& ch : n.children) {
            if (ch.comp.level != n.comp.level + n.k * c.step) {
                err = "child level inconsistent with k";
                return;
            }
            for (size_t i = 0; i < ch.comp.box.size(); ++i)
                if (!n.comp.box[i].contains(ch.comp.box[i])) {
                    err = "child box escapes parent box";
                    return;
                }
            self(self, ch, depth + 1);
        }
    };
    rec(rec, c.root, 0);
    return err;
}

// ---------------------------------------------------------------- I/O

json box_to_json(const Box& b) {
    json j = json::array();
    for (auto& iv : b) j.push_back(interval_to_json(iv));
    return j;
}

Box box_from_json(const json& j) {
    Box b;
    for (auto& iv : j) b.push_back(interval_from_json(iv));
    return b;
}

json matrix_to_json(const IntervalMatrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(interval_to_json(m(i, j)));
        rows.push_back(row);
    }
    return rows;
}

IntervalMatrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw Error("ConfigError", "matrix must be a non-empty array of rows");
    const auto n = static_cast<Eigen::Index>(j.size());
    IntervalMatrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const json& row = j[static_cast<size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw Error("ConfigError", "matrix must be square");
        for (Eigen::Index k = 0; k < n; ++k) {
            const json& e = row[static_cast<size_t>(k)];
            // an entry is a rational or an [lo, hi] enclosure of two rationals
            if (e.is_array() && e.size() == 2 && !e[0].is_number_integer()) m(i, k) = interval_from_json(e);
            else if (e.is_array() && e.size() == 2 && e[0].is_array()) m(i, k) = interval_from_json(e);
            else m(i, k) = RatInterval(rat_from_json(e));
        }
    }
    return m;
}

namespace {

json component_to_json(const Component& c) {
    json cubes = json::array();
    for (auto& q : c.cubes) {
        json e = json::array({c.level});
        for (auto v : q) e.push_back(v);
        cubes.push_back(e);
    }
    return {{"level", c.level}, {"cubes", cubes}, {"box", box_to_json(c.box)}, {"src", box_to_json(c.src)}};
}

Component component_from_json(const json& j) {
    Component c;
    c.level = j.at("level").get<int>();
    for (auto& e : j.at("cubes")) {
        if (e.at(0).get<int>() != c.level) throw Error("ConfigError", "cube level mismatch");
        c.cubes.emplace_back(e.begin() + 1, e.end());
    }
    c.box = box_from_json(j.at("box"));
    c.src = box_from_json(j.at("src"));
    return c;
}

json node_to_json(const UndNode& n) {
    json pairs = json::array();
    for (auto& p : n.pairs) {
        json r = nullptr;
        if (p.ratio) r = json::array({rat_to_json(p.ratio->lo), rat_to_json(p.ratio->hi)});
        pairs.push_back({{"p", p.p}, {"q", p.q}, {"d_min", rat_to_json(p.d_min)}, {"ratio", r}});
    }
    json children = json::array();
    for (auto& ch : n.children) children.push_back(node_to_json(ch));
    json j = component_to_json(n.comp);
    j["k"] = n.k;
    j["pairs"] = pairs;
    j["children"] = children;
    return j;
}

UndNode node_from_json(const json& j) {
    UndNode n;
    n.comp = component_from_json(j);
    n.k = j.at("k").get<int>();
    for (auto& p : j.at("pairs")) {
        PairBound b{p.at("p").get<int>(), p.at("q").get<int>(), rat_from_json(p.at("d_min")), std::nullopt};
        if (!p.at("ratio").is_null()) b.ratio = RatioBounds{rat_from_json(p["ratio"][0]), rat_from_json(p["ratio"][1])};
        n.pairs.push_back(std::move(b));
    }
    for (auto& ch : j.at("children")) n.children.push_back(node_from_json(ch));
    return n;
}

std::string dec(const Rat& r) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", to_double(r));
    return buf;
}

void box_row(std::ostringstream& os, const Component& c) {
    os << c.level;
    for (auto& iv : c.box) os << ',' << dec(iv.lo) << ',' << dec(iv.hi);
    os << '\n';
}

std::string box_header(int d) {
    std::string h = "level";
    for (int i = 1; i <= d; ++i) h += ",lo_" + std::to_string(i) + ",hi_" + std::to_string(i);
    return h + "\n";
}

} // namespace

json certificate_to_json(const UndCertificate& c) {
    json j{{"dim", c.dim},   {"depth", c.depth}, {"step", c.step},
           {"bits", c.bits}, {"margin", rat_to_json(c.margin)}, {"root", node_to_json(c.root)}};
    j["kappa"] = c.kappa ? rat_to_json(*c.kappa) : json(nullptr);
    j["matrix"] = c.matrix ? matrix_to_json(*c.matrix) : json(nullptr);
    return j;
}

UndCertificate certificate_from_json(const json& j) {
    try {
        UndCertificate c;
        c.dim = j.at("dim").get<int>();
        c.depth = j.at("depth").get<int>();
        c.step = j.at("step").get<int>();
        c.bits = j.at("bits").get<int>();
        c.margin = rat_from_json(j.at("margin"));
        if (!j.at("kappa").is_null()) c.kappa = rat_from_json(j["kappa"]);
        if (!j.at("matrix").is_null()) c.matrix = matrix_from_json(j["matrix"]);
        c.root = node_from_json(j.at("root"));
        return c;
    } catch (const json::exception& e) {
        throw Error("ConfigError", std::string("malformed certificate: ") + e.what());
    }
}

std::string certificate_boxes_csv(const UndCertificate& c) {
    std::ostringstream os;
    os << box_header(c.dim);
    auto rec = [&](auto&& self, const UndNode& n) -> void {
        box_row(os, n.comp);
        for (auto& ch : n.children) self(self, ch);
    };
    rec(rec, c.root);
    return os.str();
}

std::string tree_boxes_csv(const NestedRep::TreeNode& t) {
    std::ostringstream os;
    os << box_header(static_cast<int>(t.comp.box.size()));
    auto rec = [&](auto&& self, const NestedRep::TreeNode& n) -> void {
        box_row(os, n.comp);
        for (auto& ch : n.children) self(self, ch);
    };
    rec(rec, t);
    return os.str();
}

// ---------------------------------------------------------------- rotation search

std::vector<RotationMatrix> default_rotation_candidates(int d, int n_random, std::uint64_t seed) {
    std::vector<RotationMatrix> out{RotationMatrix::identity(d)};
    if (d >= 2) out.push_back(RotationMatrix::tilt(d, default_precision_bits()));
    for (int i = 0; i < n_random; ++i) out.push_back(RotationMatrix::random(d, seed + static_cast<std::uint64_t>(i)));
    return out;
}

RotationResult rotation_search(const GeometrySource& src, const std::vector<RotationMatrix>& candidates,
                               const RotationOptions& opt) {
    if (candidates.empty()) throw Error("AllCandidatesFailed", "no rotation candidates given");
    struct Outcome {
        std::optional<UndCertificate> cert;
        std::string failure;
    };
    std::vector<Outcome> outcomes(candidates.size());
    auto attempt = [&](size_t i) {
        try {
            NestedRep rep(src.transformed(candidates[i]), opt.m0,
                          opt.m0 + opt.s * opt.und.depth * opt.und.max_k, opt.s, opt.bits);
            outcomes[i].cert = und_certificate(rep, opt.und);
        } catch (const Error& e) {
            outcomes[i].failure = e.what();
        }
    };
    std::vector<RotationAttempt> attempts;
    if (opt.threads > 1) {
        parallel_for(candidates.size(), opt.threads, attempt);
    }
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (opt.threads <= 1) attempt(i);
        attempts.push_back({candidates[i].label(), outcomes[i].cert.has_value(), outcomes[i].failure});
        if (outcomes[i].cert) return {candidates[i], std::move(*outcomes[i].cert), std::move(attempts)};
    }
    std::string detail;
    for (auto& a : attempts) detail += "[" + a.label + "] " + a.failure + " ";
    throw Error("AllCandidatesFailed", detail);
}

} // namespace cantor
