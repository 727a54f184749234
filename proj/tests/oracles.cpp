#include "oracles.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

namespace oracle {

using cantor::Error;
using cantor::UndCertificate;
using cantor::UndNode;

namespace {

using i128 = __int128;

i128 to_i128(const mpz_class& z) {
    if (mpz_sizeinbase(z.get_mpz_t(), 2) > 120) throw Error("OracleOverflow", "value too large for 128 bits");
    std::uint64_t words[2] = {0, 0};
    size_t count = 0;
    mpz_export(words, &count, -1, sizeof(std::uint64_t), 0, 0, z.get_mpz_t());
    i128 v = (static_cast<i128>(words[1]) << 64) | words[0];
    return sgn(z) < 0 ? -v : v;
}

mpz_class from_i128(i128 v) {
    bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
    std::uint64_t words[2] = {static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(u >> 64)};
    mpz_class z;
    mpz_import(z.get_mpz_t(), 2, -1, sizeof(std::uint64_t), 0, 0, words);
    return neg ? mpz_class(-z) : z;
}

struct Seg {
    i128 lo, hi;
};

// Sorted, overlapping or touching segments coalesced.
void coalesce(std::vector<Seg>& v) {
    std::vector<Seg> out;
    for (auto& s : v) {
        if (!out.empty() && s.lo <= out.back().hi) out.back().hi = std::max(out.back().hi, s.hi);
        else out.push_back(s);
    }
    v.swap(out);
}

} // namespace

std::vector<Interval1> minkowski_difference(const std::vector<Interval1>& A, const std::vector<Interval1>& B) {
    mpz_class L = 1;
    for (auto* U : {&A, &B})
        for (auto& iv : *U) {
            mpz_lcm(L.get_mpz_t(), L.get_mpz_t(), iv.lo.get_den_mpz_t());
            mpz_lcm(L.get_mpz_t(), L.get_mpz_t(), iv.hi.get_den_mpz_t());
        }
    auto scaled = [&](const Rat& r) { return to_i128(mpz_class(r.get_num() * (L / r.get_den()))); };
    std::vector<Seg> a, b;
    for (auto& iv : A) a.push_back({scaled(iv.lo), scaled(iv.hi)});
    for (auto& iv : B) b.push_back({scaled(iv.lo), scaled(iv.hi)});
    auto by_lo = [](const Seg& x, const Seg& y) { return x.lo < y.lo; };
    std::sort(a.begin(), a.end(), by_lo);
    std::vector<Seg> acc, shifted, merged;
    for (auto& s : b) {
        shifted.clear();
        for (auto& r : a) shifted.push_back({r.lo - s.hi, r.hi - s.lo});
        merged.clear();
        std::merge(acc.begin(), acc.end(), shifted.begin(), shifted.end(), std::back_inserter(merged), by_lo);
        coalesce(merged);
        acc.swap(merged);
    }
    std::vector<Interval1> out;
    for (auto& s : acc) out.push_back({Rat(from_i128(s.lo), L), Rat(from_i128(s.hi), L)});
    return out;
}

bool union_contains(const std::vector<Interval1>& U, const Rat& t) {
    auto it = std::upper_bound(U.begin(), U.end(), t, [](const Rat& x, const Interval1& iv) { return x < iv.lo; });
    if (it == U.begin()) return false;
    --it;
    return it->lo <= t && t <= it->hi;
}

bool covers_meet(const UndCertificate& cert, const cantor::ProductCompanion& comp, int n, const std::vector<Rat>& t) {
    std::vector<std::vector<Interval1>> axes;
    for (int i = 0; i < comp.dim; ++i) {
        auto cells = cantor::affine_image(comp.base, 1, comp.offset[static_cast<size_t>(i)] + t[static_cast<size_t>(i)])
                         .level_intervals(n);
        axes.push_back(std::move(cells));
    }
    // a box meets a product of unions iff every projection meets the matching union
    auto meets = [](const std::vector<Interval1>& U, const Interval1& x) {
        auto it = std::lower_bound(U.begin(), U.end(), x.lo, [](const Interval1& iv, const Rat& v) { return iv.hi < v; });
        return it != U.end() && it->lo <= x.hi;
    };
    for (auto* node : cantor::certificate_level(cert, n)) {
        bool all = true;
        for (int i = 0; i < comp.dim && all; ++i)
            all = meets(axes[static_cast<size_t>(i)], node->comp.box[static_cast<size_t>(i)]);
        if (all) return true;
    }
    return false;
}

namespace {

Rat axis_gap(const Interval1& a, const Interval1& b) {
    if (a.hi < b.lo) return b.lo - a.hi;
    if (b.hi < a.lo) return a.lo - b.hi;
    return 0;
}

// Box bounds min D_i^-/D_j^+ and max D_i^+/D_j^-, tightened by evaluating the
// coordinate differences of the source boxes at every vertex when all are sign-definite.
std::optional<std::pair<Rat, Rat>> ratio_bounds(const cantor::Component& a, const cantor::Component& b,
                                                const std::optional<cantor::IntervalMatrix>& m) {
    const size_t d = a.box.size();
    if (d == 1) return std::pair<Rat, Rat>{1, 1};
    std::vector<Rat> lo(d), hi(d);
    for (size_t i = 0; i < d; ++i) {
        lo[i] = axis_gap(a.box[i], b.box[i]);
        if (lo[i] == 0) return std::nullopt;
        hi[i] = std::max(Rat(a.box[i].hi - b.box[i].lo), Rat(b.box[i].hi - a.box[i].lo));
    }
    std::pair<Rat, Rat> r{lo[0] / hi[1], hi[0] / lo[1]};
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < d; ++j)
            if (i != j) {
                r.first = std::min(r.first, Rat(lo[i] / hi[j]));
                r.second = std::max(r.second, Rat(hi[i] / lo[j]));
            }
    // vertex evaluation with interval matrix entries: f_i in [sum lo, sum hi]
    std::vector<std::vector<std::pair<Rat, Rat>>> verts;
    for (std::uint64_t v = 0; v < (std::uint64_t{1} << d); ++v) {
        std::vector<std::pair<Rat, Rat>> f(d, {0, 0});
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) {
                Rat w = (v >> j) & 1 ? Rat(a.src[j].hi - b.src[j].lo) : Rat(a.src[j].lo - b.src[j].hi);
                Rat mlo = 1, mhi = 1;
                if (m) {
                    mlo = (*m)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)).lo;
                    mhi = (*m)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)).hi;
                } else if (i != j) {
                    mlo = mhi = 0;
                }
                Rat x = mlo * w, y = mhi * w;
                f[i].first += std::min(x, y);
                f[i].second += std::max(x, y);
            }
        verts.push_back(std::move(f));
    }
    for (size_t i = 0; i < d; ++i) {
        bool pos = true, neg = true;
        for (auto& f : verts) {
            pos = pos && f[i].first > 0;
            neg = neg && f[i].second < 0;
        }
        if (!pos && !neg) return r;
    }
    std::optional<std::pair<Rat, Rat>> t;
    for (auto& f : verts)
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) {
                if (i == j) continue;
                Rat ilo = std::min(abs(f[i].first), abs(f[i].second)), ihi = std::max(abs(f[i].first), abs(f[i].second));
                Rat jlo = std::min(abs(f[j].first), abs(f[j].second)), jhi = std::max(abs(f[j].first), abs(f[j].second));
                Rat l = ilo / jhi, h = ihi / jlo;
                if (!t) t = std::pair<Rat, Rat>{l, h};
                else {
                    t->first = std::min(t->first, l);
                    t->second = std::max(t->second, h);
                }
            }
    r.first = std::max(r.first, t->first);
    r.second = std::min(r.second, t->second);
    return r;
}

bool inside_cubes(const cantor::Component& c) {
    // the stored box must lie in the closed hull of its cube list
    const size_t d = c.box.size();
    for (size_t i = 0; i < d; ++i) {
        std::int64_t lo = c.cubes.front()[i], hi = c.cubes.front()[i];
        for (auto& q : c.cubes) {
            lo = std::min(lo, q[i]);
            hi = std::max(hi, q[i]);
        }
        Rat side = cantor::pow2(-c.level);
        if (c.box[i].lo < Rat(lo) * side || c.box[i].hi > Rat(hi + 1) * side) return false;
    }
    return true;
}

} // namespace

std::string check_certificate(const UndCertificate& cert) {
    std::ostringstream err;
    const size_t r = static_cast<size_t>(cert.dim + 1);
    auto rec = [&](auto&& self, const UndNode& n, int depth, const std::string& path) -> bool {
        if (n.comp.cubes.empty() || !inside_cubes(n.comp)) {
            err << path << ": box outside its cube list";
            return false;
        }
        if (depth == cert.depth) return n.children.empty();
        if (n.children.size() != r) {
            err << path << ": expected " << r << " children";
            return false;
        }
        if (n.pairs.size() != r * (r - 1) / 2) {
            err << path << ": wrong number of pair records";
            return false;
        }
        for (auto& p : n.pairs) {
            const auto& a = n.children[static_cast<size_t>(p.p)].comp;
            const auto& b = n.children[static_cast<size_t>(p.q)].comp;
            Rat dm = axis_gap(a.box[0], b.box[0]);
            for (size_t i = 1; i < a.box.size(); ++i) {
                dm = std::min(dm, axis_gap(a.box[i], b.box[i]));
            }
            if (dm != p.d_min || !(dm > cert.margin)) {
                err << path << ": pair " << p.p << "," << p.q << " separation mismatch";
                return false;
            }
            if (cert.kappa) {
                if (!p.ratio || p.ratio->lo < 1 / *cert.kappa || p.ratio->hi > *cert.kappa) {
                    err << path << ": pair " << p.p << "," << p.q << " ratio outside kappa";
                    return false;
                }
                // recompute the bounds here rather than trusting the stored ones
                auto rb = ratio_bounds(a, b, cert.matrix);
                if (!rb || rb->first < 1 / *cert.kappa || rb->second > *cert.kappa) {
                    err << path << ": pair " << p.p << "," << p.q << " recomputed ratio outside kappa";
                    return false;
                }
            }
        }
        for (size_t c = 0; c < n.children.size(); ++c) {
            // children refine their parent: every child cube sits inside a parent cube
            const auto& ch = n.children[c].comp;
            int shift = ch.level - n.comp.level;
            if (shift <= 0) {
                err << path << "/" << c << ": child level not finer than parent";
                return false;
            }
            for (auto& q : ch.cubes) {
                cantor::Cube up(q.size());
                for (size_t i = 0; i < q.size(); ++i) up[i] = q[i] >> shift;
                if (!std::binary_search(n.comp.cubes.begin(), n.comp.cubes.end(), up)) {
                    err << path << "/" << c << ": child cube outside the parent cover";
                    return false;
                }
            }
            if (!self(self, n.children[c], depth + 1, path + "/" + std::to_string(c))) return false;
        }
        return true;
    };
    if (!rec(rec, cert.root, 0, "root") && err.str().empty()) err << "malformed leaf";
    return err.str();
}

std::vector<Rat> mapped_separations(const UndCertificate& cert, const std::vector<std::vector<Rat>>& J) {
    const size_t d = static_cast<size_t>(cert.dim);
    std::vector<Rat> out;
    for (int k = 0; k < cert.depth; ++k) {
        std::optional<Rat> level_min;
        for (auto* n : cantor::certificate_level(cert, k))
            for (auto& p : n->pairs) {
                const auto& a = n->children[static_cast<size_t>(p.p)].comp.src;
                const auto& b = n->children[static_cast<size_t>(p.q)].comp.src;
                // exact range of (J(x - x'))_i over the two source boxes
                Rat sep;
                for (size_t i = 0; i < d; ++i) {
                    Rat lo = 0, hi = 0;
                    for (size_t j = 0; j < d; ++j) {
                        Rat wlo = a[j].lo - b[j].hi, whi = a[j].hi - b[j].lo;
                        Rat x = J[i][j] * wlo, y = J[i][j] * whi;
                        lo += std::min(x, y);
                        hi += std::max(x, y);
                    }
                    Rat g = lo > 0 ? lo : hi < 0 ? Rat(-hi) : Rat(0);
                    if (i == 0 || g < sep) sep = g;
                }
                if (!level_min || sep < *level_min) level_min = sep;
            }
        out.push_back(level_min.value_or(Rat(0)));
    }
    return out;
}

} // namespace oracle
