#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "cantor_forge/containment1d.hpp"

namespace cantor {

using HighPrec = boost::multiprecision::cpp_bin_float_50;

template <class S>
S lift(const Rat& r);
template <>
inline double lift<double>(const Rat& r) { return r.get_d(); }
template <>
inline RatInterval lift<RatInterval>(const Rat& r) { return RatInterval(r); }
template <>
inline HighPrec lift<HighPrec>(const Rat& r) { return HighPrec(r.get_num().get_str()) / HighPrec(r.get_den().get_str()); }

/// Arithmetic expression over the variables a (parameter), x and y.
struct Expr {
    enum Op { Num, A, X, Y, Add, Sub, Mul, Div, Pow, Neg, Sqrt, Exp, Log, Sin, Cos, Abs } op = Num;
    Rat value;
    std::shared_ptr<const Expr> l, r;
};

/// Grammar: sums/products/quotients, right-associative ^, unary minus, parentheses,
/// numbers, a x y, and sqrt exp log sin cos abs.
std::shared_ptr<const Expr> parse_expr(std::string_view text);

template <class S>
S eval(const Expr& e, const S& a, const S& x, const S& y) {
    using std::abs;
    using std::cos;
    using std::exp;
    using std::log;
    using std::pow;
    using std::sin;
    using std::sqrt;
    switch (e.op) {
    case Expr::Num: return lift<S>(e.value);
    case Expr::A: return a;
    case Expr::X: return x;
    case Expr::Y: return y;
    case Expr::Add: return S(eval(*e.l, a, x, y) + eval(*e.r, a, x, y));
    case Expr::Sub: return S(eval(*e.l, a, x, y) - eval(*e.r, a, x, y));
    case Expr::Mul: return S(eval(*e.l, a, x, y) * eval(*e.r, a, x, y));
    case Expr::Div: return S(eval(*e.l, a, x, y) / eval(*e.r, a, x, y));
    case Expr::Pow: return S(pow(eval(*e.l, a, x, y), eval(*e.r, a, x, y)));
    case Expr::Neg: return S(-eval(*e.l, a, x, y));
    case Expr::Sqrt: return S(sqrt(eval(*e.l, a, x, y)));
    case Expr::Exp: return S(exp(eval(*e.l, a, x, y)));
    case Expr::Log: return S(log(eval(*e.l, a, x, y)));
    case Expr::Sin: return S(sin(eval(*e.l, a, x, y)));
    case Expr::Cos: return S(cos(eval(*e.l, a, x, y)));
    case Expr::Abs: return S(abs(eval(*e.l, a, x, y)));
    }
    throw Error("InternalError", "bad expression node");
}

enum class HFamily { AffineSum, AlphaNorm, Custom };

/// Scalar map H(a, x, y). For the alpha-norm family `dim` records the ambient even
/// dimension; the extra coordinates pass through unchanged and drop out of the slice.
struct HSpec {
    HFamily family = HFamily::AffineSum;
    int dim = 2;
    Interval1 q1{0, 1}, q2{0, 2}; ///< domain of x and search bracket for y
    std::shared_ptr<const Expr> h, hx, hy;
    std::string text, text_x, text_y;

    static HSpec affine_sum(const Interval1& q1, const Interval1& q2);
    static HSpec alpha_norm(int dim, const Interval1& q1, const Interval1& q2);
    static HSpec custom(const std::string& h, const std::string& hx, const std::string& hy, const Interval1& q1,
                        const Interval1& q2);
    static HSpec from_config(const json& j);
    std::string family_name() const;

    template <class S>
    S H(const S& a, const S& x, const S& y) const { return eval(*h, a, x, y); }
    template <class S>
    S Hx(const S& a, const S& x, const S& y) const { return eval(*hx, a, x, y); }
    template <class S>
    S Hy(const S& a, const S& x, const S& y) const { return eval(*hy, a, x, y); }
};

struct SliceResult {
    double y, residual;
};

struct SolverOptions {
    double tol = 1e-12;
    int max_iters = 200;
};

/// Safeguarded Newton on the bracket q2: a Newton step is kept only when it stays
/// inside the current sign-change bracket, otherwise the bracket is bisected.
template <class S>
S solve_slice(const HSpec& h, const S& c, const S& a, const S& x, const S& tol, int max_iters) {
    using std::abs;
    S lo = lift<S>(h.q2.lo), hi = lift<S>(h.q2.hi);
    S flo = S(h.H(a, x, lo) - c), fhi = S(h.H(a, x, hi) - c);
    if (flo == 0) return lo;
    if (fhi == 0) return hi;
    if ((flo < 0) == (fhi < 0)) throw Error("NoBracket", "no sign change of H - c on the y bracket");
    S y = S((lo + hi) / 2);
    for (int it = 0; it < max_iters; ++it) {
        S f = S(h.H(a, x, y) - c);
        if (abs(f) <= tol) return y;
        if ((f < 0) == (flo < 0)) {
            lo = y;
            flo = f;
        } else {
            hi = y;
        }
        S df = h.Hy(a, x, y);
        S next = df != 0 ? S(y - f / df) : S((lo + hi) / 2);
        if (!(next > lo && next < hi)) next = S((lo + hi) / 2);
        y = next;
    }
    throw Error("NoConvergence", "slice solver hit " + std::to_string(max_iters) + " iterations");
}

SliceResult implicit_slice(const HSpec& h, double c, double a, double x, const SolverOptions& opt = {});

/// Verified enclosure of y = g_{c,a}(x) over the boxes.
Interval1 slice_enclosure(const HSpec& h, const Interval1& c_box, const Interval1& a_box, const Interval1& x_box);

/// Guaranteed lower bound of |H_x / H_y| over the boxes (y ranging over the slice enclosure).
Rat derivative_bound(const HSpec& h, const Interval1& c_box, const Interval1& a_box, const Interval1& x_box);

/// Whether g_{c,a} decreases in x on the boxes (sign of H_x equals sign of H_y).
bool slice_decreasing(const HSpec& h, const Interval1& c_box, const Interval1& a_box, const Interval1& x_box);

/// K2: centrally symmetric, hull = slice enclosure of conv K1, level-n gap
/// factor * eta * min_gap(K1, n) (halved to fit when needed).
GapTree nonlinear_companion(const GapTree& K1, const HSpec& h, const Interval1& c_box, const Interval1& a_box, int N,
                            const Rat& factor = Rat(1, 2));

/// Image of K1 under x -> g_{c,a}(x), node intervals enclosed outward.
class SliceImageTree {
public:
    struct Node {
        NodeAddress addr;
        Interval1 iv;
        GapTree::Node src;
    };
    SliceImageTree(const GapTree& k1, const HSpec& h, Rat c, Rat a, bool decreasing);
    Node root() const;
    std::pair<Node, Node> children(const Node& n) const;

private:
    Node make(NodeAddress addr, GapTree::Node src) const;
    const GapTree& k1_;
    const HSpec& h_;
    Rat c_, a_;
    bool dec_;
};

struct GridSpec {
    Rat lo, hi;
    int count = 1;
};

struct HWitness {
    Rat c, alpha;
    bool ok = false;
    Rat k1;
    std::string k2;      ///< 40 significant digits
    double residual = 0; ///< |H(alpha, k1, k2) - c| in 50-digit arithmetic
    Rat bound;           ///< witness bound of the chain
    std::string reason;
};

struct HReport {
    std::vector<HWitness> points; ///< alpha outer, c inner
    std::optional<Interval1> certified_c; ///< longest run of verified c values (first alpha row)
};

HReport verify_H_interior(const HSpec& h, const GapTree& K1, const GapTree& K2, const GridSpec& c_grid,
                          const GridSpec& a_grid, int N, double tol, int threads = 1);

struct PinnedOptions {
    int d = 2;
    Rat alpha = 2;
    std::optional<GapTree> k1; ///< defaults to the ratio-1/10 set on [0.55, 0.65], depth 12
    int grid = 101;
    Rat c_halfwidth = Rat(1, 20);
    double tol = 1e-8;
    int threads = 1;
};

struct PinnedReport {
    Rat u1, c0;
    Interval1 c_box;
    Rat eta;
    GapTree k2;
    HReport verify;
    std::optional<std::pair<double, double>> distance_coverage;
};

PinnedReport pinned_distance_demo(const PinnedOptions& opt);

struct AffineMap {
    Rat lambda, t;
};

struct ErdosPoint {
    AffineMap g;
    long long k = 0;
    Rat residue;
    Rat bound;
};

struct ErdosReport {
    GapTree companion;
    Rat slack;
    Interval1 certified;  ///< translation interior for lambda = 1
    Interval1 uniform;    ///< shifts valid for every map in the family
    Rat spacing;
    long long k_lo = 0, k_hi = 0; ///< materialized translates within the window
    std::vector<ErdosPoint> results;
};

ErdosReport erdos_obstruction(const GapTree& K, const std::vector<AffineMap>& family, const Interval1& window, int N,
                              const Rat& margin = Rat(1, 10), const Rat& factor = Rat(1, 2), int threads = 1);

json h_report_to_json(const HReport& r);

} // namespace cantor
