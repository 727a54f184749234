#include "cantor_forge/containment1d.hpp"

#include "cantor_forge/parallel.hpp"

namespace cantor {

namespace {

void check_depth(const GapTree& K, const GapTree& Kt, int N) {
    if (N < 0 || N > K.depth() || N > Kt.depth())
        throw Error("LevelOutOfRange", "depth " + std::to_string(N) + " exceeds tree depth", N);
}

} // namespace

DominanceReport check_dominance(const GapTree& K, const GapTree& Kt, int N) {
    check_depth(K, Kt, N);
    DominanceReport r;
    r.hull_contained = Kt.hull().contains(K.hull());
    r.overall = r.hull_contained;
    for (int n = 0; n < N; ++n) {
        DominanceLevel l{n, K.min_gap(n), Kt.max_gap(n), false};
        l.pass = l.max_gap_Kt < l.min_gap_K;
        r.overall = r.overall && l.pass;
        r.levels.push_back(std::move(l));
    }
    return r;
}

WitnessChain find_chain(const GapTree& K, const GapTree& Kt, int N) {
    DominanceReport d = check_dominance(K, Kt, N);
    if (!d.overall) {
        int bad = -1;
        for (auto& l : d.levels)
            if (!l.pass) {
                bad = l.n;
                break;
            }
        throw Error("DominanceNotVerified",
                    d.hull_contained ? "gap dominance fails at level " + std::to_string(bad) : "hull not contained",
                    bad);
    }
    return chain_descent(K, Kt, N);
}

GapTree build_companion(const GapTree& K, int N, const Rat& margin, const Rat& factor, bool cap) {
    if (N < 1 || N > K.depth()) throw Error("LevelOutOfRange", "companion depth outside [1, depth K]", N);
    if (margin <= 0) throw Error("InvalidParameter", "margin must be positive");
    if (!(factor > 0 && factor < 1)) throw Error("InvalidParameter", "factor must lie in (0, 1)");
    SymmetricSpec spec{{K.hull().lo - margin, K.hull().hi + margin}, {}};
    Rat len = spec.hull.length();
    for (int n = 0; n < N; ++n) {
        Rat l = factor * K.min_gap(n);
        if (l >= len) {
            if (!cap)
                throw Error("GapConstraintViolation", "companion gap does not fit at level " + std::to_string(n), n);
            l = len / 2;
        }
        spec.gaps.push_back(l);
        len = (len - l) / 2;
    }
    GapTree out = build_symmetric(spec);
    if (!check_dominance(K, out, N).overall) throw Error("InternalError", "companion failed its dominance check");
    return out;
}

Interval1 certify_difference_interior(const GapTree& K, const GapTree& Kt, int N) {
    DominanceReport d = check_dominance(K, Kt, N);
    if (!(Kt.hull().lo < K.hull().lo && K.hull().hi < Kt.hull().hi))
        throw Error("NoMargin", "hull containment is not strict on both sides");
    if (!d.overall) throw Error("DominanceNotVerified", "gap dominance fails");
    return {K.hull().hi - Kt.hull().hi, K.hull().lo - Kt.hull().lo};
}

Rat gap_slack(const GapTree& K, const GapTree& Kt, int N) {
    check_depth(K, Kt, N);
    if (N < 1) throw Error("LevelOutOfRange", "slack needs at least one level", N);
    Rat s = K.min_gap(0) / Kt.max_gap(0);
    for (int n = 1; n < N; ++n) s = min(s, K.min_gap(n) / Kt.max_gap(n));
    return s;
}

Rat grid_point(const Rat& lo, const Rat& hi, int count, int i) {
    if (count <= 1) return lo;
    return lo + (hi - lo) * rat(i, count - 1);
}

SweepResult robustness_sweep(const GapTree& K, const GapTree& Kt, const PerturbationSpec& p, int N, int threads) {
    if (p.n_lambda < 1 || p.n_t < 1 || p.lambda_hi < p.lambda_lo || p.t_hi < p.t_lo)
        throw Error("InvalidParameter", "empty perturbation grid");
    SweepResult out;
    out.slack_lambda = gap_slack(K, Kt, N);
    const size_t total = static_cast<size_t>(p.n_lambda) * static_cast<size_t>(p.n_t);
    out.results.resize(total);
    parallel_for(total, threads, [&](size_t idx) {
        SweepPoint& pt = out.results[idx];
        int i = static_cast<int>(idx / static_cast<size_t>(p.n_t)), j = static_cast<int>(idx % static_cast<size_t>(p.n_t));
        pt.lambda = grid_point(p.lambda_lo, p.lambda_hi, p.n_lambda, i);
        pt.t = grid_point(p.t_lo, p.t_hi, p.n_t, j);
        try {
            WitnessChain c = find_chain(K, affine_image(Kt, pt.lambda, pt.t), N);
            pt.ok = true;
            pt.bound = c.bound;
        } catch (const Error& e) {
            pt.reason = e.kind();
        }
    });
    return out;
}

json dominance_to_json(const DominanceReport& r) {
    json levels = json::array();
    for (auto& l : r.levels)
        levels.push_back({{"n", l.n},
                          {"min_gap_K", rat_to_json(l.min_gap_K)},
                          {"max_gap_Kt", rat_to_json(l.max_gap_Kt)},
                          {"pass", l.pass}});
    return {{"hull_contained", r.hull_contained}, {"levels", levels}, {"overall", r.overall}};
}

json chain_to_json(const WitnessChain& c) {
    json pairs = json::array();
    for (auto& [a, b] : c.pairs) pairs.push_back({a.str(), b.str()});
    return {{"pairs", pairs},
            {"witness", {rat_to_json(c.witness_K), rat_to_json(c.witness_Kt)}},
            {"bound", rat_to_json(c.bound)}};
}

} // namespace cantor
