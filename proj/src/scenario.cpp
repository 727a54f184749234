#include "cantor_forge/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "cantor_forge/applications.hpp"
#include "cantor_forge/containment_rd.hpp"
#include "cantor_forge/parallel.hpp"

namespace cantor {

namespace {

constexpr std::uint64_t kDefaultSeed = 20240611;

struct Ctx {
    const json& cfg;
    int threads;
    std::uint64_t seed;
    json results = json::object();
    json geometry; // null unless the pipeline has something to plot
    bool failed = false;
};

[[noreturn]] void config_error(const std::string& msg) { throw Error("ConfigError", msg); }

const json& need(const json& j, const char* key) {
    if (!j.contains(key)) config_error(std::string("missing field '") + key + "'");
    return j[key];
}

int int_or(const json& j, const char* key, int def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number_integer()) config_error(std::string("field '") + key + "' must be an integer");
    return j[key].get<int>();
}

Rat rat_or(const json& j, const char* key, const Rat& def) { return j.contains(key) ? rat_from_json(j[key]) : def; }

// [lo, hi, count]
GridSpec grid_of(const json& j, const char* key) {
    const json& g = need(j, key);
    if (!g.is_array() || g.size() != 3 || !g[2].is_number_integer())
        config_error(std::string("field '") + key + "' must be [lo, hi, count]");
    return {rat_from_json(g[0]), rat_from_json(g[1]), g[2].get<int>()};
}

json rat_list(const std::vector<Rat>& v) {
    json out = json::array();
    for (auto& r : v) out.push_back(rat_to_json(r));
    return out;
}

json intervals_geometry(const GapTree& t, int level) {
    level = std::min(level, t.depth());
    return {{"kind", "intervals"}, {"level", level}, {"tree", tree_to_json(t.truncated(std::max(level, 1)))}};
}

json boxes_geometry(int dim, const std::vector<Component>& comps) {
    json rows = json::array();
    for (auto& c : comps) rows.push_back({{"level", c.level}, {"box", box_to_json(c.box)}});
    return {{"kind", "boxes"}, {"dim", dim}, {"rows", rows}};
}

// Symmetric companions are summarized by their level gaps; listing every gap
// would take 2^N entries.
json companion_summary(const GapTree& t) {
    json gaps = json::array();
    for (int n = 0; n < t.depth(); ++n) gaps.push_back(rat_to_json(t.max_gap(n)));
    return {{"hull", interval_to_json(t.hull())}, {"depth", t.depth()}, {"gaps", gaps}};
}

// Second tree of a 1-D pair: explicit "kt" or a companion of K.
GapTree second_tree(const json& cfg, const GapTree& K, int N) {
    if (cfg.contains("kt")) return tree_from_config(cfg["kt"]);
    json c = cfg.value("companion", json::object());
    return build_companion(K, N, rat_or(c, "margin", Rat(1, 10)), rat_or(c, "factor", Rat(1, 2)),
                           c.value("cap", true));
}

void companion_1d(Ctx& x) {
    GapTree K = tree_from_config(need(x.cfg, "k"));
    int N = int_or(x.cfg, "depth", K.depth());
    GapTree Kt = second_tree(x.cfg, K, N);
    x.geometry = intervals_geometry(K, int_or(x.cfg, "geometry_level", std::min(N, 4)));
    DominanceReport dom = check_dominance(K, Kt, N);
    x.results["companion"] = companion_summary(Kt);
    x.results["dominance"] = dominance_to_json(dom);
    x.results["chain"] = chain_to_json(find_chain(K, Kt, N));
    x.results["interior"] = interval_to_json(certify_difference_interior(K, Kt, N));
}

void interior_1d(Ctx& x) {
    GapTree K = tree_from_config(need(x.cfg, "k"));
    int N = int_or(x.cfg, "depth", K.depth());
    GapTree Kt = second_tree(x.cfg, K, N);
    x.geometry = intervals_geometry(K, int_or(x.cfg, "geometry_level", std::min(N, 4)));
    Interval1 J = certify_difference_interior(K, Kt, N);
    int count = int_or(x.cfg, "grid", 11);
    if (count < 1) config_error("grid must be >= 1");
    std::vector<std::string> fail(static_cast<size_t>(count));
    std::vector<Rat> bounds(static_cast<size_t>(count));
    parallel_for(static_cast<size_t>(count), x.threads, [&](size_t i) {
        Rat t = grid_point(J.lo, J.hi, count, static_cast<int>(i));
        try {
            bounds[i] = find_chain(K, affine_image(Kt, 1, t), N).bound;
        } catch (const Error& e) {
            fail[i] = e.kind();
        }
    });
    json failures = json::array();
    Rat worst = 0;
    for (int i = 0; i < count; ++i) {
        const size_t u = static_cast<size_t>(i);
        if (!fail[u].empty()) failures.push_back({{"t", rat_to_json(grid_point(J.lo, J.hi, count, i))}, {"reason", fail[u]}});
        else worst = max(worst, bounds[u]);
    }
    x.results["interior"] = interval_to_json(J);
    x.results["grid"] = {{"count", count}, {"verified", count - static_cast<int>(failures.size())},
                         {"max_bound", rat_to_json(worst)}, {"failures", failures}};
    x.failed = !failures.empty();
}

void sweep_1d(Ctx& x) {
    GapTree K = tree_from_config(need(x.cfg, "k"));
    int N = int_or(x.cfg, "depth", K.depth());
    GapTree Kt = second_tree(x.cfg, K, N);
    GridSpec l = grid_of(x.cfg, "lambda"), t = grid_of(x.cfg, "t");
    PerturbationSpec p{l.lo, l.hi, t.lo, t.hi, l.count, t.count};
    SweepResult r = robustness_sweep(K, Kt, p, N, x.threads);
    json grid = json::array();
    int ok = 0;
    for (auto& pt : r.results) {
        json row{{"lambda", rat_to_json(pt.lambda)}, {"t", rat_to_json(pt.t)}, {"ok", pt.ok}};
        if (pt.ok) row["bound"] = rat_to_json(pt.bound);
        else row["reason"] = pt.reason;
        grid.push_back(row);
        ok += pt.ok;
    }
    x.results["sweep"] = {{"slack_lambda", rat_to_json(r.slack_lambda)}, {"passed", ok}, {"grid", grid}};
}

NestedRep rep_from(const json& cfg, const GeometrySource& src, const UndOptions& o) {
    int m0 = int_or(cfg, "m0", 2), s = int_or(cfg, "step", 2);
    int leaf = int_or(cfg, "leaf", m0 + s * o.depth * o.max_k);
    return build_nested_rep(src, m0, leaf, s);
}

UndOptions und_from(const json& cfg) {
    UndOptions o;
    if (cfg.contains("kappa") && !cfg["kappa"].is_null()) o.kappa = rat_from_json(cfg["kappa"]);
    o.max_k = int_or(cfg, "max_k", 2);
    o.depth = int_or(cfg, "cert_depth", int_or(cfg, "depth", 3));
    if (cfg.contains("margin_bits")) o.margin = pow2(-int_or(cfg, "margin_bits", 40));
    return o;
}

json dk_json(const SeparationSequence& s) { return rat_list(s.d); }

void set_rep_geometry(Ctx& x, const NestedRep& rep) {
    int gl = int_or(x.cfg, "geometry_level", rep.start_level() + rep.step());
    if (gl < rep.start_level() || (gl - rep.start_level()) % rep.step() != 0)
        config_error("geometry_level must be m0 + k*step");
    int k = (gl - rep.start_level()) / rep.step();
    x.geometry = boxes_geometry(rep.dim(), k == 0 ? std::vector<Component>{rep.root()} : rep.descendants(rep.root(), k));
}

void nondegeneracy(Ctx& x) {
    GeometrySource src = GeometrySource::from_config(need(x.cfg, "geometry"));
    UndOptions o = und_from(x.cfg);
    NestedRep rep = rep_from(x.cfg, src, o);
    x.results["representation"] = {{"m0", rep.start_level()}, {"step", rep.step()}, {"leaf", rep.leaf_level()},
                                   {"root_cubes", rep.root().cubes.size()}};
    set_rep_geometry(x, rep);
    UndCertificate cert = und_certificate(rep, o);
    std::string check = verify_certificate(cert);
    x.results["dk"] = dk_json(dk_sequence(cert));
    x.results["verified"] = check.empty();
    if (!check.empty()) x.results["verifier"] = check;
    x.results["certificate"] = certificate_to_json(cert);
    x.failed = !check.empty();
}

void rotate_fix(Ctx& x) {
    GeometrySource src = GeometrySource::from_config(need(x.cfg, "geometry"));
    RotationOptions o;
    o.und = und_from(x.cfg);
    o.m0 = int_or(x.cfg, "m0", 2);
    o.s = int_or(x.cfg, "step", 2);
    o.threads = x.threads;
    std::vector<RotationMatrix> cands;
    if (x.cfg.contains("candidates")) {
        int n_random = 0;
        for (auto& c : x.cfg["candidates"]) {
            std::string name = c.get<std::string>();
            if (name == "identity") cands.push_back(RotationMatrix::identity(src.dim()));
            else if (name == "tilt") cands.push_back(RotationMatrix::tilt(src.dim(), default_precision_bits()));
            else if (name == "random") cands.push_back(RotationMatrix::random(src.dim(), x.seed + static_cast<std::uint64_t>(n_random++)));
            else config_error("unknown rotation candidate '" + name + "'");
        }
    } else {
        cands = default_rotation_candidates(src.dim(), int_or(x.cfg, "random_candidates", 2), x.seed);
    }
    RotationResult r = rotation_search(src, cands, o);
    json attempts = json::array();
    for (auto& a : r.attempts) {
        json row{{"label", a.label}, {"ok", a.ok}};
        if (!a.ok) row["failure"] = a.failure;
        attempts.push_back(row);
    }
    Rat lo = 0, hi = 0;
    bool first = true;
    for (auto* n : [&] {
             std::vector<const UndNode*> all;
             for (int k = 0; k < r.certificate.depth; ++k)
                 for (auto* p : certificate_level(r.certificate, k)) all.push_back(p);
             return all;
         }())
        for (auto& p : n->pairs)
            if (p.ratio) {
                if (first || p.ratio->lo < lo) lo = p.ratio->lo;
                if (first || p.ratio->hi > hi) hi = p.ratio->hi;
                first = false;
            }
    x.results["attempts"] = attempts;
    x.results["chosen"] = r.matrix.label();
    x.results["matrix"] = matrix_to_json(r.matrix.entries());
    x.results["orthogonality_defect"] = rat_to_json(r.matrix.defect());
    if (!first) x.results["ratio_range"] = {{"lo", to_double(lo)}, {"hi", to_double(hi)}};
    x.results["certificate"] = certificate_to_json(r.certificate);
    std::string check = verify_certificate(r.certificate);
    x.results["verified"] = check.empty();
    x.failed = !check.empty();
}

struct RdPipeline {
    UndCertificate cert;
    SeparationSequence dk;
    ProductCompanion comp;
    int N;
};

RdPipeline rd_common(Ctx& x) {
    GeometrySource src = GeometrySource::from_config(need(x.cfg, "geometry"));
    UndOptions o = und_from(x.cfg);
    NestedRep rep = rep_from(x.cfg, src, o);
    set_rep_geometry(x, rep);
    UndCertificate cert = und_certificate(rep, o);
    SeparationSequence dk = dk_sequence(cert);
    ProductCompanion comp =
        build_product_companion(cert.root.comp.box, dk, rat_or(x.cfg, "shrink", Rat(1, 2)), rat_or(x.cfg, "margin", Rat(1, 10)));
    int N = int_or(x.cfg, "chain_depth", o.depth);
    x.results["dk"] = dk_json(dk);
    x.results["companion"] = companion_summary(comp.base);
    ChainRd chain = find_chain_rd(cert, comp, N);
    x.results["chain"] = chain_rd_to_json(chain);
    return {std::move(cert), std::move(dk), std::move(comp), N};
}

void companion_rd(Ctx& x) { rd_common(x); }

void interior_rd(Ctx& x) {
    RdPipeline p = rd_common(x);
    Box box = certify_sum_interior_rd(p.cert, p.comp, p.N);
    json lo = json::array(), hi = json::array();
    for (auto& iv : box) {
        lo.push_back(rat_to_json(iv.lo));
        hi.push_back(rat_to_json(iv.hi));
    }
    x.results["interior_box"] = {{"lo", lo}, {"hi", hi}};
    int count = int_or(x.cfg, "grid", 5);
    if (count < 1) config_error("grid must be >= 1");
    const size_t d = box.size();
    size_t total = 1;
    for (size_t i = 0; i < d; ++i) total *= static_cast<size_t>(count);
    std::vector<std::string> fail(total);
    parallel_for(total, x.threads, [&](size_t idx) {
        std::vector<Rat> t(d);
        size_t rest = idx;
        for (size_t i = 0; i < d; ++i) {
            t[i] = grid_point(box[i].lo, box[i].hi, count, static_cast<int>(rest % static_cast<size_t>(count)));
            rest /= static_cast<size_t>(count);
        }
        try {
            find_chain_rd(p.cert, p.comp.translated(t), p.N);
        } catch (const Error& e) {
            fail[idx] = e.kind();
        }
    });
    int bad = 0;
    for (auto& f : fail) bad += !f.empty();
    x.results["grid"] = {{"points", total}, {"verified", static_cast<int>(total) - bad}};
    x.failed = bad > 0;
}

void distance_demo(Ctx& x) {
    if (x.cfg.contains("h")) {
        // generic H: companion of K1 against the slices, then grid verification
        HSpec h = HSpec::from_config(x.cfg["h"]);
        GapTree k1 = tree_from_config(need(x.cfg, "k1"));
        const json& grids = need(x.cfg, "grids");
        GridSpec cg = grid_of(grids, "c");
        GridSpec ag = grids.contains("alpha") ? grid_of(grids, "alpha") : GridSpec{1, 1, 1};
        int N = int_or(x.cfg, "depth", k1.depth());
        Interval1 cb(cg.lo, cg.hi), ab(ag.lo, ag.hi);
        Rat eta = derivative_bound(h, cb, ab, k1.hull());
        GapTree k2 = nonlinear_companion(k1, h, cb, ab, N);
        HReport r = verify_H_interior(h, k1, k2, cg, ag, N, x.cfg.value("tol", 1e-8), x.threads);
        x.geometry = intervals_geometry(k2, std::min(N, 4));
        x.results["h"] = {{"family", h.family_name()}, {"H", h.text}, {"H_x", h.text_x}, {"H_y", h.text_y}};
        x.results["eta"] = rat_to_json(eta);
        x.results["k2"] = companion_summary(k2);
        x.results["verify"] = h_report_to_json(r);
        for (auto& w : r.points) x.failed = x.failed || !w.ok;
        return;
    }
    PinnedOptions o;
    o.d = int_or(x.cfg, "d", 2);
    o.alpha = rat_or(x.cfg, "alpha", 2);
    if (x.cfg.contains("k1")) o.k1 = tree_from_config(x.cfg["k1"]);
    o.grid = int_or(x.cfg, "grid", 101);
    o.c_halfwidth = rat_or(x.cfg, "c_halfwidth", Rat(1, 20));
    o.tol = x.cfg.value("tol", 1e-8);
    o.threads = x.threads;
    PinnedReport r = pinned_distance_demo(o);
    x.geometry = intervals_geometry(r.k2, std::min(r.k2.depth(), 4));
    x.results["u1"] = rat_to_json(r.u1);
    x.results["c0"] = rat_to_json(r.c0);
    x.results["c_box"] = interval_to_json(r.c_box);
    x.results["eta"] = rat_to_json(r.eta);
    x.results["k2"] = companion_summary(r.k2);
    x.results["verify"] = h_report_to_json(r.verify);
    if (r.distance_coverage)
        x.results["distance_coverage"] = {r.distance_coverage->first, r.distance_coverage->second};
    for (auto& w : r.verify.points) x.failed = x.failed || !w.ok;
}

// Exact rational in [lo, hi] from one 64-bit draw (20-bit resolution).
Rat draw(std::mt19937_64& g, const Rat& lo, const Rat& hi) {
    std::uint64_t u = g() >> 44;
    return lo + (hi - lo) * rat(static_cast<long>(u), 1L << 20);
}

void erdos_demo(Ctx& x) {
    GapTree K = tree_from_config(need(x.cfg, "k"));
    int N = int_or(x.cfg, "depth", K.depth());
    Interval1 window = interval_from_json(need(x.cfg, "window"));
    std::vector<AffineMap> fam;
    if (x.cfg.contains("maps"))
        for (auto& m : x.cfg["maps"]) fam.push_back({rat_from_json(need(m, "lambda")), rat_from_json(need(m, "t"))});
    if (x.cfg.contains("random_maps")) {
        const json& r = x.cfg["random_maps"];
        Interval1 l = interval_from_json(need(r, "lambda")), t = interval_from_json(need(r, "t"));
        std::mt19937_64 g(x.seed);
        int count = int_or(r, "count", 100);
        for (int i = 0; i < count; ++i) {
            Rat lam = draw(g, l.lo, l.hi);
            fam.push_back({lam, draw(g, t.lo, t.hi)});
        }
    }
    ErdosReport r = erdos_obstruction(K, fam, window, N, rat_or(x.cfg, "margin", Rat(1, 10)),
                                      rat_or(x.cfg, "factor", Rat(1, 2)), x.threads);
    json rows = json::array();
    for (auto& p : r.results)
        rows.push_back({{"lambda", rat_to_json(p.g.lambda)}, {"t", rat_to_json(p.g.t)}, {"k", p.k},
                        {"residue", rat_to_json(p.residue)}, {"bound", rat_to_json(p.bound)}});
    x.geometry = intervals_geometry(K, std::min(N, 4));
    x.results["companion"] = companion_summary(r.companion);
    x.results["slack_lambda"] = rat_to_json(r.slack);
    x.results["certified"] = interval_to_json(r.certified);
    x.results["uniform"] = interval_to_json(r.uniform);
    x.results["spacing"] = rat_to_json(r.spacing);
    x.results["spacing_within_certified"] = r.spacing <= r.certified.length();
    x.results["translates"] = {r.k_lo, r.k_hi};
    x.results["maps"] = rows;
}

using Pipeline = void (*)(Ctx&);

Pipeline pipeline_of(const std::string& name) {
    static const std::pair<const char*, Pipeline> table[] = {
        {"companion-1d", companion_1d},   {"interior-1d", interior_1d}, {"sweep-1d", sweep_1d},
        {"nondegeneracy", nondegeneracy}, {"rotate-fix", rotate_fix},   {"companion-rd", companion_rd},
        {"interior-rd", interior_rd},     {"distance-demo", distance_demo}, {"erdos-demo", erdos_demo}};
    for (auto& [n, f] : table)
        if (name == n) return f;
    config_error("unknown pipeline '" + name + "'");
}

} // namespace

RunOutcome run_scenario(const json& config, const RunOptions& opt) {
    RunOutcome out;
    json& rep = out.report;
    rep["version"] = kVersion;
    rep["inputs"] = config;
    rep["precision"] = {{"bits", default_precision_bits()}, {"margin", rat_to_json(default_margin())}};
    auto started = std::chrono::steady_clock::now();
    try {
        if (!config.is_object()) config_error("scenario must be a JSON object");
        std::string name = need(config, "pipeline").get<std::string>();
        rep["pipeline"] = name;
        Pipeline run = pipeline_of(name);
        int threads = opt.threads ? *opt.threads : int_or(config, "threads", 1);
        std::uint64_t seed = opt.seed ? *opt.seed
                             : config.contains("seed") ? config["seed"].get<std::uint64_t>()
                                                       : kDefaultSeed;
        rep["seed"] = seed;
        Ctx ctx{config, std::max(1, threads), seed, json::object(), json(), false};
        try {
            run(ctx);
            rep["status"] = ctx.failed ? "failed" : "ok";
            out.exit_code = ctx.failed ? 2 : 0;
        } catch (const Error& e) {
            if (e.kind() == "ConfigError") throw;
            rep["status"] = "failed";
            rep["error"] = {{"kind", e.kind()}, {"message", e.what()}};
            if (e.level() >= 0) rep["error"]["level"] = e.level();
            out.exit_code = 2;
        }
        rep["results"] = std::move(ctx.results);
        if (!ctx.geometry.is_null()) rep["geometry"] = std::move(ctx.geometry);
    } catch (const Error& e) {
        rep["status"] = "config-error";
        rep["error"] = {{"kind", "ConfigError"}, {"message", e.what()}};
        out.exit_code = 1;
    } catch (const json::exception& e) {
        rep["status"] = "config-error";
        rep["error"] = {{"kind", "ConfigError"}, {"message", e.what()}};
        out.exit_code = 1;
    }
    if (opt.timing)
        rep["timing"] = {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};
    return out;
}

RunOutcome run_scenario_file(const std::string& path, const RunOptions& opt) {
    std::ifstream in(path);
    if (!in) {
        RunOutcome out;
        out.report = {{"status", "config-error"},
                       {"version", kVersion},
                       {"error", {{"kind", "ConfigError"}, {"message", "cannot read " + path}}}};
        out.exit_code = 1;
        return out;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    json cfg;
    try {
        cfg = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        // nlohmann reports a byte offset; turn it into a line number
        std::string text = buf.str();
        size_t upto = std::min(text.size(), static_cast<size_t>(e.byte));
        long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
        RunOutcome out;
        out.report = {{"status", "config-error"},
                      {"version", kVersion},
                      {"error", {{"kind", "ConfigError"}, {"line", line}, {"message", e.what()}}}};
        out.exit_code = 1;
        return out;
    }
    return run_scenario(cfg, opt);
}

std::string report_text(const json& report) { return report.dump(2) + "\n"; }

namespace {

std::string dec(const Rat& r) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", to_double(r));
    return buf;
}

} // namespace

std::string emit_geometry(const json& in, const std::string& format, std::optional<int> level) {
    if (format != "csv-intervals" && format != "csv-boxes")
        throw Error("ConfigError", "unknown format '" + format + "'");
    std::string kind;
    json geo;
    if (in.contains("geometry")) {
        geo = in["geometry"];
        kind = geo.at("kind").get<std::string>();
    } else if (in.contains("hull") && in.contains("gaps")) {
        kind = "intervals";
        geo = {{"tree", in}, {"level", in.at("depth")}};
    } else {
        throw Error("KindMismatch", "input holds no geometry");
    }
    if (format == "csv-intervals") {
        if (kind != "intervals") throw Error("KindMismatch", "csv-intervals needs 1-D interval geometry, got " + kind);
        GapTree t = tree_from_json(geo.at("tree"));
        int n = level ? *level : geo.at("level").get<int>();
        if (n < 0 || n > t.depth()) throw Error("LevelOutOfRange", "level outside the stored tree", n);
        return intervals_csv(t, n);
    }
    if (kind != "boxes") throw Error("KindMismatch", "csv-boxes needs box geometry, got " + kind);
    std::ostringstream os;
    int d = geo.at("dim").get<int>();
    os << "level";
    for (int i = 1; i <= d; ++i) os << ",lo_" << i << ",hi_" << i;
    os << '\n';
    for (auto& row : geo.at("rows")) {
        os << row.at("level").get<int>();
        for (auto& iv : box_from_json(row.at("box"))) os << ',' << dec(iv.lo) << ',' << dec(iv.hi);
        os << '\n';
    }
    return os.str();
}

} // namespace cantor
