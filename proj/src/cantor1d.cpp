#include "cantor_forge/cantor1d.hpp"

#include <algorithm>
#include <sstream>

namespace cantor {

// ---------------------------------------------------------------- NodeAddress

NodeAddress NodeAddress::parse(std::string_view s) {
    if (s.size() > static_cast<size_t>(kMaxLength)) throw Error("InvalidAddress", "address too long");
    NodeAddress a;
    for (char c : s) {
        if (c != '0' && c != '1') throw Error("InvalidAddress", std::string(s));
        a = a.child(c - '0');
    }
    return a;
}

NodeAddress NodeAddress::from_bits(std::uint64_t bits, int length) {
    if (length < 0 || length > kMaxLength) throw Error("InvalidAddress", "bad length");
    NodeAddress a;
    a.len_ = length;
    a.bits_ = length == 0 ? 0 : (bits & ((std::uint64_t{1} << length) - 1));
    return a;
}

NodeAddress NodeAddress::child(int b) const {
    if (len_ >= kMaxLength) throw Error("InvalidAddress", "address too long");
    NodeAddress a;
    a.bits_ = (bits_ << 1) | static_cast<std::uint64_t>(b & 1);
    a.len_ = len_ + 1;
    return a;
}

NodeAddress NodeAddress::parent() const {
    if (len_ == 0) throw Error("InvalidAddress", "root has no parent");
    return from_bits(bits_ >> 1, len_ - 1);
}

NodeAddress NodeAddress::concat(const NodeAddress& tail) const {
    if (len_ + tail.len_ > kMaxLength) throw Error("InvalidAddress", "address too long");
    return from_bits((bits_ << tail.len_) | tail.bits_, len_ + tail.len_);
}

NodeAddress NodeAddress::flipped() const { return from_bits(~bits_, len_); }

bool NodeAddress::is_prefix_of(const NodeAddress& o) const {
    return len_ <= o.len_ && o.prefix(len_) == *this;
}

std::string NodeAddress::str() const {
    std::string s;
    for (int i = 0; i < len_; ++i) s += static_cast<char>('0' + bit(i));
    return s;
}

// ---------------------------------------------------------------- storage

namespace detail {

struct GapStorage {
    Interval1 hull;
    int depth = 0;
    virtual ~GapStorage() = default;
    /// Gap of node `a` whose storage interval is `iv`.
    virtual Interval1 gap(const NodeAddress& a, const Interval1& iv) const = 0;
    virtual bool symmetric() const = 0;
    /// Per-level gap statistics of the subtree at `p` (levels relative to p).
    virtual std::vector<LevelGaps> stats(const NodeAddress& p) const = 0;
};

struct SymmetricStorage final : GapStorage {
    std::vector<Rat> ell, len; // len[n] = level-n interval length, n <= depth

    Interval1 gap(const NodeAddress& a, const Interval1& iv) const override {
        const int n = a.size();
        Rat lo = iv.lo + len[n + 1];
        return {lo, lo + ell[n]};
    }
    bool symmetric() const override { return true; }
    std::vector<LevelGaps> stats(const NodeAddress& p) const override {
        std::vector<LevelGaps> out;
        for (int n = p.size(); n < depth; ++n)
            out.push_back({ell[n], ell[n], ell[n] * pow2(n - p.size())});
        return out;
    }
};

struct ExplicitStorage final : GapStorage {
    std::vector<Interval1> gaps; // heap order: index (1<<len | bits) - 1

    static size_t index(const NodeAddress& a) {
        return ((std::size_t{1} << a.size()) | a.bits()) - 1;
    }
    Interval1 gap(const NodeAddress& a, const Interval1&) const override { return gaps[index(a)]; }
    bool symmetric() const override { return false; }
    std::vector<LevelGaps> stats(const NodeAddress& p) const override {
        std::vector<LevelGaps> out;
        for (int n = p.size(); n < depth; ++n) {
            const int rel = n - p.size();
            LevelGaps s;
            for (std::uint64_t k = 0; k < (std::uint64_t{1} << rel); ++k) {
                NodeAddress a = p.concat(NodeAddress::from_bits(k, rel));
                Rat l = gaps[index(a)].length();
                if (k == 0) {
                    s = {l, l, l};
                } else {
                    if (l < s.min_gap) s.min_gap = l;
                    if (s.max_gap < l) s.max_gap = l;
                    s.total += l;
                }
            }
            out.push_back(std::move(s));
        }
        return out;
    }
};

} // namespace detail

// ---------------------------------------------------------------- GapTree

void GapTree::check_level(int n, int limit, const char* what) const {
    if (n < 0 || n > limit)
        throw Error("LevelOutOfRange", std::string(what) + " level " + std::to_string(n) +
                                           " outside [0, " + std::to_string(limit) + "]", n);
}

NodeAddress GapTree::to_base(const NodeAddress& a) const {
    return prefix_.concat(scale_ < 0 ? a.flipped() : a);
}

Interval1 GapTree::map(const Interval1& b) const {
    Rat x = scale_ * b.lo + shift_, y = scale_ * b.hi + shift_;
    return scale_ < 0 ? Interval1(y, x) : Interval1(x, y);
}

GapTree::Node GapTree::root() const { return {NodeAddress(), hull_, root_base_}; }

GapTree::Node GapTree::node(const NodeAddress& a) const {
    check_level(a.size(), depth_, "node");
    Node n = root();
    for (int i = 0; i < a.size(); ++i) {
        auto [l, r] = children(n);
        n = a.bit(i) == 0 ? l : r;
    }
    return n;
}

Interval1 GapTree::gap(const Node& n) const {
    check_level(n.addr.size(), depth_ - 1, "gap");
    return map(store_->gap(to_base(n.addr), n.base));
}

std::pair<GapTree::Node, GapTree::Node> GapTree::children(const Node& n) const {
    check_level(n.addr.size(), depth_ - 1, "children");
    Interval1 g = store_->gap(to_base(n.addr), n.base);
    Interval1 b0(n.base.lo, g.lo), b1(g.hi, n.base.hi);
    if (scale_ < 0) std::swap(b0, b1);
    return {Node{n.addr.child(0), map(b0), b0}, Node{n.addr.child(1), map(b1), b1}};
}

LevelGaps GapTree::level_gaps(int n) const {
    check_level(n, depth_ - 1, "gap");
    const LevelGaps& s = (*stats_)[static_cast<size_t>(n)];
    Rat f = abs(scale_);
    return {s.min_gap * f, s.max_gap * f, s.total * f};
}

std::vector<GapTree::Node> GapTree::level_nodes(int n) const {
    check_level(n, depth_, "interval");
    std::vector<Node> cur{root()};
    for (int k = 0; k < n; ++k) {
        std::vector<Node> next;
        next.reserve(cur.size() * 2);
        for (const Node& x : cur) {
            auto [l, r] = children(x);
            next.push_back(std::move(l));
            next.push_back(std::move(r));
        }
        cur.swap(next);
    }
    return cur;
}

std::vector<Interval1> GapTree::level_intervals(int n) const {
    std::vector<Interval1> out;
    for (auto& x : level_nodes(n)) out.push_back(x.iv);
    return out;
}

GapTree GapTree::subtree(const NodeAddress& a) const {
    Node n = node(a);
    GapTree t = *this;
    t.prefix_ = to_base(a);
    t.root_base_ = n.base;
    t.hull_ = n.iv;
    t.depth_ = depth_ - a.size();
    if (t.depth_ < 1) throw Error("LevelOutOfRange", "subtree has no gaps", a.size());
    t.stats_ = std::make_shared<const std::vector<LevelGaps>>(store_->stats(t.prefix_));
    return t;
}

GapTree GapTree::truncated(int depth) const {
    if (depth < 1 || depth > depth_) throw Error("LevelOutOfRange", "bad truncation depth", depth);
    GapTree t = *this;
    t.depth_ = depth;
    return t;
}

bool GapTree::symmetric_storage() const { return store_->symmetric(); }

bool operator==(const GapTree& a, const GapTree& b) {
    if (a.depth_ != b.depth_ || a.hull_ != b.hull_) return false;
    std::vector<GapTree::Node> sa{a.root()}, sb{b.root()};
    while (!sa.empty()) {
        GapTree::Node x = sa.back(), y = sb.back();
        sa.pop_back();
        sb.pop_back();
        if (x.iv != y.iv) return false;
        if (x.addr.size() == a.depth_) continue;
        if (a.gap(x) != b.gap(y)) return false;
        auto [xl, xr] = a.children(x);
        auto [yl, yr] = b.children(y);
        sa.push_back(xl);
        sa.push_back(xr);
        sb.push_back(yl);
        sb.push_back(yr);
    }
    return true;
}

// ---------------------------------------------------------------- builders

GapTree build_symmetric(const SymmetricSpec& spec) {
    if (!(spec.hull.lo < spec.hull.hi)) throw Error("DegenerateHull", "hull must have positive length");
    const int n_levels = static_cast<int>(spec.gaps.size());
    if (n_levels < 1 || n_levels > NodeAddress::kMaxLength)
        throw Error("InvalidDepth", "depth must be in [1, 63]");
    auto s = std::make_shared<detail::SymmetricStorage>();
    s->hull = spec.hull;
    s->depth = n_levels;
    s->ell = spec.gaps;
    s->len.push_back(spec.hull.length());
    for (int n = 0; n < n_levels; ++n) {
        const Rat& l = spec.gaps[static_cast<size_t>(n)];
        if (l <= 0) throw Error("GapConstraintViolation", "gap at level " + std::to_string(n) + " is not positive", n);
        if (!(l < s->len.back()))
            throw Error("GapConstraintViolation",
                        "gap " + to_string(l) + " at level " + std::to_string(n) +
                            " does not fit in interval of length " + to_string(s->len.back()),
                        n);
        s->len.push_back((s->len.back() - l) / 2);
    }
    GapTree t;
    t.store_ = s;
    t.stats_ = std::make_shared<const std::vector<LevelGaps>>(s->stats(NodeAddress()));
    t.root_base_ = spec.hull;
    t.hull_ = spec.hull;
    t.depth_ = n_levels;
    return t;
}

GapTree build_binary_ifs(const Interval1& hull, const Rat& a, int depth) {
    if (!(a > 0 && a < Rat(1, 2))) throw Error("InvalidRatio", "ratio must lie in (0, 1/2)");
    SymmetricSpec spec{hull, {}};
    Rat an = 1;
    for (int n = 0; n < depth; ++n) {
        spec.gaps.push_back((1 - 2 * a) * an * hull.length());
        an *= a;
    }
    return build_symmetric(spec);
}

GapTree middle_thirds(int depth) { return build_binary_ifs({0, 1}, Rat(1, 3), depth); }

GapTree tree_from_gaps(const Interval1& hull, int depth,
                       const std::vector<std::pair<NodeAddress, Interval1>>& gaps) {
    if (!(hull.lo < hull.hi)) throw Error("DegenerateHull", "hull must have positive length");
    if (depth < 1 || depth > 30) throw Error("InvalidDepth", "explicit trees support depth 1..30");
    auto s = std::make_shared<detail::ExplicitStorage>();
    s->hull = hull;
    s->depth = depth;
    const size_t count = (std::size_t{1} << depth) - 1;
    if (gaps.size() != count) throw Error("InvalidGapTree", "expected " + std::to_string(count) + " gaps");
    s->gaps.assign(count, Interval1());
    std::vector<bool> seen(count, false);
    for (auto& [a, g] : gaps) {
        if (a.size() >= depth) throw Error("InvalidGapTree", "gap address too deep: " + a.str());
        size_t i = detail::ExplicitStorage::index(a);
        if (seen[i]) throw Error("InvalidGapTree", "duplicate gap address: " + a.str());
        seen[i] = true;
        s->gaps[i] = g;
    }
    // every gap open, nonempty and strictly inside its interval
    std::vector<std::pair<NodeAddress, Interval1>> stack{{NodeAddress(), hull}};
    while (!stack.empty()) {
        auto [a, iv] = stack.back();
        stack.pop_back();
        if (a.size() == depth) continue;
        const Interval1& g = s->gaps[detail::ExplicitStorage::index(a)];
        if (!(iv.lo < g.lo && g.lo < g.hi && g.hi < iv.hi))
            throw Error("InvalidGapTree", "gap at '" + a.str() + "' is not strictly inside its interval", a.size());
        stack.push_back({a.child(0), {iv.lo, g.lo}});
        stack.push_back({a.child(1), {g.hi, iv.hi}});
    }
    GapTree t;
    t.store_ = s;
    t.stats_ = std::make_shared<const std::vector<LevelGaps>>(s->stats(NodeAddress()));
    t.root_base_ = hull;
    t.hull_ = hull;
    t.depth_ = depth;
    return t;
}

GapTree tree_from_gap_list(const Interval1& hull, std::vector<Interval1> gaps) {
    int depth = 0;
    while (((std::size_t{1} << (depth + 1)) - 1) <= gaps.size()) ++depth;
    if (((std::size_t{1} << depth) - 1) != gaps.size() || depth == 0)
        throw Error("InvalidGapTree", "gap count must be 2^N - 1");
    std::stable_sort(gaps.begin(), gaps.end(), [](const Interval1& a, const Interval1& b) {
        Rat la = a.length(), lb = b.length();
        if (la != lb) return la > lb;
        return a.lo < b.lo;
    });
    struct Leaf {
        NodeAddress addr;
        Interval1 iv;
    };
    std::vector<Leaf> leaves{{NodeAddress(), hull}};
    std::vector<std::pair<NodeAddress, Interval1>> placed;
    for (const Interval1& g : gaps) {
        auto it = std::find_if(leaves.begin(), leaves.end(),
                               [&](const Leaf& l) { return l.iv.lo < g.lo && g.hi < l.iv.hi; });
        if (it == leaves.end() || it->addr.size() >= depth)
            throw Error("InvalidGapTree", "gaps do not form a complete tree of depth " + std::to_string(depth));
        placed.push_back({it->addr, g});
        Leaf l0{it->addr.child(0), {it->iv.lo, g.lo}}, l1{it->addr.child(1), {g.hi, it->iv.hi}};
        *it = l0;
        leaves.push_back(l1);
    }
    return tree_from_gaps(hull, depth, placed);
}

GapStats gap_stats(const GapTree& t, int n) {
    if (n < 0 || n >= t.depth())
        throw Error("LevelOutOfRange", "gaps exist only at levels 0.." + std::to_string(t.depth() - 1), n);
    LevelGaps g = t.level_gaps(n);
    return {g.min_gap, g.max_gap, t.level_intervals(n)};
}

GapTree affine_image(const GapTree& t, const Rat& lambda, const Rat& shift) {
    if (lambda == 0) throw Error("ZeroScale", "affine_image needs a nonzero scale");
    GapTree out = t;
    out.scale_ = lambda * t.scale_;
    out.shift_ = lambda * t.shift_ + shift;
    out.hull_ = out.map(t.root_base_);
    return out;
}

MeasureBounds measure_bounds(const GapTree& t, int n) {
    if (n < 0 || n > t.depth()) throw Error("LevelOutOfRange", "level outside [0, depth]", n);
    Rat removed = 0;
    for (int m = 0; m < n; ++m) removed += t.level_gaps(m).total;
    return {t.hull().length() - removed, removed};
}

// ---------------------------------------------------------------- I/O

json tree_to_json(const GapTree& t) {
    json hull = rat_to_json(t.hull().lo);
    for (auto& x : rat_to_json(t.hull().hi)) hull.push_back(x);
    json gaps = json::array();
    for (int n = 0; n < t.depth(); ++n)
        for (auto& node : t.level_nodes(n)) {
            Interval1 g = t.gap(node);
            gaps.push_back({{"addr", node.addr.str()}, {"lo", rat_to_json(g.lo)}, {"hi", rat_to_json(g.hi)}});
        }
    return {{"hull", hull}, {"depth", t.depth()}, {"gaps", gaps}};
}

GapTree tree_from_json(const json& j) {
    try {
        const json& h = j.at("hull");
        Interval1 hull;
        if (h.size() == 4) hull = {rat_from_json(json::array({h[0], h[1]})), rat_from_json(json::array({h[2], h[3]}))};
        else hull = interval_from_json(h);
        int depth = j.at("depth").get<int>();
        std::vector<std::pair<NodeAddress, Interval1>> gaps;
        for (auto& g : j.at("gaps"))
            gaps.push_back({NodeAddress::parse(g.at("addr").get<std::string>()),
                            {rat_from_json(g.at("lo")), rat_from_json(g.at("hi"))}});
        return tree_from_gaps(hull, depth, gaps);
    } catch (const json::exception& e) {
        throw Error("ConfigError", std::string("malformed gap tree: ") + e.what());
    }
}

GapTree tree_from_config(const json& j) {
    try {
        if (!j.is_object()) throw Error("ConfigError", "tree spec must be an object");
        std::string kind = j.value("kind", std::string("explicit"));
        if (kind == "middle-thirds") return middle_thirds(j.at("depth").get<int>());
        if (kind == "binary-ifs")
            return build_binary_ifs(interval_from_json(j.at("hull")), rat_from_json(j.at("ratio")),
                                    j.at("depth").get<int>());
        if (kind == "symmetric") {
            SymmetricSpec spec{interval_from_json(j.at("hull")), {}};
            if (j.contains("gaps")) {
                for (auto& g : j.at("gaps")) spec.gaps.push_back(rat_from_json(g));
            } else {
                // l_n = first * ratio^n
                Rat first = rat_from_json(j.at("first")), ratio = rat_from_json(j.at("ratio"));
                int depth = j.at("depth").get<int>();
                for (int n = 0; n < depth; ++n) spec.gaps.push_back(first * pow(ratio, static_cast<unsigned>(n)));
            }
            return build_symmetric(spec);
        }
        if (kind == "gaps") {
            std::vector<Interval1> gaps;
            for (auto& g : j.at("gaps")) gaps.push_back(interval_from_json(g));
            return tree_from_gap_list(interval_from_json(j.at("hull")), gaps);
        }
        if (kind == "explicit") return tree_from_json(j);
        if (kind == "affine")
            return affine_image(tree_from_config(j.at("of")), rat_from_json(j.value("lambda", json(1))),
                                rat_from_json(j.value("shift", json(0))));
        if (kind == "subtree")
            return tree_from_config(j.at("of")).subtree(NodeAddress::parse(j.at("addr").get<std::string>()));
        throw Error("ConfigError", "unknown tree kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw Error("ConfigError", std::string("tree spec: ") + e.what());
    }
}

std::string intervals_csv(const GapTree& t, int n) {
    std::ostringstream os;
    os << "addr,lo_num,lo_den,hi_num,hi_den\n";
    for (auto& node : t.level_nodes(n))
        os << node.addr.str() << ',' << node.iv.lo.get_num() << ',' << node.iv.lo.get_den() << ','
           << node.iv.hi.get_num() << ',' << node.iv.hi.get_den() << '\n';
    return os.str();
}

} // namespace cantor
