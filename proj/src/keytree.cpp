#include "gk/keytree.hpp"

#include "gk/error.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <set>
#include <unordered_set>

namespace gk {

namespace {

constexpr int kMaxWeight = 96;
constexpr std::uint64_t kCap = std::numeric_limits<std::uint64_t>::max() / 4;

struct WeightTable {
    std::array<std::uint64_t, kMaxWeight + 1> lo{};
    std::array<std::uint64_t, kMaxWeight + 1> hi{};
    std::array<bool, kMaxWeight + 1> ok{};

    WeightTable() {
        ok[0] = true;
        lo[0] = hi[0] = 1;
        for (int w = 1; w <= kMaxWeight; ++w) {
            std::uint64_t best_lo = kCap, best_hi = 0;
            for (int d = 2; d <= 3; ++d) {
                const int mx = w - d;
                if (mx < 0 || !ok[static_cast<std::size_t>(mx)]) continue;
                // k children at weight mx, d - k at mx - 1.
                for (int k = 1; k <= d; ++k) {
                    if (k < d && (mx - 1 < 0 || !ok[static_cast<std::size_t>(mx - 1)])) continue;
                    std::uint64_t l = 0, h = 0;
                    for (int i = 0; i < d; ++i) {
                        const auto cw = static_cast<std::size_t>(i < d - k ? mx - 1 : mx);
                        l = std::min(kCap, l + lo[cw]);
                        h = std::min(kCap, h + hi[cw]);
                    }
                    best_lo = std::min(best_lo, l);
                    best_hi = std::max(best_hi, h);
                }
            }
            ok[static_cast<std::size_t>(w)] = best_hi > 0;
            lo[static_cast<std::size_t>(w)] = best_lo;
            hi[static_cast<std::size_t>(w)] = best_hi;
        }
    }
};

const WeightTable& table() {
    static const WeightTable t;
    return t;
}

void check_weight(int w) {
    if (w < 0 || w > kMaxWeight) throw Error(ErrorCode::OutOfRange, "weight " + std::to_string(w) + " outside table");
}

} // namespace

bool weight_feasible(int w) {
    return w >= 0 && w <= kMaxWeight && table().ok[static_cast<std::size_t>(w)];
}

std::uint64_t min_leaves(int w) {
    check_weight(w);
    return weight_feasible(w) ? table().lo[static_cast<std::size_t>(w)] : 0;
}

std::uint64_t max_leaves(int w) {
    check_weight(w);
    return weight_feasible(w) ? table().hi[static_cast<std::size_t>(w)] : 0;
}

int min_weight(std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::OutOfRange, "no tree over zero leaves");
    for (int w = 0; w <= kMaxWeight; ++w)
        if (weight_feasible(w) && max_leaves(w) >= n && min_leaves(w) <= n) return w;
    throw Error(ErrorCode::OutOfRange, "leaf count too large");
}

// ---------------------------------------------------------------------------
// Accessors

const KeyNode& KeyTree::node(LocalId id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(ErrorCode::OutOfRange, "no node " + std::to_string(id));
    return it->second;
}

LocalId KeyTree::leaf_of(const MemberId& m) const {
    auto it = members_.find(m);
    if (it == members_.end()) throw Error(ErrorCode::MembershipError, "unknown member '" + m + "'");
    return it->second;
}

std::vector<LocalId> KeyTree::preorder() const {
    std::vector<LocalId> out;
    if (empty()) return out;
    std::vector<LocalId> stack{root_};
    while (!stack.empty()) {
        const LocalId id = stack.back();
        stack.pop_back();
        out.push_back(id);
        const auto& ch = node(id).children;
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

std::vector<LocalId> KeyTree::leaves() const {
    std::vector<LocalId> out;
    for (auto id : preorder())
        if (node(id).is_leaf()) out.push_back(id);
    return out;
}

std::vector<MemberId> KeyTree::members() const {
    std::vector<MemberId> out;
    for (auto id : leaves())
        if (node(id).kind == NodeKind::Member) out.push_back(node(id).member);
    return out;
}

std::vector<LocalId> KeyTree::bottom_nodes() const {
    std::vector<LocalId> out;
    for (auto id : preorder()) {
        const auto& n = node(id);
        if (!n.is_leaf() && node(n.children.front()).is_leaf()) out.push_back(id);
    }
    return out;
}

int KeyTree::ancestor_weight(LocalId id) const {
    int w = 0;
    for (LocalId p = node(id).parent; p != 0; p = node(p).parent) w += node(p).degree();
    return w;
}

int KeyTree::depth(LocalId id) const {
    int d = 0;
    for (LocalId p = node(id).parent; p != 0; p = node(p).parent) ++d;
    return d;
}

std::vector<LocalId> KeyTree::ancestors(LocalId id) const {
    std::vector<LocalId> out;
    for (LocalId p = node(id).parent; p != 0; p = node(p).parent) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// Checks

std::vector<BalanceViolation> KeyTree::check_balance() const {
    std::vector<BalanceViolation> out;
    for (auto id : preorder()) {
        const auto& n = node(id);
        if (n.is_leaf()) continue;
        if (n.degree() < 2 || n.degree() > 3) {
            out.push_back({id, "degree " + std::to_string(n.degree())});
            continue;
        }
        int lo = std::numeric_limits<int>::max(), hi = 0;
        for (auto c : n.children) {
            lo = std::min(lo, node(c).weight);
            hi = std::max(hi, node(c).weight);
        }
        if (hi - lo > 1) out.push_back({id, "child weights differ by " + std::to_string(hi - lo)});
    }
    return out;
}

std::vector<std::string> KeyTree::check_structure() const {
    std::vector<std::string> out;
    if (empty()) {
        if (!nodes_.empty() || !members_.empty()) out.push_back("empty tree holds nodes");
        return out;
    }
    if (node(root_).parent != 0) out.push_back("root has a parent");
    std::size_t seen = 0, pseudo = 0, member_leaves = 0;
    for (auto id : preorder()) {
        ++seen;
        const auto& n = node(id);
        for (auto c : n.children)
            if (node(c).parent != id) out.push_back("bad parent link at " + std::to_string(c));
        int w = 0;
        std::uint32_t real = 0, ps = 0;
        if (n.kind == NodeKind::Member) {
            real = 1;
            ++member_leaves;
            auto it = members_.find(n.member);
            if (it == members_.end() || it->second != id) out.push_back("member index mismatch for " + n.member);
        } else if (n.kind == NodeKind::Pseudo) {
            ps = 1;
            ++pseudo;
        } else {
            if (n.children.empty()) out.push_back("internal node without children");
            int mx = 0;
            for (auto c : n.children) {
                mx = std::max(mx, node(c).weight);
                real += node(c).real_leaves;
                ps += node(c).pseudo_leaves;
            }
            w = n.degree() + mx;
        }
        if (n.is_leaf() && !n.children.empty()) out.push_back("leaf with children");
        if (w != n.weight) out.push_back("stale weight at " + std::to_string(id));
        if (real != n.real_leaves || ps != n.pseudo_leaves) out.push_back("stale leaf counts at " + std::to_string(id));
    }
    if (seen != nodes_.size()) out.push_back("unreachable nodes in arena");
    if (pseudo != pseudo_count_) out.push_back("pseudo count mismatch");
    if (member_leaves != members_.size()) out.push_back("member index size mismatch");
    return out;
}

// ---------------------------------------------------------------------------
// Low-level mutation

LocalId KeyTree::new_node(NodeKind kind) {
    const LocalId id = next_id_++;
    KeyNode n;
    n.id = id;
    n.kind = kind;
    if (kind == NodeKind::Member) n.real_leaves = 1;
    if (kind == NodeKind::Pseudo) {
        n.pseudo_leaves = 1;
        ++pseudo_count_;
    }
    nodes_.emplace(id, std::move(n));
    return id;
}

void KeyTree::refresh(LocalId id) {
    auto& n = nodes_.at(id);
    if (n.is_leaf()) return;
    int mx = 0;
    std::uint32_t real = 0, ps = 0;
    for (auto c : n.children) {
        const auto& cn = nodes_.at(c);
        mx = std::max(mx, cn.weight);
        real += cn.real_leaves;
        ps += cn.pseudo_leaves;
    }
    n.weight = n.degree() + mx;
    n.real_leaves = real;
    n.pseudo_leaves = ps;
}

void KeyTree::refresh_up(LocalId id) {
    for (LocalId p = id; p != 0; p = nodes_.at(p).parent) refresh(p);
}

void KeyTree::mark_path(LocalId id) {
    for (LocalId p = id; p != 0; p = nodes_.at(p).parent) marked_.push_back(p);
}

void KeyTree::replace_child(LocalId parent, LocalId old_child, std::span<const LocalId> with) {
    for (auto c : with) nodes_.at(c).parent = parent;
    if (parent == 0) {
        if (with.size() != 1) throw Error(ErrorCode::InvariantViolation, "root replaced by several nodes");
        root_ = with.front();
        return;
    }
    auto& ch = nodes_.at(parent).children;
    auto it = std::find(ch.begin(), ch.end(), old_child);
    if (it == ch.end()) throw Error(ErrorCode::InvariantViolation, "child not found");
    it = ch.erase(it);
    ch.insert(it, with.begin(), with.end());
}

void KeyTree::collect_member_leaves(LocalId id, std::vector<LocalId>& out) const {
    const auto& n = node(id);
    if (n.kind == NodeKind::Member) out.push_back(id);
    for (auto c : n.children) collect_member_leaves(c, out);
}

// Deletes internal and pseudo nodes below (and including) id; member leaves
// are detached but kept.
void KeyTree::erase_subtree(LocalId id, TreeChange& change) {
    auto it = nodes_.find(id);
    const std::vector<LocalId> children = it->second.children;
    for (auto c : children) erase_subtree(c, change);
    if (it->second.kind == NodeKind::Member) {
        it->second.parent = 0;
        return;
    }
    if (it->second.kind == NodeKind::Pseudo) --pseudo_count_;
    auto cit = std::find(change.created.begin(), change.created.end(), id);
    if (cit != change.created.end())
        change.created.erase(cit);
    else
        change.removed.push_back(id);
    nodes_.erase(it);
}

// ---------------------------------------------------------------------------
// Shapes

LocalId KeyTree::build_shape_rec(std::span<const LocalId> leaves, int w, TreeChange& change) {
    const std::uint64_t n = leaves.size();
    if (w == 0) {
        if (n != 1) throw Error(ErrorCode::InvariantViolation, "weight 0 needs exactly one leaf");
        return leaves.front();
    }
    for (int d = 3; d >= 2; --d) {
        const int mx = w - d;
        if (!weight_feasible(mx)) continue;
        for (int k = d; k >= 1; --k) {
            if (k < d && !weight_feasible(mx - 1)) continue;
            std::vector<int> ws;
            for (int i = 0; i < d; ++i) ws.push_back(i < d - k ? mx - 1 : mx);
            std::uint64_t lo = 0, hi = 0;
            for (int cw : ws) {
                lo += min_leaves(cw);
                hi += max_leaves(cw);
            }
            if (n < lo || n > hi) continue;

            std::vector<std::uint64_t> counts;
            for (int cw : ws) counts.push_back(min_leaves(cw));
            std::uint64_t rem = n - lo;
            for (int i = d - 1; i >= 0 && rem; --i) {
                const auto add = std::min(rem, max_leaves(ws[static_cast<std::size_t>(i)]) - counts[static_cast<std::size_t>(i)]);
                counts[static_cast<std::size_t>(i)] += add;
                rem -= add;
            }

            const LocalId id = new_node(NodeKind::Internal);
            change.created.push_back(id);
            std::size_t off = 0;
            for (int i = 0; i < d; ++i) {
                const auto cnt = static_cast<std::size_t>(counts[static_cast<std::size_t>(i)]);
                const LocalId c = build_shape_rec(leaves.subspan(off, cnt), ws[static_cast<std::size_t>(i)], change);
                off += cnt;
                nodes_.at(c).parent = id;
                nodes_.at(id).children.push_back(c);
            }
            refresh(id);
            return id;
        }
    }
    throw Error(ErrorCode::InvariantViolation, "no shape of weight " + std::to_string(w) + " over " + std::to_string(n) + " leaves");
}

LocalId KeyTree::build_shape(std::span<const LocalId> member_leaves, int w, TreeChange& change) {
    std::vector<LocalId> all(member_leaves.begin(), member_leaves.end());
    const std::uint64_t lo = min_leaves(w);
    while (all.size() < lo) {
        const LocalId p = new_node(NodeKind::Pseudo);
        change.created.push_back(p);
        all.push_back(p);
    }
    return build_shape_rec(all, w, change);
}

LocalId KeyTree::rebuild(LocalId id, int target_weight, TreeChange& change) {
    const LocalId parent = node(id).parent;
    std::size_t slot = 0;
    if (parent != 0) {
        const auto& ch = node(parent).children;
        slot = static_cast<std::size_t>(std::find(ch.begin(), ch.end(), id) - ch.begin());
    }
    std::vector<LocalId> members;
    collect_member_leaves(id, members);
    erase_subtree(id, change);

    int w = target_weight;
    if (!members.empty()) w = std::max(w, min_weight(members.size()));
    if (w == 1) w = 2;
    const LocalId fresh = build_shape(members, w, change);
    nodes_.at(fresh).parent = parent;
    if (parent == 0) {
        root_ = fresh;
    } else {
        nodes_.at(parent).children[slot] = fresh;
        refresh_up(parent);
        mark_path(parent);
    }
    return fresh;
}

// Lifts every child lighter than (max - 1) by rebuilding it with pseudo padding.
void KeyTree::repair_up(LocalId from, TreeChange& change) {
    for (LocalId cur = from; cur != 0; cur = nodes_.at(cur).parent) {
        refresh(cur);
        if (node(cur).is_leaf()) continue;
        int mx = 0;
        for (auto c : node(cur).children) mx = std::max(mx, node(c).weight);
        const std::vector<LocalId> children = node(cur).children;
        for (auto c : children)
            if (node(c).weight < mx - 1) rebuild(c, mx - 1, change);
        refresh(cur);
    }
}

void KeyTree::enforce_pseudo_bound(TreeChange& change) {
    if (empty() || pseudo_count_ <= members_.size()) return;
    change.full_rebuild = true;
    if (members_.empty()) {
        erase_subtree(root_, change);
        root_ = 0;
        return;
    }
    rebuild(root_, 0, change);
}

KeyTree::PathEval KeyTree::eval_up(LocalId parent, LocalId replaced, std::vector<int> replacement) const {
    PathEval ev;
    LocalId cur = parent;
    LocalId child = replaced;
    std::vector<int> ws = std::move(replacement);
    while (cur != 0) {
        std::vector<int> weights;
        for (auto c : node(cur).children) {
            if (c == child)
                weights.insert(weights.end(), ws.begin(), ws.end());
            else
                weights.push_back(node(c).weight);
        }
        if (child == 0) weights.insert(weights.end(), ws.begin(), ws.end());
        const auto deg = static_cast<int>(weights.size());
        if (deg < 2 || deg > 3) ev.balanced = false;
        if (weights.empty()) return PathEval{false, 0};
        const auto [mn, mx] = std::minmax_element(weights.begin(), weights.end());
        if (*mx - *mn > 1) ev.balanced = false;
        ws = {deg + *mx};
        child = cur;
        cur = node(cur).parent;
    }
    ev.root_weight = ws.size() == 1 ? ws.front() : 0;
    return ev;
}

TreeChange KeyTree::finish(TreeChange change) {
    std::unordered_set<LocalId> dirty;
    for (auto id : marked_)
        if (nodes_.count(id) && !nodes_.at(id).is_leaf()) dirty.insert(id);
    for (auto id : change.created)
        if (nodes_.count(id) && !nodes_.at(id).is_leaf()) {
            for (LocalId p = id; p != 0; p = nodes_.at(p).parent) dirty.insert(p);
        }
    marked_.clear();
    change.dirty.assign(dirty.begin(), dirty.end());
    std::vector<std::pair<int, LocalId>> keyed;
    for (auto id : change.dirty) keyed.emplace_back(-depth(id), id);
    std::sort(keyed.begin(), keyed.end());
    change.dirty.clear();
    for (auto& [d, id] : keyed) change.dirty.push_back(id);
    std::sort(change.created.begin(), change.created.end());
    std::sort(change.removed.begin(), change.removed.end());
    return change;
}

// ---------------------------------------------------------------------------
// Build / insert

KeyTree KeyTree::build_balanced(std::span<const MemberId> members) {
    if (members.empty()) throw Error(ErrorCode::MembershipError, "cannot build a tree over no members");
    KeyTree t;
    TreeChange scratch;
    std::vector<LocalId> leaves;
    for (const auto& m : members) {
        if (t.members_.count(m)) throw Error(ErrorCode::MembershipError, "duplicate member '" + m + "'");
        const LocalId id = t.new_node(NodeKind::Member);
        t.nodes_.at(id).member = m;
        t.members_.emplace(m, id);
        leaves.push_back(id);
    }
    t.root_ = t.build_shape(leaves, min_weight(leaves.size()), scratch);
    t.marked_.clear();
    return t;
}

InsertionPoint KeyTree::find_insertion_point() const {
    if (empty()) return {0, InsertMode::NewRoot, 0, true};
    if (node(root_).is_leaf()) return {root_, InsertMode::NewRoot, 2, true};

    if (pseudo_count_ > 0) {
        for (auto id : preorder())
            if (node(id).kind == NodeKind::Pseudo) return {node(id).parent, InsertMode::ReusePseudo, weight(), true};
    }

    struct Candidate {
        InsertionPoint ip;
        int degree;
        std::size_t order;
    };
    std::optional<Candidate> best;
    auto better = [](const Candidate& a, const Candidate& b) {
        if (a.ip.balanced_without_repair != b.ip.balanced_without_repair) return a.ip.balanced_without_repair;
        if (a.ip.resulting_weight != b.ip.resulting_weight) return a.ip.resulting_weight < b.ip.resulting_weight;
        if (a.degree != b.degree) return a.degree < b.degree;
        if (a.order != b.order) return a.order < b.order;
        return static_cast<int>(a.ip.mode) < static_cast<int>(b.ip.mode);
    };
    std::size_t order = 0;
    for (auto x : bottom_nodes()) {
        const auto& xn = node(x);
        std::vector<std::pair<InsertMode, PathEval>> options;
        if (xn.degree() == 2) {
            options.emplace_back(InsertMode::Grow, xn.parent ? eval_up(xn.parent, x, {3}) : PathEval{true, 3});
        } else {
            options.emplace_back(InsertMode::NestSplit, xn.parent ? eval_up(xn.parent, x, {4}) : PathEval{true, 4});
            if (xn.parent && node(xn.parent).degree() == 2)
                options.emplace_back(InsertMode::SiblingSplit, eval_up(xn.parent, x, {2, 2}));
        }
        for (auto& [mode, ev] : options) {
            Candidate c{{x, mode, ev.root_weight, ev.balanced}, xn.degree(), order};
            if (!best || better(c, *best)) best = c;
        }
        ++order;
    }
    return best->ip;
}

TreeChange KeyTree::insert_leaf(const MemberId& member) {
    if (members_.count(member)) throw Error(ErrorCode::MembershipError, "member '" + member + "' already present");
    TreeChange change;
    const InsertionPoint ip = find_insertion_point();

    const LocalId leaf = new_node(NodeKind::Member);
    nodes_.at(leaf).member = member;
    members_.emplace(member, leaf);
    change.created.push_back(leaf);

    if (empty()) {
        root_ = leaf;
        return finish(std::move(change));
    }

    LocalId touched = ip.node;
    switch (ip.mode) {
    case InsertMode::NewRoot: {
        const LocalId old = root_;
        const LocalId top = new_node(NodeKind::Internal);
        change.created.push_back(top);
        nodes_.at(top).children = {old, leaf};
        nodes_.at(old).parent = top;
        nodes_.at(leaf).parent = top;
        root_ = top;
        touched = top;
        break;
    }
    case InsertMode::ReusePseudo: {
        auto& ch = nodes_.at(ip.node).children;
        auto it = std::find_if(ch.begin(), ch.end(), [&](LocalId c) { return nodes_.at(c).kind == NodeKind::Pseudo; });
        const LocalId pseudo = *it;
        *it = leaf;
        nodes_.at(leaf).parent = ip.node;
        nodes_.erase(pseudo);
        --pseudo_count_;
        change.removed.push_back(pseudo);
        break;
    }
    case InsertMode::Grow:
        nodes_.at(ip.node).children.push_back(leaf);
        nodes_.at(leaf).parent = ip.node;
        break;
    case InsertMode::SiblingSplit: {
        // X keeps its first two leaves; a new sibling takes the third and the member.
        auto& xn = nodes_.at(ip.node);
        const LocalId moved = xn.children.back();
        xn.children.pop_back();
        const LocalId sib = new_node(NodeKind::Internal);
        change.created.push_back(sib);
        nodes_.at(sib).children = {moved, leaf};
        nodes_.at(moved).parent = sib;
        nodes_.at(leaf).parent = sib;
        const LocalId parent = nodes_.at(ip.node).parent;
        auto& pch = nodes_.at(parent).children;
        pch.insert(std::find(pch.begin(), pch.end(), ip.node) + 1, sib);
        nodes_.at(sib).parent = parent;
        refresh(ip.node);
        refresh(sib);
        touched = parent;
        break;
    }
    case InsertMode::NestSplit: {
        auto& xn = nodes_.at(ip.node);
        const std::vector<LocalId> old = xn.children;
        const LocalId a = new_node(NodeKind::Internal);
        const LocalId b = new_node(NodeKind::Internal);
        change.created.push_back(a);
        change.created.push_back(b);
        nodes_.at(a).children = {old[0], old[1]};
        nodes_.at(b).children = {old[2], leaf};
        for (auto c : nodes_.at(a).children) nodes_.at(c).parent = a;
        for (auto c : nodes_.at(b).children) nodes_.at(c).parent = b;
        nodes_.at(a).parent = ip.node;
        nodes_.at(b).parent = ip.node;
        nodes_.at(ip.node).children = {a, b};
        refresh(a);
        refresh(b);
        break;
    }
    }
    refresh_up(touched);
    mark_path(touched);
    if (!ip.balanced_without_repair) repair_up(touched, change);
    enforce_pseudo_bound(change);
    return finish(std::move(change));
}

// ---------------------------------------------------------------------------
// Remove / partition

// Drops pseudo leaves and all-pseudo subtrees around `start` whenever the
// result stays balanced.
void KeyTree::collect_garbage(LocalId start, TreeChange& change) {
    LocalId v = start;
    while (v != 0 && nodes_.count(v)) {
        auto& vn = nodes_.at(v);
        if (vn.is_leaf()) break;
        const LocalId parent = vn.parent;

        if (vn.real_leaves > 0) {
            // Degree-3 bottom node holding a pseudo leaf: shrink to degree 2.
            if (vn.degree() == 3 && vn.pseudo_leaves > 0 && nodes_.at(vn.children.front()).is_leaf()) {
                const bool ok = parent == 0 || eval_up(parent, v, {2}).balanced;
                if (ok) {
                    auto& ch = vn.children;
                    auto it = std::find_if(ch.rbegin(), ch.rend(), [&](LocalId c) { return nodes_.at(c).kind == NodeKind::Pseudo; });
                    const LocalId p = *it;
                    ch.erase(std::next(it).base());
                    erase_subtree(p, change);
                    refresh_up(v);
                    mark_path(v);
                }
            }
            break;
        }

        // No real leaves below v.
        if (parent == 0) break;  // handled by the pseudo bound
        auto& pn = nodes_.at(parent);
        if (pn.degree() == 3) {
            const LocalId gp = pn.parent;
            std::vector<int> rest;
            int mx = 0;
            for (auto c : pn.children)
                if (c != v) mx = std::max(mx, nodes_.at(c).weight), rest.push_back(nodes_.at(c).weight);
            bool ok = std::abs(rest[0] - rest[1]) <= 1;
            if (ok && gp != 0) ok = eval_up(gp, parent, {2 + mx}).balanced;
            if (!ok) break;
            auto& ch = pn.children;
            ch.erase(std::find(ch.begin(), ch.end(), v));
            erase_subtree(v, change);
            refresh_up(parent);
            mark_path(parent);
            v = parent;
        } else {
            // Degree 2: the sibling takes the parent's place.
            const LocalId sib = pn.children[0] == v ? pn.children[1] : pn.children[0];
            const LocalId gp = pn.parent;
            const bool ok = gp == 0 || eval_up(gp, parent, {nodes_.at(sib).weight}).balanced;
            if (!ok) break;
            auto& ch = pn.children;
            ch.erase(std::find(ch.begin(), ch.end(), v));
            erase_subtree(v, change);
            pn.children.clear();
            const std::array<LocalId, 1> with{sib};
            replace_child(gp, parent, with);
            erase_subtree(parent, change);
            if (gp != 0) {
                refresh_up(gp);
                mark_path(gp);
            }
            v = gp;
        }
    }
}

TreeChange KeyTree::remove_leaf(const MemberId& member) {
    const std::array<MemberId, 1> one{member};
    return partition_leaves(one);
}

TreeChange KeyTree::partition_leaves(std::span<const MemberId> members) {
    std::set<MemberId> uniq;
    for (const auto& m : members) {
        if (!members_.count(m)) throw Error(ErrorCode::MembershipError, "unknown member '" + m + "'");
        if (!uniq.insert(m).second) throw Error(ErrorCode::MembershipError, "member '" + m + "' listed twice");
    }
    TreeChange change;
    std::vector<LocalId> bottoms;
    for (const auto& m : members) {
        const LocalId leaf = members_.at(m);
        const LocalId parent = nodes_.at(leaf).parent;
        members_.erase(m);
        nodes_.erase(leaf);
        change.removed.push_back(leaf);
        if (parent == 0) {
            root_ = 0;
            continue;
        }
        // Pseudo leaf keeps the slot so every weight is unchanged.
        const LocalId p = new_node(NodeKind::Pseudo);
        change.created.push_back(p);
        auto& ch = nodes_.at(parent).children;
        *std::find(ch.begin(), ch.end(), leaf) = p;
        nodes_.at(p).parent = parent;
        refresh_up(parent);
        mark_path(parent);
        bottoms.push_back(parent);
    }
    // Deepest first so lower cleanups run before their ancestors.
    std::sort(bottoms.begin(), bottoms.end());
    bottoms.erase(std::unique(bottoms.begin(), bottoms.end()), bottoms.end());
    std::stable_sort(bottoms.begin(), bottoms.end(), [&](LocalId a, LocalId b) { return depth(a) > depth(b); });
    for (auto b : bottoms)
        if (nodes_.count(b)) collect_garbage(b, change);
    enforce_pseudo_bound(change);
    return finish(std::move(change));
}

// ---------------------------------------------------------------------------
// Merge

LocalId KeyTree::import_subtree(const KeyTree& other, LocalId id, TreeChange& change) {
    const auto& src = other.node(id);
    const LocalId copy = new_node(src.kind);
    change.created.push_back(copy);
    if (src.kind == NodeKind::Member) {
        if (members_.count(src.member)) throw Error(ErrorCode::MembershipError, "member '" + src.member + "' already present");
        nodes_.at(copy).member = src.member;
        members_.emplace(src.member, copy);
    }
    for (auto c : src.children) {
        const LocalId cc = import_subtree(other, c, change);
        nodes_.at(cc).parent = copy;
        nodes_.at(copy).children.push_back(cc);
    }
    refresh(copy);
    return copy;
}

TreeChange KeyTree::merge(const KeyTree& other) {
    if (other.empty()) return {};
    for (const auto& m : other.members())
        if (members_.count(m)) throw Error(ErrorCode::MembershipError, "member '" + m + "' already present");
    if (other.node_count() == 1) return insert_leaf(other.node(other.root()).member);

    TreeChange change;
    if (empty()) {
        root_ = import_subtree(other, other.root(), change);
        return finish(std::move(change));
    }

    const LocalId imported = import_subtree(other, other.root(), change);
    LocalId host = root_, guest = imported;
    if (node(imported).weight > node(root_).weight) std::swap(host, guest);
    const int gw = node(guest).weight;

    enum class Mode { AddChild, Wrap };
    struct Candidate {
        LocalId at;
        Mode mode;
        bool balanced;
        int root_weight;
        int gap;
        std::size_t order;
    };
    std::optional<Candidate> best;
    auto better = [](const Candidate& a, const Candidate& b) {
        if (a.balanced != b.balanced) return a.balanced;
        if (a.root_weight != b.root_weight) return a.root_weight < b.root_weight;
        if (a.gap != b.gap) return a.gap < b.gap;
        if (a.mode != b.mode) return a.mode == Mode::AddChild;
        return a.order < b.order;
    };

    std::vector<LocalId> order{host};
    for (std::size_t i = 0; i < order.size(); ++i)
        for (auto c : node(order[i]).children) order.push_back(c);
    // Preorder (left to right) for the tie-break.
    std::vector<LocalId> pre;
    {
        std::vector<LocalId> stack{host};
        while (!stack.empty()) {
            const LocalId id = stack.back();
            stack.pop_back();
            pre.push_back(id);
            const auto& ch = node(id).children;
            for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
        }
    }
    for (std::size_t i = 0; i < pre.size(); ++i) {
        const LocalId v = pre[i];
        const auto& vn = node(v);
        const int gap = std::abs(vn.weight - gw);
        if (gap > 3) continue;
        const int wrapped = 2 + std::max(vn.weight, gw);
        PathEval wrap = vn.parent ? eval_up(vn.parent, v, {wrapped}) : PathEval{true, wrapped};
        wrap.balanced = wrap.balanced && gap <= 1;
        Candidate cw{v, Mode::Wrap, wrap.balanced, wrap.root_weight, gap, i};
        if (!best || better(cw, *best)) best = cw;
        if (vn.parent && node(vn.parent).degree() == 2) {
            const PathEval add = eval_up(vn.parent, 0, {gw});
            Candidate ca{v, Mode::AddChild, add.balanced, add.root_weight, gap, i};
            if (better(ca, *best)) best = ca;
        }
    }
    if (!best)
        throw Error(ErrorCode::InvariantViolation,
                    "merge: no node within weight 3 of the guest tree (guest weight " + std::to_string(gw) + ")");
    change.attach_gap = best->gap;

    LocalId touched = 0;
    if (best->mode == Mode::AddChild) {
        const LocalId q = node(best->at).parent;
        nodes_.at(q).children.push_back(guest);
        nodes_.at(guest).parent = q;
        touched = q;
    } else {
        const LocalId v = best->at;
        const LocalId parent = node(v).parent;
        const LocalId top = new_node(NodeKind::Internal);
        change.created.push_back(top);
        const std::array<LocalId, 1> with{top};
        if (parent == 0) {
            nodes_.at(top).parent = 0;
        } else {
            replace_child(parent, v, with);
        }
        nodes_.at(top).children = {v, guest};
        nodes_.at(v).parent = top;
        nodes_.at(guest).parent = top;
        touched = top;
    }
    LocalId top = touched;
    while (nodes_.at(top).parent != 0) top = nodes_.at(top).parent;
    root_ = top;
    refresh_up(touched);
    mark_path(touched);
    if (!best->balanced) repair_up(touched, change);
    enforce_pseudo_bound(change);
    return finish(std::move(change));
}

// ---------------------------------------------------------------------------

void KeyTree::append_text(LocalId id, std::string& out) const {
    const auto& n = node(id);
    if (n.kind == NodeKind::Member) {
        out += n.member;
        return;
    }
    if (n.kind == NodeKind::Pseudo) {
        out += '*';
        return;
    }
    out += '(';
    for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += ' ';
        append_text(n.children[i], out);
    }
    out += ')';
}

std::string KeyTree::to_string() const {
    std::string out;
    if (!empty()) append_text(root_, out);
    return out;
}

} // namespace gk
