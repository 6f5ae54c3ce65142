#include "gk/roles.hpp"

#include <algorithm>
#include <unordered_set>

namespace gk {

namespace {

constexpr LocalId kNone = 0xFFFFFFFFu;

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint32_t owner) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), owner};
    return std::mt19937_64(seq);
}

} // namespace

const char* to_string(EventKind k) {
    switch (k) {
    case EventKind::Init: return "init";
    case EventKind::Join: return "join";
    case EventKind::Leave: return "leave";
    case EventKind::Merge: return "merge";
    case EventKind::Partition: return "partition";
    }
    return "?";
}

Bytes encode_body(const Envelope& e) {
    return std::visit(
        [](const auto& b) -> Bytes {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, SeedUnicast>) {
                ByteWriter w;
                w.u32(b.subgroup).u16(static_cast<std::uint16_t>(b.seed.j)).blob(b.seed.s);
                return std::move(w).take();
            } else if constexpr (std::is_same_v<T, RekeyBroadcast>) {
                return encode(b);
            } else {
                ByteWriter w;
                w.u16(static_cast<std::uint16_t>(b.size()));
                for (const auto& m : b) w.raw(encode(m));
                return std::move(w).take();
            }
        },
        e.body);
}

std::shared_ptr<const KeyCodec> make_codec(const GroupConfig& cfg) {
    auto h = make_hasher(cfg.hash);
    return std::make_shared<KeyCodec>(cfg.params, h, make_cipher(cfg.cipher, h));
}

// ---------------------------------------------------------------------------
// SubgroupController

SubgroupController::SubgroupController(std::uint32_t id, std::string name, std::shared_ptr<const KeyCodec> codec,
                                       std::uint64_t seed)
    : id_(id),
      name_(std::move(name)),
      codec_(std::move(codec)),
      rng_(seeded_rng(seed, id)),
      nonces_(id, codec_->hasher_ptr(), codec_->params().nonce_bytes),
      positions_(codec_->field().code_length()) {}

LocalId SubgroupController::sn_local() const {
    if (tree_.empty() || tree_.node(tree_.root()).is_leaf()) return 0;
    return tree_.root();
}

NodeId SubgroupController::node_id(LocalId local) const {
    return local == sn_local() ? NodeId::make(id_, 0) : NodeId::make(id_, local);
}

const SessionKey& SubgroupController::sn_key() const {
    auto it = keys_.find(sn_node());
    if (it == keys_.end()) throw Error(ErrorCode::ProtocolError, "subgroup " + name_ + " has no key");
    return it->second;
}

const SeedKey& SubgroupController::seed_of(LocalId leaf) const {
    auto it = leaf_seeds_.find(leaf);
    if (it == leaf_seeds_.end()) throw Error(ErrorCode::OutOfRange, "no seed for node " + std::to_string(leaf));
    return it->second;
}

Secret SubgroupController::secret_of(LocalId local) const {
    if (tree_.node(local).is_leaf()) return seed_of(local).s;
    std::unordered_map<LocalId, Secret> memo;
    return logic_secret(local, memo);
}

Position SubgroupController::position_of(LocalId local) const {
    if (tree_.node(local).is_leaf()) return seed_of(local).j;
    return inner_pos_.at(local);
}

std::optional<SessionKey> SubgroupController::key(NodeId node) const {
    auto it = keys_.find(node);
    if (it == keys_.end()) return std::nullopt;
    return it->second;
}

std::vector<LocalId> SubgroupController::kids(LocalId local) const {
    if (local == 0) return tree_.empty() ? std::vector<LocalId>{} : std::vector<LocalId>{tree_.root()};
    return tree_.node(local).children;
}

LocalId SubgroupController::up(LocalId local) const {
    if (local == 0) return kNone;
    const LocalId p = tree_.node(local).parent;
    if (p != 0) return p;
    // A leaf root sits under the virtual SN node.
    return tree_.node(local).is_leaf() ? 0 : kNone;
}

bool SubgroupController::is_bottom(LocalId local) const {
    const auto ch = kids(local);
    return !ch.empty() && tree_.node(ch.front()).is_leaf();
}

std::vector<LocalId> SubgroupController::bottoms() const {
    if (tree_.empty()) return {};
    if (sn_local() == 0) return {0};
    return tree_.bottom_nodes();
}

std::vector<NodeId> SubgroupController::path_of(const MemberId& m) const {
    std::vector<NodeId> out;
    for (LocalId x = up(tree_.leaf_of(m)); x != kNone; x = up(x)) out.push_back(node_id(x));
    return out;
}

int SubgroupController::path_levels(const MemberId& m) const { return static_cast<int>(path_of(m).size()) + 1; }

int SubgroupController::height() const {
    if (tree_.empty()) return 0;
    int h = 0;
    for (auto leaf : tree_.leaves()) {
        int levels = 1;
        for (LocalId x = up(leaf); x != kNone; x = up(x)) ++levels;
        h = std::max(h, levels);
    }
    return h;
}

SubgroupController::Snapshot SubgroupController::snapshot() const {
    Snapshot s;
    s.empty = tree_.empty();
    s.sn_local = sn_local();
    for (auto id : tree_.preorder()) s.parent.emplace(id, up(id));
    return s;
}

void SubgroupController::sync_seeds(const TreeChange& c, std::vector<Envelope>& out) {
    for (auto id : c.removed) {
        if (auto it = leaf_seeds_.find(id); it != leaf_seeds_.end()) {
            positions_.release(it->second.j);
            leaf_seeds_.erase(it);
        }
        if (auto it = inner_pos_.find(id); it != inner_pos_.end()) {
            positions_.release(it->second);
            inner_pos_.erase(it);
        }
    }
    for (auto id : c.created) {
        if (!tree_.contains_node(id)) continue;
        const auto& n = tree_.node(id);
        if (!n.is_leaf()) {
            inner_pos_[id] = positions_.take(rng_);
            continue;
        }
        SeedKey s{positions_.take(rng_), codec_->random_secret(rng_)};
        leaf_seeds_[id] = s;
        if (n.kind == NodeKind::Member) {
            Envelope e;
            e.scope = id_;
            e.audience = Audience::Member;
            e.subgroup = id_;
            e.to = n.member;
            e.label = "seed";
            e.body = SeedUnicast{n.member, id_, s};
            out.push_back(std::move(e));
        }
    }
}

Secret SubgroupController::logic_secret(LocalId local, std::unordered_map<LocalId, Secret>& memo) const {
    if (auto it = memo.find(local); it != memo.end()) return it->second;
    const auto ch = kids(local);
    std::vector<Secret> parts;
    for (auto c : ch) parts.push_back(tree_.node(c).is_leaf() ? leaf_seeds_.at(c).s : logic_secret(c, memo));
    Secret s = parts.size() >= 2 ? logic_seed(parts) : parts.front();
    memo.emplace(local, s);
    return s;
}

std::vector<LocalId> SubgroupController::dirty_set(const TreeChange& c, const Snapshot& before) const {
    std::set<LocalId> d(c.dirty.begin(), c.dirty.end());
    if (tree_.empty()) return {};
    d.insert(sn_local());
    // A former SN node that is now an ordinary node changes identity.
    if (!before.empty && before.sn_local != 0 && before.sn_local != sn_local() && tree_.contains_node(before.sn_local) &&
        !tree_.node(before.sn_local).is_leaf()) {
        for (LocalId x = before.sn_local; x != kNone; x = up(x)) d.insert(x);
    }
    std::vector<std::pair<int, LocalId>> keyed;
    for (auto x : d) keyed.emplace_back(x == 0 ? 1 : -tree_.depth(x), x);
    std::sort(keyed.begin(), keyed.end());
    std::vector<LocalId> out;
    for (auto& [k, x] : keyed) out.push_back(x);
    return out;
}

void SubgroupController::regenerate(std::span<const LocalId> dirty) {
    std::unordered_map<LocalId, Secret> memo;
    last_mds_.clear();
    for (auto a : dirty) {
        std::vector<Participant> ps;
        for (auto c : kids(a)) {
            if (tree_.node(c).is_leaf())
                ps.push_back({leaf_seeds_.at(c).j, leaf_seeds_.at(c).s});
            else
                ps.push_back({inner_pos_.at(c), logic_secret(c, memo)});
        }
        auto [key, b] = codec_->generate(node_id(a), epoch_, ps, nonces_.next(), nonces_, &ops);
        keys_[key.node] = key;
        last_mds_[key.node] = std::move(b);
    }
    // Drop keys of nodes that no longer exist under their id.
    std::unordered_set<NodeId> live;
    if (!tree_.empty()) live.insert(sn_node());
    for (auto x : tree_.preorder())
        if (!tree_.node(x).is_leaf()) live.insert(node_id(x));
    for (auto it = keys_.begin(); it != keys_.end();) it = live.count(it->first) ? std::next(it) : keys_.erase(it);
}

Envelope SubgroupController::mds_envelope(LocalId, const RekeyBroadcast& b) const {
    Envelope e;
    e.scope = id_;
    e.audience = Audience::Subgroup;
    e.subgroup = id_;
    e.label = "mds";
    e.body = b;
    return e;
}

Envelope SubgroupController::packet(std::vector<SealedKeyMsg> msgs) const {
    Envelope e;
    e.scope = id_;
    e.audience = Audience::Subgroup;
    e.subgroup = id_;
    e.label = "path";
    e.body = std::move(msgs);
    return e;
}

std::vector<Envelope> SubgroupController::rekey(EventKind kind, const TreeChange& c, const Snapshot& before) {
    std::vector<Envelope> out;
    if (tree_.empty()) {
        keys_.clear();
        gk_.reset();
        return out;
    }
    const auto old_keys = keys_;
    const auto dirty = dirty_set(c, before);
    regenerate(dirty);
    const std::unordered_set<LocalId> in_dirty(dirty.begin(), dirty.end());
    const std::unordered_set<LocalId> created(c.created.begin(), c.created.end());

    for (auto a : dirty)
        if (is_bottom(a)) out.push_back(mds_envelope(a, last_mds_.at(node_id(a))));

    if (kind == EventKind::Join || kind == EventKind::Merge) {
        // Nobody left: an upper node's new key goes under its old key to the
        // members that already held it, and under each child key otherwise.
        for (auto a : dirty) {
            if (is_bottom(a)) continue;
            const SessionKey& fresh = keys_.at(node_id(a));
            std::vector<SealedKeyMsg> msgs;
            bool same_identity;
            if (a == sn_local())
                same_identity = !before.empty;
            else
                same_identity = !created.count(a) && before.parent.count(a) && before.sn_local != a;
            const auto old = same_identity ? old_keys.find(node_id(a)) : old_keys.end();
            const bool has_old = old != old_keys.end();
            if (has_old) msgs.push_back(codec_->seal(old->second, fresh, fresh.node, &ops));
            for (auto ch : kids(a)) {
                const bool moved = !before.parent.count(ch) || before.parent.at(ch) != a;
                if (in_dirty.count(ch) || !has_old || moved)
                    msgs.push_back(codec_->seal(keys_.at(node_id(ch)), fresh, node_id(ch), &ops));
            }
            out.push_back(packet(std::move(msgs)));
        }
        return out;
    }

    // Init / leave / partition: one packet per bottom node, under its key,
    // carrying every refreshed key above it.
    for (auto p : bottoms()) {
        std::vector<SealedKeyMsg> msgs;
        const SessionKey& sealing = keys_.at(node_id(p));
        LocalId below = p;
        for (LocalId a = up(p); a != kNone; below = a, a = up(a))
            if (in_dirty.count(a)) msgs.push_back(codec_->seal(sealing, keys_.at(node_id(a)), node_id(below), &ops));
        if (!msgs.empty()) out.push_back(packet(std::move(msgs)));
    }
    return out;
}

std::vector<Envelope> SubgroupController::init(std::span<const MemberId> members) {
    if (members.empty()) throw Error(ErrorCode::ConfigError, "subgroup " + name_ + " has no members");
    if (!tree_.empty()) throw Error(ErrorCode::ProtocolError, "subgroup " + name_ + " already initialized");
    const Snapshot before = snapshot();
    ++epoch_;
    tree_ = KeyTree::build_balanced(members);
    TreeChange c;
    c.created = tree_.preorder();
    for (auto x : c.created)
        if (!tree_.node(x).is_leaf()) c.dirty.push_back(x);
    std::vector<Envelope> out;
    sync_seeds(c, out);
    auto rest = rekey(EventKind::Init, c, before);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

std::vector<Envelope> SubgroupController::join(const MemberId& m) {
    const Snapshot before = snapshot();
    const TreeChange c = tree_.insert_leaf(m);
    ++epoch_;
    std::vector<Envelope> out;
    sync_seeds(c, out);
    auto rest = rekey(EventKind::Join, c, before);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

std::vector<Envelope> SubgroupController::merge(std::span<const MemberId> members) {
    if (members.empty()) return {};
    const Snapshot before = snapshot();
    const KeyTree guest = KeyTree::build_balanced(members);
    const TreeChange c = tree_.merge(guest);
    last_attach_gap_ = c.attach_gap;
    ++epoch_;
    std::vector<Envelope> out;
    sync_seeds(c, out);
    auto rest = rekey(EventKind::Merge, c, before);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

std::vector<Envelope> SubgroupController::partition(std::span<const MemberId> members) {
    const Snapshot before = snapshot();
    const TreeChange c = tree_.partition_leaves(members);
    ++epoch_;
    std::vector<Envelope> out;
    sync_seeds(c, out);
    auto rest = rekey(EventKind::Partition, c, before);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

void SubgroupController::install_gk(const SeedKey& sn_seed, const RekeyBroadcast& b) {
    gk_ = codec_->recover(sn_seed, b, &gk_ops);
}

SealedKeyMsg SubgroupController::seal_gk(const SessionKey& gk) {
    return codec_->seal(sn_key(), gk, sn_node(), &ops);
}

// ---------------------------------------------------------------------------
// GroupController

GroupController::GroupController(std::shared_ptr<const KeyCodec> codec, std::uint64_t seed)
    : codec_(std::move(codec)),
      rng_(seeded_rng(seed, NodeId::kBaseStation)),
      nonces_(NodeId::kBaseStation, codec_->hasher_ptr(), codec_->params().nonce_bytes),
      positions_(codec_->field().code_length()) {}

const SeedKey& GroupController::provision(std::uint32_t sn) {
    if (sn_seeds_.count(sn)) throw Error(ErrorCode::ConfigError, "SN " + std::to_string(sn) + " provisioned twice");
    SeedKey s{positions_.take(rng_), codec_->random_secret(rng_)};
    return sn_seeds_.emplace(sn, std::move(s)).first->second;
}

std::optional<RekeyBroadcast> GroupController::refresh(std::span<const std::uint32_t> sns) {
    ++epoch_;
    if (sns.empty()) {
        gk_.reset();
        return std::nullopt;
    }
    std::vector<Participant> ps;
    for (auto s : sns) ps.push_back({sn_seeds_.at(s).j, sn_seeds_.at(s).s});
    auto [key, b] = codec_->generate(gk_node(), epoch_, ps, nonces_.next(), nonces_, &ops);
    gk_ = std::move(key);
    return std::move(b);
}

// ---------------------------------------------------------------------------
// MemberState

void MemberState::process(const Envelope& e, const KeyCodec& codec, OpCounts* ops, OpenMemo* memo) {
    if (const auto* s = std::get_if<SeedUnicast>(&e.body)) {
        if (s->to != id_) return;
        seed_ = s->seed;
        subgroup_ = s->subgroup;
        keyring_.clear();
        return;
    }
    if (const auto* b = std::get_if<RekeyBroadcast>(&e.body)) {
        if (!seed_ || b->target.owner() != subgroup_) return;
        if (std::find(b->positions.begin(), b->positions.end(), seed_->j) == b->positions.end()) return;
        if (!keyring_.empty() && keyring_.front().node == b->target && keyring_.front().epoch >= b->epoch) return;
        keyring_ = {codec.recover(*seed_, *b, ops)};
        return;
    }
    for (const auto& m : std::get<std::vector<SealedKeyMsg>>(e.body)) process_sealed(m, codec, ops, memo);
}

void MemberState::process_sealed(const SealedKeyMsg& m, const KeyCodec& codec, OpCounts* ops, OpenMemo* memo) {
    auto holder = std::find_if(keyring_.begin(), keyring_.end(), [&](const SessionKey& k) {
        return k.node == m.sealing_node && k.epoch == m.sealing_epoch;
    });
    if (holder == keyring_.end()) return;
    for (const auto& k : keyring_)
        if (k.node == m.payload_node && k.epoch >= m.payload_epoch) return;
    SessionKey fresh;
    if (memo) {
        auto [it, added] = memo->opened.try_emplace({&m, holder->expanded});
        if (added) {
            try {
                it->second = codec.open(*holder, m, ops);
            } catch (...) {
                memo->opened.erase(it);
                throw;
            }
        } else if (ops) {
            ++ops->decrypt;
        }
        fresh = it->second;
    } else {
        fresh = codec.open(*holder, m, ops);
    }
    if (m.payload_node == m.sealing_node) {
        *holder = std::move(fresh);
        return;
    }
    auto anchor = std::find_if(keyring_.begin(), keyring_.end(), [&](const SessionKey& k) { return k.node == m.anchor; });
    if (anchor == keyring_.end())
        throw Error(ErrorCode::ProtocolError, "member " + id_ + ": anchor node not on key path");
    keyring_.erase(std::next(anchor), keyring_.end());
    keyring_.push_back(std::move(fresh));
}

// ---------------------------------------------------------------------------
// Group

Group::Group(const GroupConfig& cfg) : codec_(make_codec(cfg)), bs_(codec_, cfg.seed), seed_(cfg.seed) {}

const SubgroupController& Group::subgroup(const std::string& name) const { return subgroup(subgroup_id(name)); }

std::uint32_t Group::subgroup_id(const std::string& name) const {
    for (const auto& s : subs_)
        if (s.name() == name) return s.id();
    throw Error(ErrorCode::ConfigError, "unknown subgroup '" + name + "'");
}

std::uint32_t Group::subgroup_of(const MemberId& m) const {
    auto it = where_.find(m);
    if (it == where_.end()) throw Error(ErrorCode::MembershipError, "unknown member '" + m + "'");
    return it->second;
}

std::vector<MemberId> Group::members() const {
    std::vector<MemberId> out;
    for (const auto& s : subs_) {
        auto ms = s.tree().members();
        out.insert(out.end(), ms.begin(), ms.end());
    }
    return out;
}

OpCounts Group::sn_ops() const {
    OpCounts total;
    for (const auto& s : subs_) total += s.ops;
    return total;
}

OpCounts Group::sn_gk_ops() const {
    OpCounts total;
    for (const auto& s : subs_) total += s.gk_ops;
    return total;
}

std::vector<SessionKey> Group::expected_keyring(const MemberId& m) const {
    const auto& s = subgroup(subgroup_of(m));
    std::vector<SessionKey> out;
    for (auto id : s.path_of(m)) out.push_back(*s.key(id));
    if (bs_.gk()) out.push_back(*bs_.gk());
    return out;
}

void Group::refresh_gk(EventKind kind, std::uint32_t affected, std::vector<Envelope>& out) {
    const std::optional<SessionKey> old = bs_.gk();
    std::vector<std::uint32_t> active;
    for (const auto& s : subs_)
        if (s.active()) active.push_back(s.id());
    const auto b = bs_.refresh(active);
    if (!b) return;

    Envelope mds;
    mds.scope = NodeId::kBaseStation;
    mds.audience = Audience::Controllers;
    mds.label = "gk-mds";
    mds.body = *b;
    out.push_back(std::move(mds));
    for (auto s : active) sub(s).install_gk(bs_.sn_seed(s), *b);
    const SessionKey& gk = *bs_.gk();

    auto gk_packet = [&](std::uint32_t scope, Audience aud, std::uint32_t subgroup, std::vector<SealedKeyMsg> msgs) {
        Envelope e;
        e.scope = scope;
        e.audience = aud;
        e.subgroup = subgroup;
        e.label = "gk";
        e.body = std::move(msgs);
        out.push_back(std::move(e));
    };

    const bool join_like = kind == EventKind::Join || kind == EventKind::Merge;
    if (join_like && old && sub(affected).active()) {
        // Old GK still secret: one group-wide packet covers everyone.
        std::vector<SealedKeyMsg> msgs;
        msgs.push_back(codec_->seal(*old, gk, gk.node, &bs_.ops));
        msgs.push_back(sub(affected).seal_gk(gk));
        gk_packet(affected, Audience::Group, 0, std::move(msgs));
        return;
    }
    for (auto s : active) {
        const std::uint32_t scope = kind == EventKind::Init || s == affected ? s : NodeId::kBaseStation;
        gk_packet(scope, Audience::Subgroup, s, {sub(s).seal_gk(gk)});
    }
}

std::vector<Envelope> Group::init(const Layout& layout) {
    if (initialized_) throw Error(ErrorCode::ProtocolError, "group already initialized");
    if (layout.empty()) throw Error(ErrorCode::ConfigError, "no subgroups");
    std::set<std::string> names;
    std::unordered_map<MemberId, std::uint32_t> where;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& [name, ms] = layout[i];
        if (!names.insert(name).second) throw Error(ErrorCode::ConfigError, "subgroup '" + name + "' declared twice");
        if (ms.empty()) throw Error(ErrorCode::ConfigError, "subgroup '" + name + "' has no members");
        for (const auto& m : ms)
            if (!where.emplace(m, static_cast<std::uint32_t>(i + 1)).second)
                throw Error(ErrorCode::MembershipError, "member '" + m + "' listed twice");
    }
    std::vector<Envelope> out;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto id = static_cast<std::uint32_t>(i + 1);
        subs_.emplace_back(id, layout[i].first, codec_, seed_);
        bs_.provision(id);
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        auto msgs = subs_[i].init(layout[i].second);
        out.insert(out.end(), msgs.begin(), msgs.end());
    }
    where_ = std::move(where);
    refresh_gk(EventKind::Init, 0, out);
    initialized_ = true;
    return out;
}

std::vector<Envelope> Group::join(const std::string& sn, const MemberId& m) {
    if (!initialized_) throw Error(ErrorCode::ProtocolError, "group not initialized");
    if (has_member(m)) throw Error(ErrorCode::MembershipError, "member '" + m + "' already present");
    const std::uint32_t id = subgroup_id(sn);
    auto out = sub(id).join(m);
    where_.emplace(m, id);
    refresh_gk(EventKind::Join, id, out);
    return out;
}

std::vector<Envelope> Group::merge(const std::string& sn, std::span<const MemberId> ms) {
    if (!initialized_) throw Error(ErrorCode::ProtocolError, "group not initialized");
    const std::uint32_t id = subgroup_id(sn);
    std::set<MemberId> seen;
    for (const auto& m : ms)
        if (has_member(m) || !seen.insert(m).second)
            throw Error(ErrorCode::MembershipError, "member '" + m + "' already present");
    if (ms.empty()) return {};
    auto out = sub(id).merge(ms);
    for (const auto& m : ms) where_.emplace(m, id);
    refresh_gk(EventKind::Merge, id, out);
    return out;
}

std::vector<Envelope> Group::leave(const MemberId& m) {
    const std::array<MemberId, 1> one{m};
    return partition(one);
}

std::vector<Envelope> Group::partition(std::span<const MemberId> ms) {
    if (!initialized_) throw Error(ErrorCode::ProtocolError, "group not initialized");
    if (ms.empty()) return {};
    const std::uint32_t id = subgroup_of(ms.front());
    for (const auto& m : ms)
        if (subgroup_of(m) != id) throw Error(ErrorCode::MembershipError, "partition spans several subgroups");
    auto out = sub(id).partition(ms);
    for (const auto& m : ms) where_.erase(m);
    refresh_gk(ms.size() == 1 ? EventKind::Leave : EventKind::Partition, id, out);
    return out;
}

} // namespace gk
