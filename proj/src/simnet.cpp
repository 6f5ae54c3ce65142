#include "gk/simnet.hpp"

#include "json.hpp"

#include <algorithm>
#include <istream>
#include <random>
#include <sstream>

namespace gk {

using json = nlohmann::json;

namespace {

OpCounts diff(const OpCounts& a, const OpCounts& b) {
    return {a.hash - b.hash, a.matrix - b.matrix, a.encrypt - b.encrypt, a.decrypt - b.decrypt};
}

const char* audience_name(Audience a) {
    switch (a) {
    case Audience::Member: return "member";
    case Audience::Subgroup: return "subgroup";
    case Audience::Group: return "group";
    case Audience::Controllers: return "controllers";
    }
    return "?";
}

EventKind kind_from(const std::string& s) {
    if (s == "init") return EventKind::Init;
    if (s == "join") return EventKind::Join;
    if (s == "leave") return EventKind::Leave;
    if (s == "merge") return EventKind::Merge;
    if (s == "partition") return EventKind::Partition;
    throw Error(ErrorCode::ParseError, "unknown event kind '" + s + "'");
}

Role role_from(const std::string& s) {
    if (s == "bs") return Role::BaseStation;
    if (s == "sn") return Role::SinkNode;
    if (s == "sn-gk") return Role::SinkGk;
    if (s == "member") return Role::Member;
    throw Error(ErrorCode::ParseError, "unknown role '" + s + "'");
}

} // namespace

const char* to_string(Role r) {
    switch (r) {
    case Role::BaseStation: return "bs";
    case Role::SinkNode: return "sn";
    case Role::SinkGk: return "sn-gk";
    case Role::Member: return "member";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Scenario I/O

Scenario parse_scenario(std::istream& in) {
    Scenario s;
    std::map<MemberId, std::string> where;
    std::set<std::string> sns;
    std::string line;
    std::size_t lineno = 0;
    bool seen_event = false;
    auto fail = [&](const std::string& what) -> Error {
        return Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json r;
        try {
            r = json::parse(line);
        } catch (const json::exception& e) {
            throw fail(std::string("malformed record: ") + e.what());
        }
        if (!r.is_object() || !r.contains("type") || !r["type"].is_string()) throw fail("record without a type");
        const std::string type = r["type"];
        try {
            if (type == "config") {
                if (seen_event || !s.layout.empty()) throw fail("config must come first");
                s.config.seed = r.value("seed", std::uint64_t{0});
                s.config.params.field_bits = r.value("field_bits", 8u);
                s.config.hash = r.value("hash", std::string("sha256"));
                s.config.cipher = r.value("cipher", std::string("hash-stream"));
                continue;
            }
            if (type == "subgroup") {
                if (seen_event) throw fail("subgroup declared after events");
                const std::string sn = r.at("sn");
                if (!sns.insert(sn).second) throw fail("subgroup '" + sn + "' declared twice");
                std::vector<MemberId> ms = r.at("members").get<std::vector<MemberId>>();
                if (ms.empty()) throw fail("subgroup '" + sn + "' has no members");
                for (const auto& m : ms)
                    if (!where.emplace(m, sn).second) throw fail("member '" + m + "' declared twice");
                s.layout.emplace_back(sn, std::move(ms));
                continue;
            }
            ScenarioEvent e;
            e.kind = kind_from(type);
            e.line = lineno;
            if (e.kind == EventKind::Init) throw fail("init is implicit");
            seen_event = true;
            if (r.contains("member")) e.members.push_back(r["member"].get<std::string>());
            if (r.contains("members")) {
                auto more = r["members"].get<std::vector<MemberId>>();
                e.members.insert(e.members.end(), more.begin(), more.end());
            }
            e.sn = r.value("sn", std::string());
            if (e.members.empty()) throw fail("event without members");
            std::set<MemberId> uniq(e.members.begin(), e.members.end());
            if (uniq.size() != e.members.size()) throw fail("member listed twice");
            if ((e.kind == EventKind::Join || e.kind == EventKind::Leave) && e.members.size() != 1)
                throw fail(std::string(to_string(e.kind)) + " takes exactly one member");
            if (e.kind == EventKind::Join || e.kind == EventKind::Merge) {
                if (!sns.count(e.sn)) throw fail("unknown subgroup '" + e.sn + "'");
                for (const auto& m : e.members) {
                    if (where.count(m)) throw fail("member '" + m + "' is already in the group");
                    where.emplace(m, e.sn);
                }
            } else {
                for (const auto& m : e.members) {
                    auto it = where.find(m);
                    if (it == where.end()) throw fail("unknown member '" + m + "'");
                    if (e.sn.empty()) e.sn = it->second;
                    if (it->second != e.sn) throw fail("members of one event must share a subgroup");
                }
                for (const auto& m : e.members) where.erase(m);
            }
            s.events.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw fail(std::string("bad field: ") + ex.what());
        }
    }
    if (s.layout.empty()) throw Error(ErrorCode::ParseError, "scenario declares no subgroups");
    return s;
}

std::string to_jsonl(const Scenario& s) {
    std::ostringstream out;
    out << json{{"type", "config"},
                {"seed", s.config.seed},
                {"field_bits", s.config.params.field_bits},
                {"hash", s.config.hash},
                {"cipher", s.config.cipher}}
               .dump()
        << '\n';
    for (const auto& [sn, ms] : s.layout) out << json{{"type", "subgroup"}, {"sn", sn}, {"members", ms}}.dump() << '\n';
    for (const auto& e : s.events) {
        json r{{"type", to_string(e.kind)}, {"sn", e.sn}};
        if (e.kind == EventKind::Join || e.kind == EventKind::Leave)
            r["member"] = e.members.front();
        else
            r["members"] = e.members;
        out << r.dump() << '\n';
    }
    return out.str();
}

std::size_t subgroup_cap(unsigned field_bits) {
    // Leaves (pseudo <= members) plus internal nodes need < 4n positions.
    const std::size_t by_positions = (std::size_t{1} << field_bits) / 4;
    return std::min<std::size_t>(by_positions, 200);
}

Scenario generate_scenario(const GeneratorOptions& opt) {
    if (opt.subgroups == 0) throw Error(ErrorCode::ConfigError, "need at least one subgroup");
    const std::size_t cap = subgroup_cap(opt.field_bits);
    if (opt.members < opt.subgroups) throw Error(ErrorCode::ConfigError, "fewer members than subgroups");
    if (opt.members * 20 > cap * opt.subgroups * 17)  // leave ~15% headroom for churn
        throw Error(ErrorCode::ConfigError, "population too large for " + std::to_string(opt.subgroups) +
                                                " subgroups at m=" + std::to_string(opt.field_bits));
    Scenario s;
    s.config.seed = opt.seed;
    s.config.params.field_bits = opt.field_bits;
    std::mt19937_64 rng(opt.seed ^ 0x5eed5eedULL);
    std::uint64_t next = 1;
    std::vector<std::vector<MemberId>> pop(opt.subgroups);
    std::vector<std::string> names;
    for (std::size_t g = 0; g < opt.subgroups; ++g) {
        names.push_back("SN" + std::to_string(g + 1));
        const std::size_t n = opt.members / opt.subgroups + (g < opt.members % opt.subgroups ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) pop[g].push_back("m" + std::to_string(next++));
        s.layout.emplace_back(names[g], pop[g]);
    }
    auto total = [&] {
        std::size_t t = 0;
        for (auto& p : pop) t += p.size();
        return t;
    };
    auto pick = [&](auto pred) -> std::optional<std::size_t> {
        std::vector<std::size_t> ok;
        for (std::size_t g = 0; g < pop.size(); ++g)
            if (pred(pop[g].size())) ok.push_back(g);
        if (ok.empty()) return std::nullopt;
        return ok[rng() % ok.size()];
    };
    auto take = [&](std::size_t g) {
        auto& p = pop[g];
        const std::size_t i = rng() % p.size();
        std::swap(p[i], p.back());
        MemberId m = p.back();
        p.pop_back();
        return m;
    };

    for (std::size_t k = 0; k < opt.events; ++k) {
        const double t = static_cast<double>(total()), target = static_cast<double>(opt.members);
        double w_grow = 1.0, w_shrink = 1.0;
        if (t > target * 1.1) w_grow = 0.3;
        if (t < target * 0.9) w_shrink = 0.3;
        const double weights[4] = {0.30 * w_grow, 0.30 * w_shrink, 0.15 * w_grow, 0.15 * w_shrink};
        std::discrete_distribution<int> dist(std::begin(weights), std::end(weights));
        ScenarioEvent e;
        for (int attempt = 0; attempt < 8 && e.members.empty(); ++attempt) {
            switch (dist(rng)) {
            case 0:
                if (auto g = pick([&](std::size_t n) { return n < cap; })) {
                    e.kind = EventKind::Join;
                    e.sn = names[*g];
                    e.members.push_back("m" + std::to_string(next++));
                    pop[*g].push_back(e.members.back());
                }
                break;
            case 1:
                if (auto g = pick([](std::size_t n) { return n >= 1; })) {
                    e.kind = EventKind::Leave;
                    e.sn = names[*g];
                    e.members.push_back(take(*g));
                }
                break;
            case 2:
                if (auto g = pick([&](std::size_t n) { return n + 2 <= cap; })) {
                    const std::size_t room = cap - pop[*g].size();
                    const std::size_t x = 2 + rng() % std::min<std::size_t>(4, room - 1);
                    e.kind = EventKind::Merge;
                    e.sn = names[*g];
                    for (std::size_t i = 0; i < x; ++i) e.members.push_back("m" + std::to_string(next++));
                    pop[*g].insert(pop[*g].end(), e.members.begin(), e.members.end());
                }
                break;
            default:
                if (auto g = pick([](std::size_t n) { return n >= 2; })) {
                    const std::size_t x = 2 + rng() % std::min<std::size_t>(4, pop[*g].size() - 1);
                    e.kind = EventKind::Partition;
                    e.sn = names[*g];
                    for (std::size_t i = 0; i < x; ++i) e.members.push_back(take(*g));
                }
                break;
            }
        }
        if (!e.members.empty()) s.events.push_back(std::move(e));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Ledger

Traffic EventCost::total() const {
    Traffic t;
    for (const auto& [s, v] : by_scope) t += v;
    return t;
}

Traffic EventCost::scope(std::uint32_t s) const {
    auto it = by_scope.find(s);
    return it == by_scope.end() ? Traffic{} : it->second;
}

void CostLedger::begin(const EventInfo& info) {
    EventCost c;
    c.info = info;
    events_.push_back(std::move(c));
}

void CostLedger::record(std::uint32_t scope, bool unicast, std::size_t bytes) {
    if (events_.empty()) throw Error(ErrorCode::ProtocolError, "message outside an event");
    auto& t = events_.back().by_scope[scope];
    (unicast ? t.unicasts : t.multicasts) += 1;
    t.bytes += bytes;
}

void CostLedger::add_ops(Role r, const OpCounts& ops) {
    if (events_.empty()) throw Error(ErrorCode::ProtocolError, "operations outside an event");
    events_.back().ops[r] += ops;
}

void CostLedger::finish(const EventInfo& info) {
    if (events_.empty()) throw Error(ErrorCode::ProtocolError, "no open event");
    events_.back().info = info;
}

Traffic CostLedger::total() const {
    Traffic t;
    for (const auto& e : events_) t += e.total();
    return t;
}

OpCounts CostLedger::ops(Role r) const {
    OpCounts o;
    for (const auto& e : events_)
        if (auto it = e.ops.find(r); it != e.ops.end()) o += it->second;
    return o;
}

bool operator==(const CostLedger& a, const CostLedger& b) {
    if (a.events_.size() != b.events_.size()) return false;
    for (std::size_t i = 0; i < a.events_.size(); ++i) {
        const auto& x = a.events_[i];
        const auto& y = b.events_[i];
        if (x.info.index != y.info.index || x.info.kind != y.info.kind || x.info.scope != y.info.scope) return false;
        if (x.by_scope != y.by_scope) return false;
        // Zero op entries may be omitted on either side.
        for (Role r : {Role::BaseStation, Role::SinkNode, Role::SinkGk, Role::Member}) {
            const auto fx = x.ops.find(r), fy = y.ops.find(r);
            const OpCounts ox = fx == x.ops.end() ? OpCounts{} : fx->second;
            const OpCounts oy = fy == y.ops.end() ? OpCounts{} : fy->second;
            if (!(ox == oy)) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Observers

std::size_t AdversaryObserver::try_keys(std::vector<SessionKey>& keys, const std::vector<SealedKeyMsg>& msgs,
                                        std::uint64_t& attempts) {
    std::size_t opens = 0;
    for (const auto& m : msgs) {
        // Every key value is tried regardless of the node it belonged to.
        for (std::size_t i = 0; i < keys.size(); ++i) {
            ++attempts;
            SessionKey k = keys[i];
            k.node = m.sealing_node;
            k.epoch = m.sealing_epoch;
            if (auto got = codec_->try_open(k, m)) {
                ++opens;
                keys.push_back(*got);
                break;
            }
        }
    }
    return opens;
}

void AdversaryObserver::revoke(Principal p) {
    revoked_.push_back(std::move(p));
    while (revoked_.size() > pool_) revoked_.pop_front();
}

void AdversaryObserver::observe(std::uint64_t event, const std::vector<Envelope>& traffic,
                                const std::vector<FieldElem>& truths) {
    Recorded rec{event, {}, {}};
    std::size_t ti = 0;
    for (const auto& e : traffic) {
        if (const auto* v = std::get_if<std::vector<SealedKeyMsg>>(&e.body))
            rec.sealed.insert(rec.sealed.end(), v->begin(), v->end());
        else if (const auto* b = std::get_if<RekeyBroadcast>(&e.body))
            rec.broadcasts.push_back({*b, truths.at(ti++)});
    }

    std::map<std::uint32_t, std::vector<const Principal*>> by_subgroup;
    for (auto& p : revoked_) {
        if (event - p.event > window_) continue;
        stats_.sealed_opens += try_keys(p.keys, rec.sealed, stats_.sealed_attempts);
        for (const auto& rb : rec.broadcasts) {
            if (rb.b.target.owner() != p.subgroup) continue;
            ++stats_.mds_attempts;
            stats_.mds_successes += codec_->recover(p.seed, rb.b).raw == rb.truth;
        }
        by_subgroup[p.subgroup].push_back(&p);
    }

    // Conspiracy: revoked members of one subgroup pool their seeds and try the
    // XOR of k of them at each of their positions.
    for (const auto& rb : rec.broadcasts) {
        auto it = by_subgroup.find(rb.b.target.owner());
        if (it == by_subgroup.end() || it->second.size() < 2) continue;
        const auto& ps = it->second;
        const std::size_t n = std::min(conspiracy_, ps.size());
        Secret pooled = ps[ps.size() - 1]->seed.s;
        for (std::size_t k = 2; k <= n; ++k) {
            xor_into(pooled, ps[ps.size() - k]->seed.s);
            for (std::size_t i = 1; i <= k; ++i) {
                ++stats_.conspiracy_attempts;
                const SeedKey forged{ps[ps.size() - i]->seed.j, pooled};
                stats_.conspiracy_successes += codec_->recover(forged, rb.b).raw == rb.truth;
            }
        }
    }

    past_.push_back(std::move(rec));
    while (!past_.empty() && event - past_.front().event > window_) past_.pop_front();
}

void AdversaryObserver::probe_backward(const Principal& joiner) {
    for (const auto& rec : past_) {
        if (rec.event >= joiner.event) continue;
        std::vector<SessionKey> keys = joiner.keys;
        stats_.backward_opens += try_keys(keys, rec.sealed, stats_.backward_attempts);
        for (const auto& rb : rec.broadcasts) {
            if (rb.b.target.owner() != joiner.subgroup) continue;
            ++stats_.backward_mds_attempts;
            stats_.backward_mds_successes += codec_->recover(joiner.seed, rb.b).raw == rb.truth;
        }
    }
}

namespace {

std::uint64_t sealed_opens(const KeyCodec& codec, std::vector<SessionKey> keys, const std::vector<Envelope>& traffic) {
    std::uint64_t opens = 0;
    for (const auto& e : traffic) {
        const auto* v = std::get_if<std::vector<SealedKeyMsg>>(&e.body);
        if (!v) continue;
        for (const auto& m : *v) {
            for (std::size_t i = 0; i < keys.size(); ++i) {
                SessionKey k = keys[i];
                k.node = m.sealing_node;
                k.epoch = m.sealing_epoch;
                if (auto got = codec.try_open(k, m)) {
                    ++opens;
                    keys.push_back(*got);
                    break;
                }
            }
        }
    }
    return opens;
}

} // namespace

std::uint64_t probe_forward_secrecy(const KeyCodec& codec, const Principal& leaver,
                                    const std::vector<Envelope>& post_leave_traffic) {
    return sealed_opens(codec, leaver.keys, post_leave_traffic);
}

std::uint64_t probe_backward_secrecy(const KeyCodec& codec, const Principal& joiner,
                                     const std::vector<Envelope>& pre_join_traffic) {
    return sealed_opens(codec, joiner.keys, pre_join_traffic);
}

// ---------------------------------------------------------------------------
// Simulation

Simulation::Simulation(const GroupConfig& cfg, SimOptions opt) : cfg_(cfg), opt_(opt), group_(cfg) {
    if (opt_.observers)
        observer_.emplace(group_.codec_ptr(), opt_.probe_window, opt_.revoked_pool, opt_.conspiracy_size);
    if (opt_.keep_trace) {
        trace_.push_back(json{{"type", "header"},
                              {"schema", "gk-trace/1"},
                              {"seed", cfg.seed},
                              {"field_bits", cfg.params.field_bits},
                              {"hash", cfg.hash},
                              {"cipher", cfg.cipher}}
                             .dump());
    }
}

std::string Simulation::trace_text() const {
    std::string out;
    for (const auto& l : trace_) {
        out += l;
        out += '\n';
    }
    return out;
}

EventInfo Simulation::describe(EventKind kind, std::uint32_t scope, const std::vector<MemberId>& ms) const {
    EventInfo info;
    info.index = next_event_;
    info.kind = kind;
    info.scope = scope;
    info.members = ms;
    if (scope != 0) {
        const auto& sub = group_.subgroup(scope);
        info.sn = sub.name();
        info.height_before = sub.height();
        if (!sub.tree().empty()) {
            const auto& root = sub.tree().node(sub.tree().root());
            info.sn_degree = root.is_leaf() ? 1 : root.degree();
        }
    }
    return info;
}

void Simulation::deliver(std::uint64_t event, const std::vector<Envelope>& msgs) {
    std::uint64_t seq = 0;
    for (const auto& e : msgs) {
        const Bytes body = encode_body(e);
        ledger_.record(e.scope, e.unicast(), body.size());
        if (opt_.keep_trace) {
            const std::string scope =
                e.scope == NodeId::kBaseStation ? std::string("BS") : group_.subgroup(e.scope).name();
            json r{{"type", "msg"},
                   {"event", event},
                   {"seq", seq},
                   {"scope", scope},
                   {"scope_id", e.scope},
                   {"audience", audience_name(e.audience)},
                   {"label", e.label},
                   {"unicast", e.unicast()},
                   {"bytes", body.size()},
                   {"body", to_hex(body)}};
            if (e.audience == Audience::Member) r["to"] = e.to;
            if (e.audience == Audience::Subgroup) r["subgroup"] = group_.subgroup(e.subgroup).name();
            trace_.push_back(r.dump());
        }
        ++seq;
        OpenMemo memo;
        switch (e.audience) {
        case Audience::Member:
            if (auto it = states_.find(e.to); it != states_.end()) it->second.process(e, group_.codec(), &member_ops_);
            break;
        case Audience::Subgroup:
            for (auto& [m, st] : by_subgroup_[e.subgroup]) st->process(e, group_.codec(), &member_ops_, &memo);
            break;
        case Audience::Group:
            for (auto& [id, st] : states_) st.process(e, group_.codec(), &member_ops_, &memo);
            break;
        case Audience::Controllers:
            break;
        }
    }
}

void Simulation::fail(const EventInfo& info, const std::string& what) const {
    std::ostringstream os;
    os << "event " << info.index << " (" << to_string(info.kind);
    for (const auto& m : info.members) os << ' ' << m;
    os << "): " << what << "; seed " << cfg_.seed << "; trees:";
    for (std::size_t i = 1; i <= group_.subgroup_count(); ++i) {
        const auto& s = group_.subgroup(static_cast<std::uint32_t>(i));
        os << ' ' << s.name() << '=' << (s.tree().empty() ? "-" : s.tree().to_string());
    }
    throw Error(ErrorCode::InvariantViolation, os.str());
}

void Simulation::check(const EventInfo& info) {
    std::vector<std::uint32_t> affected;
    if (info.kind == EventKind::Init) {
        for (std::size_t i = 1; i <= group_.subgroup_count(); ++i) affected.push_back(static_cast<std::uint32_t>(i));
    } else {
        affected.push_back(info.scope);
    }
    for (auto s : affected) {
        const auto& sub = group_.subgroup(s);
        ++balance_checks_;
        const auto bal = sub.tree().check_balance();
        if (!bal.empty()) fail(info, sub.name() + " unbalanced at node " + std::to_string(bal.front().node) + ": " + bal.front().reason);
        const auto st = sub.tree().check_structure();
        if (!st.empty()) fail(info, sub.name() + " structure: " + st.front());
        for (const auto& [m, st] : by_subgroup_[s]) {
            const auto& ms = *st;
            if (!ms.seed()) fail(info, "member " + m + " holds no seed");
            const auto want = group_.expected_keyring(m);
            if (ms.keyring() != want) fail(info, "member " + m + " keyring disagrees with its controllers");
            if (ms.keyring().size() != sub.path_of(m).size() + 1) fail(info, "member " + m + " stores the wrong number of keys");
        }
    }
    const auto& gk = group_.bs().gk();
    for (const auto& [id, ms] : states_)
        if (!gk || ms.keyring().empty() || !(ms.keyring().back() == *gk)) fail(info, "member " + id + " lacks the current GK");
    if (observer_) {
        if (observer_->stats().sealed_opens) fail(info, "a revoked principal opened a sealed key");
        if (observer_->stats().backward_opens) fail(info, "a joiner opened pre-join traffic");
    }
}

void Simulation::init(const Layout& layout) {
    EventInfo info = describe(EventKind::Init, 0, {});
    for (const auto& [sn, ms] : layout) info.members.insert(info.members.end(), ms.begin(), ms.end());
    ++next_event_;
    const OpCounts bs0 = group_.bs_ops(), sn0 = group_.sn_ops(), gk0 = group_.sn_gk_ops(), mb0 = member_ops_;
    ledger_.begin(info);
    const auto msgs = group_.init(layout);
    for (std::size_t i = 0; i < layout.size(); ++i)
        for (const auto& m : layout[i].second) {
            const auto id = static_cast<std::uint32_t>(i + 1);
            auto [it, added] = states_.emplace(m, MemberState(m, id));
            by_subgroup_[id][m] = &it->second;
        }
    const std::size_t mark = trace_.size();
    deliver(info.index, msgs);
    if (observer_) {
        std::vector<FieldElem> truths;
        for (const auto& e : msgs)
            if (const auto* b = std::get_if<RekeyBroadcast>(&e.body)) {
                const auto owner = b->target.owner();
                truths.push_back(owner == NodeId::kBaseStation ? group_.bs().gk()->raw
                                                               : group_.subgroup(owner).key(b->target)->raw);
            }
        observer_->observe(info.index, msgs, truths);
    }
    ledger_.add_ops(Role::BaseStation, diff(group_.bs_ops(), bs0));
    ledger_.add_ops(Role::SinkNode, diff(group_.sn_ops(), sn0));
    ledger_.add_ops(Role::SinkGk, diff(group_.sn_gk_ops(), gk0));
    ledger_.add_ops(Role::Member, diff(member_ops_, mb0));
    info.group_size = group_.member_count();
    for (std::size_t i = 1; i <= group_.subgroup_count(); ++i) {
        const auto& s = group_.subgroup(static_cast<std::uint32_t>(i));
        info.heights[s.name()] = s.height();
        if (!s.tree().empty()) {
            const auto& root = s.tree().node(s.tree().root());
            info.bottoms += root.is_leaf() ? 1 : static_cast<int>(s.tree().bottom_nodes().size());
        }
    }
    ledger_.finish(info);
    if (opt_.keep_trace) {
        std::vector<std::string> tail(trace_.begin() + static_cast<std::ptrdiff_t>(mark), trace_.end());
        trace_.resize(mark);
        trace_event(info);
        trace_.insert(trace_.end(), tail.begin(), tail.end());
        trace_costs(ledger_.events().back());
    }
    check(info);
}

void Simulation::apply(const ScenarioEvent& e) {
    std::uint32_t scope = 0;
    if (e.kind == EventKind::Join || e.kind == EventKind::Merge)
        scope = group_.subgroup_id(e.sn);
    else if (!e.members.empty())
        scope = group_.subgroup_of(e.members.front());
    EventInfo info = describe(e.kind, scope, e.members);
    const OpCounts bs0 = group_.bs_ops(), sn0 = group_.sn_ops(), gk0 = group_.sn_gk_ops(), own0 = group_.subgroup(scope).ops, mb0 = member_ops_;

    std::vector<Principal> leavers;
    if (e.kind == EventKind::Leave || e.kind == EventKind::Partition) {
        for (const auto& m : e.members) {
            const auto& st = states_.at(m);
            leavers.push_back({m, scope, info.index, *st.seed(), st.keyring()});
        }
    }

    std::vector<Envelope> msgs;
    switch (e.kind) {
    case EventKind::Join: msgs = group_.join(e.sn, e.members.front()); break;
    case EventKind::Merge: msgs = group_.merge(e.sn, e.members); break;
    case EventKind::Leave: msgs = group_.leave(e.members.front()); break;
    case EventKind::Partition: msgs = group_.partition(e.members); break;
    case EventKind::Init: throw Error(ErrorCode::ProtocolError, "init is not an event");
    }
    ++next_event_;
    ledger_.begin(info);

    for (const auto& p : leavers) {
        by_subgroup_[scope].erase(p.id);
        states_.erase(p.id);
        if (observer_) observer_->revoke(p);
    }
    if (e.kind == EventKind::Join || e.kind == EventKind::Merge)
        for (const auto& m : e.members) {
            auto [it, added] = states_.emplace(m, MemberState(m, scope));
            by_subgroup_[scope][m] = &it->second;
        }

    const std::size_t mark = trace_.size();
    deliver(info.index, msgs);

    if (observer_) {
        if (e.kind == EventKind::Join || e.kind == EventKind::Merge)
            for (const auto& m : e.members) {
                const auto& st = states_.at(m);
                observer_->probe_backward({m, scope, info.index, st.seed() ? *st.seed() : SeedKey{}, st.keyring()});
            }
        std::vector<FieldElem> truths;
        for (const auto& env : msgs)
            if (const auto* b = std::get_if<RekeyBroadcast>(&env.body)) {
                const auto owner = b->target.owner();
                truths.push_back(owner == NodeId::kBaseStation ? group_.bs().gk()->raw
                                                               : group_.subgroup(owner).key(b->target)->raw);
            }
        observer_->observe(info.index, msgs, truths);
    }

    ledger_.add_ops(Role::BaseStation, diff(group_.bs_ops(), bs0));
    const OpCounts own = diff(group_.subgroup(scope).ops, own0);
    ledger_.add_ops(Role::SinkNode, own);
    OpCounts share = diff(diff(group_.sn_ops(), sn0), own);
    share += diff(group_.sn_gk_ops(), gk0);
    ledger_.add_ops(Role::SinkGk, share);
    ledger_.add_ops(Role::Member, diff(member_ops_, mb0));

    const auto& sub = group_.subgroup(scope);
    info.height_after = sub.height();
    if (!sub.tree().empty()) {
        const auto& root = sub.tree().node(sub.tree().root());
        info.sn_degree_after = root.is_leaf() ? 1 : root.degree();
        info.bottoms = root.is_leaf() ? 1 : static_cast<int>(sub.tree().bottom_nodes().size());
    }
    info.subgroup_size = sub.tree().member_count();
    info.group_size = group_.member_count();
    if (e.kind == EventKind::Join) info.joiner_levels = sub.path_levels(e.members.front());
    if (e.kind == EventKind::Merge && sub.last_attach_gap()) info.attach_gap = *sub.last_attach_gap();
    ledger_.finish(info);
    if (opt_.keep_trace) {
        std::vector<std::string> tail(trace_.begin() + static_cast<std::ptrdiff_t>(mark), trace_.end());
        trace_.resize(mark);
        trace_event(info);
        trace_.insert(trace_.end(), tail.begin(), tail.end());
        trace_costs(ledger_.events().back());
    }
    check(info);
}

void Simulation::trace_event(const EventInfo& info) {
    json r{{"type", "event"},
           {"index", info.index},
           {"kind", to_string(info.kind)},
           {"sn", info.sn},
           {"scope_id", info.scope},
           {"members", info.members},
           {"height_before", info.height_before},
           {"height_after", info.height_after},
           {"sn_degree", info.sn_degree},
           {"sn_degree_after", info.sn_degree_after},
           {"bottoms", info.bottoms},
           {"subgroup_size", info.subgroup_size},
           {"group_size", info.group_size}};
    if (info.kind == EventKind::Join) r["joiner_levels"] = info.joiner_levels;
    if (info.attach_gap >= 0) r["attach_gap"] = info.attach_gap;
    if (!info.heights.empty()) r["heights"] = info.heights;
    trace_.push_back(r.dump());
}

void Simulation::trace_costs(const EventCost& c) {
    for (const auto& [role, o] : c.ops)
        trace_.push_back(json{{"type", "ops"},
                              {"event", c.info.index},
                              {"role", to_string(role)},
                              {"hash", o.hash},
                              {"matrix", o.matrix},
                              {"encrypt", o.encrypt},
                              {"decrypt", o.decrypt}}
                             .dump());
}

RunResult run_scenario(const Scenario& s, SimOptions opt) {
    Simulation sim(s.config, opt);
    sim.init(s.layout);
    for (const auto& e : s.events) sim.apply(e);
    RunResult r;
    r.trace = sim.trace();
    r.ledger = sim.ledger();
    if (sim.probes()) r.probes = *sim.probes();
    r.final_members = sim.group().member_count();
    return r;
}

// ---------------------------------------------------------------------------
// Trace replay

CostLedger ledger_from_trace(std::istream& in) {
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CostLedger ledger;
    std::size_t pos = 0;
    bool open = false;
    EventInfo current;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos)
            throw Error(ErrorCode::ParseError, "truncated trace at byte " + std::to_string(pos) + " (record without newline)");
        const std::string line = text.substr(pos, nl - pos);
        json r;
        try {
            r = json::parse(line);
            const std::string type = r.at("type");
            if (type == "header") {
                // nothing to account
            } else if (type == "event") {
                current = EventInfo{};
                current.index = r.at("index");
                current.kind = kind_from(r.at("kind"));
                current.sn = r.value("sn", std::string());
                current.scope = r.value("scope_id", 0u);
                current.members = r.value("members", std::vector<MemberId>{});
                current.height_before = r.value("height_before", 0);
                current.height_after = r.value("height_after", 0);
                current.sn_degree = r.value("sn_degree", 0);
                current.sn_degree_after = r.value("sn_degree_after", 0);
                current.bottoms = r.value("bottoms", 0);
                current.subgroup_size = r.value("subgroup_size", std::size_t{0});
                current.group_size = r.value("group_size", std::size_t{0});
                current.joiner_levels = r.value("joiner_levels", 0);
                current.attach_gap = r.value("attach_gap", -1);
                if (r.contains("heights")) current.heights = r["heights"].get<std::map<std::string, int>>();
                ledger.begin(current);
                open = true;
            } else if (type == "msg") {
                if (!open || r.at("event").get<std::uint64_t>() != current.index)
                    throw Error(ErrorCode::ParseError, "message outside its event");
                ledger.record(r.at("scope_id"), r.at("unicast"), r.at("bytes"));
            } else if (type == "ops") {
                if (!open || r.at("event").get<std::uint64_t>() != current.index)
                    throw Error(ErrorCode::ParseError, "operation record outside its event");
                OpCounts o{r.at("hash"), r.at("matrix"), r.at("encrypt"), r.at("decrypt")};
                ledger.add_ops(role_from(r.at("role")), o);
            } else {
                throw Error(ErrorCode::ParseError, "unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError, "malformed record at byte " + std::to_string(pos) + ": " + e.what());
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ParseError) throw;
            throw Error(ErrorCode::ParseError, "at byte " + std::to_string(pos) + ": " + e.what());
        }
        pos = nl + 1;
    }
    return ledger;
}

} // namespace gk
