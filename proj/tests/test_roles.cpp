#include "doctest.h"

#include "gk/error.hpp"
#include "gk/roles.hpp"

#include <map>
#include <random>

using namespace gk;

namespace {

// Minimal delivery loop: every member of the audience processes each message.
struct Net {
    Group group;
    std::map<MemberId, MemberState> states;

    explicit Net(unsigned m = 8, std::uint64_t seed = 1) : group(config(m, seed)) {}

    static GroupConfig config(unsigned m, std::uint64_t seed) {
        GroupConfig c;
        c.params.field_bits = m;
        c.seed = seed;
        return c;
    }

    void deliver(const std::vector<Envelope>& msgs) {
        for (const auto& m : group.members())
            if (!states.count(m)) states.emplace(m, MemberState(m, group.subgroup_of(m)));
        for (auto it = states.begin(); it != states.end();)
            it = group.has_member(it->first) ? std::next(it) : states.erase(it);
        for (const auto& e : msgs) {
            for (auto& [id, st] : states) {
                const bool to_me = (e.audience == Audience::Member && e.to == id) || e.audience == Audience::Group ||
                                   (e.audience == Audience::Subgroup && e.subgroup == group.subgroup_of(id));
                if (to_me) st.process(e, group.codec());
            }
        }
    }

    void check_agreement() {
        for (const auto& [id, st] : states) {
            INFO("member " << id);
            REQUIRE(st.keyring() == group.expected_keyring(id));
        }
    }
};

std::vector<MemberId> range(int a, int b) {
    std::vector<MemberId> out;
    for (int i = a; i <= b; ++i) out.push_back("u" + std::to_string(i));
    return out;
}

Layout example() { return {{"SN1", range(1, 8)}, {"SN2", range(9, 13)}, {"SN3", range(14, 16)}}; }

struct Tally {
    int m = 0, u = 0;
};

Tally tally(const std::vector<Envelope>& msgs, std::uint32_t scope) {
    Tally t;
    for (const auto& e : msgs)
        if (e.scope == scope) (e.unicast() ? t.u : t.m) += 1;
    return t;
}

} // namespace

TEST_CASE("example init: keyrings and logic seeds") {
    Net net;
    auto msgs = net.group.init(example());
    net.deliver(msgs);
    net.check_agreement();

    int unicasts = 0;
    for (const auto& e : msgs) unicasts += e.unicast();
    CHECK(unicasts == 16);

    const auto& sn1 = net.group.subgroup("SN1");
    const LocalId t11 = sn1.tree().node(sn1.tree().leaf_of("u1")).parent;
    const auto& ring = net.states.at("u1").keyring();
    REQUIRE(ring.size() == 3);
    CHECK(ring[0].node == NodeId::make(sn1.id(), t11));
    CHECK(ring[1].node == NodeId::make(sn1.id(), 0));
    CHECK(ring[2].node == GroupController::gk_node());
    CHECK(sn1.height() == 3);

    const Secret s1 = sn1.secret_of(sn1.tree().leaf_of("u1"));
    const Secret s2 = sn1.secret_of(sn1.tree().leaf_of("u2"));
    Secret x = s1;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] ^= s2[i];
    CHECK(sn1.secret_of(t11) == x);

    // Every member agrees on GK.
    for (const auto& [id, st] : net.states) CHECK(st.keyring().back() == *net.group.bs().gk());
}

TEST_CASE("u17 join message kinds and cost") {
    Net net;
    net.deliver(net.group.init(example()));
    const SessionKey gk_old = *net.group.bs().gk();
    const auto& sn1 = net.group.subgroup("SN1");
    const SessionKey sn_old = sn1.sn_key();
    auto msgs = net.group.join("SN1", "u17");
    net.deliver(msgs);
    net.check_agreement();

    const LocalId t11 = sn1.tree().node(sn1.tree().leaf_of("u17")).parent;
    CHECK(t11 == sn1.tree().node(sn1.tree().leaf_of("u1")).parent);
    const NodeId t11_id = NodeId::make(sn1.id(), t11);

    const Tally t = tally(msgs, sn1.id());
    CHECK(t.m == 3);
    CHECK(t.u == 1);

    bool gk_under_gk = false, sn_under_t11 = false, gk_under_sn = false;
    int mds = 0;
    for (const auto& e : msgs) {
        if (e.label == "mds") ++mds;
        if (const auto* v = std::get_if<std::vector<SealedKeyMsg>>(&e.body)) {
            for (const auto& s : *v) {
                gk_under_gk |= s.sealing_node == GroupController::gk_node() && s.sealing_epoch == gk_old.epoch &&
                               s.payload_node == GroupController::gk_node();
                sn_under_t11 |= s.sealing_node == t11_id && s.payload_node == sn1.sn_node();
                gk_under_sn |= s.sealing_node == sn1.sn_node() && s.sealing_epoch > sn_old.epoch &&
                               s.payload_node == GroupController::gk_node();
            }
        }
    }
    CHECK(mds == 1);
    CHECK(gk_under_gk);
    CHECK(sn_under_t11);
    CHECK(gk_under_sn);

    // Backward secrecy: nothing in the joiner's ring predates the join.
    for (const auto& k : net.states.at("u17").keyring()) {
        if (k.node == gk_old.node) CHECK(k.epoch > gk_old.epoch);
        if (k.node == sn_old.node) CHECK(k.epoch > sn_old.epoch);
    }
}

TEST_CASE("u18 join and leave in SN3") {
    Net net;
    net.deliver(net.group.init(example()));
    net.deliver(net.group.join("SN3", "u18"));
    net.check_agreement();
    const auto& sn3 = net.group.subgroup("SN3");
    CHECK(sn3.tree().to_string() == "((u14 u15) (u16 u18))");
    net.deliver(net.group.leave("u18"));
    net.check_agreement();
    CHECK(sn3.tree().to_string() == "((u14 u15) (u16 *))");
}

TEST_CASE("single member subgroup") {
    Net net;
    net.deliver(net.group.init({{"A", {"a"}}}));
    net.check_agreement();
    const auto& ring = net.states.at("a").keyring();
    REQUIRE(ring.size() == 2);
    CHECK(ring[0].node == NodeId::make(1, 0));
    CHECK(ring[1].node == GroupController::gk_node());
    net.deliver(net.group.join("A", "b"));
    net.check_agreement();
    net.deliver(net.group.leave("a"));
    net.check_agreement();
    net.deliver(net.group.leave("b"));
    CHECK_FALSE(net.group.bs().gk().has_value());
    net.deliver(net.group.join("A", "c"));
    net.check_agreement();
}

TEST_CASE("errors") {
    Net net;
    CHECK_THROWS_AS(net.group.init({{"A", {}}}), Error);
    Net n2;
    n2.group.init(example());
    CHECK_THROWS_AS(n2.group.join("SN1", "u1"), Error);
    CHECK_THROWS_AS(n2.group.leave("nobody"), Error);
    CHECK_THROWS_AS(n2.group.join("SN9", "x"), Error);
    std::vector<MemberId> spans{"u1", "u9"};
    CHECK_THROWS_AS(n2.group.partition(spans), Error);
    CHECK(n2.group.has_member("u1"));
}

TEST_CASE("random churn keeps every keyring in agreement") {
    for (unsigned m : {4u, 8u, 16u}) {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            Net net(m, seed);
            const int per = m == 4 ? 3 : 8;
            Layout layout{{"A", range(1, per)}, {"B", range(100, 100 + per - 1)}, {"C", range(200, 201)}};
            net.deliver(net.group.init(layout));
            net.check_agreement();
            std::mt19937_64 rng(seed);
            int next = 1000;
            const std::size_t cap = m == 4 ? 5 : 40;
            for (int step = 0; step < 150; ++step) {
                const std::string sn = std::string(1, static_cast<char>('A' + rng() % 3));
                const auto& sub = net.group.subgroup(sn);
                const auto r = rng() % 4;
                std::vector<Envelope> msgs;
                if (r == 0 && sub.tree().member_count() < cap) {
                    msgs = net.group.join(sn, "n" + std::to_string(next++));
                } else if (r == 1 && sub.tree().member_count() + 3 <= cap) {
                    std::vector<MemberId> ms;
                    for (int i = 0; i < 1 + static_cast<int>(rng() % 3); ++i) ms.push_back("n" + std::to_string(next++));
                    msgs = net.group.merge(sn, ms);
                } else if (r == 2 && sub.tree().member_count() > 0) {
                    auto ms = sub.tree().members();
                    msgs = net.group.leave(ms[rng() % ms.size()]);
                } else if (sub.tree().member_count() > 1) {
                    auto ms = sub.tree().members();
                    std::shuffle(ms.begin(), ms.end(), rng);
                    ms.resize(1 + rng() % (ms.size() - 1));
                    msgs = net.group.partition(ms);
                }
                net.deliver(msgs);
                net.check_agreement();
            }
        }
    }
}
