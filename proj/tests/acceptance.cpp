// Acceptance campaign: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Run from the source directory (scenarios/ is read).

#include "gk/report.hpp"
#include "gk/simnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace gk;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

struct Result {
    int n = 0;
    const char* name = "";
    bool ok = false;
    double secs = 0;
    std::string detail;
};

void verdict(int n, const char* name, bool ok, double secs, const std::string& detail) {
    std::printf("%s %d %s (%.1f s): %s\n", ok ? "PASS" : "FAIL", n, name, secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

void verdict(const Result& r) { verdict(r.n, r.name, r.ok, r.secs, r.detail); }

void info(const std::string& s) {
    std::printf("  %s\n", s.c_str());
    std::fflush(stdout);
}

// --- independent GF(2^m) arithmetic (schoolbook, no tables) -----------------

std::uint32_t smul(std::uint32_t a, std::uint32_t b, unsigned m, std::uint32_t poly) {
    std::uint32_t acc = 0;
    for (unsigned i = 0; i < m; ++i)
        if (b >> i & 1) acc ^= a << i;
    for (int bit = 2 * int(m) - 2; bit >= int(m); --bit)
        if (acc >> bit & 1) acc ^= poly << (bit - int(m));
    return acc;
}

// a^(2^m - 2)
std::uint32_t sinv(std::uint32_t a, unsigned m, std::uint32_t poly) {
    std::uint32_t r = 1, base = a, e = (1u << m) - 2;
    while (e) {
        if (e & 1) r = smul(r, base, m, poly);
        base = smul(base, base, m, poly);
        e >>= 1;
    }
    return r;
}

std::vector<std::uint32_t> oracle_solve(const std::vector<Position>& pts, const std::vector<std::uint32_t>& vals,
                                        unsigned m, std::uint32_t poly) {
    const std::size_t n = pts.size();
    std::vector<std::vector<std::uint32_t>> a(n, std::vector<std::uint32_t>(n + 1));
    for (std::size_t r = 0; r < n; ++r) {
        std::uint32_t p = 1;
        for (std::size_t c = 0; c < n; ++c) {
            a[r][c] = p;
            p = smul(p, pts[r], m, poly);
        }
        a[r][n] = vals[r];
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        while (a[piv][c] == 0) ++piv;
        std::swap(a[piv], a[c]);
        const std::uint32_t iv = sinv(a[c][c], m, poly);
        for (auto& x : a[c]) x = smul(x, iv, m, poly);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c || a[r][c] == 0) continue;
            const std::uint32_t f = a[r][c];
            for (std::size_t k = 0; k <= n; ++k) a[r][k] ^= smul(f, a[c][k], m, poly);
        }
    }
    std::vector<std::uint32_t> out;
    for (std::size_t r = 0; r < n; ++r) out.push_back(a[r][n]);
    return out;
}

std::vector<Position> distinct_points(std::mt19937_64& rng, std::size_t n, std::uint32_t L) {
    std::vector<Position> pts;
    while (pts.size() < n) {
        const Position j = 1 + static_cast<Position>(rng() % L);
        if (std::find(pts.begin(), pts.end(), j) == pts.end()) pts.push_back(j);
    }
    return pts;
}

void criterion_mds() {
    const auto t0 = Clock::now();
    std::uint64_t roundtrips = 0, bad = 0, systems = 0, mismatched = 0;
    for (unsigned m : {8u, 16u}) {
        Field f(m);
        std::mt19937_64 rng(1000 + m);
        for (int t = 0; t < 10000; ++t) {
            const std::size_t n = 1 + rng() % 8;
            std::vector<FieldElem> msg;
            for (std::size_t i = 0; i < n; ++i) msg.push_back({static_cast<std::uint16_t>(rng() & (f.size() - 1))});
            const auto pts = distinct_points(rng, n, f.code_length());
            std::vector<FieldElem> sym;
            for (auto j : pts) sym.push_back(f.codeword_symbol_at(msg, j));
            ++roundtrips;
            if (f.vandermonde_solve(pts, sym) != msg) ++bad;
        }
    }
    std::mt19937_64 rng(77);
    for (int t = 0; t < 1000; ++t) {
        const unsigned m = t % 2 ? 16 : 8;
        Field f(m);
        const std::size_t n = 1 + rng() % 8;
        const auto pts = distinct_points(rng, n, f.code_length());
        std::vector<std::uint32_t> raw;
        std::vector<FieldElem> vals;
        for (std::size_t i = 0; i < n; ++i) {
            raw.push_back(static_cast<std::uint32_t>(rng() & (f.size() - 1)));
            vals.push_back({static_cast<std::uint16_t>(raw.back())});
        }
        const auto got = f.vandermonde_solve(pts, vals);
        const auto want = oracle_solve(pts, raw, m, f.reduction_poly());
        ++systems;
        for (std::size_t i = 0; i < n; ++i)
            if (got[i].value != want[i]) {
                ++mismatched;
                break;
            }
    }
    const double secs = since(t0);
    verdict(1, "MDS correctness", bad == 0 && mismatched == 0 && secs < 10, secs,
            std::to_string(roundtrips - bad) + "/" + std::to_string(roundtrips) + " roundtrips exact (m=8,16; n<=8), " +
                std::to_string(systems - mismatched) + "/" + std::to_string(systems) + " systems match the oracle");
}

// --- worked example ---------------------------------------------------------

// Every member of the audience processes each message.
struct Net {
    Group group;
    std::map<MemberId, MemberState> states;

    explicit Net(const GroupConfig& cfg) : group(cfg) {}

    void deliver(const std::vector<Envelope>& msgs) {
        for (const auto& m : group.members())
            if (!states.count(m)) states.emplace(m, MemberState(m, group.subgroup_of(m)));
        for (auto it = states.begin(); it != states.end();)
            it = group.has_member(it->first) ? std::next(it) : states.erase(it);
        for (const auto& e : msgs)
            for (auto& [id, st] : states) {
                const bool to_me = (e.audience == Audience::Member && e.to == id) || e.audience == Audience::Group ||
                                   (e.audience == Audience::Subgroup && e.subgroup == group.subgroup_of(id));
                if (to_me) st.process(e, group.codec());
            }
    }

    bool agree() const {
        for (const auto& [id, st] : states)
            if (st.keyring() != group.expected_keyring(id)) return false;
        return true;
    }
};

void criterion_worked_example() {
    const auto t0 = Clock::now();
    std::ifstream f("scenarios/worked_example.jsonl");
    if (!f) {
        verdict(2, "worked example", false, since(t0), "scenarios/worked_example.jsonl not found (run from the source dir)");
        return;
    }
    const Scenario s = parse_scenario(f);
    Net net(s.config);
    std::vector<std::string> notes;
    bool ok = s.events.size() == 3 && s.events[0].members == std::vector<MemberId>{"u17"} &&
              s.events[1].members == std::vector<MemberId>{"u18"} && s.events[2].kind == EventKind::Leave;
    if (!ok) notes.push_back("unexpected scenario contents");

    net.deliver(net.group.init(s.layout));
    const auto& sn1 = net.group.subgroup("SN1");
    const LocalId t11 = sn1.tree().node(sn1.tree().leaf_of("u1")).parent;
    const NodeId t11_id = NodeId::make(sn1.id(), t11);

    // (a) keyring of u1
    const auto& ring = net.states.at("u1").keyring();
    const bool a = net.agree() && ring.size() == 3 && ring[0].node == t11_id && ring[1].node == sn1.sn_node() &&
                   ring[2].node == GroupController::gk_node() && ring[2] == *net.group.bs().gk();
    if (!a) notes.push_back("(a) u1 keyring");

    // (d) logic seed of T11
    const Secret s1 = sn1.secret_of(sn1.tree().leaf_of("u1"));
    const Secret s2 = sn1.secret_of(sn1.tree().leaf_of("u2"));
    Secret x = s1;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] ^= s2[i];
    const bool d = sn1.tree().node(t11).degree() == 2 && sn1.secret_of(t11) == x;
    if (!d) notes.push_back("(d) s_T11 != s1 ^ s2");

    // (b) u17 join under T11. Expected, in order: seed unicast to u17; MDS
    // for K'_T11 over T11's three leaves; one path packet {E_K_SN1(K'_SN1),
    // E_K'_T11(K'_SN1)}; the GK MDS to the SNs; one GK packet {E_GK(GK'),
    // E_K'_SN1(GK')}.
    const std::uint64_t gk_e = net.group.bs().gk()->epoch, sn_e = sn1.sn_key().epoch;
    const auto msgs = net.group.join(s.events[0].sn, "u17");
    net.deliver(msgs);
    const NodeId gk_id = GroupController::gk_node(), sn_id = sn1.sn_node();
    auto kind = [&](NodeId n) {
        if (n == gk_id) return std::string("GK");
        if (n == sn_id) return std::string("K_SN1");
        if (n == t11_id) return std::string("K_T11");
        return "node" + std::to_string(n.local());
    };
    std::vector<std::string> got;
    for (const auto& e : msgs) {
        if (std::holds_alternative<SeedUnicast>(e.body)) {
            got.push_back("seed->" + e.to);
        } else if (const auto* br = std::get_if<RekeyBroadcast>(&e.body)) {
            got.push_back(e.label + ":" + kind(br->target) + "/" + std::to_string(br->positions.size()));
        } else {
            std::string p = e.label + ":";
            for (const auto& m : std::get<std::vector<SealedKeyMsg>>(e.body))
                p += "{" + kind(m.sealing_node) + (m.sealing_epoch >= m.payload_epoch ? "'" : "") +
                     ">" + kind(m.payload_node) + "'}";
            got.push_back(p);
        }
    }
    const std::vector<std::string> want{"seed->u17", "mds:K_T11/3", "path:{K_SN1>K_SN1'}{K_T11'>K_SN1'}",
                                        "gk-mds:GK/3", "gk:{GK>GK'}{K_SN1'>GK'}"};
    const LocalId parent17 = sn1.tree().node(sn1.tree().leaf_of("u17")).parent;
    const bool b = net.agree() && parent17 == t11 && got == want && net.group.bs().gk()->epoch == gk_e + 1 &&
                   sn1.sn_key().epoch > sn_e;
    if (!b) {
        std::string g;
        for (const auto& x : got) g += " " + x;
        notes.push_back("(b) u17 join messages:" + g);
    }

    // (c) u18 join then leave in SN3: the pseudo leaf takes u18's place, the
    // internal structure above the bottom layer is untouched.
    net.deliver(net.group.join(s.events[1].sn, "u18"));
    const auto& sn3 = net.group.subgroup("SN3");
    auto internal = [&] {
        std::map<LocalId, LocalId> out;
        for (auto id : sn3.tree().preorder())
            if (!sn3.tree().node(id).is_leaf()) out[id] = sn3.tree().node(id).parent;
        return out;
    };
    const auto before = internal();
    const std::string t_before = sn3.tree().to_string();
    net.deliver(net.group.leave("u18"));
    const bool c = net.agree() && t_before == "((u14 u15) (u16 u18))" &&
                   sn3.tree().to_string() == "((u14 u15) (u16 *))" && sn3.tree().pseudo_count() == 1 &&
                   internal() == before;
    if (!c) notes.push_back("(c) u18 leave: " + t_before + " -> " + sn3.tree().to_string());

    std::string detail = "u1 ring (K_T11, K_SN1, GK); u17 under T11: seed, MDS(T11), path and GK packets; "
                         "u18 leave -> " + sn3.tree().to_string() + "; s_T11 = s1^s2";
    for (const auto& n : notes) detail += "; FAILED " + n;
    verdict(2, "worked example", a && b && c && d && ok, since(t0), detail);
}

// --- cost formulas ----------------------------------------------------------

std::vector<MemberId> names(std::size_t n, const std::string& prefix = "m") {
    std::vector<MemberId> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

struct Count {
    int m = 0, u = 0;
};

// Subgroup-side traffic (the BS-side GK fan-out to other subgroups excluded).
Count count(const std::vector<Envelope>& msgs) {
    Count c;
    for (const auto& e : msgs)
        if (e.scope != NodeId::kBaseStation) (e.unicast() ? c.u : c.m) += 1;
    return c;
}

// m=16: a 200-member subtree needs more than the 255 positions of GF(2^8).
GroupConfig cfg16(std::uint64_t seed) {
    GroupConfig c;
    c.params.field_bits = 16;
    c.seed = seed;
    return c;
}

struct StorageTally {
    std::uint64_t checks = 0;
    std::uint64_t bad = 0;
};

// Seed plus (h-1) path keys (and the GK) for a member at h levels.
void check_storage(const Simulation& sim, StorageTally& t) {
    const Group& g = sim.group();
    for (const auto& m : g.members()) {
        const auto& sub = g.subgroup(g.subgroup_of(m));
        const auto& st = sim.member(m);
        const int h = sub.path_levels(m);
        ++t.checks;
        const bool ok = st.seed().has_value() && st.keyring().size() == static_cast<std::size_t>(h - 1) + 1 &&
                        st.keyring().back().node == GroupController::gk_node();
        t.bad += !ok;
    }
}

StorageTally g_storage;  // filled by the secrecy campaign

void criterion_costs() {
    const auto t0 = Clock::now();
    std::vector<std::string> fails;

    // Join into a height-h subtree. The hM + U count presumes the joiner lands
    // at the bottom of the tree and only one bottom key changes (a free slot
    // or pseudo leaf at depth h); the sweep also reports every other join.
    std::map<int, std::pair<int, int>> premise;  // h -> (exact, cases)
    int sweep_exact = 0, sweep_total = 0, two_bottoms = 0, shallower = 0;
    for (std::size_t n = 2; n <= 200; ++n) {
        for (int variant = 0; variant < 2; ++variant) {
            Group g(cfg16(n * 2 + variant));
            auto ms = names(n);
            g.init({{"S", ms}});
            if (variant == 1) {
                if (n < 4) continue;
                g.leave(ms[n / 2]);
            }
            const auto& sub = g.subgroup("S");
            const int hb = sub.height();
            const auto ip = sub.tree().find_insertion_point();
            const Count c = count(g.join("S", "x"));
            const int jl = sub.path_levels("x");
            if (hb < 3 || hb > 5) continue;
            ++sweep_total;
            sweep_exact += c.m == hb && c.u == 1;
            const bool one_bottom = ip.mode == InsertMode::Grow || ip.mode == InsertMode::ReusePseudo;
            if (!one_bottom) ++two_bottoms;
            if (jl < hb) ++shallower;
            if (one_bottom && jl == hb) {
                auto& [exact, cases] = premise[hb];
                ++cases;
                exact += c.m == hb && c.u == 1;
            }
        }
    }
    bool join_ok = true;
    std::string join_detail;
    for (int h : {3, 4, 5}) {
        const auto [exact, cases] = premise[h];
        join_ok &= cases > 0 && exact == cases;
        join_detail += " h=" + std::to_string(h) + ":" + std::to_string(exact) + "/" + std::to_string(cases);
    }
    if (!join_ok) fails.push_back("join");
    info("join (M,U)=(h,1) on bottom-slot joins:" + join_detail);
    info("join sweep n=2..200 (fresh and after one leave), h in 3..5: " + std::to_string(sweep_exact) + "/" +
         std::to_string(sweep_total) + " exact against the pre-join height; " + std::to_string(two_bottoms) +
         " split a full bottom node (two new bottom keys, M=h+1), " + std::to_string(shallower) +
         " land above the deepest level (M<h)");

    // Init: one seed unicast per member.
    bool init_ok = true;
    for (std::size_t n : {1u, 2u, 3u, 8u, 17u, 100u, 200u}) {
        Group g(cfg16(n));
        const auto half = n / 2;
        auto ms = names(n);
        Layout layout{{"A", std::vector<MemberId>(ms.begin(), ms.begin() + std::ptrdiff_t(half))},
                      {"B", std::vector<MemberId>(ms.begin() + std::ptrdiff_t(half), ms.end())}};
        if (half == 0) layout.erase(layout.begin());
        const Count c = count(g.init(layout));
        init_ok &= c.u == static_cast<int>(n);
    }
    if (!init_ok) fails.push_back("init");
    info(std::string("init unicasts = n: ") + (init_ok ? "yes" : "no") + " (n in 1,2,3,8,17,100,200)");

    // Leave: multicasts within [2^(h-2), 3^(h-2)] + deg(SN).
    int leave_in = 0, leave_total = 0, below = 0, above = 0;
    std::map<std::size_t, int> miss_by_n;
    for (std::size_t n = 5; n <= 200; ++n) {
        const auto ms = names(n);
        for (std::size_t k = 0; k < n; ++k) {
            Group g(cfg16(n * 1000 + k));
            g.init({{"S", ms}});
            const Count c = count(g.leave(ms[k]));
            const auto& sub = g.subgroup("S");
            const int h = sub.height();
            if (h < 3) continue;
            const auto& root = sub.tree().node(sub.tree().root());
            const int deg = root.is_leaf() ? 1 : root.degree();
            const double lo = std::ldexp(1.0, h - 2) + deg, hi = std::pow(3.0, h - 2) + deg;
            ++leave_total;
            if (c.m >= lo && c.m <= hi) {
                ++leave_in;
            } else {
                ++miss_by_n[n];
                (c.m < lo ? below : above) += 1;
            }
        }
    }
    const bool leave_ok = leave_in == leave_total;
    if (!leave_ok) fails.push_back("leave");
    std::string misses;
    for (const auto& [n, k] : miss_by_n) misses += " n=" + std::to_string(n) + "x" + std::to_string(k);
    info("leave band, every single leave from n=5..200: " + std::to_string(leave_in) + "/" +
         std::to_string(leave_total) + " within (" + std::to_string(below) + " below, " + std::to_string(above) +
         " above)" + (misses.empty() ? "" : "; outside:" + misses));

    // Storage is checked after every event of the secrecy campaign.
    const bool storage_ok = g_storage.checks > 0 && g_storage.bad == 0;
    if (!storage_ok) fails.push_back("storage");
    info("storage seed + (h-1) path keys + GK: " + std::to_string(g_storage.checks - g_storage.bad) + "/" +
         std::to_string(g_storage.checks) + " member-event checks");

    std::string detail = fails.empty() ? "join, init, storage and leave all match" : "mismatch in:";
    for (const auto& f : fails) detail += " " + f;
    verdict(3, "cost formulas", fails.empty(), since(t0), detail);
}

// --- fuzz campaigns ---------------------------------------------------------

struct MergeTally {
    std::uint64_t merges = 0;
    std::uint64_t attached = 0;  // merges into a non-empty subgroup
    int max_gap = -1;
    std::uint64_t over = 0;
    std::vector<std::string> failures;  // reproducers
};

MergeTally g_merges;

void note_merges(const CostLedger& ledger) {
    for (const auto& e : ledger.events()) {
        if (e.info.kind != EventKind::Merge) continue;
        ++g_merges.merges;
        if (e.info.attach_gap < 0) continue;
        ++g_merges.attached;
        g_merges.max_gap = std::max(g_merges.max_gap, e.info.attach_gap);
        g_merges.over += e.info.attach_gap > 3;
    }
}

struct FuzzRun {
    std::string failure;
    std::uint64_t events = 0;
    double secs = 0;
};

FuzzRun fuzz(const GeneratorOptions& gen, bool observers, const std::function<void(const Simulation&)>& each = {}) {
    FuzzRun r;
    const Scenario s = generate_scenario(gen);
    SimOptions opt;
    opt.observers = observers;
    opt.keep_trace = false;
    const auto t0 = Clock::now();
    Simulation sim(s.config, opt);
    try {
        sim.init(s.layout);
        if (each) each(sim);
        for (const auto& e : s.events) {
            sim.apply(e);
            ++r.events;
            if (each) each(sim);
        }
    } catch (const Error& e) {
        r.failure = e.what();
        if (r.failure.find("attach") != std::string::npos || r.failure.find("merge") != std::string::npos)
            g_merges.failures.push_back("seed " + std::to_string(gen.seed) + ": " + r.failure);
    }
    r.secs = since(t0);
    note_merges(sim.ledger());
    return r;
}

Result criterion_balance() {
    const auto t0 = Clock::now();
    std::uint64_t events = 0, node_checks = 0, violations = 0, bad_degree = 0;
    std::string failure;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        GeneratorOptions g;
        g.seed = seed;
        g.field_bits = 8;
        g.members = 200;
        g.subgroups = 4;
        g.events = 10000;
        const auto r = fuzz(g, false, [&](const Simulation& sim) {
            const Group& grp = sim.group();
            for (std::size_t i = 1; i <= grp.subgroup_count(); ++i) {
                const auto& t = grp.subgroup(static_cast<std::uint32_t>(i)).tree();
                violations += t.check_balance().size();
                for (auto id : t.preorder()) {
                    const auto& n = t.node(id);
                    if (n.is_leaf()) continue;
                    ++node_checks;
                    bad_degree += n.degree() < 2 || n.degree() > 3;
                }
            }
        });
        events += r.events;
        if (!r.failure.empty() && failure.empty()) failure = "seed " + std::to_string(seed) + ": " + r.failure;
    }
    const double secs = since(t0);
    const bool ok = failure.empty() && violations == 0 && bad_degree == 0 && events == 100000 && secs < 120;
    return {4, "balance invariant", ok, secs,
            std::to_string(events) + " events over seeds 0-9, " + std::to_string(violations) +
                " balance violations, " + std::to_string(bad_degree) + "/" + std::to_string(node_checks) +
                " internal nodes outside degree {2,3}" + (failure.empty() ? "" : "; " + failure)};
}

Result criterion_secrecy() {
    const auto t0 = Clock::now();
    GeneratorOptions g;
    g.seed = 2024;
    g.field_bits = 8;
    g.members = 200;
    g.subgroups = 4;
    g.events = 10000;
    const Scenario s = generate_scenario(g);
    SimOptions opt;
    opt.keep_trace = false;
    Simulation sim(s.config, opt);
    std::string failure;
    std::uint64_t run = 0;
    try {
        sim.init(s.layout);
        check_storage(sim, g_storage);
        for (const auto& e : s.events) {
            sim.apply(e);
            ++run;
            check_storage(sim, g_storage);
        }
    } catch (const Error& e) {
        failure = e.what();
    }
    note_merges(sim.ledger());
    const ProbeStats& p = *sim.probes();
    const bool ok = failure.empty() && run == 10000 && p.sealed_opens == 0 && p.backward_opens == 0 &&
                    p.mds_rate() <= 0.01 && p.conspiracy_rate() <= 0.01;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%llu events; sealed opens %llu/%llu (revoked), %llu/%llu (pre-join); stale-seed MDS %llu/%llu "
                  "= %.2f%%; conspiracy (<=5 pooled seeds) %llu/%llu = %.2f%%",
                  (unsigned long long)run, (unsigned long long)p.sealed_opens, (unsigned long long)p.sealed_attempts,
                  (unsigned long long)p.backward_opens, (unsigned long long)p.backward_attempts,
                  (unsigned long long)p.mds_successes, (unsigned long long)p.mds_attempts, 100 * p.mds_rate(),
                  (unsigned long long)p.conspiracy_successes, (unsigned long long)p.conspiracy_attempts,
                  100 * p.conspiracy_rate());
    return {5, "secrecy probes", ok, since(t0), buf + (failure.empty() ? std::string() : "; " + failure)};
}

void criterion_determinism() {
    const auto t0 = Clock::now();
    GeneratorOptions g;
    g.seed = 99;
    g.field_bits = 8;
    g.members = 100;
    g.subgroups = 4;
    g.events = 2000;
    const Scenario s = generate_scenario(g);
    std::istringstream again(to_jsonl(s));
    const Scenario s2 = parse_scenario(again);
    const auto a = run_scenario(s), b = run_scenario(s2);
    std::string ta, tb;
    for (const auto& l : a.trace) ta += l + "\n";
    for (const auto& l : b.trace) tb += l + "\n";

    std::ifstream f("scenarios/worked_example.jsonl");
    const Scenario ex = parse_scenario(f);
    const auto fa = run_scenario(ex), fb = run_scenario(ex);
    const bool ok = !ta.empty() && ta == tb && fa.trace == fb.trace;
    verdict(6, "determinism", ok, since(t0),
            "generated scenario (2000 events, " + std::to_string(ta.size()) + " trace bytes) and worked-example replay " +
                (ok ? "byte-identical" : "DIFFER") + " across two runs");
}

void criterion_merge() {
    const bool ok = g_merges.failures.empty() && g_merges.over == 0 && g_merges.attached > 0;
    std::string detail = std::to_string(g_merges.attached) + " merges into non-empty subgroups (" +
                         std::to_string(g_merges.merges) + " total) across the fuzz campaigns; max gap " +
                         std::to_string(g_merges.max_gap) + ", " + std::to_string(g_merges.over) + " above 3";
    for (const auto& f : g_merges.failures) detail += "; " + f;
    verdict(7, "merge attachment", ok, 0, detail);
}

Result criterion_throughput() {
    GeneratorOptions g;
    g.seed = 7;
    g.field_bits = 8;
    g.members = 1000;
    g.subgroups = 20;
    g.events = 10000;
    const auto r = fuzz(g, false);
    const bool ok = r.failure.empty() && r.events == 10000 && r.secs < 60;
    return {8, "throughput", ok, r.secs,
            "1000 members / 20 subgroups, " + std::to_string(r.events) +
                " events at m=8 with every invariant checked per event" +
                (r.failure.empty() ? "" : "; " + r.failure)};
}

} // namespace

int main() {
    const auto t0 = Clock::now();
    criterion_mds();
    criterion_worked_example();
    // The fuzz campaigns run first: the secrecy campaign feeds the storage
    // check of criterion 3, and all of them feed the merge tally.
    const Result secrecy = criterion_secrecy();
    const Result balance = criterion_balance();
    const Result throughput = criterion_throughput();
    criterion_costs();
    verdict(balance);
    verdict(secrecy);
    criterion_determinism();
    criterion_merge();
    verdict(throughput);
    std::printf("%d of 8 criteria failed (%.1f s)\n", failures, since(t0));
    return failures ? 1 : 0;
}
