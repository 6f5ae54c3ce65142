#include "doctest.h"

#include "gk/simnet.hpp"

#include <sstream>

using namespace gk;

namespace {

Scenario small(std::uint64_t seed, unsigned bits = 8, std::size_t events = 300) {
    GeneratorOptions g;
    g.seed = seed;
    g.field_bits = bits;
    g.members = bits == 4 ? 8 : 40;
    g.subgroups = bits == 4 ? 3 : 4;
    g.events = events;
    return generate_scenario(g);
}

std::string joined(const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
}

const char* kExample = R"({"type":"config","seed":7,"field_bits":8}
{"type":"subgroup","sn":"SN1","members":["u1","u2","u3","u4","u5","u6","u7","u8"]}
{"type":"subgroup","sn":"SN2","members":["u9","u10","u11","u12","u13"]}
{"type":"subgroup","sn":"SN3","members":["u14","u15","u16"]}
{"type":"join","sn":"SN1","member":"u17"}
{"type":"join","sn":"SN3","member":"u18"}
{"type":"leave","member":"u18"}
)";

} // namespace

TEST_CASE("scenario parsing and round trip") {
    std::istringstream in(kExample);
    const Scenario s = parse_scenario(in);
    CHECK(s.config.seed == 7);
    REQUIRE(s.layout.size() == 3);
    CHECK(s.layout[1].second.size() == 5);
    REQUIRE(s.events.size() == 3);
    CHECK(s.events[2].kind == EventKind::Leave);
    CHECK(s.events[2].sn == "SN3");

    std::istringstream again(to_jsonl(s));
    const Scenario t = parse_scenario(again);
    CHECK(to_jsonl(t) == to_jsonl(s));
}

TEST_CASE("scenario validation reports the line") {
    auto err = [](const std::string& text) {
        std::istringstream in(text);
        try {
            parse_scenario(in);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ParseError);
            return std::string(e.what());
        }
        return std::string("no error");
    };
    const std::string head = "{\"type\":\"subgroup\",\"sn\":\"A\",\"members\":[\"a\",\"b\"]}\n";
    CHECK(err(head + "{\"type\":\"leave\",\"member\":\"zz\"}\n").find("line 2") != std::string::npos);
    CHECK(err(head + "{\"type\":\"join\",\"sn\":\"A\",\"member\":\"a\"}\n").find("already") != std::string::npos);
    CHECK(err(head + "{\"type\":\"join\",\"sn\":\"B\",\"member\":\"c\"}\n").find("unknown subgroup") != std::string::npos);
    CHECK(err(head + "{not json\n").find("line 2") != std::string::npos);
    CHECK(err("").find("no subgroups") != std::string::npos);
}

TEST_CASE("generator respects capacity and is deterministic") {
    CHECK(subgroup_cap(4) == 4);
    CHECK(subgroup_cap(8) == 64);
    CHECK(subgroup_cap(16) == 200);
    const auto a = small(3), b = small(3), c = small(4);
    CHECK(to_jsonl(a) == to_jsonl(b));
    CHECK(to_jsonl(a) != to_jsonl(c));
    // Replaying the membership never exceeds the cap.
    std::istringstream in(to_jsonl(a));
    CHECK_NOTHROW(parse_scenario(in));
    GeneratorOptions g;
    g.field_bits = 4;
    g.members = 100;
    g.subgroups = 2;
    CHECK_THROWS_AS(generate_scenario(g), Error);
}

TEST_CASE("worked example: ledger counts") {
    std::istringstream in(kExample);
    const auto r = run_scenario(parse_scenario(in));
    const auto& ev = r.ledger.events();
    REQUIRE(ev.size() == 4);
    CHECK(ev[0].total().unicasts == 16);
    CHECK(ev[1].scope(1).multicasts == 3);
    CHECK(ev[1].scope(1).unicasts == 1);
    CHECK(ev[1].info.height_before == 3);
    CHECK(r.final_members == 17);
    REQUIRE(r.probes);
    CHECK(r.probes->sealed_opens == 0);
    CHECK(r.probes->backward_opens == 0);
}

TEST_CASE("trace replay reproduces the ledger") {
    for (unsigned bits : {4u, 8u, 16u}) {
        const auto r = run_scenario(small(11, bits, 200));
        std::istringstream in(joined(r.trace));
        CHECK(ledger_from_trace(in) == r.ledger);
    }
}

TEST_CASE("runs are deterministic") {
    const auto s = small(5);
    const auto a = run_scenario(s), b = run_scenario(s);
    CHECK(a.trace == b.trace);
    CHECK(a.ledger == b.ledger);
    SimOptions quiet;
    quiet.keep_trace = false;
    quiet.observers = false;
    CHECK(run_scenario(s, quiet).ledger == a.ledger);
}

TEST_CASE("truncated and malformed traces") {
    const auto r = run_scenario(small(2, 8, 20));
    const std::string full = joined(r.trace);
    const std::string cut = full.substr(0, full.size() - 5);
    const std::size_t last = cut.rfind('\n') + 1;
    std::istringstream in(cut);
    try {
        ledger_from_trace(in);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("byte " + std::to_string(last)) != std::string::npos);
    }
    std::istringstream bad(r.trace[0] + "\n{\"type\":\n");
    CHECK_THROWS_AS(ledger_from_trace(bad), Error);
    std::istringstream empty("");
    CHECK(ledger_from_trace(empty).events().empty());
}

TEST_CASE("no events: only the init record") {
    Scenario s = small(1, 8, 0);
    CHECK(s.events.empty());
    const auto r = run_scenario(s);
    CHECK(r.ledger.events().size() == 1);
    CHECK(r.ledger.total().unicasts == 40);
}

TEST_CASE("secrecy probes stay at chance level") {
    const auto r = run_scenario(small(9, 8, 600));
    REQUIRE(r.probes);
    CHECK(r.probes->sealed_attempts > 0);
    CHECK(r.probes->mds_attempts > 0);
    CHECK(r.probes->conspiracy_attempts > 0);
    CHECK(r.probes->backward_attempts > 0);
    CHECK(r.probes->sealed_opens == 0);
    CHECK(r.probes->backward_opens == 0);
    CHECK(r.probes->mds_rate() <= 0.02);
    CHECK(r.probes->conspiracy_rate() <= 0.02);
}

TEST_CASE("broken cipher is caught by the probes") {
    Scenario s = small(9, 8, 100);
    s.config.cipher = "broken";
    try {
        run_scenario(s);
        FAIL("no violation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvariantViolation);
        CHECK(std::string(e.what()).find("event ") != std::string::npos);
    }
    // The standalone probe sees it too.
    GroupConfig cfg;
    cfg.cipher = "broken";
    const auto codec = make_codec(cfg);
    const SessionKey stale = codec->make_key(NodeId::make(1, 0), 0, FieldElem{1}, Nonce(16, 0));
    Group g(cfg);
    g.init({{"A", {"a", "b", "c"}}});
    const auto msgs = g.leave("a");
    CHECK(probe_forward_secrecy(*codec, {"a", 1, 1, {}, {stale}}, msgs) > 0);
}
