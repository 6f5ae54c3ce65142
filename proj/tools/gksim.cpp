// gksim: run membership scenarios through the group key protocol, replay
// traces into cost reports, and run the fuzz / secrecy campaigns.

#include "gk/report.hpp"
#include "gk/simnet.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kViolation = 1;
constexpr int kUsage = 2;

struct Common {
    std::uint64_t seed = 1;
    unsigned field_bits = 8;
    std::string out;
    std::string format = "text";
    std::string cipher = "hash-stream";
    bool seed_given = false;
    bool bits_given = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "RNG seed for keys and generated workloads")->capture_default_str();
    app->add_option("--field-bits", c.field_bits, "field width m of GF(2^m)")
        ->check(CLI::IsMember({4u, 8u, 16u}))
        ->capture_default_str();
    app->add_option("--out", c.out, "write the trace (JSONL) to this file; '-' for stdout")->capture_default_str();
    app->add_option("--format", c.format, "report format")
        ->check(CLI::IsMember({"text", "records"}))
        ->capture_default_str();
    app->add_option("--cipher", c.cipher, "key-wrap cipher ('broken' is a negative control)")
        ->check(CLI::IsMember({"hash-stream", "broken"}))
        ->capture_default_str();
}

void write_trace(const std::string& path, const std::vector<std::string>& trace) {
    if (path.empty()) return;
    std::ostringstream buf;
    for (const auto& l : trace) buf << l << '\n';
    if (path == "-") {
        std::cout << buf.str();
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw gk::Error(gk::ErrorCode::ConfigError, "cannot write " + path);
    f << buf.str();
}

void print_report(const gk::CostReport& r, const std::string& format, std::ostream& os) {
    os << (format == "records" ? gk::render_records(r) : gk::render_text(r));
}

gk::Scenario load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw gk::Error(gk::ErrorCode::ConfigError, "cannot read " + path);
    return gk::parse_scenario(f);
}

int cmd_run(const Common& c, const std::string& scenario_path, const gk::GeneratorOptions& gen, bool observers) {
    gk::Scenario s;
    if (scenario_path.empty()) {
        auto g = gen;
        g.seed = c.seed;
        g.field_bits = c.field_bits;
        s = gk::generate_scenario(g);
    } else {
        s = load_scenario(scenario_path);
        if (c.seed_given) s.config.seed = c.seed;
        if (c.bits_given) s.config.params.field_bits = c.field_bits;
    }
    s.config.cipher = c.cipher;

    gk::SimOptions opt;
    opt.observers = observers;
    gk::Simulation sim(s.config, opt);
    try {
        sim.init(s.layout);
        for (const auto& e : s.events) sim.apply(e);
    } catch (const gk::Error& e) {
        write_trace(c.out, sim.trace());
        std::cerr << "gksim: " << e.what() << '\n';
        return kViolation;
    }
    write_trace(c.out, sim.trace());
    const auto report = gk::build_report(sim.ledger(), s.config.params.field_bits);
    print_report(report, c.format, c.out == "-" ? std::cerr : std::cout);
    return 0;
}

int cmd_fuzz(const Common& c, std::uint64_t iterations, gk::GeneratorOptions gen, bool observers) {
    gen.seed = c.seed;
    gen.field_bits = c.field_bits;
    gen.events = iterations;
    gk::Scenario s = gk::generate_scenario(gen);
    s.config.cipher = c.cipher;

    gk::SimOptions opt;
    opt.observers = observers;
    opt.keep_trace = !c.out.empty();
    gk::Simulation sim(s.config, opt);
    const auto t0 = std::chrono::steady_clock::now();
    std::string failure;
    try {
        sim.init(s.layout);
        for (const auto& e : s.events) sim.apply(e);
    } catch (const gk::Error& e) {
        failure = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_trace(c.out, sim.trace());

    const auto* p = sim.probes();
    std::ostream& os = c.out == "-" ? std::cerr : std::cout;
    const bool agree = failure.empty() || failure.find("keyring") == std::string::npos;
    const bool forward = p && p->sealed_opens == 0 && failure.find("revoked principal") == std::string::npos;
    const bool backward = p && p->backward_opens == 0 && failure.find("joiner") == std::string::npos;
    // 1% at m >= 8; twice the 2^-m chance level for narrower fields.
    const double limit = std::max(0.01, 2.0 / double(1u << c.field_bits));
    const bool mds = !p || p->mds_rate() <= limit;
    const bool conspiracy = !p || p->conspiracy_rate() <= limit;
    auto line = [&](const char* name, bool ok, const std::string& detail) {
        os << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
    };
    const std::uint64_t run = sim.events_run() ? sim.events_run() - 1 : 0;

    if (c.format == "records") {
        nlohmann::json j{{"type", "fuzz"},
                         {"seed", c.seed},
                         {"field_bits", c.field_bits},
                         {"events", run},
                         {"planned", s.events.size()},
                         {"seconds", secs},
                         {"failure", failure},
                         {"balance_checks", sim.balance_checks()}};
        if (p)
            j["probes"] = {{"sealed_attempts", p->sealed_attempts}, {"sealed_opens", p->sealed_opens},
                           {"mds_attempts", p->mds_attempts},       {"mds_successes", p->mds_successes},
                           {"conspiracy_attempts", p->conspiracy_attempts},
                           {"conspiracy_successes", p->conspiracy_successes},
                           {"backward_attempts", p->backward_attempts}, {"backward_opens", p->backward_opens}};
        os << j.dump() << '\n';
    } else {
        os << "fuzz: seed " << c.seed << ", m=" << c.field_bits << ", " << run << "/" << s.events.size()
           << " events, " << sim.group().member_count() << " members at end, " << secs << " s\n";
        line("balance", failure.find("unbalanced") == std::string::npos &&
                            failure.find("structure") == std::string::npos,
             std::to_string(sim.balance_checks()) + " subgroup checks");
        line("agreement", agree, "keyrings match controllers after every event");
        if (p) {
            line("forward secrecy", forward,
                 std::to_string(p->sealed_opens) + " opens in " + std::to_string(p->sealed_attempts) + " attempts");
            line("backward secrecy", backward,
                 std::to_string(p->backward_opens) + " opens in " + std::to_string(p->backward_attempts) +
                     " attempts");
            line("stale-seed MDS", mds,
                 std::to_string(p->mds_successes) + "/" + std::to_string(p->mds_attempts) + " (chance 2^-" +
                     std::to_string(c.field_bits) + ")");
            line("conspiracy", conspiracy,
                 std::to_string(p->conspiracy_successes) + "/" + std::to_string(p->conspiracy_attempts));
        }
    }
    if (!failure.empty()) {
        std::cerr << "gksim: " << failure << "\nreproduce with: gksim fuzz --seed " << c.seed << " --field-bits "
                  << c.field_bits << " --iterations " << iterations << " --members " << gen.members
                  << " --subgroups " << gen.subgroups << (c.cipher != "hash-stream" ? " --cipher " + c.cipher : "")
                  << '\n';
        return kViolation;
    }
    if (!mds || !conspiracy) {
        std::cerr << "gksim: probe rate above threshold; reproduce with --seed " << c.seed << '\n';
        return kViolation;
    }
    return 0;
}

int cmd_report(const std::string& path, const std::string& format) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw gk::Error(gk::ErrorCode::ConfigError, "cannot read " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    const std::string text = buf.str();
    unsigned bits = 8;
    if (!text.empty()) {
        const auto first = text.substr(0, text.find('\n'));
        try {
            const auto h = nlohmann::json::parse(first);
            if (h.value("type", "") == "header") bits = h.value("field_bits", 8u);
        } catch (const nlohmann::json::exception&) {
            // ledger_from_trace reports the offset
        }
    }
    std::istringstream in(text);
    const auto ledger = gk::ledger_from_trace(in);
    print_report(gk::build_report(ledger, bits), format, std::cout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gksim - group key management simulator"};
    app.require_subcommand(1);
    app.get_formatter()->column_width(40);

    Common rc, fc;
    std::string scenario;
    bool no_observers = false;
    gk::GeneratorOptions rgen;
    rgen.members = 100;
    rgen.subgroups = 4;
    rgen.events = 1000;
    auto* run = app.add_subcommand("run", "execute a scenario and print its cost report");
    add_common(run, rc);
    run->add_option("--scenario", scenario, "scenario file (JSONL); empty: generate one from --seed")
        ->capture_default_str();
    run->add_option("--members", rgen.members, "generated scenario: initial members")->capture_default_str();
    run->add_option("--subgroups", rgen.subgroups, "generated scenario: subgroups")->capture_default_str();
    run->add_option("--events", rgen.events, "generated scenario: events")->capture_default_str();
    run->add_flag("--no-observers", no_observers, "skip the secrecy probes");

    std::uint64_t iterations = 10000;
    gk::GeneratorOptions fgen;
    fgen.members = 1000;
    fgen.subgroups = 20;
    auto* fuzz = app.add_subcommand("fuzz", "balance / agreement / secrecy campaign on a generated workload");
    add_common(fuzz, fc);
    fuzz->add_option("--iterations", iterations, "membership events")->capture_default_str();
    fuzz->add_option("--members", fgen.members, "initial members")->capture_default_str();
    fuzz->add_option("--subgroups", fgen.subgroups, "subgroups")->capture_default_str();
    bool fuzz_no_observers = false;
    fuzz->add_flag("--no-observers", fuzz_no_observers, "skip the secrecy probes (balance / agreement only)");

    std::string trace_path;
    std::string rformat = "text";
    auto* report = app.add_subcommand("report", "recompute the cost report from a trace");
    report->add_option("trace", trace_path, "trace file (JSONL)")->required();
    report->add_option("--format", rformat, "report format")
        ->check(CLI::IsMember({"text", "records"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    rc.seed_given = run->count("--seed") > 0;
    rc.bits_given = run->count("--field-bits") > 0;

    try {
        if (*run) return cmd_run(rc, scenario, rgen, !no_observers);
        if (*fuzz) return cmd_fuzz(fc, iterations, fgen, !fuzz_no_observers);
        return cmd_report(trace_path, rformat);
    } catch (const gk::Error& e) {
        std::cerr << "gksim: " << e.what() << '\n';
        return e.code() == gk::ErrorCode::ParseError || e.code() == gk::ErrorCode::ConfigError ? kUsage
                                                                                               : kViolation;
    }
}
