#include "pifsim/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#ifndef PIFSIM_VERSION
#define PIFSIM_VERSION "unknown"
#endif

namespace pifsim::cli {

namespace {

using ojson = nlohmann::ordered_json;

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* b = v.data();
    const char* e = v.data() + v.size();
    const auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e || v.empty()) {
        throw UsageError("invalid value '" + v + "' for " + key);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("invalid boolean '" + v + "' for " + key);
}

std::string parse_choice(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
    std::string list;
    for (const char* a : allowed) {
        if (v == a) return v;
        list += list.empty() ? a : std::string(", ") + a;
    }
    throw UsageError("invalid value '" + v + "' for " + key + " (expected one of " + list + ")");
}

struct KeyDef {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<ojson(const RunConfig&)> get;
};

#define PIFSIM_NUM(field, type)                                                                      \
    KeyDef {                                                                                         \
        #field, [](RunConfig& c, const std::string& v) { c.field = parse_number<type>(#field, v); }, \
            [](const RunConfig& c) { return ojson(c.field); }                                        \
    }
#define PIFSIM_BOOL(field)                                                                     \
    KeyDef {                                                                                   \
        #field, [](RunConfig& c, const std::string& v) { c.field = parse_bool(#field, v); }, \
            [](const RunConfig& c) { return ojson(c.field); }                                  \
    }
#define PIFSIM_CHOICE(field, ...)                                                                          \
    KeyDef {                                                                                               \
        #field, [](RunConfig& c, const std::string& v) { c.field = parse_choice(#field, v, {__VA_ARGS__}); }, \
            [](const RunConfig& c) { return ojson(c.field); }                                              \
    }

const std::vector<KeyDef>& key_defs() {
    static const std::vector<KeyDef> defs{
        PIFSIM_CHOICE(benchmark, "landau", "penning"),
        PIFSIM_CHOICE(strategy, "serial", "dd", "pd", "st"),
        PIFSIM_NUM(modes, int),
        PIFSIM_NUM(ppm, int),
        PIFSIM_NUM(dt, double),
        PIFSIM_NUM(steps, long),
        PIFSIM_NUM(eps_fine, double),
        PIFSIM_NUM(ranks_space, int),
        PIFSIM_NUM(ranks_time, int),
        PIFSIM_CHOICE(coarse, "pif", "pic"),
        PIFSIM_NUM(eps_coarse, double),
        PIFSIM_NUM(dt_coarse, double),
        PIFSIM_NUM(nc_coarse, int),
        PIFSIM_NUM(blocks, int),
        PIFSIM_NUM(tol_parareal, double),
        PIFSIM_NUM(max_iters, int),
        PIFSIM_NUM(seed, std::uint64_t),
        PIFSIM_NUM(diag_every, int),
        PIFSIM_CHOICE(shape, "delta", "cic"),
        KeyDef{"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
               [](const RunConfig& c) { return ojson(c.out_dir); }},
        PIFSIM_BOOL(log_comm),
        PIFSIM_BOOL(overwrite),
        PIFSIM_NUM(watchdog_ms, long),
    };
    return defs;
}

#undef PIFSIM_NUM
#undef PIFSIM_BOOL
#undef PIFSIM_CHOICE

std::string normalize_key(std::string k) {
    for (auto& ch : k) {
        if (ch == '-') ch = '_';
    }
    return k;
}

const KeyDef& find_key(const std::string& key) {
    for (const auto& d : key_defs()) {
        if (key == d.name) return d;
    }
    throw UsageError("unknown configuration key '" + key + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string json_value_string(const std::string& key, const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw UsageError("configuration key '" + key + "' must be a string, number or boolean");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot read config file " + path);
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const ParrealNonConvergence* find_nonconvergence(const std::exception& e) {
    if (const auto* n = dynamic_cast<const ParrealNonConvergence*>(&e)) {
        return n;
    }
    try {
        std::rethrow_if_nested(e);
    } catch (const std::exception& inner) {
        return find_nonconvergence(inner);
    } catch (...) {
    }
    return nullptr;
}

std::string describe(const std::exception& e) {
    std::string msg = e.what();
    try {
        std::rethrow_if_nested(e);
    } catch (const std::exception& inner) {
        const std::string sub = describe(inner);
        if (msg.find(sub) == std::string::npos) msg += ": " + sub;
    } catch (...) {
    }
    return msg;
}

ojson record_json(const StepRecord& r) {
    return ojson{{"step", r.step},
                 {"t", r.t},
                 {"field_energy", r.field_energy},
                 {"kinetic_energy", r.kinetic_energy},
                 {"total_energy", r.total_energy},
                 {"momentum", {r.momentum[0], r.momentum[1], r.momentum[2]}},
                 {"total_charge", r.total_charge}};
}

std::string meta_json(const RunConfig& c, const RunRequest& req, const SimulationResult& res) {
    ojson m;
    m["config"] = ojson::parse(to_json(c));
    m["code_version"] = PIFSIM_VERSION;
    m["seed"] = c.seed;
    m["rank_layout"] = {{"ranks_space", c.ranks_space},
                        {"ranks_time", c.ranks_time},
                        {"world_size", c.ranks_space * c.ranks_time},
                        {"world_rank", "time_index * ranks_space + space_index"}};
    const auto avg = average_inclusive(res.timers);
    ojson t = ojson::object();
    for (int i = 0; i < kNumTimerCategories; ++i) {
        t[timer_name(static_cast<TimerCategory>(i))] = avg[static_cast<std::size_t>(i)];
    }
    m["timer_averages"] = t;
    m["time_per_step"] = res.wall_seconds / static_cast<double>(req.sim.steps);
    m["wall_seconds"] = res.wall_seconds;
    m["num_particles"] = req.sim.bench.num_particles();
    m["initial"] = record_json(res.initial);
    if (req.strategy == Strategy::SpaceTime) {
        m["parareal"] = {{"iterations_per_block", res.iterations_per_block},
                         {"residuals_per_block", res.residuals_per_block}};
    }
    if (req.strategy == Strategy::DomainDecomposition) {
        m["max_count_imbalance"] = res.max_count_imbalance;
    }
    return m.dump(2) + "\n";
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& d : key_defs()) k.emplace_back(d.name);
        return k;
    }();
    return keys;
}

Settings preset(const std::string& name) {
    Settings s{{"modes", "16"}, {"ppm", "10"}, {"dt", "0.05"}, {"steps", "100"},
               {"coarse", "pif"}, {"eps_coarse", "0.001"}, {"dt_coarse", "0.05"}, {"blocks", "1"}};
    if (name == "desk-landau") {
        s["benchmark"] = "landau";
    } else if (name == "desk-penning") {
        s["benchmark"] = "penning";
    } else {
        throw UsageError("unknown preset '" + name + "' (expected desk-landau or desk-penning)");
    }
    return s;
}

Settings parse_settings(const std::string& text) {
    Settings s;
    const std::string body = trim(text);
    if (!body.empty() && body.front() == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("invalid JSON config: ") + e.what());
        }
        if (j.contains("config") && j["config"].is_object()) {
            j = j["config"];
        }
        for (const auto& [k, v] : j.items()) {
            const std::string key = normalize_key(k);
            find_key(key);
            s[key] = json_value_string(key, v);
        }
        return s;
    }
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = normalize_key(trim(line.substr(0, eq)));
        find_key(key);
        s[key] = trim(line.substr(eq + 1));
    }
    return s;
}

RunConfig make_config(const Settings& s) {
    RunConfig c;
    for (const auto& [k, v] : s) {
        find_key(normalize_key(k)).set(c, v);
    }
    auto has = [&](const char* k) { return s.count(k) != 0; };
    const bool penning = c.benchmark == "penning";
    if (!has("steps")) c.steps = c.strategy == "st" ? 6144 : 768;
    if (!has("coarse")) c.coarse = penning ? "pic" : "pif";
    if (!has("dt_coarse")) c.dt_coarse = penning ? c.dt : 0.05;
    if (!has("nc_coarse")) c.nc_coarse = c.modes;
    if (!has("blocks")) c.blocks = penning ? 16 : 1;
    return c;
}

std::string to_json(const RunConfig& c) {
    ojson j = ojson::object();
    for (const auto& d : key_defs()) {
        j[d.name] = d.get(c);
    }
    return j.dump(2);
}

RunConfig config_from_json(const std::string& json) { return make_config(parse_settings(json)); }

RunRequest to_request(const RunConfig& c) {
    RunRequest r;
    try {
        auto& b = r.sim.bench;
        b = c.benchmark == "penning" ? bench::BenchmarkSpec::penning(c.modes, c.ppm)
                                     : bench::BenchmarkSpec::landau(c.modes, c.ppm);
        b.seed = c.seed;
        r.sim.dt = c.dt;
        r.sim.steps = c.steps;
        r.sim.eps = c.eps_fine;
        r.sim.shape = c.shape == "cic" ? Shape::Cic : Shape::Delta;
        r.sim.diag_every = c.diag_every;
        r.strategy = strategy_from_string(c.strategy);
        r.ranks_space = c.ranks_space;
        r.ranks_time = c.ranks_time;
        r.parareal.P_t = c.ranks_time;
        r.parareal.tol = c.tol_parareal;
        r.parareal.max_iters = c.max_iters;
        r.parareal.blocks = c.blocks;
        r.parareal.coarse.kind = c.coarse == "pic" ? CoarseConfig::Kind::Pic : CoarseConfig::Kind::Pif;
        r.parareal.coarse.eps = c.eps_coarse;
        r.parareal.coarse.dt = c.dt_coarse;
        r.parareal.coarse.Nc = c.nc_coarse;
        if (c.watchdog_ms < 1) throw InvalidArgument("watchdog_ms must be >= 1");
        r.spmd.watchdog = std::chrono::milliseconds(c.watchdog_ms);
        r.spmd.log_calls = c.log_comm;
        validate(r);
    } catch (const UsageError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    return r;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Particle-in-Fourier Vlasov-Poisson simulator", "pifsim"};
    std::map<std::string, std::string> flag_values;
    std::map<std::string, CLI::Option*> flag_opts;
    for (const auto& key : config_keys()) {
        if (key == "log_comm" || key == "overwrite") continue;
        std::string flag = "--" + key;
        for (auto& ch : flag) {
            if (ch == '_') ch = '-';
        }
        flag_opts[key] = app.add_option(flag, flag_values[key]);
    }
    bool log_comm = false;
    bool overwrite = false;
    std::string config_file;
    std::string preset_name;
    bool dry_run = false;
    auto* log_opt = app.add_flag("--log-comm", log_comm, "Write comm_log.csv with every communicator call");
    auto* over_opt = app.add_flag("--overwrite", overwrite, "Replace existing output files");
    app.add_option("--config", config_file, "Config file (key=value lines or a JSON object)");
    app.add_option("--preset", preset_name, "desk-landau or desk-penning");
    app.add_flag("--dry-run", dry_run, "Print the effective configuration and exit");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    RunConfig cfg;
    RunRequest req;
    try {
        Settings s;
        if (!preset_name.empty()) s = preset(preset_name);
        if (!config_file.empty()) {
            for (auto& [k, v] : parse_settings(read_file(config_file))) s[k] = v;
        }
        for (const auto& [key, opt] : flag_opts) {
            if (opt->count() > 0) s[key] = flag_values[key];
        }
        if (log_opt->count() > 0) s["log_comm"] = log_comm ? "true" : "false";
        if (over_opt->count() > 0) s["overwrite"] = overwrite ? "true" : "false";
        cfg = make_config(s);
        req = to_request(cfg);
        if (!cfg.overwrite && !dry_run) {
            for (const char* f : {"diagnostics.csv", "timers.csv", "meta.json", "comm_log.csv"}) {
                const auto p = std::filesystem::path(cfg.out_dir) / f;
                if (std::filesystem::exists(p)) {
                    throw UsageError("refusing to overwrite existing " + p.string() + " (pass --overwrite)");
                }
            }
        }
    } catch (const InvalidArgument& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }
    if (dry_run) {
        out << to_json(cfg) << "\n";
        return 0;
    }

    SimulationResult res;
    try {
        res = simulate(req);
    } catch (const std::exception& e) {
        if (const auto* n = find_nonconvergence(e)) {
            err << "parareal did not converge: " << n->what() << "\n  residuals:";
            for (double r : n->history()) err << ' ' << r;
            err << "\n";
            return 4;
        }
        err << "error: " << describe(e) << "\n";
        return 3;
    }

    try {
        write_outputs(cfg.out_dir, res.records, res.timers, meta_json(cfg, req, res), cfg.overwrite);
        if (cfg.log_comm) {
            std::ofstream log(std::filesystem::path(cfg.out_dir) / "comm_log.csv", std::ios::trunc);
            log << comm::call_log_csv(res.call_log);
            if (!log) throw Error("failed writing comm_log.csv");
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }

    const double final_energy = res.records.empty() ? res.initial.field_energy : res.records.back().field_energy;
    std::ostringstream line;
    line << std::setprecision(10) << "benchmark=" << cfg.benchmark << " strategy=" << cfg.strategy
         << " ranks=" << cfg.ranks_space << "x" << cfg.ranks_time << " steps=" << cfg.steps
         << " final_field_energy=" << final_energy;
    if (req.strategy == Strategy::SpaceTime) {
        line << " iterations=";
        for (std::size_t b = 0; b < res.iterations_per_block.size(); ++b) {
            line << (b ? "," : "") << res.iterations_per_block[b];
        }
    }
    line << std::setprecision(4) << " time_per_step=" << res.wall_seconds / static_cast<double>(cfg.steps) << "s";
    out << line.str() << "\n";
    return 0;
}

}  // namespace pifsim::cli
