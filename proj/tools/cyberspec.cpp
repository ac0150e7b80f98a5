// cyberspec: command-line front end for simulation, attack injection,
// curation, training, evaluation, serving and reporting.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cyberspec/cyberspec.hpp"
#include "cyberspec/server.hpp"

namespace fs = std::filesystem;
using namespace cyberspec;

namespace {

struct Common {
    std::uint64_t seed = 7;
    std::string config;
    std::string out;
    CLI::Option* seed_option = nullptr;

    bool seed_given() const { return seed_option && seed_option->count() > 0; }
};

void add_common(CLI::App* cmd, Common& c, std::string out_default) {
    c.out = std::move(out_default);
    c.seed_option = cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    cmd->add_option("--config", c.config, "Configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, "Output location")->capture_default_str();
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

// ---- simulate ----

struct SimulateArgs {
    Common common;
    std::size_t devices = 9;
    double hours = 2.0;
};

void run_simulate(const SimulateArgs& a) {
    FleetSpec f;
    if (!a.common.config.empty()) f = load_experiment_spec(a.common.config).fleet;
    f.type_b = a.devices / 3;
    f.type_a = a.devices - f.type_b;
    f.benign_hours = a.hours;
    const fs::path dir = a.common.out;
    fs::create_directories(dir);
    nlohmann::json fleet = nlohmann::json::object();
    for (const auto& p : make_fleet(f, a.common.seed)) {
        save_vectors_csv(dir / (p.sensor_id + ".csv"), benign_vectors(p, f, a.common.seed));
        fleet[p.sensor_id] = to_string(p.device_type);
    }
    open_out(dir / "fleet.json") << fleet.dump(1) << '\n';
    std::cout << "wrote " << fleet.size() << " device datasets (" << rows_for_hours(f.benign_hours, f.cadence_s)
              << " vectors each) to " << dir.string() << '\n';
}

// ---- attack ----

struct AttackArgs {
    Common common;
    std::string scenario;
    std::size_t cycles = 5;
};

void run_attack(const AttackArgs& a) {
    if (a.common.config.empty()) throw ConfigError("attack needs --config with [attack.<name>] sections");
    const auto tree = read_ini_file(a.common.config);
    Scenario scenario = a.scenario.empty() ? parse_scenario(tree) : load_scenario(a.scenario);
    if (scenario.transmissions.empty()) scenario.transmissions = default_scenario().transmissions;
    const auto attacks = parse_attack_scenario(tree, scenario.spectrum);
    const auto emitters = scenario.emitters();
    const auto profile = make_device_profile(device_id(DeviceType::type_a, 0), DeviceType::type_a,
                                             hash_keys({a.common.seed, hash_string("rpi3-01")}));
    const fs::path dir = a.common.out;
    for (const auto& named : attacks) {
        const fs::path adir = dir / named.name;
        fs::create_directories(adir);
        Attack attack(named.config, scenario.spectrum);
        auto tallies = open_out(adir / "tallies.csv");
        write_tally_header(tallies);
        std::vector<BehaviorVector> fingerprints;
        for (std::size_t c = 0; c < a.cycles; ++c) {
            auto scan = generate_scan_cycle(scenario.spectrum, emitters, scenario.noise, c, a.common.seed, profile.sensor_id);
            const auto result = attack.step(std::move(scan));
            char name[32];
            std::snprintf(name, sizeof name, "psd_%04zu.csv", c);
            auto psd = open_out(adir / name);
            write_psd_csv(psd, scenario.spectrum, result.cycle);
            write_tally_row(tallies, c, result.tally);
            fingerprints.push_back(synthesize_behavior_vector(profile, result.tally, 50.0, hash_keys({a.common.seed, hash_string(named.name)}),
                                                              static_cast<double>(c) * scenario.spectrum.cycle_duration_s));
        }
        save_vectors_csv(adir / "fingerprints.csv", fingerprints);
    }
    std::cout << "ran " << attacks.size() << " attack(s) for " << a.cycles << " cycles into " << dir.string() << '\n';
}

// ---- curate ----

struct CurateArgs {
    Common common;
    std::string in;
};

void run_curate(const CurateArgs& a) {
    const fs::path in = a.in;
    if (!fs::is_directory(in)) throw std::runtime_error("input directory " + in.string() + " does not exist");
    std::map<std::string, std::string> groups;
    if (std::ifstream g(in / "fleet.json"); g) groups = nlohmann::json::parse(g).get<std::map<std::string, std::string>>();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in))
        if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no vector datasets in " + in.string());
    std::vector<DeviceRows> devices;
    for (const auto& f : files) {
        const auto id = f.stem().string();
        devices.push_back({id, groups.count(id) ? groups[id] : "default", count_matrix(load_vectors_csv(f))});
    }
    auto curated = curate_fleet(devices, event_catalog().names());
    std::vector<Matrix> rows;
    for (auto& d : curated.devices) rows.push_back(std::move(d.rows));
    auto ds = split_and_normalize(rows, curated.kept);
    ds.curation_log = curated.log;
    save_curated_dataset(a.common.out, ds);
    std::cout << "kept " << ds.feature_names.size() << " features, dropped " << curated.log.size() << " features and "
              << curated.dropped_rows << " noisy vectors; partitions " << ds.train.rows() << '/' << ds.val.rows() << '/'
              << ds.test.rows() << '\n';
}

// ---- train ----

struct TrainArgs {
    Common common;
    std::string in;
    std::string detector = "ocsvm";
};

void run_train(const TrainArgs& a) {
    const auto ds = load_curated_dataset(a.in);
    DetectorOptions options;
    if (!a.common.config.empty()) options = load_experiment_spec(a.common.config).detector_options;
    options.seed = a.common.seed;
    const auto kind = parse_detector_kind(a.detector);
    auto model = train_detector(kind, ds.train, ds.feature_names, options);
    model.normalization = ds.normalization;
    save_model(model, a.common.out);
    std::cout << "trained " << to_string(kind) << " on " << ds.train.rows() << " rows; thresholds [" << model.thresholds.lo
              << ", " << model.thresholds.hi << "] -> " << a.common.out << '\n';
}

// ---- evaluate ----

struct EvaluateArgs {
    Common common;
    std::string spec;
};

void run_evaluate(EvaluateArgs a) {
    if (a.spec.empty()) a.spec = a.common.config;
    if (a.spec.empty()) throw ConfigError("evaluate needs --spec");
    auto spec = load_experiment_spec(a.spec);
    if (a.common.seed_given()) spec.seed = a.common.seed;
    const auto report = run_experiment(spec);
    write_report(a.common.out, report);
    std::cout << "models trained: " << report.models_trained << ", TPR cells: " << report.tpr.size() << ", report in "
              << a.common.out << '\n';
}

// ---- serve ----

struct ServeArgs {
    Common common;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string model;
    std::string port_file;
    std::size_t alert_after = 2;
};

CollectorServer* g_server = nullptr;

void run_serve(const ServeArgs& a) {
    const fs::path root = a.common.out.empty() ? store_root_from_env() : fs::path(a.common.out);
    Collector collector(root, a.alert_after);
    if (!a.model.empty()) collector.session().assign_default(std::make_shared<const DetectorModel>(load_model(a.model)));
    CollectorServer server(collector);
    const int port = server.bind(a.host, a.port);
    if (port < 0) throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(a.port));
    if (!a.port_file.empty()) {
        const fs::path tmp = a.port_file + ".tmp";
        open_out(tmp) << port << '\n';
        fs::rename(tmp, a.port_file);
    }
    std::cout << "collector listening on " << a.host << ':' << port << ", store " << root.string() << std::endl;
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    server.run();
    g_server = nullptr;
}

// ---- report ----

struct ReportArgs {
    Common common;
    std::string run;
};

void run_report(const ReportArgs& a) {
    if (!fs::is_directory(a.run)) throw std::runtime_error("no run directory " + a.run);
    const auto summary = render_summary(read_report(a.run));
    if (a.common.out.empty() || a.common.out == "-") std::cout << summary;
    else open_out(a.common.out) << summary;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectrum-sensor SSDF attack simulation and behavioral anomaly detection"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate benign behavior-vector datasets for a fleet");
    add_common(simulate, sim.common, "datasets");
    simulate->add_option("--devices", sim.devices, "Number of devices (two thirds type A)")->capture_default_str()->check(CLI::Range(1, 1000));
    simulate->add_option("--hours", sim.hours, "Monitoring hours per device")->capture_default_str()->check(CLI::PositiveNumber);

    AttackArgs att;
    auto* attack = app.add_subcommand("attack", "Inject attacks from a scenario file; emit PSDs, tallies and fingerprints");
    add_common(attack, att.common, "attacks");
    attack->add_option("--scenario", att.scenario, "Spectrum scenario file (defaults to the attack file's sections)")->check(CLI::ExistingFile);
    attack->add_option("--cycles", att.cycles, "Scan cycles per attack")->capture_default_str()->check(CLI::Range(1, 100000));

    CurateArgs cur;
    auto* curate = app.add_subcommand("curate", "Curate a directory of vector datasets");
    add_common(curate, cur.common, "curated");
    curate->add_option("--in", cur.in, "Directory of per-device vector CSVs")->required();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train a detector on a curated dataset");
    add_common(train, tr.common, "model.json");
    train->add_option("--in", tr.in, "Curated dataset directory")->required();
    train->add_option("--detector", tr.detector, "autoencoder | lof | ocsvm | iforest | copod")->capture_default_str();

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Run an experiment specification");
    add_common(evaluate, ev.common, "run");
    evaluate->add_option("--spec", ev.spec, "Experiment specification file")->check(CLI::ExistingFile);

    ServeArgs sv;
    auto* serve = app.add_subcommand("serve", "Start the collector service");
    add_common(serve, sv.common, "");
    serve->add_option("--host", sv.host)->capture_default_str();
    serve->add_option("--port", sv.port, "Listen port, 0 for any")->capture_default_str();
    serve->add_option("--model", sv.model, "Model scoring every sensor")->check(CLI::ExistingFile);
    serve->add_option("--port-file", sv.port_file, "Write the bound port here once listening");
    serve->add_option("--alert-after", sv.alert_after, "Consecutive anomalies before an alert")->capture_default_str();

    ReportArgs rep;
    auto* report = app.add_subcommand("report", "Render the summary of an evaluation run");
    add_common(report, rep.common, "-");
    report->add_option("--run", rep.run, "Run directory written by evaluate")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*simulate) run_simulate(sim);
        else if (*attack) run_attack(att);
        else if (*curate) run_curate(cur);
        else if (*train) run_train(tr);
        else if (*evaluate) run_evaluate(ev);
        else if (*serve) run_serve(sv);
        else if (*report) run_report(rep);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
