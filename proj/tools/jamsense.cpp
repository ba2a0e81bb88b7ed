// SPDX-License-Identifier: Apache-2.0
//
// jamsense command-line driver.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <jamsense/jamsense.hpp>

namespace fs = std::filesystem;
using namespace jamsense;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
}

std::vector<scenario::TimeSeriesRun> load_run_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no run files in " + dir.string());
    std::vector<scenario::TimeSeriesRun> runs;
    for (const auto& f : files) runs.push_back(dataset::load_run(f));
    return runs;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config, out, los_table, nlos_table;
    std::optional<std::uint64_t> seed;
    std::size_t runs = 1;
};

/// The config is a ScenarioConfig object, or {"scenarios": [...], "runs": N}.
int cmd_simulate(const SimulateArgs& a) {
    const json j = read_json_file(a.config);
    std::vector<scenario::ScenarioConfig> scenarios;
    std::size_t runs = a.runs;
    if (j.is_object() && j.contains("scenarios")) {
        for (const auto& [k, v] : j.items())
            if (k != "scenarios" && k != "runs") throw ConfigError("simulate config: unknown key '" + k + "'");
        for (const auto& s : j.at("scenarios")) scenarios.push_back(s.get<scenario::ScenarioConfig>());
        if (j.contains("runs")) runs = j.at("runs").get<std::size_t>();
    } else {
        scenarios.push_back(j.get<scenario::ScenarioConfig>());
    }
    if (scenarios.empty() || runs == 0) throw ConfigError("simulate: nothing to run");
    for (const auto& s : scenarios) s.validate();
    const auto los = a.los_table.empty() ? channel::default_los_table() : channel::load_fading_table(a.los_table);
    const auto nlos = a.nlos_table.empty() ? channel::default_nlos_table() : channel::load_fading_table(a.nlos_table);
    fs::create_directories(a.out);
    std::size_t written = 0;
    for (std::size_t si = 0; si < scenarios.size(); ++si) {
        const std::uint64_t base_seed = a.seed.value_or(scenarios[si].seed);
        for (std::size_t r = 0; r < runs; ++r) {
            auto cfg = scenarios[si];
            cfg.seed = derive_seed(base_seed, (static_cast<std::uint64_t>(si) << 32) | r);
            const auto run = scenario::run_simulation(cfg, los, nlos);
            dataset::save_run(fs::path(a.out) / dataset::run_file_name(run.id), run);
            ++written;
        }
    }
    std::cerr << "simulate: wrote " << written << " runs to " << a.out << "\n";
    return 0;
}

struct DatasetArgs {
    std::string runs, out;
    std::size_t w = 300, stride = 150;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

int cmd_dataset(const DatasetArgs& a) {
    if (a.w < 1 || a.stride < 1) throw ConfigError("dataset: --w and --stride must be >= 1");
    const auto runs = load_run_dir(a.runs);
    const auto m = dataset::build_dataset(runs, a.w, a.stride, a.test_fraction, a.seed, a.out);
    std::size_t test = 0;
    for (const auto& e : m.runs) test += e.split == dataset::Split::Test;
    std::cerr << "dataset: " << m.runs.size() << " runs (" << test << " test) -> " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string dataset, variant = "attention", out, loss_out;
    std::uint64_t seed = 0;
    std::size_t epochs = 20, batch = 32, threads = 0;
    double lr = 2.5e-2;
    bool no_augment = false;
};

int cmd_train(const TrainArgs& a) {
    const auto m = dataset::load_manifest(a.dataset);
    harness::TrainSetup setup;
    setup.arch.variant = nn::parse_variant(a.variant);
    setup.arch.w = m.w;
    setup.train.learning_rate = a.lr;
    setup.train.batch_size = a.batch;
    setup.train.epochs = a.epochs;
    setup.train.seed = a.seed;
    setup.train.threads = a.threads;
    setup.augment = !a.no_augment;
    setup.arch.validate();
    setup.train.validate();
    const auto train = dataset::load_windows(a.dataset, m, dataset::Split::Train, true);
    std::cerr << "train: " << train.size() << " windows, w = " << m.w << ", " << nn::to_string(setup.arch.variant)
              << (setup.augment ? ", TSA x4" : "") << "\n";
    std::vector<double> curve;
    const auto model = harness::train_model(setup, train, &curve);
    std::ostringstream loss;
    loss << "epoch,loss\n";
    for (std::size_t e = 0; e < curve.size(); ++e) {
        loss << e + 1 << ',' << dataset::detail::format_double(curve[e]) << '\n';
        std::cerr << "  epoch " << e + 1 << " loss " << curve[e] << "\n";
    }
    if (!a.loss_out.empty()) write_text(a.loss_out, loss.str());
    ckpt::save_model(a.out, model, m.norm);
    std::cerr << "train: " << model.parameter_count() << " parameters -> " << a.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string model, dataset, method = "1", fallback = "lr", out, verdicts;
    double delta = 0.0;
};

int cmd_eval(const EvalArgs& a) {
    const auto tm = ckpt::load_model(a.model);
    const auto m = dataset::load_manifest(a.dataset);
    if (tm.model.arch.w != m.w)
        throw ConfigError("eval: model window " + std::to_string(tm.model.arch.w) + " != dataset window " +
                          std::to_string(m.w));
    std::optional<vote::Method> method;
    if (a.method != "none") method = vote::parse_method(a.method);
    const auto kind = baselines::parse_fallback(a.fallback);
    const auto test = dataset::load_windows(a.dataset, m, dataset::Split::Test, true);
    std::unique_ptr<baselines::Classifier> fallback;
    if (method) fallback = baselines::fit_classifier(kind, dataset::load_windows(a.dataset, m, dataset::Split::Train, true));
    const auto ev = harness::evaluate(tm.model, test, method, fallback.get(), a.delta, !a.verdicts.empty());
    std::ostringstream csv;
    csv << "variant,w,method,fallback,windows,dnn_accuracy,accuracy,tp,tn,fp,fn,class3_rate\n"
        << nn::to_string(tm.model.arch.variant) << ',' << m.w << ',' << a.method << ','
        << (method ? a.fallback : "none") << ',' << test.size() << ',' << harness::detail::fixed(ev.dnn.accuracy())
        << ',' << harness::detail::fixed(ev.method.accuracy()) << ',' << ev.method.tp << ',' << ev.method.tn << ','
        << ev.method.fp << ',' << ev.method.fn << ',' << harness::detail::fixed(ev.class3_rate()) << '\n';
    std::cout << csv.str();
    if (!a.out.empty()) write_text(a.out, csv.str());
    if (!a.verdicts.empty()) {
        std::ostringstream lines;
        for (const auto& v : ev.verdicts) lines << vote::to_json(v).dump() << '\n';
        write_text(a.verdicts, lines.str());
    }
    return 0;
}

struct BenchArgs {
    std::string model, dataset, json_out;
    std::vector<std::size_t> ws{50, 100, 200, 300};
    std::size_t samples = 200;
};

int cmd_bench(const BenchArgs& a) {
    const auto tm = ckpt::load_model(a.model);
    const auto m = dataset::load_manifest(a.dataset);
    const auto test_runs = dataset::load_split_runs(a.dataset, m, dataset::Split::Test);
    const auto train_runs = dataset::load_split_runs(a.dataset, m, dataset::Split::Train);
    std::vector<harness::TimingReport> reports;
    for (auto w : a.ws) {
        auto arch = tm.model.arch;
        arch.w = w;
        // Latency does not depend on weight values; other window sizes use a fresh model of the same shape.
        const nn::Model model = w == tm.model.arch.w ? tm.model : nn::build_mhdnn(arch, tm.model.seed);
        const auto test = dataset::apply_normalizer(m.norm, dataset::windowize_all(test_runs, w, w));
        const auto train = dataset::apply_normalizer(m.norm, dataset::windowize_all(train_runs, w, w));
        if (test.empty() || train.empty()) throw ConfigError("bench: runs are shorter than w = " + std::to_string(w));
        const auto lr = baselines::fit_classifier(baselines::FallbackKind::Logreg, train);
        const auto gnb = baselines::fit_classifier(baselines::FallbackKind::Gnb, train);
        const std::string tag = nn::to_string(arch.variant);
        reports.push_back(harness::bench_latency(
            "MH-DNN " + tag, [&](const dataset::WindowSample& s) { return nn::attack_probability(model, s); }, test,
            a.samples));
        reports.push_back(harness::bench_latency(
            "DAtR-M1 " + tag,
            [&](const dataset::WindowSample& s) {
                return vote::datr_classify(s, model, vote::Method::One, lr.get()).attack ? 1.0 : 0.0;
            },
            test, a.samples));
        reports.push_back(harness::bench_latency(
            "LR", [&](const dataset::WindowSample& s) { return lr->attack_probability(s); }, test, a.samples));
        reports.push_back(harness::bench_latency(
            "GNB", [&](const dataset::WindowSample& s) { return gnb->attack_probability(s); }, test, a.samples));
    }
    std::cout << harness::format_timing_table(reports);
    if (!a.json_out.empty()) {
        json j = json::array();
        for (const auto& r : reports) j.push_back(harness::to_json(r));
        write_text(a.json_out, j.dump(2) + "\n");
    }
    return 0;
}

struct GridArgs {
    std::string grid, out, manifest, cache_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    bool gnuplot = false;
};

int cmd_grid(const GridArgs& a) {
    auto g = harness::parse_grid(read_json_file(a.grid));
    if (a.seed) g.seed = *a.seed;
    if (a.workers) g.workers = *a.workers;
    if (!a.cache_dir.empty()) g.cache_dir = a.cache_dir;
    const auto res = harness::run_grid(g);
    std::ostringstream csv;
    harness::write_csv(csv, res.rows, a.gnuplot);
    write_text(a.out, csv.str());
    const auto manifest = harness::grid_manifest(res, g);
    write_text(a.manifest.empty() ? a.out + ".json" : a.manifest, manifest.dump(2) + "\n");
    std::cerr << "grid: " << res.rows.size() << " rows, " << res.trained_count << " trained, " << res.cache_hits
              << " cached -> " << a.out << "\n";
    return manifest.at("failed_rows").get<std::size_t>() ? kExitRuntime : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UAV jamming detection workbench"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "generate time-series runs");
    s->add_option("--config", sim.config, "scenario JSON")->required();
    s->add_option("--out", sim.out, "output directory")->required();
    s->add_option("--seed", sim.seed, "base seed (overrides the config's)");
    s->add_option("--runs", sim.runs, "runs per scenario")->check(CLI::PositiveNumber);
    s->add_option("--los-table", sim.los_table, "LoS fading table CSV");
    s->add_option("--nlos-table", sim.nlos_table, "NLoS fading table CSV");

    DatasetArgs ds;
    auto* d = app.add_subcommand("dataset", "window runs into a train/test dataset");
    d->add_option("--runs", ds.runs, "directory of run files")->required();
    d->add_option("--out", ds.out, "dataset directory")->required();
    d->add_option("--w", ds.w, "window length");
    d->add_option("--stride", ds.stride, "window stride");
    d->add_option("--test-fraction", ds.test_fraction, "fraction of runs held out")->check(CLI::Range(0.0, 1.0));
    d->add_option("--seed", ds.seed, "split seed");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train an MH-DNN");
    t->add_option("--dataset", tr.dataset, "dataset directory")->required();
    t->add_option("--variant", tr.variant, "attention|lstm");
    t->add_option("--seed", tr.seed, "initialisation, shuffle and dropout seed");
    t->add_option("--out", tr.out, "checkpoint path")->required();
    t->add_option("--epochs", tr.epochs, "epochs");
    t->add_option("--lr", tr.lr, "learning rate");
    t->add_option("--batch", tr.batch, "batch size");
    t->add_option("--threads", tr.threads, "gradient worker threads (0 = all cores)");
    t->add_flag("--no-augment", tr.no_augment, "train without TSA expansion");
    t->add_option("--loss-out", tr.loss_out, "write the loss curve as CSV");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
    e->add_option("--model", ev.model, "checkpoint")->required();
    e->add_option("--dataset", ev.dataset, "dataset directory")->required();
    e->add_option("--method", ev.method, "1|2|none")->check(CLI::IsMember({"1", "2", "none"}));
    e->add_option("--fallback", ev.fallback, "lr|gnb")->check(CLI::IsMember({"lr", "gnb"}));
    e->add_option("--delta", ev.delta, "method 2 undecided half-width");
    e->add_option("--out", ev.out, "write the result row as CSV");
    e->add_option("--verdicts", ev.verdicts, "write per-window verdicts as JSON lines");
    std::uint64_t unused_seed = 0;
    e->add_option("--seed", unused_seed, "accepted for uniformity; evaluation is deterministic");

    BenchArgs be;
    auto* b = app.add_subcommand("bench", "prediction latency per window size");
    b->add_option("--model", be.model, "checkpoint")->required();
    b->add_option("--dataset", be.dataset, "dataset directory")->required();
    b->add_option("--w", be.ws, "window sizes")->delimiter(',');
    b->add_option("--samples", be.samples, "timed predictions per classifier (>= 100)");
    b->add_option("--json", be.json_out, "write reports as JSON");
    b->add_option("--seed", unused_seed, "accepted for uniformity");

    GridArgs gr;
    auto* g = app.add_subcommand("grid", "run an experiment grid");
    g->add_option("--grid", gr.grid, "grid JSON")->required();
    g->add_option("--out", gr.out, "results CSV")->required();
    g->add_option("--manifest", gr.manifest, "run manifest JSON (default: <out>.json)");
    g->add_option("--seed", gr.seed, "overrides the grid seed");
    g->add_option("--workers", gr.workers, "parallel cells");
    g->add_option("--cache-dir", gr.cache_dir, "model cache directory");
    g->add_flag("--gnuplot", gr.gnuplot, "whitespace-separated output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*s) return cmd_simulate(sim);
        if (*d) return cmd_dataset(ds);
        if (*t) return cmd_train(tr);
        if (*e) return cmd_eval(ev);
        if (*b) return cmd_bench(be);
        if (*g) return cmd_grid(gr);
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
