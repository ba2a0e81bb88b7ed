// SPDX-License-Identifier: Apache-2.0
//
// Metrics, experiment grids and latency benchmarks.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "augment.hpp"
#include "baselines.hpp"
#include "checkpoint.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "mhdnn.hpp"
#include "scenario.hpp"
#include "vote.hpp"

namespace jamsense::harness {

using dataset::WindowSample;
using scenario::ScenarioConfig;
using scenario::TimeSeriesRun;

// ---------------------------------------------------------------------------
// Metrics

/// Attack is the positive class.
struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    double accuracy() const {
        return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0;
    }
    void add(bool predicted, bool actual) {
        if (predicted && actual) ++tp;
        else if (!predicted && !actual) ++tn;
        else if (predicted) ++fp;
        else ++fn;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion(std::span<const bool> preds, std::span<const bool> labels) {
    if (preds.size() != labels.size()) throw DomainError("confusion: predictions and labels differ in length");
    if (preds.empty()) throw DomainError("confusion: no samples");
    ConfusionCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) c.add(preds[i], labels[i]);
    return c;
}

struct EvalSummary {
    ConfusionCounts dnn;     // argmax of the plain network
    ConfusionCounts method;  // after voting and fallback (equals dnn without a method)
    std::size_t undecided = 0;
    std::vector<vote::Verdict> verdicts;

    double class3_rate() const {
        return method.total() ? static_cast<double>(undecided) / static_cast<double>(method.total()) : 0.0;
    }
};

/// Plain network accuracy and, if `method` is set, the voting pipeline's.
inline EvalSummary evaluate(const nn::Model& model, const std::vector<WindowSample>& test,
                            std::optional<vote::Method> method, const baselines::Classifier* fallback,
                            double delta = 0.0, bool keep_verdicts = false) {
    if (test.empty()) throw DomainError("evaluate: empty test set");
    EvalSummary out;
    for (const auto& s : test) {
        const auto p = vote::quad_probabilities(model, s);
        out.dnn.add(vote::hard_vote(p[0]) == 1, s.attack);
        if (!method) continue;
        const auto v = vote::resolve(s, vote::vote(p, *method, delta), fallback);
        if (v.decision.fallback_invoked) ++out.undecided;
        out.method.add(v.attack, s.attack);
        if (keep_verdicts) out.verdicts.push_back(v);
    }
    if (!method) out.method = out.dnn;
    return out;
}

// ---------------------------------------------------------------------------
// Training helper shared by the CLI and the grid

struct TrainSetup {
    nn::ArchConfig arch;
    nn::TrainConfig train;
    bool augment = true;
};

inline void to_json(nlohmann::json& j, const TrainSetup& t) {
    j = {{"arch", t.arch}, {"train", t.train}, {"augment", t.augment}};
}

/// Builds a model for `setup`, optionally expands the set with TSA, and trains it.
inline nn::Model train_model(const TrainSetup& setup, const std::vector<WindowSample>& train_set,
                             std::vector<double>* loss_curve = nullptr) {
    nn::Model model = nn::build_mhdnn(setup.arch, setup.train.seed);
    std::vector<double> curve;
    if (setup.augment) {
        Rng rng(derive_seed(setup.train.seed, 0xa6));
        curve = nn::train(model, augment::augment_training_set(train_set, rng), setup.train).loss_curve;
    } else {
        curve = nn::train(model, train_set, setup.train).loss_curve;
    }
    if (loss_curve) *loss_curve = std::move(curve);
    return model;
}

// ---------------------------------------------------------------------------
// Experiment grid

struct GridAxes {
    std::vector<scenario::ChannelMode> channel_mode;
    std::vector<double> distance_m;
    std::vector<int> n_attackers;
    std::vector<int> n_users;
    std::vector<double> attacker_power_dbm;
    std::vector<std::size_t> w;
    std::vector<nn::Variant> variant;
    std::vector<int> method;  // 0 = network only, 1 or 2 = voting method
};

struct ExperimentGrid {
    ScenarioConfig base;
    GridAxes axes;
    std::size_t runs_per_class = 10;
    std::uint64_t seed = 0;
    std::size_t epochs = 20;
    std::size_t stride = 0;  // 0: stride = w
    double test_fraction = 0.2;
    std::vector<double> held_out_powers;
    bool augment = true;
    double learning_rate = 2.5e-2;
    std::size_t batch_size = 32;
    baselines::FallbackKind fallback = baselines::FallbackKind::Logreg;
    double delta = 0.0;
    std::string cache_dir;
    std::size_t workers = 1;

    /// Fills empty axes from `base` and checks every combination.
    void resolve_and_validate() {
        auto& a = axes;
        if (a.channel_mode.empty()) a.channel_mode = {base.channel_mode};
        if (a.distance_m.empty()) a.distance_m = {base.cell_uav_distance_m};
        if (a.n_attackers.empty()) a.n_attackers = {std::max(1, base.n_attackers)};
        if (a.n_users.empty()) a.n_users = {base.n_users};
        if (a.attacker_power_dbm.empty()) a.attacker_power_dbm = {base.attacker_power_dbm};
        if (a.w.empty()) a.w = {300};
        if (a.variant.empty()) a.variant = {nn::Variant::Attention};
        if (a.method.empty()) a.method = {1};
        if (runs_per_class < 2) throw ConfigError("grid: runs_per_class must be >= 2");
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("grid: test_fraction must be in (0, 1)");
        if (workers < 1) throw ConfigError("grid: workers must be >= 1");
        for (int n : a.n_attackers)
            if (n < 1) throw ConfigError("grid: n_attackers axis values must be >= 1 (0 is the no-attack class)");
        for (int m : a.method)
            if (m < 0 || m > 2) throw ConfigError("grid: method axis values must be 0, 1 or 2");
        for (double p : held_out_powers)
            if (std::find(a.attacker_power_dbm.begin(), a.attacker_power_dbm.end(), p) == a.attacker_power_dbm.end())
                throw ConfigError("grid: held-out power " + std::to_string(p) + " is not on the power axis");
        if (!held_out_powers.empty() && held_out_powers.size() >= a.attacker_power_dbm.size())
            throw ConfigError("grid: at least one attacker power must remain for training");
        for (auto mode : a.channel_mode)
            for (double d : a.distance_m)
                for (int n : a.n_attackers)
                    for (int u : a.n_users)
                        for (double p : a.attacker_power_dbm) {
                            ScenarioConfig c = base;
                            c.channel_mode = mode;
                            c.cell_uav_distance_m = d;
                            c.n_attackers = n;
                            c.n_users = u;
                            c.attacker_power_dbm = p;
                            c.validate();
                        }
        for (auto w : a.w) {
            nn::ArchConfig arch;
            arch.w = w;
            arch.validate();
            if (base.sample_count() < w) throw ConfigError("grid: runs are shorter than w = " + std::to_string(w));
        }
        nn::TrainConfig tc;
        tc.learning_rate = learning_rate;
        tc.batch_size = batch_size;
        tc.validate();
    }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, GridAxes& a) {
    static const std::vector<std::string> known = {"channel_mode", "distance_m", "n_attackers", "n_users",
                                                   "attacker_power_dbm", "w", "variant", "method"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("grid.axes: unknown key '" + k + "'");
    detail::read_opt(j, "distance_m", a.distance_m);
    detail::read_opt(j, "n_attackers", a.n_attackers);
    detail::read_opt(j, "n_users", a.n_users);
    detail::read_opt(j, "attacker_power_dbm", a.attacker_power_dbm);
    detail::read_opt(j, "w", a.w);
    detail::read_opt(j, "method", a.method);
    if (j.contains("channel_mode"))
        for (const auto& v : j.at("channel_mode")) {
            const auto m = v.get<scenario::ChannelMode>();
            if (nlohmann::json(m) != v) throw ConfigError("grid.axes.channel_mode: unknown value " + v.dump());
            a.channel_mode.push_back(m);
        }
    if (j.contains("variant"))
        for (const auto& v : j.at("variant")) a.variant.push_back(nn::parse_variant(v.get<std::string>()));
}

inline ExperimentGrid parse_grid(const nlohmann::json& j) {
    ExperimentGrid g;
    try {
        if (!j.is_object()) throw ConfigError("grid: expected a JSON object");
        static const std::vector<std::string> known = {
            "base",     "axes",          "runs_per_class", "seed",       "epochs",    "stride",
            "test_fraction", "held_out_powers", "augment", "learning_rate", "batch_size", "fallback",
            "delta",    "cache_dir",     "workers"};
        for (const auto& [k, v] : j.items())
            if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("grid: unknown key '" + k + "'");
        if (j.contains("base")) g.base = j.at("base").get<ScenarioConfig>();
        if (j.contains("axes")) g.axes = j.at("axes").get<GridAxes>();
        detail::read_opt(j, "runs_per_class", g.runs_per_class);
        detail::read_opt(j, "seed", g.seed);
        detail::read_opt(j, "epochs", g.epochs);
        detail::read_opt(j, "stride", g.stride);
        detail::read_opt(j, "test_fraction", g.test_fraction);
        detail::read_opt(j, "held_out_powers", g.held_out_powers);
        detail::read_opt(j, "augment", g.augment);
        detail::read_opt(j, "learning_rate", g.learning_rate);
        detail::read_opt(j, "batch_size", g.batch_size);
        detail::read_opt(j, "delta", g.delta);
        detail::read_opt(j, "cache_dir", g.cache_dir);
        detail::read_opt(j, "workers", g.workers);
        if (j.contains("fallback")) g.fallback = baselines::parse_fallback(j.at("fallback").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    g.resolve_and_validate();
    return g;
}

struct GridRow {
    std::size_t cell_id = 0;
    scenario::ChannelMode channel_mode{};
    double distance_m = 0.0;
    double attacker_power_dbm = 0.0;
    int n_attackers = 0;
    int n_users = 0;
    std::size_t w = 0;
    nn::Variant variant{};
    int method = 0;
    bool held_out = false;
    double dnn_accuracy = 0.0;
    double accuracy = 0.0;
    ConfusionCounts counts;
    double class3_rate = 0.0;
    std::uint64_t seed = 0;
    std::string status = "ok";
};

struct GridResult {
    std::vector<GridRow> rows;
    std::size_t trained_count = 0;
    std::size_t cache_hits = 0;
};

namespace detail {

/// Everything but the attacker power: one set of no-attack runs per group.
struct Group {
    scenario::ChannelMode mode{};
    double distance_m = 0.0;
    int n_attackers = 0;
    int n_users = 0;
    std::size_t w = 0;
    nn::Variant variant{};
};

/// One trained model: the group plus the powers its attack runs use.
struct Job {
    Group group;
    std::vector<double> powers;  // one entry unless held-out evaluation is on
};

inline ScenarioConfig scenario_for(const ExperimentGrid& g, const Group& grp, bool attack, double power) {
    ScenarioConfig c = g.base;
    c.channel_mode = grp.mode;
    c.cell_uav_distance_m = grp.distance_m;
    c.n_users = grp.n_users;
    c.n_attackers = attack ? grp.n_attackers : 0;
    c.attacker_power_dbm = attack ? power : 0.0;
    c.seed = 0;
    return c;
}

inline std::uint64_t run_seed(const ExperimentGrid& g, const ScenarioConfig& c, std::size_t i) {
    return derive_seed(g.seed, fnv1a(nlohmann::json(c).dump() + "#" + std::to_string(i)));
}

/// `runs_per_class` runs of `c` (whose seed is ignored), seeded from the grid seed and the scenario.
inline std::vector<TimeSeriesRun> simulate_runs(const ExperimentGrid& g, const ScenarioConfig& c) {
    std::vector<TimeSeriesRun> runs;
    for (std::size_t i = 0; i < g.runs_per_class; ++i) {
        ScenarioConfig ci = c;
        ci.seed = run_seed(g, c, i);
        runs.push_back(scenario::run_simulation(ci));
    }
    return runs;
}

struct Trained {
    nn::Model model;
    dataset::DatasetManifest manifest;
    std::unique_ptr<baselines::Classifier> fallback;
};

struct JobOutcome {
    std::vector<GridRow> rows;
    std::size_t trained = 0;
    std::size_t hits = 0;
};

}  // namespace detail

/// Per-cell hash over scenario, architecture, training setup and data split.
inline std::string model_cache_key(const nlohmann::json& cell, const TrainSetup& setup,
                                   const dataset::DatasetManifest& m) {
    const nlohmann::json j = {{"cell", cell}, {"setup", setup}, {"manifest", m}};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

namespace detail {

inline Trained train_or_load(const ExperimentGrid& g, const Group& grp, const std::vector<double>& powers,
                             const std::vector<TimeSeriesRun>& runs, std::size_t threads, JobOutcome& out) {
    const std::size_t stride = g.stride ? g.stride : grp.w;
    Trained t;
    t.manifest = dataset::plan_dataset(runs, grp.w, stride, g.test_fraction, derive_seed(g.seed, 0xd5));
    TrainSetup setup;
    setup.arch.variant = grp.variant;
    setup.arch.w = grp.w;
    setup.train.learning_rate = g.learning_rate;
    setup.train.batch_size = g.batch_size;
    setup.train.epochs = g.epochs;
    setup.train.seed = derive_seed(g.seed, 0x7a);
    setup.train.threads = threads;
    setup.augment = g.augment;
    const auto train_set = dataset::split_windows(runs, t.manifest, dataset::Split::Train, true);
    const nlohmann::json cell = {{"scenario", scenario_for(g, grp, true, powers.front())}, {"powers", powers}};
    std::filesystem::path cached;
    if (!g.cache_dir.empty()) {
        cached = std::filesystem::path(g.cache_dir) / (model_cache_key(cell, setup, t.manifest) + ".ckpt");
        if (std::filesystem::exists(cached)) {
            t.model = ckpt::load_model(cached).model;
            ++out.hits;
        }
    }
    if (t.model.params.empty()) {
        t.model = train_model(setup, train_set);
        ++out.trained;
        if (!cached.empty()) {
            std::filesystem::create_directories(cached.parent_path());
            const auto tmp = cached.string() + ".tmp" + std::to_string(fnv1a(cached.string()) ^ g.seed);
            ckpt::save_model(tmp, t.model, t.manifest.norm);
            std::filesystem::rename(tmp, cached);
        }
    }
    t.fallback = baselines::fit_classifier(g.fallback, train_set);
    return t;
}

inline void fill_rows(const ExperimentGrid& g, const Group& grp, double power, bool held_out, const Trained& t,
                      const std::vector<WindowSample>& test, std::vector<GridRow>& rows) {
    for (int method : g.axes.method) {
        GridRow r;
        r.channel_mode = grp.mode;
        r.distance_m = grp.distance_m;
        r.attacker_power_dbm = power;
        r.n_attackers = grp.n_attackers;
        r.n_users = grp.n_users;
        r.w = grp.w;
        r.variant = grp.variant;
        r.method = method;
        r.held_out = held_out;
        r.seed = g.seed;
        const auto ev = method == 0 ? evaluate(t.model, test, std::nullopt, nullptr)
                                    : evaluate(t.model, test, static_cast<vote::Method>(method), t.fallback.get(), g.delta);
        r.dnn_accuracy = ev.dnn.accuracy();
        r.accuracy = ev.method.accuracy();
        r.counts = ev.method;
        r.class3_rate = ev.class3_rate();
        rows.push_back(std::move(r));
    }
}

/// Normalised, balanced test windows: the no-attack test runs plus the given attack runs.
inline std::vector<WindowSample> test_windows(const dataset::DatasetManifest& m, const std::vector<TimeSeriesRun>& no_attack,
                                              const std::vector<TimeSeriesRun>& attack, bool attack_all) {
    std::vector<TimeSeriesRun> chosen;
    auto in_test = [&](std::uint64_t id) {
        return std::any_of(m.runs.begin(), m.runs.end(),
                           [&](const dataset::ManifestEntry& e) { return e.id == id && e.split == dataset::Split::Test; });
    };
    for (const auto& r : no_attack)
        if (in_test(r.id)) chosen.push_back(r);
    for (const auto& r : attack)
        if (attack_all || in_test(r.id)) chosen.push_back(r);
    auto windows = dataset::apply_normalizer(m.norm, dataset::windowize_all(chosen, m.w, m.stride));
    Rng rng(derive_seed(m.seed, 0xba1b));
    return dataset::balance(windows, rng);
}

inline JobOutcome run_job(const ExperimentGrid& g, const Job& job, std::size_t threads) {
    JobOutcome out;
    const auto& grp = job.group;
    const auto no_attack = simulate_runs(g, scenario_for(g, grp, false, 0.0));
    std::map<double, std::vector<TimeSeriesRun>> attack;
    for (double p : job.powers) attack[p] = simulate_runs(g, scenario_for(g, grp, true, p));

    auto gather = [&](bool skip_held_out) {
        std::vector<TimeSeriesRun> runs = no_attack;
        std::vector<double> used;
        for (double p : job.powers) {
            if (skip_held_out && std::count(g.held_out_powers.begin(), g.held_out_powers.end(), p)) continue;
            runs.insert(runs.end(), attack[p].begin(), attack[p].end());
            used.push_back(p);
        }
        return std::pair{runs, used};
    };

    const auto [all_runs, all_powers] = gather(false);
    const Trained full = train_or_load(g, grp, all_powers, all_runs, threads, out);
    for (double p : job.powers)
        fill_rows(g, grp, p, false, full, test_windows(full.manifest, no_attack, attack[p], false), out.rows);
    if (g.held_out_powers.empty()) return out;

    const auto [ho_runs, ho_powers] = gather(true);
    const Trained ho = train_or_load(g, grp, ho_powers, ho_runs, threads, out);
    for (double p : g.held_out_powers)
        fill_rows(g, grp, p, true, ho, test_windows(ho.manifest, no_attack, attack[p], true), out.rows);
    return out;
}

inline std::vector<Job> enumerate_jobs(const ExperimentGrid& g) {
    std::vector<Job> jobs;
    const auto& a = g.axes;
    for (auto mode : a.channel_mode)
        for (double d : a.distance_m)
            for (int n : a.n_attackers)
                for (int u : a.n_users)
                    for (auto w : a.w)
                        for (auto v : a.variant) {
                            const Group grp{mode, d, n, u, w, v};
                            if (g.held_out_powers.empty())
                                for (double p : a.attacker_power_dbm) jobs.push_back({grp, {p}});
                            else
                                jobs.push_back({grp, a.attacker_power_dbm});
                        }
    return jobs;
}

inline GridRow failed_row(const Group& grp, double power, std::uint64_t seed, const std::string& what) {
    GridRow r;
    r.channel_mode = grp.mode;
    r.distance_m = grp.distance_m;
    r.attacker_power_dbm = power;
    r.n_attackers = grp.n_attackers;
    r.n_users = grp.n_users;
    r.w = grp.w;
    r.variant = grp.variant;
    r.seed = seed;
    r.status = "error: " + what;
    return r;
}

}  // namespace detail

/// Runs every cell; a failing cell yields an error row and the grid continues.
/// With `held_out_powers`, each group trains a full model and one without
/// those powers; the latter's rows carry held_out = true.
inline GridResult run_grid(ExperimentGrid grid) {
    grid.resolve_and_validate();
    const auto jobs = detail::enumerate_jobs(grid);
    std::vector<detail::JobOutcome> outcomes(jobs.size());
    const std::size_t workers = std::min(grid.workers, std::max<std::size_t>(1, jobs.size()));
    const std::size_t train_threads = workers > 1 ? 1 : 0;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
            try {
                outcomes[i] = detail::run_job(grid, jobs[i], train_threads);
            } catch (const std::exception& e) {
                outcomes[i] = {};
                for (double p : jobs[i].powers)
                    outcomes[i].rows.push_back(detail::failed_row(jobs[i].group, p, grid.seed, e.what()));
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    }
    GridResult result;
    for (auto& o : outcomes) {
        for (auto& r : o.rows) {
            r.cell_id = result.rows.size();
            result.rows.push_back(std::move(r));
        }
        result.trained_count += o.trained;
        result.cache_hits += o.hits;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Output

inline constexpr std::array<const char*, 19> kCsvColumns = {
    "cell_id",   "channel_mode", "distance_m", "attacker_power_dbm", "n_attackers", "n_users", "w",
    "variant",   "method",       "held_out",   "dnn_accuracy",       "accuracy",    "tp",      "tn",
    "fp",        "fn",           "class3_rate", "seed",              "status"};

namespace detail {

inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string compact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace detail

/// Comma-separated table, or whitespace-separated with a '#' header for gnuplot.
inline void write_csv(std::ostream& out, const std::vector<GridRow>& rows, bool gnuplot = false) {
    const char sep = gnuplot ? ' ' : ',';
    if (gnuplot) out << "# ";
    for (std::size_t i = 0; i < kCsvColumns.size(); ++i) out << (i ? std::string(1, sep) : "") << kCsvColumns[i];
    out << '\n';
    for (const auto& r : rows) {
        std::string status = r.status;
        for (auto& ch : status)
            if (ch == ',' || ch == '\n' || ch == ' ' || ch == '"') ch = '_';
        const bool ok = r.status == "ok";
        const std::vector<std::string> cells = {
            std::to_string(r.cell_id),
            nlohmann::json(r.channel_mode).get<std::string>(),
            detail::compact(r.distance_m),
            detail::compact(r.attacker_power_dbm),
            std::to_string(r.n_attackers),
            std::to_string(r.n_users),
            std::to_string(r.w),
            nn::to_string(r.variant),
            r.method ? std::to_string(r.method) : "none",
            r.held_out ? "true" : "false",
            ok ? detail::fixed(r.dnn_accuracy) : "nan",
            ok ? detail::fixed(r.accuracy) : "nan",
            std::to_string(r.counts.tp),
            std::to_string(r.counts.tn),
            std::to_string(r.counts.fp),
            std::to_string(r.counts.fn),
            ok ? detail::fixed(r.class3_rate) : "nan",
            std::to_string(r.seed),
            status};
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? std::string(1, sep) : "") << cells[i];
        out << '\n';
    }
}

/// Run summary. Overall accuracy is the unweighted mean over ok rows.
inline nlohmann::json grid_manifest(const GridResult& res, const ExperimentGrid& g) {
    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    nlohmann::json methods = nlohmann::json::object();
    std::size_t failed = 0;
    std::vector<double> dnn_all;
    for (int method : g.axes.method) {
        std::vector<double> dnn, acc, c3;
        for (const auto& r : res.rows) {
            if (r.status != "ok" || r.held_out || r.method != method) continue;
            dnn.push_back(r.dnn_accuracy);
            acc.push_back(r.accuracy);
            c3.push_back(r.class3_rate);
        }
        nlohmann::json m = {{"cells", acc.size()},
                            {"mean_dnn_accuracy", mean(dnn)},
                            {"mean_accuracy", mean(acc)},
                            {"mean_class3_rate", mean(c3)}};
        if (method != 0) m["mva_improved"] = !acc.empty() && mean(acc) > mean(dnn);
        methods[method ? std::to_string(method) : "none"] = m;
        dnn_all.insert(dnn_all.end(), dnn.begin(), dnn.end());
    }
    for (const auto& r : res.rows)
        if (r.status != "ok") ++failed;
    nlohmann::json out = {{"rows", res.rows.size()},
                          {"failed_rows", failed},
                          {"models_trained", res.trained_count},
                          {"cache_hits", res.cache_hits},
                          {"aggregation", "unweighted mean over grid cells"},
                          {"methods", methods},
                          {"seed", g.seed}};
    if (!g.held_out_powers.empty()) {
        std::vector<double> full, ho;
        for (const auto& r : res.rows) {
            if (r.status != "ok" || r.method != g.axes.method.front()) continue;
            if (std::find(g.held_out_powers.begin(), g.held_out_powers.end(), r.attacker_power_dbm) ==
                g.held_out_powers.end())
                continue;
            (r.held_out ? ho : full).push_back(r.dnn_accuracy);
        }
        out["held_out"] = {{"powers", g.held_out_powers},
                           {"full_training_dnn_accuracy", mean(full)},
                           {"held_out_dnn_accuracy", mean(ho)},
                           {"gap", mean(full) - mean(ho)}};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Latency

struct TimingReport {
    std::string classifier;
    std::size_t w = 0;
    std::size_t samples = 0;
    double mean_ms = 0.0;
    double std_ms = 0.0;
};

inline constexpr std::size_t kMinTimedPredictions = 100;
inline constexpr std::size_t kWarmupCalls = 10;

/// Per-prediction wall clock over `windows` after warm-up, on the calling thread.
inline TimingReport bench_latency(const std::string& name, const std::function<double(const WindowSample&)>& predict,
                                  const std::vector<WindowSample>& windows, std::size_t min_samples = kMinTimedPredictions) {
    if (windows.empty()) throw DomainError("bench_latency: no windows");
    const std::size_t n = std::max({min_samples, kMinTimedPredictions, windows.size()});
    volatile double sink = 0.0;
    for (std::size_t i = 0; i < kWarmupCalls; ++i) sink = sink + predict(windows[i % windows.size()]);
    std::vector<double> ms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        sink = sink + predict(windows[i % windows.size()]);
        const auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    TimingReport r{name, windows.front().size(), n, 0.0, 0.0};
    for (double v : ms) r.mean_ms += v;
    r.mean_ms /= static_cast<double>(n);
    for (double v : ms) r.std_ms += (v - r.mean_ms) * (v - r.mean_ms);
    r.std_ms = std::sqrt(r.std_ms / static_cast<double>(n - 1));
    return r;
}

/// One row per classifier, one "mean ± std" column per window size (milliseconds).
inline std::string format_timing_table(const std::vector<TimingReport>& reports) {
    std::vector<std::size_t> ws;
    std::vector<std::string> names;
    for (const auto& r : reports) {
        if (std::find(ws.begin(), ws.end(), r.w) == ws.end()) ws.push_back(r.w);
        if (std::find(names.begin(), names.end(), r.classifier) == names.end()) names.push_back(r.classifier);
    }
    std::sort(ws.begin(), ws.end());
    std::string out = "Prediction time per window (ms, mean +/- std)\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-18s", "Classifier");
    out += buf;
    for (auto w : ws) {
        std::snprintf(buf, sizeof buf, " | %-19s", ("w=" + std::to_string(w)).c_str());
        out += buf;
    }
    out += '\n';
    for (const auto& name : names) {
        std::snprintf(buf, sizeof buf, "%-18s", name.c_str());
        out += buf;
        for (auto w : ws) {
            auto it = std::find_if(reports.begin(), reports.end(),
                                   [&](const TimingReport& r) { return r.classifier == name && r.w == w; });
            if (it == reports.end())
                std::snprintf(buf, sizeof buf, " | %-19s", "-");
            else
                std::snprintf(buf, sizeof buf, " | %8.4f +/- %-6.4f", it->mean_ms, it->std_ms);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json to_json(const TimingReport& r) {
    return {{"classifier", r.classifier}, {"w", r.w}, {"samples", r.samples}, {"mean_ms", r.mean_ms}, {"std_ms", r.std_ms}};
}

}  // namespace jamsense::harness
