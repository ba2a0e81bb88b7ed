// SPDX-License-Identifier: Apache-2.0
//
// Windowing, balancing, normalisation, run-level splits and run/manifest
// persistence.
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"
#include "scenario.hpp"

namespace jamsense::dataset {

using scenario::TimeSeriesRun;

struct Origin {
    std::uint64_t run_id = 0;
    std::size_t start = 0;
    friend bool operator==(const Origin&, const Origin&) = default;
};

/// A w-long (RSSI, SINR) slice and its label (true = attack).
struct WindowSample {
    std::vector<double> rssi;
    std::vector<double> sinr;
    bool attack = false;
    Origin origin;

    std::size_t size() const { return rssi.size(); }
    friend bool operator==(const WindowSample&, const WindowSample&) = default;
};

/// count = floor((N - w) / stride) + 1 for N >= w, else 0.
inline std::vector<WindowSample> windowize(const TimeSeriesRun& run, std::size_t w, std::size_t stride) {
    if (w < 1 || stride < 1) throw DomainError("windowize: w and stride must be >= 1");
    if (run.sinr_db.size() != run.rssi_dbm.size()) throw ShapeError("windowize: channel length mismatch");
    std::vector<WindowSample> out;
    const std::size_t n = run.size();
    if (n < w) return out;
    out.reserve((n - w) / stride + 1);
    for (std::size_t start = 0; start + w <= n; start += stride) {
        WindowSample s;
        s.rssi.assign(run.rssi_dbm.begin() + static_cast<std::ptrdiff_t>(start),
                      run.rssi_dbm.begin() + static_cast<std::ptrdiff_t>(start + w));
        s.sinr.assign(run.sinr_db.begin() + static_cast<std::ptrdiff_t>(start),
                      run.sinr_db.begin() + static_cast<std::ptrdiff_t>(start + w));
        s.attack = run.label;
        s.origin = {run.id, start};
        out.push_back(std::move(s));
    }
    return out;
}

/// Random undersampling of the majority class. Retained samples keep their
/// relative order and are copied unchanged.
inline std::vector<WindowSample> balance(const std::vector<WindowSample>& samples, Rng& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].attack ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) throw DomainError("balance: both classes must be present");
    auto& major = pos.size() > neg.size() ? pos : neg;
    const std::size_t keep = std::min(pos.size(), neg.size());
    rng.shuffle(major.begin(), major.end());
    major.resize(keep);
    std::vector<std::size_t> chosen;
    chosen.reserve(2 * keep);
    chosen.insert(chosen.end(), pos.begin(), pos.end());
    chosen.insert(chosen.end(), neg.begin(), neg.end());
    std::sort(chosen.begin(), chosen.end());
    std::vector<WindowSample> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(samples[i]);
    return out;
}

inline constexpr double kStdFloor = 1e-6;

/// Per-channel z-score statistics fitted on the training split.
struct NormStats {
    double rssi_mean = 0.0;
    double rssi_std = 1.0;
    double sinr_mean = 0.0;
    double sinr_std = 1.0;
    friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline void to_json(nlohmann::json& j, const NormStats& s) {
    j = {{"rssi_mean", s.rssi_mean}, {"rssi_std", s.rssi_std}, {"sinr_mean", s.sinr_mean}, {"sinr_std", s.sinr_std}};
}
inline void from_json(const nlohmann::json& j, NormStats& s) {
    j.at("rssi_mean").get_to(s.rssi_mean);
    j.at("rssi_std").get_to(s.rssi_std);
    j.at("sinr_mean").get_to(s.sinr_mean);
    j.at("sinr_std").get_to(s.sinr_std);
}

inline NormStats fit_normalizer(const std::vector<WindowSample>& train) {
    if (train.empty()) throw DomainError("fit_normalizer: empty training set");
    auto stats = [&](auto member) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& s : train) {
            for (double v : s.*member) sum += v;
            n += (s.*member).size();
        }
        if (n == 0) throw DomainError("fit_normalizer: empty windows");
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& s : train)
            for (double v : s.*member) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        return std::pair{mean, std::max(sd, kStdFloor)};
    };
    NormStats out;
    std::tie(out.rssi_mean, out.rssi_std) = stats(&WindowSample::rssi);
    std::tie(out.sinr_mean, out.sinr_std) = stats(&WindowSample::sinr);
    return out;
}

/// z-scores both channels. Not idempotent: applying twice re-centres again.
inline std::vector<WindowSample> apply_normalizer(const NormStats& stats, std::vector<WindowSample> samples) {
    for (auto& s : samples) {
        for (auto& v : s.rssi) v = (v - stats.rssi_mean) / stats.rssi_std;
        for (auto& v : s.sinr) v = (v - stats.sinr_mean) / stats.sinr_std;
    }
    return samples;
}

struct RunRef {
    std::uint64_t id = 0;
    bool label = false;
    /// Runs sharing a stratum are split together; 0 when only labels matter.
    std::uint64_t stratum = 0;
};

struct RunSplit {
    std::vector<std::uint64_t> train;
    std::vector<std::uint64_t> test;
};

/// Stratified split of whole runs. Each (label, stratum) group sends
/// round(n * f) runs to test, clamped so both sides keep at least one run.
/// Singleton strata are pooled per label; a lone leftover run trains.
inline RunSplit split_by_run(const std::vector<RunRef>& runs, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw DomainError("split_by_run: test_fraction must be in (0, 1)");
    std::map<std::pair<bool, std::uint64_t>, std::vector<std::uint64_t>> strata;
    std::size_t per_label[2] = {0, 0};
    for (const auto& r : runs) {
        strata[{r.label, r.stratum}].push_back(r.id);
        ++per_label[r.label ? 1 : 0];
    }
    for (std::size_t n : per_label)
        if (n == 1) throw DomainError("split_by_run: need at least two runs per label to stratify");
    std::vector<std::vector<std::uint64_t>> groups;
    std::vector<std::uint64_t> pooled[2];
    for (auto& [key, ids] : strata) {
        if (ids.size() == 1) pooled[key.first ? 1 : 0].push_back(ids.front());
        else groups.push_back(std::move(ids));
    }
    for (auto& p : pooled)
        if (!p.empty()) groups.push_back(std::move(p));

    std::vector<std::uint64_t> all;
    for (const auto& r : runs) all.push_back(r.id);
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) throw DomainError("split_by_run: duplicate run id");

    Rng rng(derive_seed(seed, 0x5b117));
    RunSplit out;
    for (auto& g : groups) {
        std::sort(g.begin(), g.end());
        if (g.size() < 2) {
            out.train.push_back(g.front());
            continue;
        }
        rng.shuffle(g.begin(), g.end());
        auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(g.size()) * test_fraction));
        n_test = std::clamp<std::size_t>(n_test, 1, g.size() - 1);
        out.test.insert(out.test.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_test));
        out.train.insert(out.train.end(), g.begin() + static_cast<std::ptrdiff_t>(n_test), g.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

/// Scenario key of a run: its configuration with the seed cleared.
inline std::uint64_t scenario_stratum(const TimeSeriesRun& r) {
    auto c = r.config;
    c.seed = 0;
    return fnv1a(nlohmann::json(c).dump());
}

/// Splits runs stratified by label and scenario.
inline std::pair<std::vector<TimeSeriesRun>, std::vector<TimeSeriesRun>> split_by_run(
    const std::vector<TimeSeriesRun>& runs, double test_fraction, std::uint64_t seed) {
    std::vector<RunRef> refs;
    for (const auto& r : runs) refs.push_back({r.id, r.label, scenario_stratum(r)});
    const RunSplit split = split_by_run(refs, test_fraction, seed);
    std::pair<std::vector<TimeSeriesRun>, std::vector<TimeSeriesRun>> out;
    for (const auto& r : runs) {
        if (std::binary_search(split.test.begin(), split.test.end(), r.id)) out.second.push_back(r);
        else out.first.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run files

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t lineno) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("run file: bad number '" + std::string(s) + "'", lineno);
    return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::size_t lineno) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("run file: bad integer '" + std::string(s) + "'", lineno);
    return v;
}

}  // namespace detail

inline constexpr std::string_view kRunHeader = "t_s,rssi_dbm,sinr_db";

/// Writes a run as CSV preceded by `#meta key=value` lines.
inline void write_run(std::ostream& out, const TimeSeriesRun& run) {
    out << "#meta id=" << run.id << '\n';
    out << "#meta seed=" << run.seed << '\n';
    out << "#meta label=" << (run.label ? 1 : 0) << '\n';
    out << "#meta samples=" << run.size() << '\n';
    out << "#meta config=" << nlohmann::json(run.config).dump() << '\n';
    out << kRunHeader << '\n';
    const double rate = run.config.sample_rate_hz;
    for (std::size_t i = 0; i < run.size(); ++i) {
        out << detail::format_double(static_cast<double>(i) / rate) << ',' << detail::format_double(run.rssi_dbm[i])
            << ',' << detail::format_double(run.sinr_db[i]) << '\n';
    }
}

inline TimeSeriesRun read_run(std::istream& in) {
    TimeSeriesRun run;
    std::string line;
    std::size_t lineno = 0;
    bool header = false, have_config = false, have_samples = false, have_label = false;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line.rfind("#meta ", 0) == 0) {
                const auto eq = line.find('=');
                if (eq == std::string::npos) throw ParseError("run file: malformed #meta line", lineno);
                const std::string key = line.substr(6, eq - 6);
                const std::string_view value = std::string_view(line).substr(eq + 1);
                if (key == "id") run.id = detail::parse_u64(value, lineno);
                else if (key == "seed") run.seed = detail::parse_u64(value, lineno);
                else if (key == "label") {
                    if (value != "0" && value != "1") throw ParseError("run file: label must be 0 or 1", lineno);
                    run.label = value == "1";
                    have_label = true;
                } else if (key == "samples") {
                    expected = detail::parse_u64(value, lineno);
                    have_samples = true;
                } else if (key == "config") {
                    try {
                        run.config = nlohmann::json::parse(value).get<scenario::ScenarioConfig>();
                    } catch (const std::exception& e) {
                        throw ParseError(std::string("run file: bad config: ") + e.what(), lineno);
                    }
                    have_config = true;
                }
                continue;
            }
            if (line[0] == '#') continue;
            if (line != kRunHeader) throw ParseError("run file: unexpected header", lineno);
            if (!have_config || !have_samples || !have_label)
                throw ParseError("run file: missing #meta config/samples/label", lineno);
            header = true;
            run.rssi_dbm.reserve(expected);
            run.sinr_db.reserve(expected);
            continue;
        }
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
            throw ParseError("run file: expected 3 columns", lineno);
        const std::string_view sv(line);
        detail::parse_double(sv.substr(0, c1), lineno);
        run.rssi_dbm.push_back(detail::parse_double(sv.substr(c1 + 1, c2 - c1 - 1), lineno));
        run.sinr_db.push_back(detail::parse_double(sv.substr(c2 + 1), lineno));
        if (!std::isfinite(run.rssi_dbm.back()) || !std::isfinite(run.sinr_db.back()))
            throw ParseError("run file: non-finite sample", lineno);
    }
    if (!header) throw ParseError("run file: missing header", lineno);
    if (run.size() != expected)
        throw ParseError("run file: expected " + std::to_string(expected) + " samples, found " +
                             std::to_string(run.size()) + " (truncated?)",
                         lineno);
    return run;
}

inline void save_run(const std::filesystem::path& path, const TimeSeriesRun& run) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write run file '" + path.string() + "'");
    write_run(out, run);
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline TimeSeriesRun load_run(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open run file '" + path.string() + "'");
    try {
        return read_run(in);
    } catch (const ParseError& e) {
        throw ParseError(path.filename().string() + ": " + e.what());
    }
}

inline std::string run_file_name(std::uint64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "run_%06llu.csv", static_cast<unsigned long long>(id));
    return buf;
}

// ---------------------------------------------------------------------------
// Manifest

enum class Split { Train, Test };

struct ManifestEntry {
    std::string path;  // relative to the manifest directory
    std::uint64_t id = 0;
    bool label = false;
    Split split = Split::Train;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> runs;
    std::size_t w = 300;
    std::size_t stride = 150;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    NormStats norm;
    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;

    void validate() const {
        std::vector<std::uint64_t> ids;
        for (const auto& r : runs) ids.push_back(r.id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw ConfigError("manifest: a run appears more than once");
        if (w < 1 || stride < 1) throw ConfigError("manifest: w and stride must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = nlohmann::json::object();
    j["format"] = "jamsense-dataset/1";
    j["w"] = m.w;
    j["stride"] = m.stride;
    j["seed"] = m.seed;
    j["test_fraction"] = m.test_fraction;
    j["norm"] = m.norm;
    auto& runs = j["runs"] = nlohmann::json::array();
    for (const auto& r : m.runs)
        runs.push_back({{"path", r.path}, {"id", r.id}, {"label", r.label},
                        {"split", r.split == Split::Train ? "train" : "test"}});
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    if (j.value("format", "") != "jamsense-dataset/1") throw ParseError("manifest: unknown format");
    j.at("w").get_to(m.w);
    j.at("stride").get_to(m.stride);
    j.at("seed").get_to(m.seed);
    j.at("test_fraction").get_to(m.test_fraction);
    j.at("norm").get_to(m.norm);
    m.runs.clear();
    for (const auto& r : j.at("runs")) {
        ManifestEntry e;
        r.at("path").get_to(e.path);
        r.at("id").get_to(e.id);
        r.at("label").get_to(e.label);
        const auto split = r.at("split").get<std::string>();
        if (split != "train" && split != "test") throw ParseError("manifest: bad split '" + split + "'");
        e.split = split == "train" ? Split::Train : Split::Test;
        m.runs.push_back(std::move(e));
    }
    m.validate();
}

inline constexpr const char* kManifestName = "manifest.json";

inline void save_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
    std::ofstream out(dir / kManifestName, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
    out << nlohmann::json(m).dump(2) << '\n';
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / kManifestName, std::ios::binary);
    if (!in) throw ParseError("cannot open manifest in '" + dir.string() + "'");
    try {
        return nlohmann::json::parse(in).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
}

/// Windows every run in `runs` and concatenates the results in order.
inline std::vector<WindowSample> windowize_all(const std::vector<TimeSeriesRun>& runs, std::size_t w,
                                               std::size_t stride) {
    std::vector<WindowSample> out;
    for (const auto& r : runs) {
        auto ws = windowize(r, w, stride);
        out.insert(out.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
    }
    return out;
}

/// Assigns runs to splits and fits normalisation on the train windows.
/// Entries are ordered by run id; nothing is written.
inline DatasetManifest plan_dataset(const std::vector<TimeSeriesRun>& runs, std::size_t w, std::size_t stride,
                                    double test_fraction, std::uint64_t seed) {
    if (runs.empty()) throw DomainError("build_dataset: no runs");
    auto [train, test] = split_by_run(runs, test_fraction, seed);
    DatasetManifest m;
    m.w = w;
    m.stride = stride;
    m.seed = seed;
    m.test_fraction = test_fraction;
    const auto train_windows = windowize_all(train, w, stride);
    if (train_windows.empty()) throw DomainError("build_dataset: runs are shorter than the window");
    m.norm = fit_normalizer(train_windows);

    std::vector<const TimeSeriesRun*> ordered;
    for (const auto& r : runs) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::vector<std::uint64_t> test_ids;
    for (const auto& r : test) test_ids.push_back(r.id);
    std::sort(test_ids.begin(), test_ids.end());
    for (const auto* r : ordered) {
        ManifestEntry e;
        e.path = "runs/" + run_file_name(r->id);
        e.id = r->id;
        e.label = r->label;
        e.split = std::binary_search(test_ids.begin(), test_ids.end(), r->id) ? Split::Test : Split::Train;
        m.runs.push_back(std::move(e));
    }
    m.validate();
    return m;
}

/// Builds a self-contained dataset directory: copies of the run files under
/// `runs/`, a stratified run split and train-fitted normalisation statistics.
inline DatasetManifest build_dataset(const std::vector<TimeSeriesRun>& runs, std::size_t w, std::size_t stride,
                                     double test_fraction, std::uint64_t seed, const std::filesystem::path& out_dir) {
    DatasetManifest m = plan_dataset(runs, w, stride, test_fraction, seed);
    std::filesystem::create_directories(out_dir / "runs");
    for (const auto& r : runs) save_run(out_dir / ("runs/" + run_file_name(r.id)), r);
    save_manifest(out_dir, m);
    return m;
}

/// Normalised windows of the runs that `m` assigns to `split`, optionally class-balanced.
inline std::vector<WindowSample> split_windows(const std::vector<TimeSeriesRun>& runs, const DatasetManifest& m,
                                               Split split, bool balanced) {
    std::vector<TimeSeriesRun> selected;
    for (const auto& e : m.runs) {
        if (e.split != split) continue;
        auto it = std::find_if(runs.begin(), runs.end(), [&](const TimeSeriesRun& r) { return r.id == e.id; });
        if (it == runs.end()) throw DomainError("dataset: run " + std::to_string(e.id) + " missing");
        selected.push_back(*it);
    }
    auto windows = apply_normalizer(m.norm, windowize_all(selected, m.w, m.stride));
    if (!balanced) return windows;
    Rng rng(derive_seed(m.seed, split == Split::Train ? 0xba1a : 0xba1b));
    return balance(windows, rng);
}

inline std::vector<TimeSeriesRun> load_split_runs(const std::filesystem::path& dir, const DatasetManifest& m,
                                                  Split split) {
    std::vector<TimeSeriesRun> out;
    for (const auto& e : m.runs)
        if (e.split == split) out.push_back(load_run(dir / e.path));
    return out;
}

/// Normalised windows of one split, optionally class-balanced.
inline std::vector<WindowSample> load_windows(const std::filesystem::path& dir, const DatasetManifest& m, Split split,
                                              bool balanced) {
    return split_windows(load_split_runs(dir, m, split), m, split, balanced);
}

}  // namespace jamsense::dataset
