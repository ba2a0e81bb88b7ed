// SPDX-License-Identifier: Apache-2.0
//
// Gaussian naive Bayes and logistic regression on flattened windows
// (normalised rssi followed by normalised sinr).
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "layers.hpp"

namespace jamsense::baselines {

using dataset::WindowSample;

/// Binary classifier returning P(attack).
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual double attack_probability(const WindowSample& s) const = 0;
    virtual std::string name() const = 0;
};

inline std::vector<double> flat_features(const WindowSample& s) {
    std::vector<double> x;
    x.reserve(s.rssi.size() + s.sinr.size());
    x.insert(x.end(), s.rssi.begin(), s.rssi.end());
    x.insert(x.end(), s.sinr.begin(), s.sinr.end());
    return x;
}

inline void check_features(std::span<const double> x, std::size_t dim, const char* who) {
    if (x.size() != dim)
        throw ShapeError(std::string(who) + ": feature length " + std::to_string(x.size()) + " != " + std::to_string(dim));
}

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

inline constexpr double kVarianceFloor = 1e-9;
inline constexpr const char* kGnbTag = "gnb";

struct GnbModel {
    std::array<double, 2> log_prior{};
    std::array<std::vector<double>, 2> mean, var;  // [class][feature]; class 1 = attack

    std::size_t dim() const { return mean[0].size(); }
};

inline GnbModel gnb_fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
    if (x.empty() || x.size() != y.size()) throw DomainError("gnb_fit: need equally many features and labels");
    const std::size_t d = x.front().size();
    std::array<std::size_t, 2> n{};
    GnbModel m;
    for (int c = 0; c < 2; ++c) {
        m.mean[c].assign(d, 0.0);
        m.var[c].assign(d, 0.0);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        check_features(x[i], d, "gnb_fit");
        const int c = y[i] ? 1 : 0;
        ++n[c];
        for (std::size_t j = 0; j < d; ++j) m.mean[c][j] += x[i][j];
    }
    if (n[0] == 0 || n[1] == 0) throw DomainError("gnb_fit: both classes must be present");
    for (int c = 0; c < 2; ++c)
        for (auto& v : m.mean[c]) v /= static_cast<double>(n[c]);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const int c = y[i] ? 1 : 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double e = x[i][j] - m.mean[c][j];
            m.var[c][j] += e * e;
        }
    }
    for (int c = 0; c < 2; ++c) {
        for (auto& v : m.var[c]) v = std::max(v / static_cast<double>(n[c]), kVarianceFloor);
        m.log_prior[c] = std::log(static_cast<double>(n[c]) / static_cast<double>(x.size()));
    }
    return m;
}

/// Posterior P(class 1 | x).
inline double gnb_predict(const GnbModel& m, std::span<const double> x) {
    check_features(x, m.dim(), "gnb_predict");
    std::array<double, 2> ll = m.log_prior;
    for (int c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double e = x[j] - m.mean[c][j];
            ll[c] -= 0.5 * (std::log(2.0 * std::numbers::pi * m.var[c][j]) + e * e / m.var[c][j]);
        }
    return nn::sigmoid(ll[1] - ll[0]);
}

// ---------------------------------------------------------------------------
// Logistic regression

inline constexpr const char* kLogregTag = "logreg";

struct LogregModel {
    std::vector<double> w;
    double b = 0.0;
};

struct LogregConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 200;
};

inline double logreg_predict(const LogregModel& m, std::span<const double> x) {
    check_features(x, m.w.size(), "logreg_predict");
    double z = m.b;
    for (std::size_t j = 0; j < x.size(); ++j) z += m.w[j] * x[j];
    return nn::sigmoid(z);
}

/// Mean binary cross-entropy and its gradient (last entry = bias).
inline double logreg_loss_and_gradient(const LogregModel& m, const std::vector<std::vector<double>>& x,
                                       const std::vector<int>& y, std::vector<double>& grad) {
    const std::size_t d = m.w.size();
    grad.assign(d + 1, 0.0);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double z = m.b;
        for (std::size_t j = 0; j < d; ++j) z += m.w[j] * x[i][j];
        const double t = y[i] ? 1.0 : 0.0;
        // log(1 + e^z) - t z, stable in both tails
        loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - t * z;
        const double r = (nn::sigmoid(z) - t) * inv;
        for (std::size_t j = 0; j < d; ++j) grad[j] += r * x[i][j];
        grad[d] += r;
    }
    return loss * inv;
}

/// Full-batch gradient descent from zero weights. Returns the loss per epoch.
inline std::vector<double> logreg_train(LogregModel& m, const std::vector<std::vector<double>>& x,
                                        const std::vector<int>& y, const LogregConfig& cfg) {
    if (x.empty() || x.size() != y.size()) throw DomainError("logreg_fit: need equally many features and labels");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("logreg_fit: learning rate must be > 0");
    const std::size_t d = x.front().size();
    for (const auto& r : x) check_features(r, d, "logreg_fit");
    if (m.w.size() != d) {
        m.w.assign(d, 0.0);
        m.b = 0.0;
    }
    std::vector<double> curve, grad;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const double loss = logreg_loss_and_gradient(m, x, y, grad);
        if (!std::isfinite(loss)) throw TrainingError("logreg_fit: non-finite loss", e);
        curve.push_back(loss);
        for (std::size_t j = 0; j < d; ++j) m.w[j] -= cfg.learning_rate * grad[j];
        m.b -= cfg.learning_rate * grad[d];
        if (!std::isfinite(m.b)) throw TrainingError("logreg_fit: non-finite weights", e);
    }
    return curve;
}

inline LogregModel logreg_fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                              const LogregConfig& cfg = {}) {
    LogregModel m;
    logreg_train(m, x, y, cfg);
    return m;
}

// ---------------------------------------------------------------------------
// Window adaptors and persistence

struct FlatSet {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
};

inline FlatSet flatten(const std::vector<WindowSample>& samples) {
    FlatSet out;
    out.x.reserve(samples.size());
    for (const auto& s : samples) {
        out.x.push_back(flat_features(s));
        out.y.push_back(s.attack ? 1 : 0);
    }
    return out;
}

class GnbClassifier final : public Classifier {
public:
    explicit GnbClassifier(GnbModel m) : m_(std::move(m)) {}
    double attack_probability(const WindowSample& s) const override { return gnb_predict(m_, flat_features(s)); }
    std::string name() const override { return "GNB"; }
    const GnbModel& model() const { return m_; }

private:
    GnbModel m_;
};

class LogregClassifier final : public Classifier {
public:
    explicit LogregClassifier(LogregModel m) : m_(std::move(m)) {}
    double attack_probability(const WindowSample& s) const override { return logreg_predict(m_, flat_features(s)); }
    std::string name() const override { return "LR"; }
    const LogregModel& model() const { return m_; }

private:
    LogregModel m_;
};

enum class FallbackKind { Logreg, Gnb };

inline FallbackKind parse_fallback(std::string_view s) {
    if (s == "lr" || s == "logreg") return FallbackKind::Logreg;
    if (s == "gnb") return FallbackKind::Gnb;
    throw ConfigError("unknown fallback '" + std::string(s) + "' (expected lr|gnb)");
}

inline std::unique_ptr<Classifier> fit_classifier(FallbackKind kind, const std::vector<WindowSample>& train,
                                                  const LogregConfig& cfg = {}) {
    const FlatSet f = flatten(train);
    if (kind == FallbackKind::Gnb) return std::make_unique<GnbClassifier>(gnb_fit(f.x, f.y));
    return std::make_unique<LogregClassifier>(logreg_fit(f.x, f.y, cfg));
}

inline ckpt::Checkpoint to_checkpoint(const GnbModel& m) {
    const std::size_t d = m.dim();
    nn::Tensor mean({2, d}), var({2, d});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < d; ++j) {
            mean.at(c, j) = m.mean[c][j];
            var.at(c, j) = m.var[c][j];
        }
    return {kGnbTag, nlohmann::json::object(),
            {{"log_prior", nn::Tensor({2}, {m.log_prior[0], m.log_prior[1]})}, {"mean", mean}, {"var", var}}};
}

inline ckpt::Checkpoint to_checkpoint(const LogregModel& m) {
    return {kLogregTag, nlohmann::json::object(), {{"w", nn::Tensor({m.w.size()}, m.w)}, {"b", nn::Tensor({1}, {m.b})}}};
}

inline GnbModel gnb_from_checkpoint(const ckpt::Checkpoint& c) {
    if (c.type != kGnbTag || c.tensors.size() != 3 || c.tensors[1].value.rank() != 2 || c.tensors[1].value.dim(0) != 2 ||
        c.tensors[2].value.shape != c.tensors[1].value.shape || c.tensors[0].value.shape != std::vector<std::size_t>{2})
        throw ParseError("checkpoint: not a GNB model");
    GnbModel m;
    const std::size_t d = c.tensors[1].value.dim(1);
    for (std::size_t k = 0; k < 2; ++k) {
        m.log_prior[k] = c.tensors[0].value[k];
        m.mean[k].assign(c.tensors[1].value.data.begin() + static_cast<std::ptrdiff_t>(k * d),
                         c.tensors[1].value.data.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
        m.var[k].assign(c.tensors[2].value.data.begin() + static_cast<std::ptrdiff_t>(k * d),
                        c.tensors[2].value.data.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
    }
    return m;
}

inline LogregModel logreg_from_checkpoint(const ckpt::Checkpoint& c) {
    if (c.type != kLogregTag || c.tensors.size() != 2 || c.tensors[1].value.size() != 1)
        throw ParseError("checkpoint: not a logistic-regression model");
    return {c.tensors[0].value.data, c.tensors[1].value[0]};
}

}  // namespace jamsense::baselines
