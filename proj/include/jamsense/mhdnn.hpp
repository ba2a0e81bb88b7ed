// SPDX-License-Identifier: Apache-2.0
//
// Multi-headed convolutional network with an attention (or LSTM) block per
// input channel, a shared convolutional body and a two-way softmax.
//
//   rssi: conv x3 -> attention|lstm -> dropout -> pool
//   sinr: conv x3 -> attention|lstm -> dropout -> pool
//   body: concat -> conv x3 -> flatten -> dropout -> dense -> softmax
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "error.hpp"
#include "layers.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace jamsense::nn {

using dataset::WindowSample;

enum class Variant { Attention, Lstm };

NLOHMANN_JSON_SERIALIZE_ENUM(Variant, {{Variant::Attention, "attention"}, {Variant::Lstm, "lstm"}})

inline const char* to_string(Variant v) { return v == Variant::Attention ? "attention" : "lstm"; }

inline Variant parse_variant(std::string_view s) {
    if (s == "attention") return Variant::Attention;
    if (s == "lstm") return Variant::Lstm;
    throw ConfigError("unknown variant '" + std::string(s) + "' (expected attention|lstm)");
}

struct ConvSpec {
    std::size_t filters = 8;
    std::size_t kernel = 8;
    std::size_t stride = 2;
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

inline void to_json(nlohmann::json& j, const ConvSpec& c) {
    j = {{"filters", c.filters}, {"kernel", c.kernel}, {"stride", c.stride}};
}
inline void from_json(const nlohmann::json& j, ConvSpec& c) {
    j.at("filters").get_to(c.filters);
    j.at("kernel").get_to(c.kernel);
    j.at("stride").get_to(c.stride);
}

inline constexpr std::size_t kMaxTrainableParameters = 100'000;

struct ArchConfig {
    Variant variant = Variant::Attention;
    std::size_t w = 300;
    std::array<ConvSpec, 3> head_convs{{{8, 8, 2}, {8, 4, 2}, {8, 3, 1}}};
    std::size_t attention_heads = 8;
    std::size_t key_dim = 8;
    std::size_t lstm_units = 16;
    /// Width of each head's pooled embedding; the attention output projection maps to it.
    std::size_t embed_dim = 16;
    std::array<ConvSpec, 3> body_convs{{{8, 8, 2}, {8, 4, 2}, {8, 3, 1}}};
    std::size_t dense_width = 100;
    double dropout = 0.4;
    std::size_t classes = 2;

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;

    std::size_t head_sequence_length() const {
        std::size_t len = w;
        for (const auto& c : head_convs) len = conv1d_output_length(len, c.kernel, c.stride);
        return len;
    }

    std::size_t body_output_length() const {
        std::size_t len = 2 * embed_dim;
        for (const auto& c : body_convs) len = conv1d_output_length(len, c.kernel, c.stride);
        return len;
    }

    void validate() const {
        try {
            if (classes != 2) throw ConfigError("only two output classes are supported");
            if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
            if (attention_heads == 0 || key_dim == 0 || embed_dim == 0 || dense_width == 0)
                throw ConfigError("layer widths must be positive");
            if (variant == Variant::Lstm && lstm_units != embed_dim)
                throw ConfigError("lstm_units must equal embed_dim");
            for (const auto& c : head_convs)
                if (c.filters == 0) throw ConfigError("conv filters must be positive");
            for (const auto& c : body_convs)
                if (c.filters == 0) throw ConfigError("conv filters must be positive");
            head_sequence_length();
            body_output_length();
        } catch (const ShapeError& e) {
            throw ConfigError(std::string("ArchConfig: window too short for the conv stack: ") + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("ArchConfig: ") + e.what());
        }
    }
};

inline void to_json(nlohmann::json& j, const ArchConfig& a) {
    j = {{"variant", a.variant},       {"w", a.w},
         {"head_convs", a.head_convs}, {"attention_heads", a.attention_heads},
         {"key_dim", a.key_dim},       {"lstm_units", a.lstm_units},
         {"embed_dim", a.embed_dim},   {"body_convs", a.body_convs},
         {"dense_width", a.dense_width}, {"dropout", a.dropout},
         {"classes", a.classes}};
}
inline void from_json(const nlohmann::json& j, ArchConfig& a) {
    j.at("variant").get_to(a.variant);
    j.at("w").get_to(a.w);
    j.at("head_convs").get_to(a.head_convs);
    j.at("attention_heads").get_to(a.attention_heads);
    j.at("key_dim").get_to(a.key_dim);
    j.at("lstm_units").get_to(a.lstm_units);
    j.at("embed_dim").get_to(a.embed_dim);
    j.at("body_convs").get_to(a.body_convs);
    j.at("dense_width").get_to(a.dense_width);
    j.at("dropout").get_to(a.dropout);
    j.at("classes").get_to(a.classes);
}

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Parameter indices of one input head.
struct HeadSlots {
    std::array<std::size_t, 3> conv_w{}, conv_b{};
    std::size_t wq = 0, bq = 0, wk = 0, wv = 0, bv = 0, wo = 0, bo = 0;
    std::size_t lstm_wx = 0, lstm_wh = 0, lstm_b = 0;
};

struct Model {
    ArchConfig arch;
    std::uint64_t seed = 0;
    std::vector<NamedTensor> params;
    std::array<HeadSlots, 2> head{};
    std::array<std::size_t, 3> body_w{}, body_b{};
    std::size_t dense_w = 0, dense_b = 0, out_w = 0, out_b = 0;

    const Tensor& p(std::size_t i) const { return params[i].value; }
    Tensor& p(std::size_t i) { return params[i].value; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : params) n += t.value.size();
        return n;
    }

    std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].name == name) return i;
        throw ConfigError("model has no parameter '" + std::string(name) + "'");
    }
};

using Gradients = std::vector<Tensor>;

inline Gradients zero_gradients(const Model& m) {
    Gradients g;
    g.reserve(m.params.size());
    for (const auto& t : m.params) g.emplace_back(t.value.shape);
    return g;
}

namespace detail {

/// U(-a, a) with a = sqrt(gain / fan_in); gain 6 ahead of rectifiers, 3 otherwise.
inline Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, double gain, Rng& rng) {
    Tensor t(std::move(shape));
    const double a = std::sqrt(gain / static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.uniform(-a, a);
    return t;
}

inline std::size_t add_param(Model& m, std::string name, Tensor t) {
    m.params.push_back({std::move(name), std::move(t)});
    return m.params.size() - 1;
}

}  // namespace detail

/// Wires the network for `cfg`. Parameter count does not depend on cfg.w.
inline Model build_mhdnn(const ArchConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.arch = cfg;
    m.seed = seed;
    Rng rng(derive_seed(seed, 0x1417));
    auto conv = [&](const std::string& prefix, std::size_t cin, const ConvSpec& c, std::size_t& wi, std::size_t& bi) {
        wi = detail::add_param(m, prefix + ".w",
                               detail::uniform_init({c.filters, cin, c.kernel}, cin * c.kernel, 6.0, rng));
        bi = detail::add_param(m, prefix + ".b", Tensor({c.filters}));
    };
    for (std::size_t h = 0; h < 2; ++h) {
        const std::string prefix = h == 0 ? "rssi" : "sinr";
        auto& slots = m.head[h];
        std::size_t cin = 1;
        for (std::size_t i = 0; i < 3; ++i) {
            conv(prefix + ".conv" + std::to_string(i), cin, cfg.head_convs[i], slots.conv_w[i], slots.conv_b[i]);
            cin = cfg.head_convs[i].filters;
        }
        if (cfg.variant == Variant::Attention) {
            const std::size_t hd = cfg.attention_heads * cfg.key_dim;
            auto proj = [&](const char* n, std::size_t in, std::size_t out, std::size_t& wi, std::size_t* bi) {
                wi = detail::add_param(m, prefix + ".attn." + n + ".w", detail::uniform_init({in, out}, in, 3.0, rng));
                if (bi) *bi = detail::add_param(m, prefix + ".attn." + n + ".b", Tensor({out}));
            };
            proj("q", cin, hd, slots.wq, &slots.bq);
            proj("k", cin, hd, slots.wk, nullptr);
            proj("v", cin, hd, slots.wv, &slots.bv);
            proj("out", hd, cfg.embed_dim, slots.wo, &slots.bo);
        } else {
            const std::size_t u = cfg.lstm_units;
            slots.lstm_wx =
                detail::add_param(m, prefix + ".lstm.wx", detail::uniform_init({cin, 4 * u}, cin + u, 3.0, rng));
            slots.lstm_wh =
                detail::add_param(m, prefix + ".lstm.wh", detail::uniform_init({u, 4 * u}, cin + u, 3.0, rng));
            slots.lstm_b = detail::add_param(m, prefix + ".lstm.b", Tensor({4 * u}));
        }
    }
    std::size_t cin = 1;
    for (std::size_t i = 0; i < 3; ++i) {
        conv("body.conv" + std::to_string(i), cin, cfg.body_convs[i], m.body_w[i], m.body_b[i]);
        cin = cfg.body_convs[i].filters;
    }
    const std::size_t flat = cin * cfg.body_output_length();
    m.dense_w = detail::add_param(m, "body.dense.w", detail::uniform_init({flat, cfg.dense_width}, flat, 6.0, rng));
    m.dense_b = detail::add_param(m, "body.dense.b", Tensor({cfg.dense_width}));
    m.out_w = detail::add_param(m, "body.out.w",
                                detail::uniform_init({cfg.dense_width, cfg.classes}, cfg.dense_width, 3.0, rng));
    m.out_b = detail::add_param(m, "body.out.b", Tensor({cfg.classes}));
    if (m.parameter_count() >= kMaxTrainableParameters)
        throw ConfigError("ArchConfig: parameter count " + std::to_string(m.parameter_count()) + " exceeds 100000");
    return m;
}

inline std::size_t parameter_count(const ArchConfig& cfg) { return build_mhdnn(cfg, 0).parameter_count(); }

// ---------------------------------------------------------------------------
// Forward / backward

struct HeadTrace {
    Tensor input;                  // [1 x w]
    std::array<Tensor, 3> conv;    // post-activation
    Tensor sequence;               // [L x C], conv output transposed
    AttentionCache attention;
    LstmCache lstm;
    Tensor mixed;                  // attention output [L x E] or lstm state [E]
    Tensor drop_mask;
    Tensor pooled;                 // [E]
};

struct Trace {
    std::array<HeadTrace, 2> head;
    Tensor body_in;                // [1 x 2E]
    std::array<Tensor, 3> body;    // post-activation
    Tensor flat;
    Tensor drop_mask;
    Tensor flat_dropped;
    Tensor hidden;                 // post-activation
    Tensor logits;
    Tensor probs;
};

namespace detail {

inline AttentionWeights attention_weights(const Model& m, const HeadSlots& s) {
    return {m.p(s.wq), m.p(s.bq), m.p(s.wk), m.p(s.wv), m.p(s.bv),
            m.p(s.wo), m.p(s.bo), m.arch.attention_heads, m.arch.key_dim};
}

inline Tensor flatten(Tensor t) {
    t.shape = {t.size()};
    return t;
}

}  // namespace detail

/// Full forward pass. Dropout is active iff `dropout_rng` is non-null.
inline Tensor forward_trace(const Model& m, const WindowSample& sample, Trace& tr, Rng* dropout_rng = nullptr) {
    const auto& a = m.arch;
    if (sample.rssi.size() != a.w || sample.sinr.size() != a.w)
        throw ShapeError("forward: sample length " + std::to_string(sample.rssi.size()) + "/" +
                         std::to_string(sample.sinr.size()) + " does not match model window " + std::to_string(a.w));
    const bool training = dropout_rng != nullptr;
    Rng unused(0);
    Rng& drng = training ? *dropout_rng : unused;
    for (std::size_t h = 0; h < 2; ++h) {
        auto& ht = tr.head[h];
        const auto& s = m.head[h];
        ht.input = Tensor({1, a.w}, h == 0 ? sample.rssi : sample.sinr);
        const Tensor* x = &ht.input;
        for (std::size_t i = 0; i < 3; ++i) {
            ht.conv[i] = relu(conv1d(*x, m.p(s.conv_w[i]), m.p(s.conv_b[i]), a.head_convs[i].stride));
            x = &ht.conv[i];
        }
        ht.sequence = transpose(ht.conv[2]);
        if (a.variant == Variant::Attention) {
            ht.mixed = multi_head_self_attention(ht.sequence, detail::attention_weights(m, s), &ht.attention);
            const Tensor dropped = dropout(ht.mixed, a.dropout, drng, training, &ht.drop_mask);
            ht.pooled = temporal_pool(dropped);
        } else {
            ht.mixed = lstm_forward(ht.sequence, {m.p(s.lstm_wx), m.p(s.lstm_wh), m.p(s.lstm_b)}, &ht.lstm);
            ht.pooled = dropout(ht.mixed, a.dropout, drng, training, &ht.drop_mask);
        }
    }
    const std::size_t e = a.embed_dim;
    tr.body_in = Tensor({1, 2 * e});
    std::copy(tr.head[0].pooled.data.begin(), tr.head[0].pooled.data.end(), tr.body_in.data.begin());
    std::copy(tr.head[1].pooled.data.begin(), tr.head[1].pooled.data.end(), tr.body_in.data.begin() + static_cast<std::ptrdiff_t>(e));
    const Tensor* x = &tr.body_in;
    for (std::size_t i = 0; i < 3; ++i) {
        tr.body[i] = relu(conv1d(*x, m.p(m.body_w[i]), m.p(m.body_b[i]), a.body_convs[i].stride));
        x = &tr.body[i];
    }
    tr.flat = detail::flatten(tr.body[2]);
    tr.flat_dropped = dropout(tr.flat, a.dropout, drng, training, &tr.drop_mask);
    tr.hidden = relu(dense(tr.flat_dropped, m.p(m.dense_w), m.p(m.dense_b)));
    tr.logits = dense(tr.hidden, m.p(m.out_w), m.p(m.out_b));
    tr.probs = softmax(tr.logits);
    return tr.probs;
}

/// Class probabilities {no attack, attack} in inference mode.
inline std::array<double, 2> forward(const Model& m, const WindowSample& sample) {
    Trace tr;
    const Tensor p = forward_trace(m, sample, tr);
    return {p[0], p[1]};
}

inline double attack_probability(const Model& m, const WindowSample& sample) { return forward(m, sample)[1]; }

/// Backpropagates d(loss)/d(logits) through a recorded trace into `g`.
inline void backward_trace(const Model& m, const Trace& tr, const Tensor& dlogits, Gradients& g) {
    const auto& a = m.arch;
    Tensor dhidden = dense_backward(tr.hidden, m.p(m.out_w), dlogits, g[m.out_w], g[m.out_b]);
    dhidden = relu_backward(tr.hidden, std::move(dhidden));
    Tensor dflat = dense_backward(tr.flat_dropped, m.p(m.dense_w), dhidden, g[m.dense_w], g[m.dense_b]);
    dflat = dropout_backward(tr.drop_mask, std::move(dflat));
    Tensor dx(tr.body[2].shape, std::move(dflat.data));
    for (std::size_t i = 3; i-- > 0;) {
        dx = relu_backward(tr.body[i], std::move(dx));
        const Tensor& in = i == 0 ? tr.body_in : tr.body[i - 1];
        dx = conv1d_backward(in, m.p(m.body_w[i]), a.body_convs[i].stride, dx, g[m.body_w[i]], g[m.body_b[i]]);
    }
    const std::size_t e = a.embed_dim;
    for (std::size_t h = 0; h < 2; ++h) {
        const auto& ht = tr.head[h];
        const auto& s = m.head[h];
        Tensor dpooled({e});
        std::copy(dx.data.begin() + static_cast<std::ptrdiff_t>(h * e),
                  dx.data.begin() + static_cast<std::ptrdiff_t>((h + 1) * e), dpooled.data.begin());
        Tensor dseq;
        if (a.variant == Variant::Attention) {
            Tensor dmixed = temporal_pool_backward(ht.mixed.dim(0), dpooled);
            dmixed = dropout_backward(ht.drop_mask, std::move(dmixed));
            dseq = multi_head_self_attention_backward(
                ht.attention, detail::attention_weights(m, s), dmixed,
                {g[s.wq], g[s.bq], g[s.wk], g[s.wv], g[s.bv], g[s.wo], g[s.bo]});
        } else {
            const Tensor dmixed = dropout_backward(ht.drop_mask, std::move(dpooled));
            dseq = lstm_backward(ht.lstm, {m.p(s.lstm_wx), m.p(s.lstm_wh), m.p(s.lstm_b)}, dmixed,
                                 {g[s.lstm_wx], g[s.lstm_wh], g[s.lstm_b]});
        }
        Tensor dc = transpose(dseq);
        for (std::size_t i = 3; i-- > 0;) {
            dc = relu_backward(ht.conv[i], std::move(dc));
            const Tensor& in = i == 0 ? ht.input : ht.conv[i - 1];
            dc = conv1d_backward(in, m.p(s.conv_w[i]), a.head_convs[i].stride, dc, g[s.conv_w[i]], g[s.conv_b[i]]);
        }
    }
}

inline std::size_t target_index(const WindowSample& s) { return s.attack ? 1 : 0; }

/// Mean cross-entropy over `batch` and its exact gradient (dropout disabled).
inline double loss_and_gradients(const Model& m, std::span<const WindowSample> batch, Gradients& g) {
    if (batch.empty()) throw DomainError("backward: empty batch");
    g = zero_gradients(m);
    const double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    Trace tr;
    for (const auto& s : batch) {
        forward_trace(m, s, tr);
        loss += cross_entropy(tr.logits, target_index(s));
        Tensor dl = cross_entropy_backward(tr.probs, target_index(s));
        for (auto& v : dl.data) v *= inv;
        backward_trace(m, tr, dl, g);
    }
    return loss * inv;
}

inline Gradients backward(const Model& m, std::span<const WindowSample> batch) {
    Gradients g;
    loss_and_gradients(m, batch, g);
    return g;
}

/// Mean cross-entropy in inference mode.
inline double mean_loss(const Model& m, std::span<const WindowSample> batch) {
    double loss = 0.0;
    Trace tr;
    for (const auto& s : batch) {
        forward_trace(m, s, tr);
        loss += cross_entropy(tr.logits, target_index(s));
    }
    return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Gradient check

/// Sign pattern of every rectifier in a trace.
inline std::vector<bool> activation_pattern(const Trace& tr) {
    std::vector<bool> out;
    auto add = [&](const Tensor& t) {
        for (double v : t.data) out.push_back(v > 0.0);
    };
    for (const auto& h : tr.head)
        for (const auto& c : h.conv) add(c);
    for (const auto& c : tr.body) add(c);
    add(tr.hidden);
    return out;
}

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
    /// Coordinates whose +-eps probe crossed a rectifier kink; they are
    /// redrawn because the loss is not differentiable there.
    std::size_t skipped_kinks = 0;
    std::string worst_parameter;
};

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central finite differences against backward() on at least `min_coords`
/// coordinates, spread across every parameter tensor. Dropout is disabled.
inline GradCheckReport grad_check(Model model, const WindowSample& sample, double eps = 1e-5,
                                  std::size_t min_coords = 200, std::uint64_t seed = 0) {
    const std::array<WindowSample, 1> batch{sample};
    Gradients g;
    loss_and_gradients(model, batch, g);
    Trace base_trace;
    forward_trace(model, sample, base_trace);
    const auto base_pattern = activation_pattern(base_trace);

    Rng rng(derive_seed(seed, 0x9c));
    GradCheckReport rep;
    const std::size_t per_tensor = (min_coords + model.params.size() - 1) / model.params.size();
    const std::size_t target = sample.attack ? 1 : 0;
    Trace tr;
    auto probe = [&](std::size_t pi, std::size_t ci, double value, bool& kink) {
        model.params[pi].value[ci] = value;
        forward_trace(model, sample, tr);
        if (activation_pattern(tr) != base_pattern) kink = true;
        return cross_entropy(tr.logits, target);
    };
    for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
        auto& t = model.params[pi].value;
        const std::size_t want = std::min(per_tensor, t.size());
        std::size_t done = 0, attempts = 0;
        while (done < want && attempts < 20 * want + 20) {
            ++attempts;
            const std::size_t ci = rng.index(t.size());
            const double orig = t[ci];
            bool kink = false;
            const double lp = probe(pi, ci, orig + eps, kink);
            const double lm = probe(pi, ci, orig - eps, kink);
            t[ci] = orig;
            if (kink) {
                ++rep.skipped_kinks;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * eps);
            const double err = relative_error(g[pi][ci], numeric);
            if (err > rep.max_relative_error) {
                rep.max_relative_error = err;
                rep.worst_parameter = model.params[pi].name + "[" + std::to_string(ci) + "]";
            }
            ++done;
        }
        rep.coordinates += done;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learning_rate = 2.5e-2;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    /// Worker threads for per-batch gradient evaluation. Results do not
    /// depend on this value.
    std::size_t threads = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs}, {"seed", c.seed}};
}

struct TrainResult {
    std::vector<double> loss_curve;  // mean training loss per epoch
};

namespace detail {

/// Fixed partition of a batch; the reduction order is independent of the
/// number of threads.
inline constexpr std::size_t kBatchChunks = 4;

inline void add_into(Gradients& acc, const Gradients& g) {
    for (std::size_t i = 0; i < acc.size(); ++i)
        for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += g[i][j];
}

}  // namespace detail

/// Mini-batch SGD on mean cross-entropy with per-sample dropout streams.
inline TrainResult train(Model& model, const std::vector<WindowSample>& train_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw DomainError("train: empty training set");
    const std::size_t threads = std::max<std::size_t>(
        1, std::min(cfg.threads ? cfg.threads : std::thread::hardware_concurrency(), detail::kBatchChunks));
    TrainResult result;
    std::vector<std::size_t> order(train_set.size());
    std::array<Gradients, detail::kBatchChunks> chunk_grads;
    std::array<double, detail::kBatchChunks> chunk_loss{};
    for (auto& cg : chunk_grads) cg = zero_gradients(model);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5000 + epoch));
        shuffle_rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::size_t n = end - start;
            const double inv = 1.0 / static_cast<double>(n);
            auto run_chunk = [&](std::size_t c) {
                auto& g = chunk_grads[c];
                for (auto& t : g) t.fill(0.0);
                chunk_loss[c] = 0.0;
                Trace tr;
                const std::size_t lo = start + n * c / detail::kBatchChunks;
                const std::size_t hi = start + n * (c + 1) / detail::kBatchChunks;
                for (std::size_t k = lo; k < hi; ++k) {
                    const auto& s = train_set[order[k]];
                    Rng drop(derive_seed(cfg.seed, (epoch << 32) ^ k));
                    forward_trace(model, s, tr, &drop);
                    chunk_loss[c] += cross_entropy(tr.logits, target_index(s));
                    Tensor dl = cross_entropy_backward(tr.probs, target_index(s));
                    for (auto& v : dl.data) v *= inv;
                    backward_trace(model, tr, dl, g);
                }
            };
            if (threads == 1) {
                for (std::size_t c = 0; c < detail::kBatchChunks; ++c) run_chunk(c);
            } else {
                std::vector<std::jthread> pool;
                for (std::size_t t = 0; t < threads; ++t)
                    pool.emplace_back([&, t] {
                        for (std::size_t c = t; c < detail::kBatchChunks; c += threads) run_chunk(c);
                    });
            }
            for (std::size_t c = 1; c < detail::kBatchChunks; ++c) detail::add_into(chunk_grads[0], chunk_grads[c]);
            double batch_loss = 0.0;
            for (double l : chunk_loss) batch_loss += l;
            if (!std::isfinite(batch_loss)) throw TrainingError("train: non-finite loss", epoch);
            epoch_loss += batch_loss;
            for (std::size_t i = 0; i < model.params.size(); ++i) {
                auto& p = model.params[i].value;
                const auto& g = chunk_grads[0][i];
                for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg.learning_rate * g[j];
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss)) throw TrainingError("train: non-finite loss", epoch);
        result.loss_curve.push_back(epoch_loss);
    }
    return result;
}

}  // namespace jamsense::nn
