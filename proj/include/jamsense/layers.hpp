// SPDX-License-Identifier: Apache-2.0
//
// Layer primitives with hand-written reverse-mode gradients. Backward
// functions accumulate (+=) into parameter gradients and return the input
// gradient.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace jamsense::nn {

// ---------------------------------------------------------------------------
// conv1d: x [C_in x L], w [C_out x C_in x K], b [C_out] -> y [C_out x L_out]

inline std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
    if (kernel == 0 || stride == 0) throw ShapeError("conv1d: kernel and stride must be >= 1");
    if (length < kernel)
        throw ShapeError("conv1d: input length " + std::to_string(length) + " shorter than kernel " +
                         std::to_string(kernel));
    return (length - kernel) / stride + 1;
}

inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
    if (x.rank() != 2 || w.rank() != 3) throw ShapeError("conv1d: expected x [C x L] and w [O x C x K]");
    const std::size_t cin = x.dim(0), len = x.dim(1);
    const std::size_t cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin) throw ShapeError("conv1d: channel mismatch");
    expect_shape(b, {cout}, "conv1d bias");
    const std::size_t lout = conv1d_output_length(len, k, stride);
    Tensor y({cout, lout});
    for (std::size_t o = 0; o < cout; ++o) {
        double* yr = &y.data[o * lout];
        std::fill(yr, yr + lout, b[o]);
        for (std::size_t c = 0; c < cin; ++c) {
            const double* wr = &w.data[(o * cin + c) * k];
            const double* xr = &x.data[c * len];
            for (std::size_t t = 0; t < lout; ++t) {
                const double* xs = xr + t * stride;
                double acc = 0.0;
                for (std::size_t j = 0; j < k; ++j) acc += wr[j] * xs[j];
                yr[t] += acc;
            }
        }
    }
    return y;
}

inline Tensor conv1d_backward(const Tensor& x, const Tensor& w, std::size_t stride, const Tensor& dy, Tensor& dw,
                              Tensor& db) {
    const std::size_t cin = x.dim(0), len = x.dim(1);
    const std::size_t cout = w.dim(0), k = w.dim(2);
    const std::size_t lout = dy.dim(1);
    Tensor dx({cin, len});
    for (std::size_t o = 0; o < cout; ++o) {
        const double* g = &dy.data[o * lout];
        double bsum = 0.0;
        for (std::size_t t = 0; t < lout; ++t) bsum += g[t];
        db[o] += bsum;
        for (std::size_t c = 0; c < cin; ++c) {
            const double* wr = &w.data[(o * cin + c) * k];
            double* dwr = &dw.data[(o * cin + c) * k];
            const double* xr = &x.data[c * len];
            double* dxr = &dx.data[c * len];
            for (std::size_t t = 0; t < lout; ++t) {
                const double gt = g[t];
                const std::size_t s = t * stride;
                for (std::size_t j = 0; j < k; ++j) {
                    dwr[j] += gt * xr[s + j];
                    dxr[s + j] += gt * wr[j];
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor relu(Tensor x) {
    for (auto& v : x.data) v = v > 0.0 ? v : 0.0;
    return x;
}

/// Gradient through a rectifier given its output.
inline Tensor relu_backward(const Tensor& y, Tensor dy) {
    for (std::size_t i = 0; i < dy.size(); ++i)
        if (!(y[i] > 0.0)) dy[i] = 0.0;
    return dy;
}

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// ---------------------------------------------------------------------------
// Dense: x [in], w [in x out], b [out] -> [out]

inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2 || x.size() != w.dim(0))
        throw ShapeError("dense: input size " + std::to_string(x.size()) + " does not match weights " +
                         shape_string(w.shape));
    const std::size_t in = w.dim(0), out = w.dim(1);
    expect_shape(b, {out}, "dense bias");
    Tensor y({out}, b.data);
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        const double* wr = &w.data[i * out];
        for (std::size_t o = 0; o < out; ++o) y[o] += xi * wr[o];
    }
    return y;
}

inline Tensor dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db) {
    const std::size_t in = w.dim(0), out = w.dim(1);
    Tensor dx(x.shape);
    for (std::size_t o = 0; o < out; ++o) db[o] += dy[o];
    for (std::size_t i = 0; i < in; ++i) {
        const double* wr = &w.data[i * out];
        double* dwr = &dw.data[i * out];
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) {
            dwr[o] += x[i] * dy[o];
            acc += wr[o] * dy[o];
        }
        dx[i] = acc;
    }
    return dx;
}

/// Row-wise affine map: x [L x in] -> [L x out].
inline Tensor linear_rows(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t rows = x.dim(0), in = x.dim(1), out = w.dim(1);
    if (w.dim(0) != in) throw ShapeError("linear_rows: feature mismatch");
    Tensor y({rows, out});
    for (std::size_t r = 0; r < rows; ++r) {
        double* yr = &y.data[r * out];
        std::copy(b.data.begin(), b.data.end(), yr);
        const double* xr = &x.data[r * in];
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            const double* wr = &w.data[i * out];
            for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
        }
    }
    return y;
}

inline Tensor linear_rows_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db) {
    const std::size_t rows = x.dim(0), in = x.dim(1), out = w.dim(1);
    Tensor dx({rows, in});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* g = &dy.data[r * out];
        const double* xr = &x.data[r * in];
        double* dxr = &dx.data[r * in];
        for (std::size_t o = 0; o < out; ++o) db[o] += g[o];
        for (std::size_t i = 0; i < in; ++i) {
            const double* wr = &w.data[i * out];
            double* dwr = &dw.data[i * out];
            const double xi = xr[i];
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) {
                dwr[o] += xi * g[o];
                acc += wr[o] * g[o];
            }
            dxr[i] = acc;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy

inline Tensor softmax(const Tensor& x) {
    Tensor y(x.shape);
    const double m = *std::max_element(x.data.begin(), x.data.end());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (y[i] = std::exp(x[i] - m));
    for (auto& v : y.data) v /= s;
    return y;
}

/// -log p[target], computed from logits for stability.
inline double cross_entropy(const Tensor& logits, std::size_t target) {
    const double m = *std::max_element(logits.data.begin(), logits.data.end());
    double s = 0.0;
    for (double v : logits.data) s += std::exp(v - m);
    return m + std::log(s) - logits[target];
}

/// d(cross_entropy)/d(logits) = softmax - onehot.
inline Tensor cross_entropy_backward(const Tensor& probs, std::size_t target) {
    Tensor g = probs;
    g[target] -= 1.0;
    return g;
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout; returns the mask (0 or 1/(1-rate)) so backward can reuse it.
inline Tensor dropout_mask(const std::vector<std::size_t>& shape, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout: rate must be in [0, 1)");
    Tensor m(shape, 1.0);
    if (rate == 0.0) return m;
    const double keep = 1.0 / (1.0 - rate);
    for (auto& v : m.data) v = rng.uniform() < rate ? 0.0 : keep;
    return m;
}

inline Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training, Tensor* mask_out = nullptr) {
    if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout: rate must be in [0, 1)");
    if (!training || rate == 0.0) {
        if (mask_out) *mask_out = Tensor(x.shape, 1.0);
        return x;
    }
    Tensor m = dropout_mask(x.shape, rate, rng);
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= m[i];
    if (mask_out) *mask_out = std::move(m);
    return y;
}

inline Tensor dropout_backward(const Tensor& mask, Tensor dy) {
    for (std::size_t i = 0; i < dy.size(); ++i) dy[i] *= mask[i];
    return dy;
}

// ---------------------------------------------------------------------------
// Temporal mean pooling: [L x d] -> [d]

inline Tensor temporal_pool(const Tensor& x) {
    if (x.rank() != 2 || x.dim(0) == 0) throw ShapeError("temporal_pool: expected non-empty [L x d]");
    const std::size_t len = x.dim(0), d = x.dim(1);
    Tensor y({d});
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t j = 0; j < d; ++j) y[j] += x.at(t, j);
    for (auto& v : y.data) v /= static_cast<double>(len);
    return y;
}

inline Tensor temporal_pool_backward(std::size_t len, const Tensor& dy) {
    const std::size_t d = dy.size();
    Tensor dx({len, d});
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t j = 0; j < d; ++j) dx.at(t, j) = dy[j] * inv;
    return dx;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention

/// The key projection has no bias: it would shift every score of a query
/// row equally and cancel in the softmax.
struct AttentionWeights {
    const Tensor& wq;  // [d x H*dk]
    const Tensor& bq;
    const Tensor& wk;  // [d x H*dk]
    const Tensor& wv;  // [d x H*dk]
    const Tensor& bv;
    const Tensor& wo;  // [H*dk x d_out]
    const Tensor& bo;
    std::size_t heads;
    std::size_t key_dim;
};

struct AttentionGrads {
    Tensor& wq;
    Tensor& bq;
    Tensor& wk;
    Tensor& wv;
    Tensor& bv;
    Tensor& wo;
    Tensor& bo;
};

struct AttentionCache {
    Tensor x;       // [L x d]
    Tensor q, k, v; // [L x H*dk]
    Tensor probs;   // [H x L x L]
    Tensor concat;  // [L x H*dk], heads side by side before the output projection
};

/// softmax(Q K^T / sqrt(dk)) V per head, heads concatenated, then projected.
inline Tensor multi_head_self_attention(const Tensor& x, const AttentionWeights& p, AttentionCache* cache = nullptr) {
    if (x.rank() != 2 || x.dim(0) == 0) throw ShapeError("attention: expected non-empty [L x d] input");
    const std::size_t len = x.dim(0);
    const std::size_t hd = p.heads * p.key_dim;
    if (p.wq.dim(0) != x.dim(1) || p.wq.dim(1) != hd || p.wo.dim(0) != hd)
        throw ShapeError("attention: projection shapes do not match input");
    Tensor q = linear_rows(x, p.wq, p.bq);
    Tensor k = linear_rows(x, p.wk, Tensor({hd}));
    Tensor v = linear_rows(x, p.wv, p.bv);
    Tensor probs({p.heads, len, len});
    Tensor concat({len, hd});
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.key_dim));
    std::vector<double> srow(len);
    for (std::size_t h = 0; h < p.heads; ++h) {
        const std::size_t off = h * p.key_dim;
        for (std::size_t i = 0; i < len; ++i) {
            const double* qi = &q.data[i * hd + off];
            double mx = -INFINITY;
            for (std::size_t j = 0; j < len; ++j) {
                const double* kj = &k.data[j * hd + off];
                double s = 0.0;
                for (std::size_t c = 0; c < p.key_dim; ++c) s += qi[c] * kj[c];
                srow[j] = s * scale;
                mx = std::max(mx, srow[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) z += (srow[j] = std::exp(srow[j] - mx));
            double* pr = &probs.data[(h * len + i) * len];
            double* oi = &concat.data[i * hd + off];
            for (std::size_t j = 0; j < len; ++j) {
                pr[j] = srow[j] / z;
                const double* vj = &v.data[j * hd + off];
                for (std::size_t c = 0; c < p.key_dim; ++c) oi[c] += pr[j] * vj[c];
            }
        }
    }
    Tensor y = linear_rows(concat, p.wo, p.bo);
    if (cache) {
        cache->x = x;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->concat = std::move(concat);
    }
    return y;
}

inline Tensor multi_head_self_attention_backward(const AttentionCache& c, const AttentionWeights& p,
                                                 const Tensor& dy, AttentionGrads g) {
    const std::size_t len = c.x.dim(0);
    const std::size_t hd = p.heads * p.key_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.key_dim));
    Tensor dconcat = linear_rows_backward(c.concat, p.wo, dy, g.wo, g.bo);
    Tensor dq({len, hd}), dk({len, hd}), dv({len, hd});
    std::vector<double> da(len);
    for (std::size_t h = 0; h < p.heads; ++h) {
        const std::size_t off = h * p.key_dim;
        for (std::size_t i = 0; i < len; ++i) {
            const double* pr = &c.probs.data[(h * len + i) * len];
            const double* doi = &dconcat.data[i * hd + off];
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const double* vj = &c.v.data[j * hd + off];
                double* dvj = &dv.data[j * hd + off];
                double s = 0.0;
                for (std::size_t e = 0; e < p.key_dim; ++e) {
                    s += doi[e] * vj[e];
                    dvj[e] += pr[j] * doi[e];
                }
                da[j] = s;
                dot += s * pr[j];
            }
            const double* qi = &c.q.data[i * hd + off];
            double* dqi = &dq.data[i * hd + off];
            for (std::size_t j = 0; j < len; ++j) {
                const double ds = pr[j] * (da[j] - dot) * scale;
                const double* kj = &c.k.data[j * hd + off];
                double* dkj = &dk.data[j * hd + off];
                for (std::size_t e = 0; e < p.key_dim; ++e) {
                    dqi[e] += ds * kj[e];
                    dkj[e] += ds * qi[e];
                }
            }
        }
    }
    Tensor dx = linear_rows_backward(c.x, p.wq, dq, g.wq, g.bq);
    Tensor unused_db({hd});
    const Tensor dxk = linear_rows_backward(c.x, p.wk, dk, g.wk, unused_db);
    const Tensor dxv = linear_rows_backward(c.x, p.wv, dv, g.wv, g.bv);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxk[i] + dxv[i];
    return dx;
}

// ---------------------------------------------------------------------------
// LSTM (gate order: input, forget, candidate, output)

struct LstmWeights {
    const Tensor& wx;  // [d x 4u]
    const Tensor& wh;  // [u x 4u]
    const Tensor& b;   // [4u]
};

struct LstmGrads {
    Tensor& wx;
    Tensor& wh;
    Tensor& b;
};

struct LstmCache {
    Tensor x;      // [L x d]
    Tensor gates;  // [L x 4u], post-activation
    Tensor c;      // [L x u]
    Tensor h;      // [L x u]
};

/// Runs the recurrence from zero state and returns the last hidden state.
inline Tensor lstm_forward(const Tensor& x, const LstmWeights& p, LstmCache* cache = nullptr) {
    if (x.rank() != 2 || x.dim(0) == 0) throw ShapeError("lstm: expected non-empty [L x d] input");
    const std::size_t len = x.dim(0), d = x.dim(1);
    const std::size_t u4 = p.wx.dim(1), u = u4 / 4;
    if (p.wx.dim(0) != d || p.wh.dim(0) != u || p.wh.dim(1) != u4 || p.b.size() != u4)
        throw ShapeError("lstm: weight shapes do not match input");
    Tensor gates({len, u4}), cs({len, u}), hs({len, u});
    std::vector<double> z(u4), hprev(u, 0.0), cprev(u, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
        std::copy(p.b.data.begin(), p.b.data.end(), z.begin());
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = x.at(t, i);
            const double* wr = &p.wx.data[i * u4];
            for (std::size_t o = 0; o < u4; ++o) z[o] += xi * wr[o];
        }
        for (std::size_t i = 0; i < u; ++i) {
            const double hi = hprev[i];
            const double* wr = &p.wh.data[i * u4];
            for (std::size_t o = 0; o < u4; ++o) z[o] += hi * wr[o];
        }
        double* g = &gates.data[t * u4];
        for (std::size_t j = 0; j < u; ++j) {
            g[j] = sigmoid(z[j]);
            g[u + j] = sigmoid(z[u + j]);
            g[2 * u + j] = std::tanh(z[2 * u + j]);
            g[3 * u + j] = sigmoid(z[3 * u + j]);
            const double c = g[u + j] * cprev[j] + g[j] * g[2 * u + j];
            cs.at(t, j) = c;
            hs.at(t, j) = g[3 * u + j] * std::tanh(c);
        }
        std::copy(&cs.data[t * u], &cs.data[t * u] + u, cprev.begin());
        std::copy(&hs.data[t * u], &hs.data[t * u] + u, hprev.begin());
    }
    Tensor out({u}, hprev);
    if (cache) {
        cache->x = x;
        cache->gates = std::move(gates);
        cache->c = std::move(cs);
        cache->h = std::move(hs);
    }
    return out;
}

/// Backpropagation through time from a gradient on the final hidden state.
inline Tensor lstm_backward(const LstmCache& c, const LstmWeights& p, const Tensor& dh_last, LstmGrads g) {
    const std::size_t len = c.x.dim(0), d = c.x.dim(1);
    const std::size_t u4 = p.wx.dim(1), u = u4 / 4;
    Tensor dx({len, d});
    std::vector<double> dh(dh_last.data), dc(u, 0.0), dz(u4), dh_prev(u);
    for (std::size_t t = len; t-- > 0;) {
        const double* gt = &c.gates.data[t * u4];
        for (std::size_t j = 0; j < u; ++j) {
            const double ig = gt[j], fg = gt[u + j], cg = gt[2 * u + j], og = gt[3 * u + j];
            const double ct = c.c.at(t, j);
            const double tc = std::tanh(ct);
            const double c_prev = t > 0 ? c.c.at(t - 1, j) : 0.0;
            dc[j] += dh[j] * og * (1.0 - tc * tc);
            dz[j] = dc[j] * cg * ig * (1.0 - ig);
            dz[u + j] = dc[j] * c_prev * fg * (1.0 - fg);
            dz[2 * u + j] = dc[j] * ig * (1.0 - cg * cg);
            dz[3 * u + j] = dh[j] * tc * og * (1.0 - og);
            dc[j] *= fg;
        }
        for (std::size_t o = 0; o < u4; ++o) g.b[o] += dz[o];
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = c.x.at(t, i);
            const double* wr = &p.wx.data[i * u4];
            double* dwr = &g.wx.data[i * u4];
            double acc = 0.0;
            for (std::size_t o = 0; o < u4; ++o) {
                dwr[o] += xi * dz[o];
                acc += wr[o] * dz[o];
            }
            dx.at(t, i) = acc;
        }
        for (std::size_t i = 0; i < u; ++i) {
            const double hi = t > 0 ? c.h.at(t - 1, i) : 0.0;
            const double* wr = &p.wh.data[i * u4];
            double* dwr = &g.wh.data[i * u4];
            double acc = 0.0;
            for (std::size_t o = 0; o < u4; ++o) {
                dwr[o] += hi * dz[o];
                acc += wr[o] * dz[o];
            }
            dh_prev[i] = acc;
        }
        dh.swap(dh_prev);
    }
    return dx;
}

}  // namespace jamsense::nn
