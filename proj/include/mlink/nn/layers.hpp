#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mlink/nn/ops.hpp"
#include "mlink/nn/params.hpp"

namespace mlink::nn {

// Layer primitives. Each holds indices into a ParamSet and implements an
// explicit forward and backward pass; backward accumulates into the
// ParamSet gradient buffers and returns the gradient w.r.t. its input.

struct Dense {
    int w = -1;  // {out, in}
    int b = -1;  // {out}
    std::size_t in = 0, out = 0;

    static Dense create(ParamSet& ps, const std::string& name, std::size_t in,
                        std::size_t out, Rng& rng) {
        Dense d;
        d.in = in;
        d.out = out;
        d.w = ps.add_uniform(name + ".w", {out, in}, in, rng);
        d.b = ps.add_zeros(name + ".b", {out});
        return d;
    }

    Vec forward(const ParamSet& ps, const Vec& x) const {
        const Tensor& W = ps.value(w);
        const Tensor& B = ps.value(b);
        Vec y(out);
        for (std::size_t r = 0; r < out; ++r) {
            double acc = B[r];
            const double* row = &W.values[r * in];
            for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
            y[r] = acc;
        }
        return y;
    }

    /// Accumulates dW, db; returns dx.
    Vec backward(ParamSet& ps, const Vec& x, const Vec& dy) const {
        Tensor& dW = ps.grad(w);
        Tensor& dB = ps.grad(b);
        const Tensor& W = ps.value(w);
        Vec dx(in, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            double g = dy[r];
            dB[r] += g;
            double* drow = &dW.values[r * in];
            const double* row = &W.values[r * in];
            for (std::size_t c = 0; c < in; ++c) {
                drow[c] += g * x[c];
                dx[c] += g * row[c];
            }
        }
        return dx;
    }
};

inline Vec relu(const Vec& x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

inline Vec relu_backward(const Vec& pre, const Vec& dy) {
    Vec dx(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) dx[i] = pre[i] > 0.0 ? dy[i] : 0.0;
    return dx;
}

struct Embedding {
    int table = -1;  // {vocab, dim}
    std::size_t vocab = 0, dim = 0;

    static Embedding create(ParamSet& ps, const std::string& name, std::size_t vocab,
                            std::size_t dim, Rng& rng) {
        Embedding e;
        e.vocab = vocab;
        e.dim = dim;
        e.table = ps.add_uniform(name + ".table", {vocab, dim}, dim, rng);
        return e;
    }

    Vec forward(const ParamSet& ps, int token) const {
        require(token >= 0 && std::size_t(token) < vocab,
                "embedding: token id " + std::to_string(token) + " outside vocabulary of " +
                    std::to_string(vocab));
        const Tensor& T = ps.value(table);
        return Vec(T.values.begin() + std::size_t(token) * dim,
                   T.values.begin() + (std::size_t(token) + 1) * dim);
    }

    void backward(ParamSet& ps, int token, const Vec& d) const {
        Tensor& dT = ps.grad(table);
        double* row = &dT.values[std::size_t(token) * dim];
        for (std::size_t i = 0; i < dim; ++i) row[i] += d[i];
    }
};

/// Standard LSTM cell. Gate order in the stacked weight matrices is
/// input, forget, cell, output.
struct LstmCell {
    int wx = -1;  // {4*hidden, in}
    int wh = -1;  // {4*hidden, hidden}
    int b = -1;   // {4*hidden}
    std::size_t in = 0, hidden = 0;

    struct StepCache {
        Vec x, h_prev, c_prev;
        Vec i, f, g, o;  // post-nonlinearity gates
        Vec c, tc;       // new cell state and tanh of it
    };

    static LstmCell create(ParamSet& ps, const std::string& name, std::size_t in,
                           std::size_t hidden, Rng& rng) {
        LstmCell l;
        l.in = in;
        l.hidden = hidden;
        l.wx = ps.add_uniform(name + ".wx", {4 * hidden, in}, in, rng);
        l.wh = ps.add_uniform(name + ".wh", {4 * hidden, hidden}, hidden, rng);
        l.b = ps.add_zeros(name + ".b", {4 * hidden});
        return l;
    }

    /// Advances (h, c) by one step; fills *cache when given.
    void step(const ParamSet& ps, const Vec& x, Vec& h, Vec& c, StepCache* cache) const {
        const Tensor& Wx = ps.value(wx);
        const Tensor& Wh = ps.value(wh);
        const Tensor& B = ps.value(b);
        Vec z(4 * hidden);
        for (std::size_t r = 0; r < 4 * hidden; ++r) {
            double acc = B[r];
            const double* xrow = &Wx.values[r * in];
            for (std::size_t k = 0; k < in; ++k) acc += xrow[k] * x[k];
            const double* hrow = &Wh.values[r * hidden];
            for (std::size_t k = 0; k < hidden; ++k) acc += hrow[k] * h[k];
            z[r] = acc;
        }
        StepCache local;
        StepCache& s = cache ? *cache : local;
        s.x = x;
        s.h_prev = h;
        s.c_prev = c;
        s.i.resize(hidden);
        s.f.resize(hidden);
        s.g.resize(hidden);
        s.o.resize(hidden);
        s.c.resize(hidden);
        s.tc.resize(hidden);
        for (std::size_t k = 0; k < hidden; ++k) {
            s.i[k] = sigmoid(z[k]);
            s.f[k] = sigmoid(z[hidden + k]);
            s.g[k] = std::tanh(z[2 * hidden + k]);
            s.o[k] = sigmoid(z[3 * hidden + k]);
            s.c[k] = s.f[k] * c[k] + s.i[k] * s.g[k];
            s.tc[k] = std::tanh(s.c[k]);
            h[k] = s.o[k] * s.tc[k];
        }
        c = s.c;
    }

    /// One step of backpropagation through time. On entry dh/dc hold the
    /// gradients w.r.t. this step's outputs; on exit they hold the
    /// gradients w.r.t. the previous step's h and c. dx receives the
    /// input gradient.
    void backward_step(ParamSet& ps, const StepCache& s, Vec& dh, Vec& dc, Vec& dx) const {
        const Tensor& Wx = ps.value(wx);
        const Tensor& Wh = ps.value(wh);
        Tensor& dWx = ps.grad(wx);
        Tensor& dWh = ps.grad(wh);
        Tensor& dB = ps.grad(b);

        Vec dz(4 * hidden);
        Vec dc_prev(hidden);
        for (std::size_t k = 0; k < hidden; ++k) {
            double do_ = dh[k] * s.tc[k];
            double dct = dc[k] + dh[k] * s.o[k] * (1.0 - s.tc[k] * s.tc[k]);
            double di = dct * s.g[k];
            double df = dct * s.c_prev[k];
            double dg = dct * s.i[k];
            dc_prev[k] = dct * s.f[k];
            dz[k] = di * s.i[k] * (1.0 - s.i[k]);
            dz[hidden + k] = df * s.f[k] * (1.0 - s.f[k]);
            dz[2 * hidden + k] = dg * (1.0 - s.g[k] * s.g[k]);
            dz[3 * hidden + k] = do_ * s.o[k] * (1.0 - s.o[k]);
        }

        dx.assign(in, 0.0);
        Vec dh_prev(hidden, 0.0);
        for (std::size_t r = 0; r < 4 * hidden; ++r) {
            double g = dz[r];
            dB[r] += g;
            double* dxrow = &dWx.values[r * in];
            const double* xrow = &Wx.values[r * in];
            for (std::size_t k = 0; k < in; ++k) {
                dxrow[k] += g * s.x[k];
                dx[k] += g * xrow[k];
            }
            double* dhrow = &dWh.values[r * hidden];
            const double* hrow = &Wh.values[r * hidden];
            for (std::size_t k = 0; k < hidden; ++k) {
                dhrow[k] += g * s.h_prev[k];
                dh_prev[k] += g * hrow[k];
            }
        }
        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
};

/// Additive attention: score_t = v . tanh(Wq q + Wk e_t + b), weights by
/// softmax over t, context = sum_t weight_t * e_t.
struct AdditiveAttention {
    int wq = -1;  // {attn, q_dim}
    int wk = -1;  // {attn, k_dim}
    int v = -1;   // {attn}
    int ba = -1;  // {attn}
    std::size_t q_dim = 0, k_dim = 0, attn = 0;

    struct Cache {
        std::vector<Vec> pre;  // tanh outputs per key
        Vec alpha;             // softmax weights
    };

    static AdditiveAttention create(ParamSet& ps, const std::string& name, std::size_t q_dim,
                                    std::size_t k_dim, std::size_t attn, Rng& rng) {
        AdditiveAttention a;
        a.q_dim = q_dim;
        a.k_dim = k_dim;
        a.attn = attn;
        a.wq = ps.add_uniform(name + ".wq", {attn, q_dim}, q_dim, rng);
        a.wk = ps.add_uniform(name + ".wk", {attn, k_dim}, k_dim, rng);
        a.v = ps.add_uniform(name + ".v", {attn}, attn, rng);
        a.ba = ps.add_zeros(name + ".b", {attn});
        return a;
    }

    Vec forward(const ParamSet& ps, const Vec& query, const std::vector<Vec>& keys,
                Cache* cache) const {
        const Tensor& Wq = ps.value(wq);
        const Tensor& Wk = ps.value(wk);
        const Tensor& V = ps.value(v);
        const Tensor& B = ps.value(ba);

        Vec qproj(attn);
        for (std::size_t r = 0; r < attn; ++r) {
            double acc = B[r];
            const double* row = &Wq.values[r * q_dim];
            for (std::size_t c = 0; c < q_dim; ++c) acc += row[c] * query[c];
            qproj[r] = acc;
        }

        std::vector<Vec> pre(keys.size(), Vec(attn));
        Vec scores(keys.size());
        for (std::size_t t = 0; t < keys.size(); ++t) {
            double u = 0.0;
            for (std::size_t r = 0; r < attn; ++r) {
                double acc = qproj[r];
                const double* row = &Wk.values[r * k_dim];
                for (std::size_t c = 0; c < k_dim; ++c) acc += row[c] * keys[t][c];
                pre[t][r] = std::tanh(acc);
                u += V[r] * pre[t][r];
            }
            scores[t] = u;
        }
        Vec alpha = softmax(scores);

        Vec ctx(k_dim, 0.0);
        for (std::size_t t = 0; t < keys.size(); ++t)
            for (std::size_t c = 0; c < k_dim; ++c) ctx[c] += alpha[t] * keys[t][c];

        if (cache) {
            cache->pre = std::move(pre);
            cache->alpha = std::move(alpha);
        }
        return ctx;
    }

    /// Accumulates parameter grads; adds input gradients into dquery and
    /// dkeys (which must be pre-sized).
    void backward(ParamSet& ps, const Vec& query, const std::vector<Vec>& keys,
                  const Cache& s, const Vec& dctx, Vec& dquery,
                  std::vector<Vec>& dkeys) const {
        const Tensor& Wq = ps.value(wq);
        const Tensor& Wk = ps.value(wk);
        const Tensor& V = ps.value(v);
        Tensor& dWq = ps.grad(wq);
        Tensor& dWk = ps.grad(wk);
        Tensor& dV = ps.grad(v);
        Tensor& dB = ps.grad(ba);

        const std::size_t T = keys.size();
        // context sum: dalpha_t = keys[t] . dctx ; dkeys += alpha_t * dctx
        Vec dalpha(T, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t c = 0; c < k_dim; ++c) {
                dalpha[t] += keys[t][c] * dctx[c];
                dkeys[t][c] += s.alpha[t] * dctx[c];
            }
        }
        // softmax backward
        double dot = 0.0;
        for (std::size_t t = 0; t < T; ++t) dot += s.alpha[t] * dalpha[t];
        Vec du(T);
        for (std::size_t t = 0; t < T; ++t) du[t] = s.alpha[t] * (dalpha[t] - dot);

        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t r = 0; r < attn; ++r) {
                double a = s.pre[t][r];
                dV[r] += du[t] * a;
                double dpre = du[t] * V[r] * (1.0 - a * a);
                dB[r] += dpre;
                const double* qrow = &Wq.values[r * q_dim];
                double* dqrow = &dWq.values[r * q_dim];
                for (std::size_t c = 0; c < q_dim; ++c) {
                    dqrow[c] += dpre * query[c];
                    dquery[c] += dpre * qrow[c];
                }
                const double* krow = &Wk.values[r * k_dim];
                double* dkrow = &dWk.values[r * k_dim];
                for (std::size_t c = 0; c < k_dim; ++c) {
                    dkrow[c] += dpre * keys[t][c];
                    dkeys[t][c] += dpre * krow[c];
                }
            }
        }
    }
};

}  // namespace mlink::nn
