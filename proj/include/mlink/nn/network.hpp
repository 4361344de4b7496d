#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "mlink/nn/layers.hpp"
#include "mlink/nn/ops.hpp"
#include "mlink/nn/params.hpp"
#include "mlink/types.hpp"

namespace mlink::nn {

struct Sample {
    ModelOutput input;
    ModelOutput target;
};

/// Incremental greedy decoding for sequence-output networks. Feed the
/// previously emitted token (BOS first) and receive the next-step token
/// distribution. Used directly by ensembles that decode jointly.
class DecodeSession {
public:
    virtual ~DecodeSession() = default;
    virtual Vec step(int prev_token) = 0;
};

/// A layer graph with its ParamSet. One writer during training; a
/// frozen network is safe to share across concurrent readers (predict
/// keeps no mutable state).
class Network {
public:
    virtual ~Network() = default;

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    Architecture architecture() const { return arch_; }
    Activation output_activation() const { return act_; }
    std::size_t hidden_width() const { return hidden_; }

    /// Forward pass. Sequence outputs are produced by greedy decoding,
    /// terminated at EOS or max_len. *hidden_out, when given, receives
    /// the final hidden activation feeding the output head.
    ModelOutput predict(const ModelOutput& input, Vec* hidden_out = nullptr) const {
        return do_predict(input, hidden_out);
    }

    /// Mean loss over the batch. Zeroes and then accumulates parameter
    /// gradients of the mean loss.
    double loss_and_grad(const std::vector<Sample>& batch, LossKind kind) {
        params_.zero_grads();
        return compute(batch, kind, true);
    }

    /// Mean loss only; gradient buffers untouched.
    double batch_loss(const std::vector<Sample>& batch, LossKind kind) const {
        return const_cast<Network*>(this)->compute(batch, kind, false);
    }

    virtual std::unique_ptr<DecodeSession> start_decode(const ModelOutput& input) const {
        (void)input;
        fail("decode session: network does not produce sequences");
    }

protected:
    Network(Architecture arch, Activation act, std::size_t hidden)
        : arch_(arch), act_(act), hidden_(hidden) {}

    virtual ModelOutput do_predict(const ModelOutput& input, Vec* hidden_out) const = 0;

    /// Shared forward(+backward) body; must not mutate state when
    /// with_grad is false.
    virtual double compute(const std::vector<Sample>& batch, LossKind kind, bool with_grad) = 0;

    static const Vec& expect_vec(const ModelOutput& o, std::size_t dim, const char* what) {
        const Vec* v = std::get_if<Vec>(&o);
        require(v != nullptr, std::string(what) + ": expected a vector output");
        require(v->size() == dim, std::string(what) + ": dimension " + std::to_string(v->size()) +
                                      " does not match declared " + std::to_string(dim));
        return *v;
    }

    static const TokenSeq& expect_tokens(const ModelOutput& o, const char* what) {
        const TokenSeq* t = std::get_if<TokenSeq>(&o);
        require(t != nullptr, std::string(what) + ": expected a token sequence");
        return *t;
    }

    static TokenSeq with_eos(const TokenSeq& content) {
        TokenSeq t = content;
        t.push_back(kEos);
        return t;
    }

    ParamSet params_;
    Architecture arch_;
    Activation act_;
    std::size_t hidden_;
};

// ---------------------------------------------------------------------------
// Vec-to-Vec: ReLU MLP with a task-specific head.

class VecToVecNet final : public Network {
public:
    VecToVecNet(std::size_t in_dim, std::size_t out_dim, Activation act, std::size_t hidden,
                Rng& rng)
        : Network(Architecture::Vec2Vec, act, hidden), in_(in_dim), out_(out_dim) {
        l1_ = Dense::create(params_, "mlp.1", in_, hidden_, rng);
        l2_ = Dense::create(params_, "mlp.2", hidden_, out_, rng);
    }

    ModelOutput do_predict(const ModelOutput& input, Vec* hidden_out) const override {
        const Vec& x = expect_vec(input, in_, "vec2vec input");
        Vec h = relu(l1_.forward(params_, x));
        if (hidden_out) *hidden_out = h;
        return apply_activation(act_, l2_.forward(params_, h));
    }

    // Test hooks for hand-built nets.
    const Dense& layer1() const { return l1_; }
    const Dense& layer2() const { return l2_; }

protected:
    double compute(const std::vector<Sample>& batch, LossKind kind, bool with_grad) override {
        double total = 0.0;
        const double inv = 1.0 / double(batch.size());
        for (const Sample& s : batch) {
            const Vec& x = expect_vec(s.input, in_, "vec2vec input");
            const Vec& t = expect_vec(s.target, out_, "vec2vec target");
            Vec pre = l1_.forward(params_, x);
            Vec h = relu(pre);
            Vec y = apply_activation(act_, l2_.forward(params_, h));
            VectorLoss vl = vector_loss(kind, act_, y, t);
            total += vl.loss;
            if (!with_grad) continue;
            for (double& g : vl.dlogits) g *= inv;
            Vec dh = l2_.backward(params_, h, vl.dlogits);
            l1_.backward(params_, x, relu_backward(pre, dh));
        }
        return total * inv;
    }

private:
    std::size_t in_, out_;
    Dense l1_, l2_;
};

// ---------------------------------------------------------------------------
// Seq-to-Vec: embedding, LSTM over the tokens, then an MLP head.

class SeqToVecNet final : public Network {
public:
    SeqToVecNet(std::size_t vocab, std::size_t out_dim, Activation act, std::size_t hidden,
                Rng& rng)
        : Network(Architecture::Seq2Vec, act, hidden), vocab_(vocab), out_(out_dim) {
        emb_ = Embedding::create(params_, "enc.emb", vocab_, hidden_, rng);
        lstm_ = LstmCell::create(params_, "enc.lstm", hidden_, hidden_, rng);
        l1_ = Dense::create(params_, "mlp.1", hidden_, hidden_, rng);
        l2_ = Dense::create(params_, "mlp.2", hidden_, out_, rng);
    }

    ModelOutput do_predict(const ModelOutput& input, Vec* hidden_out) const override {
        TokenSeq toks = with_eos(expect_tokens(input, "seq2vec input"));
        Vec h(hidden_, 0.0), c(hidden_, 0.0);
        for (int tok : toks) {
            Vec x = emb_.forward(params_, tok);
            lstm_.step(params_, x, h, c, nullptr);
        }
        Vec hh = relu(l1_.forward(params_, h));
        if (hidden_out) *hidden_out = hh;
        return apply_activation(act_, l2_.forward(params_, hh));
    }

protected:
    double compute(const std::vector<Sample>& batch, LossKind kind, bool with_grad) override {
        double total = 0.0;
        const double inv = 1.0 / double(batch.size());
        std::vector<LstmCell::StepCache> caches;
        for (const Sample& s : batch) {
            TokenSeq toks = with_eos(expect_tokens(s.input, "seq2vec input"));
            const Vec& t = expect_vec(s.target, out_, "seq2vec target");
            caches.assign(toks.size(), {});
            Vec h(hidden_, 0.0), c(hidden_, 0.0);
            for (std::size_t k = 0; k < toks.size(); ++k) {
                Vec x = emb_.forward(params_, toks[k]);
                lstm_.step(params_, x, h, c, &caches[k]);
            }
            Vec pre = l1_.forward(params_, h);
            Vec hh = relu(pre);
            Vec y = apply_activation(act_, l2_.forward(params_, hh));
            VectorLoss vl = vector_loss(kind, act_, y, t);
            total += vl.loss;
            if (!with_grad) continue;
            for (double& g : vl.dlogits) g *= inv;
            Vec dhh = l2_.backward(params_, hh, vl.dlogits);
            Vec dh = l1_.backward(params_, h, relu_backward(pre, dhh));
            Vec dc(hidden_, 0.0), dx;
            for (std::size_t k = toks.size(); k-- > 0;) {
                lstm_.backward_step(params_, caches[k], dh, dc, dx);
                emb_.backward(params_, toks[k], dx);
            }
        }
        return total * inv;
    }

private:
    std::size_t vocab_, out_;
    Embedding emb_;
    LstmCell lstm_;
    Dense l1_, l2_;
};

// ---------------------------------------------------------------------------
// Shared decoder: embedding, LSTM, additive attention over the encoder
// states, and a fully-connected head over [hidden; context], in that
// order. Steps use a softmax token head; greedy decoding stops at EOS
// or after max_len content tokens.

struct Decoder {
    Embedding emb;
    LstmCell lstm;
    AdditiveAttention attn;
    Dense out;
    std::size_t vocab = 0, hidden = 0, enc_dim = 0, max_len = 0;

    struct StepTrace {
        LstmCell::StepCache lstm;
        AdditiveAttention::Cache attn;
        Vec h_post, ctx, cat, dist;
        int input_token = kBos;
    };

    static Decoder create(ParamSet& ps, const std::string& name, std::size_t vocab,
                          std::size_t hidden, std::size_t enc_dim, std::size_t max_len,
                          Rng& rng) {
        Decoder d;
        d.vocab = vocab;
        d.hidden = hidden;
        d.enc_dim = enc_dim;
        d.max_len = max_len;
        d.emb = Embedding::create(ps, name + ".emb", vocab, hidden, rng);
        d.lstm = LstmCell::create(ps, name + ".lstm", hidden, hidden, rng);
        d.attn = AdditiveAttention::create(ps, name + ".attn", hidden, enc_dim, hidden, rng);
        d.out = Dense::create(ps, name + ".out", hidden + enc_dim, vocab, rng);
        return d;
    }

    Vec step_forward(const ParamSet& ps, int prev_token, Vec& h, Vec& c,
                     const std::vector<Vec>& enc, StepTrace* trace) const {
        Vec x = emb.forward(ps, prev_token);
        lstm.step(ps, x, h, c, trace ? &trace->lstm : nullptr);
        Vec ctx = attn.forward(ps, h, enc, trace ? &trace->attn : nullptr);
        Vec cat(hidden + enc_dim);
        std::copy(h.begin(), h.end(), cat.begin());
        std::copy(ctx.begin(), ctx.end(), cat.begin() + std::ptrdiff_t(hidden));
        Vec dist = softmax(out.forward(ps, cat));
        if (trace) {
            trace->input_token = prev_token;
            trace->h_post = h;
            trace->ctx = std::move(ctx);
            trace->cat = std::move(cat);
            trace->dist = dist;
        }
        return dist;
    }

    TokenSeq greedy_decode(const ParamSet& ps, const std::vector<Vec>& enc, Vec h,
                           Vec* hidden_out) const {
        Vec c(hidden, 0.0);
        TokenSeq content;
        int prev = kBos;
        for (std::size_t step = 0; step <= max_len; ++step) {
            Vec dist = step_forward(ps, prev, h, c, enc, nullptr);
            int tok = int(std::max_element(dist.begin(), dist.end()) - dist.begin());
            if (hidden_out) *hidden_out = h;
            if (tok == kEos || content.size() == max_len) break;
            content.push_back(tok);
            prev = tok;
        }
        return content;
    }

    double teacher_loss(const ParamSet& ps, const std::vector<Vec>& enc, Vec h,
                        const TokenSeq& content) const {
        TokenSeq targets = content;
        targets.push_back(kEos);
        Vec c(hidden, 0.0);
        int prev = kBos;
        double total = 0.0;
        for (int tgt : targets) {
            Vec dist = step_forward(ps, prev, h, c, enc, nullptr);
            total += -std::log(std::max(dist[std::size_t(tgt)], kLogFloor));
            prev = tgt;
        }
        return total / double(targets.size());
    }

    /// Teacher-forced loss with backpropagation through time. dlogits
    /// are scaled by `scale / steps`; encoder-state gradients accumulate
    /// into denc (pre-sized to enc), the initial-hidden gradient into dh0.
    double teacher_loss_and_grad(ParamSet& ps, const std::vector<Vec>& enc, const Vec& h0,
                                 const TokenSeq& content, double scale, std::vector<Vec>& denc,
                                 Vec& dh0) const {
        TokenSeq targets = content;
        targets.push_back(kEos);
        const std::size_t m = targets.size();
        std::vector<StepTrace> traces(m);
        Vec h = h0, c(hidden, 0.0);
        int prev = kBos;
        double total = 0.0;
        for (std::size_t s = 0; s < m; ++s) {
            Vec dist = step_forward(ps, prev, h, c, enc, &traces[s]);
            total += -std::log(std::max(dist[std::size_t(targets[s])], kLogFloor));
            prev = targets[s];
        }

        const double step_scale = scale / double(m);
        Vec dh(hidden, 0.0), dc(hidden, 0.0), dx;
        for (std::size_t s = m; s-- > 0;) {
            Vec dlogits = traces[s].dist;
            dlogits[std::size_t(targets[s])] -= 1.0;
            for (double& g : dlogits) g *= step_scale;
            Vec dcat = out.backward(ps, traces[s].cat, dlogits);
            Vec dctx(dcat.begin() + std::ptrdiff_t(hidden), dcat.end());
            for (std::size_t k = 0; k < hidden; ++k) dh[k] += dcat[k];
            attn.backward(ps, traces[s].h_post, enc, traces[s].attn, dctx, dh, denc);
            lstm.backward_step(ps, traces[s].lstm, dh, dc, dx);
            emb.backward(ps, traces[s].input_token, dx);
        }
        for (std::size_t k = 0; k < hidden; ++k) dh0[k] += dh[k];
        return total / double(m);
    }
};

namespace detail {
class DecoderSession final : public DecodeSession {
public:
    DecoderSession(const ParamSet& ps, const Decoder& dec, std::vector<Vec> enc, Vec h0)
        : ps_(ps), dec_(dec), enc_(std::move(enc)), h_(std::move(h0)), c_(dec.hidden, 0.0) {}

    Vec step(int prev_token) override {
        return dec_.step_forward(ps_, prev_token, h_, c_, enc_, nullptr);
    }

private:
    const ParamSet& ps_;
    const Decoder& dec_;
    std::vector<Vec> enc_;
    Vec h_, c_;
};
}  // namespace detail

// ---------------------------------------------------------------------------
// Vec-to-Seq: MLP encoder, then the shared decoder attending over the
// single encoded state.

class VecToSeqNet final : public Network {
public:
    VecToSeqNet(std::size_t in_dim, std::size_t vocab, std::size_t max_len, std::size_t hidden,
                Rng& rng)
        : Network(Architecture::Vec2Seq, Activation::Softmax, hidden), in_(in_dim) {
        e1_ = Dense::create(params_, "enc.1", in_, hidden_, rng);
        e2_ = Dense::create(params_, "enc.2", hidden_, hidden_, rng);
        dec_ = Decoder::create(params_, "dec", vocab, hidden_, hidden_, max_len, rng);
    }

    ModelOutput do_predict(const ModelOutput& input, Vec* hidden_out) const override {
        const Vec& x = expect_vec(input, in_, "vec2seq input");
        Vec state = encode(x, nullptr);
        return dec_.greedy_decode(params_, {state}, state, hidden_out);
    }

    std::unique_ptr<DecodeSession> start_decode(const ModelOutput& input) const override {
        const Vec& x = expect_vec(input, in_, "vec2seq input");
        Vec state = encode(x, nullptr);
        return std::make_unique<detail::DecoderSession>(params_, dec_,
                                                        std::vector<Vec>{state}, state);
    }

protected:
    double compute(const std::vector<Sample>& batch, LossKind kind, bool with_grad) override {
        require(kind == LossKind::SequenceTokenCrossEntropy,
                "vec2seq: sequence targets train with sequence token cross entropy");
        double total = 0.0;
        const double inv = 1.0 / double(batch.size());
        for (const Sample& s : batch) {
            const Vec& x = expect_vec(s.input, in_, "vec2seq input");
            const TokenSeq& content = expect_tokens(s.target, "vec2seq target");
            Vec pre;
            Vec state = encode(x, &pre);
            std::vector<Vec> enc{state};
            if (!with_grad) {
                total += dec_.teacher_loss(params_, enc, state, content);
                continue;
            }
            std::vector<Vec> denc{Vec(hidden_, 0.0)};
            Vec dh0(hidden_, 0.0);
            total += dec_.teacher_loss_and_grad(params_, enc, state, content, inv, denc, dh0);
            // h0 and the single attention key are the same encoder state
            for (std::size_t k = 0; k < hidden_; ++k) dh0[k] += denc[0][k];
            Vec hrelu = relu(pre);
            Vec dhr = e2_.backward(params_, hrelu, dh0);
            e1_.backward(params_, x, relu_backward(pre, dhr));
        }
        return total * inv;
    }

private:
    Vec encode(const Vec& x, Vec* pre_out) const {
        Vec pre = e1_.forward(params_, x);
        Vec state = e2_.forward(params_, relu(pre));
        if (pre_out) *pre_out = std::move(pre);
        return state;
    }

    std::size_t in_;
    Dense e1_, e2_;
    Decoder dec_;
};

// ---------------------------------------------------------------------------
// Seq-to-Seq: embedding + LSTM encoder, shared decoder attending over
// every encoder step.

class SeqToSeqNet final : public Network {
public:
    SeqToSeqNet(std::size_t src_vocab, std::size_t vocab, std::size_t max_len,
                std::size_t hidden, Rng& rng)
        : Network(Architecture::Seq2Seq, Activation::Softmax, hidden), src_vocab_(src_vocab) {
        eemb_ = Embedding::create(params_, "enc.emb", src_vocab_, hidden_, rng);
        elstm_ = LstmCell::create(params_, "enc.lstm", hidden_, hidden_, rng);
        dec_ = Decoder::create(params_, "dec", vocab, hidden_, hidden_, max_len, rng);
    }

    ModelOutput do_predict(const ModelOutput& input, Vec* hidden_out) const override {
        std::vector<Vec> enc = encode(with_eos(expect_tokens(input, "seq2seq input")), nullptr);
        return dec_.greedy_decode(params_, enc, enc.back(), hidden_out);
    }

    std::unique_ptr<DecodeSession> start_decode(const ModelOutput& input) const override {
        std::vector<Vec> enc = encode(with_eos(expect_tokens(input, "seq2seq input")), nullptr);
        Vec h0 = enc.back();
        return std::make_unique<detail::DecoderSession>(params_, dec_, std::move(enc),
                                                        std::move(h0));
    }

protected:
    double compute(const std::vector<Sample>& batch, LossKind kind, bool with_grad) override {
        require(kind == LossKind::SequenceTokenCrossEntropy,
                "seq2seq: sequence targets train with sequence token cross entropy");
        double total = 0.0;
        const double inv = 1.0 / double(batch.size());
        std::vector<LstmCell::StepCache> caches;
        for (const Sample& s : batch) {
            TokenSeq src = with_eos(expect_tokens(s.input, "seq2seq input"));
            const TokenSeq& content = expect_tokens(s.target, "seq2seq target");
            caches.assign(src.size(), {});
            std::vector<Vec> enc = encode(src, &caches);
            if (!with_grad) {
                total += dec_.teacher_loss(params_, enc, enc.back(), content);
                continue;
            }
            std::vector<Vec> denc(enc.size(), Vec(hidden_, 0.0));
            Vec dh0(hidden_, 0.0);
            total += dec_.teacher_loss_and_grad(params_, enc, enc.back(), content, inv, denc, dh0);
            Vec dh = std::move(dh0), dc(hidden_, 0.0), dx;
            for (std::size_t k = src.size(); k-- > 0;) {
                for (std::size_t j = 0; j < hidden_; ++j) dh[j] += denc[k][j];
                elstm_.backward_step(params_, caches[k], dh, dc, dx);
                eemb_.backward(params_, src[k], dx);
            }
        }
        return total * inv;
    }

private:
    std::vector<Vec> encode(const TokenSeq& src, std::vector<LstmCell::StepCache>* caches) const {
        Vec h(hidden_, 0.0), c(hidden_, 0.0);
        std::vector<Vec> states;
        states.reserve(src.size());
        for (std::size_t k = 0; k < src.size(); ++k) {
            Vec x = eemb_.forward(params_, src[k]);
            elstm_.step(params_, x, h, c, caches ? &(*caches)[k] : nullptr);
            states.push_back(h);
        }
        return states;
    }

    std::size_t src_vocab_;
    Embedding eemb_;
    LstmCell elstm_;
    Decoder dec_;
};

// ---------------------------------------------------------------------------

inline std::size_t hidden_width_for(const OutputFormat& target, double width_factor) {
    require(width_factor > 0.0, "network: width factor must be positive");
    auto w = std::size_t(std::llround(width_factor * double(head_dim(target))));
    return std::max<std::size_t>(w, 1);
}

/// Builds the architecture selected by the (source, target) format pair.
/// Hidden width defaults to twice the target output dimension.
inline std::unique_ptr<Network> build_network(const OutputFormat& source,
                                              const OutputFormat& target, Activation act,
                                              double width_factor, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t hidden = hidden_width_for(target, width_factor);
    switch (select_architecture(source, target)) {
        case Architecture::Vec2Vec:
            return std::make_unique<VecToVecNet>(std::get<VectorFormat>(source).dim,
                                                 std::get<VectorFormat>(target).dim, act, hidden,
                                                 rng);
        case Architecture::Seq2Vec:
            return std::make_unique<SeqToVecNet>(std::get<SequenceFormat>(source).vocab,
                                                 std::get<VectorFormat>(target).dim, act, hidden,
                                                 rng);
        case Architecture::Vec2Seq: {
            const auto& t = std::get<SequenceFormat>(target);
            return std::make_unique<VecToSeqNet>(std::get<VectorFormat>(source).dim, t.vocab,
                                                 t.max_len, hidden, rng);
        }
        case Architecture::Seq2Seq: {
            const auto& t = std::get<SequenceFormat>(target);
            return std::make_unique<SeqToSeqNet>(std::get<SequenceFormat>(source).vocab, t.vocab,
                                                 t.max_len, hidden, rng);
        }
    }
    fail("network: unreachable architecture");
}

/// One optimizer step on a batch. Returns the pre-update mean batch
/// loss. A non-finite loss or gradient aborts the step with parameters
/// unchanged.
inline double train_step(Network& net, const std::vector<Sample>& batch, LossKind kind,
                         RmspropState& opt) {
    require(!batch.empty(), "train step: batch is empty");
    for (const Sample& s : batch)
        if (const Vec* v = std::get_if<Vec>(&s.target))
            for (double x : *v)
                require(std::isfinite(x), "train step: non-finite target value");
    double loss = net.loss_and_grad(batch, kind);
    if (!std::isfinite(loss)) fail("train step aborted: non-finite loss, parameters unchanged");
    if (!net.params().grads_finite())
        fail("train step aborted: non-finite gradient, parameters unchanged");
    opt.step(net.params());
    return loss;
}

/// Max relative error between analytic gradients and central finite
/// differences, |g - g_fd| / max(|g_fd|, 1e-8), over every parameter.
inline double grad_check(Network& net, const std::vector<Sample>& batch, LossKind kind,
                         double h = 1e-5) {
    ParamSet& ps = net.params();
    require(ps.total_count() <= 10000, "grad check: parameter count exceeds 10^4");
    net.loss_and_grad(batch, kind);
    std::vector<double> analytic = ps.flatten_grads();

    double max_rel = 0.0;
    std::size_t flat = 0;
    for (std::size_t t = 0; t < ps.tensor_count(); ++t) {
        Tensor& v = ps.value(int(t));
        for (std::size_t k = 0; k < v.size(); ++k, ++flat) {
            const double orig = v[k];
            v[k] = orig + h;
            double up = net.batch_loss(batch, kind);
            v[k] = orig - h;
            double down = net.batch_loss(batch, kind);
            v[k] = orig;
            double fd = (up - down) / (2.0 * h);
            double rel = std::abs(analytic[flat] - fd) / std::max(std::abs(fd), 1e-8);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace mlink::nn
