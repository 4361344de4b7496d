#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "mlink/link.hpp"

namespace mlink {

/// Per-source weighted combination h_{A,j}. Members' post-activation
/// predictions are combined as z = sum_i w_i (.) g_i + b (diagonal
/// per-dimension weights), then re-activated for the target task. With
/// one member and w = 1, b = 0 the pre-activation is exactly the
/// member's prediction, so the ensemble fits as an identity layer.
class EnsembleLink : public Predictor {
public:
    struct Member {
        std::string name;  // source model_id, or a caller-chosen label when fusing
        std::shared_ptr<const Predictor> predictor;
    };

    EnsembleLink(ModelDescriptor target, std::vector<Member> members)
        : target_(std::move(target)), members_(std::move(members)) {
        require(!members_.empty(), "ensemble: empty source set");
        std::set<std::string> names;
        for (const auto& m : members_) {
            require(m.predictor != nullptr, "ensemble: null member");
            require(m.predictor->target_id() == target_.model_id,
                    "ensemble: member '" + m.name + "' targets " + m.predictor->target_id() +
                        ", not " + target_.model_id);
            require(names.insert(m.name).second, "ensemble: duplicate member '" + m.name + "'");
        }
        const std::size_t d = head_dim(target_.output);
        const double w0 = members_.size() == 1 ? 1.0 : 1.0 / double(members_.size());
        for (const auto& m : members_) {
            Tensor w({d});
            w.fill(w0);
            weight_ix_.push_back(params_.add("w." + m.name, std::move(w)));
        }
        bias_ix_ = params_.add_zeros("bias", {d});
    }

    const std::string& target_id() const override { return target_.model_id; }
    const ModelDescriptor& target_descriptor() const { return target_; }
    bool sequence_target() const override { return is_sequence(target_.output); }
    const std::vector<Member>& members() const { return members_; }
    nn::ParamSet& combiner_params() { return params_; }
    const nn::ParamSet& combiner_params() const { return params_; }

    std::vector<std::string> required_sources() const override {
        std::set<std::string> out;
        for (const auto& m : members_)
            for (auto& s : m.predictor->required_sources()) out.insert(s);
        return {out.begin(), out.end()};
    }

    /// Members' parameters plus the combiner weights.
    std::size_t parameter_count() const override {
        std::size_t n = params_.total_count();
        for (const auto& m : members_) n += m.predictor->parameter_count();
        return n;
    }

    std::size_t combiner_parameter_count() const { return params_.total_count(); }

    const Vec& weights(const std::string& member_name) const {
        for (std::size_t i = 0; i < members_.size(); ++i)
            if (members_[i].name == member_name) return params_.value(weight_ix_[i]).values;
        fail("ensemble: no member '" + member_name + "'");
    }
    const Vec& bias() const { return params_.value(bias_ix_).values; }

    /// Pre-activation combination of the members' predictions.
    Vec pre_activation(const OutputsById& sources) const {
        require(!sequence_target(), "ensemble: pre-activation is per step for sequence targets");
        std::vector<Vec> preds;
        preds.reserve(members_.size());
        for (const auto& m : members_) preds.push_back(std::get<Vec>(m.predictor->predict(sources)));
        return combine(preds);
    }

    ModelOutput predict(const OutputsById& sources) const override {
        if (!sequence_target())
            return nn::apply_activation(target_.activation(), pre_activation(sources));
        // Joint greedy decoding: every member advances on the token the
        // combined distribution emits.
        const auto& fmt = std::get<SequenceFormat>(target_.output);
        std::vector<std::unique_ptr<nn::DecodeSession>> sessions;
        for (const auto& m : members_) sessions.push_back(m.predictor->start_decode(sources));
        TokenSeq content;
        int prev = kBos;
        for (std::size_t step = 0; step <= fmt.max_len; ++step) {
            std::vector<Vec> dists;
            dists.reserve(sessions.size());
            for (auto& s : sessions) dists.push_back(s->step(prev));
            Vec dist = nn::softmax(combine(dists));
            int tok = int(std::max_element(dist.begin(), dist.end()) - dist.begin());
            if (tok == kEos || content.size() == fmt.max_len) break;
            content.push_back(tok);
            prev = tok;
        }
        return content;
    }

    std::unique_ptr<nn::DecodeSession> start_decode(const OutputsById& sources) const override {
        require(sequence_target(), "ensemble: not a sequence target");
        std::vector<std::unique_ptr<nn::DecodeSession>> sessions;
        for (const auto& m : members_) sessions.push_back(m.predictor->start_decode(sources));
        return std::make_unique<Session>(*this, std::move(sessions));
    }

    /// Trains the combination weights on aligned rows; members stay
    /// frozen. Same optimizer and defaults as link training.
    TrainReport train(const AlignedDataset& data, const TrainOptions& opts) {
        require(data.target_id == target_.model_id, "ensemble train: dataset target mismatch");
        require(!data.rows.empty(), "ensemble train: no rows");

        // Members' predictions per row are fixed; precompute them.
        struct RowFeed {
            std::vector<ModelOutput> member_preds;  // vector targets
            OutputsById source_outputs;             // sequence targets re-decode per step
            const ModelOutput* target;
        };
        std::vector<RowFeed> feeds;
        feeds.reserve(data.rows.size());
        for (const auto& row : data.rows) {
            RowFeed feed;
            OutputsById by_id;
            for (std::size_t s = 0; s < data.source_ids.size(); ++s)
                by_id[data.source_ids[s]] = row.sources[s];
            if (!sequence_target())
                for (const auto& m : members_) feed.member_preds.push_back(m.predictor->predict(by_id));
            else
                feed.source_outputs = std::move(by_id);
            feed.target = &row.target;
            feeds.push_back(std::move(feed));
        }

        nn::RmspropState opt(opts.learning_rate);
        Rng shuffle_rng(opts.seed);
        std::vector<std::size_t> order(feeds.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        TrainReport report;
        for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
            shuffle_rng.shuffle(order);
            double epoch_loss = 0.0;
            std::size_t seen = 0;
            for (std::size_t at = 0; at < order.size(); at += opts.batch) {
                params_.zero_grads();
                double loss = 0.0;
                std::size_t n = std::min(opts.batch, order.size() - at);
                for (std::size_t k = 0; k < n; ++k) {
                    const RowFeed& feed = feeds[order[at + k]];
                    loss += sequence_target()
                                ? sequence_row_loss_grad(feed.source_outputs,
                                                         std::get<TokenSeq>(*feed.target),
                                                         1.0 / double(n))
                                : vector_row_loss_grad(feed.member_preds,
                                                       std::get<Vec>(*feed.target),
                                                       1.0 / double(n));
                }
                loss /= double(n);
                if (!std::isfinite(loss))
                    fail("ensemble training diverged at epoch " + std::to_string(epoch));
                opt.step(params_);
                epoch_loss += loss * double(n);
                seen += n;
            }
            report.epoch_loss.push_back(epoch_loss / double(seen));
        }
        return report;
    }

    /// Reuses the learned weights for a subset of members. Remaining
    /// weight vectors are rescaled per dimension to preserve the total
    /// weight mass; dimensions whose kept-sum magnitude is below 1e-9
    /// are left unscaled. Restricting to the full member set is an
    /// exact identity.
    EnsembleLink restrict_to_subset(const std::vector<std::string>& keep_names) const {
        require(!keep_names.empty(), "ensemble: cannot restrict to an empty subset");
        std::vector<Member> kept;
        std::vector<int> kept_ix;
        for (const auto& name : keep_names) {
            bool found = false;
            for (std::size_t i = 0; i < members_.size(); ++i)
                if (members_[i].name == name) {
                    kept.push_back(members_[i]);
                    kept_ix.push_back(weight_ix_[i]);
                    found = true;
                    break;
                }
            require(found, "ensemble: cannot restrict, no member '" + name + "'");
        }

        EnsembleLink out(target_, kept);
        const std::size_t d = head_dim(target_.output);
        for (std::size_t dim = 0; dim < d; ++dim) {
            double full_sum = 0.0, kept_sum = 0.0;
            for (int ix : weight_ix_) full_sum += params_.value(ix)[dim];
            for (int ix : kept_ix) kept_sum += params_.value(ix)[dim];
            double factor = std::abs(kept_sum) < 1e-9 ? 1.0 : full_sum / kept_sum;
            for (std::size_t m = 0; m < kept_ix.size(); ++m)
                out.params_.value(out.weight_ix_[m])[dim] = params_.value(kept_ix[m])[dim] * factor;
        }
        out.params_.value(out.bias_ix_).values = params_.value(bias_ix_).values;
        return out;
    }

    // Checkpoint: JSON header (target, ordered member names) plus the
    // combiner parameter stream. Member predictors are resolved by the
    // loader from its link registry.
    std::vector<std::uint8_t> save() const {
        nlohmann::json h;
        h["target_id"] = target_.model_id;
        h["target"] = descriptor_to_json(target_);
        std::vector<std::string> names;
        for (const auto& m : members_) names.push_back(m.name);
        h["members"] = names;
        std::string header = h.dump();
        ByteWriter w;
        w.bytes("MLKE", 4);
        w.u16(1);
        w.u32(std::uint32_t(header.size()));
        w.str(header);
        auto params = nn::save_params(params_);
        w.bytes(params.data(), params.size());
        return w.take();
    }

    static EnsembleLink load(const std::vector<std::uint8_t>& bytes,
                             const std::vector<Member>& available) {
        ByteReader r(bytes);
        require(r.str(4) == "MLKE", "ensemble checkpoint: bad magic");
        require(r.u16() == 1, "ensemble checkpoint: unsupported version");
        std::uint32_t hlen = r.u32();
        nlohmann::json h = nlohmann::json::parse(r.str(hlen), nullptr, false);
        require(!h.is_discarded(), "ensemble checkpoint: corrupt header");
        ModelDescriptor target = descriptor_from_json(h.at("target"));
        std::vector<Member> members;
        for (const auto& name : h.at("members")) {
            bool found = false;
            for (const auto& m : available)
                if (m.name == name.get<std::string>()) {
                    members.push_back(m);
                    found = true;
                    break;
                }
            require(found, "ensemble checkpoint: member '" + name.get<std::string>() +
                               "' not available");
        }
        EnsembleLink out(std::move(target), std::move(members));
        std::vector<std::uint8_t> pbytes(bytes.begin() + std::ptrdiff_t(r.pos()), bytes.end());
        nn::ParamSet loaded = nn::load_params(pbytes);
        require(loaded.tensor_count() == out.params_.tensor_count(),
                "ensemble checkpoint: parameter layout mismatch");
        out.params_.assign_values(loaded.flatten_values());
        return out;
    }

    void save_file(const std::filesystem::path& path) const {
        auto bytes = save();
        std::ofstream f(path, std::ios::binary);
        require(f.good(), "ensemble checkpoint: cannot open " + path.string());
        f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    }

    /// Predicted-vs-exact performance over aligned rows.
    LinkPerformance evaluate(const AlignedDataset& data) const {
        std::vector<ModelOutput> preds, targets;
        for (const auto& row : data.rows) {
            OutputsById by_id;
            for (std::size_t s = 0; s < data.source_ids.size(); ++s)
                by_id[data.source_ids[s]] = row.sources[s];
            preds.push_back(predict(by_id));
            targets.push_back(row.target);
        }
        return evaluate_performance(preds, targets, target_.metric);
    }

private:
    class Session final : public nn::DecodeSession {
    public:
        Session(const EnsembleLink& ens, std::vector<std::unique_ptr<nn::DecodeSession>> members)
            : ens_(ens), members_(std::move(members)) {}
        Vec step(int prev_token) override {
            std::vector<Vec> dists;
            dists.reserve(members_.size());
            for (auto& m : members_) dists.push_back(m->step(prev_token));
            return nn::softmax(ens_.combine(dists));
        }

    private:
        const EnsembleLink& ens_;
        std::vector<std::unique_ptr<nn::DecodeSession>> members_;
    };

    Vec combine(const std::vector<Vec>& member_outputs) const {
        const std::size_t d = head_dim(target_.output);
        Vec z = params_.value(bias_ix_).values;
        for (std::size_t m = 0; m < members_.size(); ++m) {
            const Tensor& w = params_.value(weight_ix_[m]);
            for (std::size_t k = 0; k < d; ++k) z[k] += w[k] * member_outputs[m][k];
        }
        return z;
    }

    double vector_row_loss_grad(const std::vector<ModelOutput>& member_preds, const Vec& target,
                                double scale) {
        std::vector<Vec> preds;
        preds.reserve(member_preds.size());
        for (const auto& p : member_preds) preds.push_back(std::get<Vec>(p));
        Vec z = combine(preds);
        Vec y = nn::apply_activation(target_.activation(), z);
        auto vl = nn::vector_loss(target_.loss_kind(), target_.activation(), y, target);
        for (std::size_t m = 0; m < members_.size(); ++m) {
            Tensor& dw = params_.grad(weight_ix_[m]);
            for (std::size_t k = 0; k < z.size(); ++k)
                dw[k] += scale * vl.dlogits[k] * preds[m][k];
        }
        Tensor& db = params_.grad(bias_ix_);
        for (std::size_t k = 0; k < z.size(); ++k) db[k] += scale * vl.dlogits[k];
        return vl.loss;
    }

    double sequence_row_loss_grad(const OutputsById& sources, const TokenSeq& content,
                                  double scale) {
        std::vector<std::unique_ptr<nn::DecodeSession>> sessions;
        for (const auto& m : members_) sessions.push_back(m.predictor->start_decode(sources));
        TokenSeq targets = content;
        targets.push_back(kEos);
        const double step_scale = scale / double(targets.size());
        double total = 0.0;
        int prev = kBos;
        for (int tgt : targets) {
            std::vector<Vec> dists;
            dists.reserve(sessions.size());
            for (auto& s : sessions) dists.push_back(s->step(prev));
            Vec z = combine(dists);
            Vec dist = nn::softmax(z);
            total += -std::log(std::max(dist[std::size_t(tgt)], nn::kLogFloor));
            Vec dlogits = dist;
            dlogits[std::size_t(tgt)] -= 1.0;
            for (std::size_t m = 0; m < members_.size(); ++m) {
                Tensor& dw = params_.grad(weight_ix_[m]);
                for (std::size_t k = 0; k < z.size(); ++k)
                    dw[k] += step_scale * dlogits[k] * dists[m][k];
            }
            Tensor& db = params_.grad(bias_ix_);
            for (std::size_t k = 0; k < z.size(); ++k) db[k] += step_scale * dlogits[k];
            prev = tgt;
        }
        return total / double(targets.size());
    }

    ModelDescriptor target_;
    std::vector<Member> members_;
    nn::ParamSet params_;
    std::vector<int> weight_ix_;
    int bias_ix_ = -1;
};

/// Trains the all-sources ensemble h_{A,j} over frozen links sharing
/// one target. Member names are the link source ids.
inline EnsembleLink train_ensemble(const ModelDescriptor& target,
                                   const std::vector<std::shared_ptr<const ModelLink>>& links,
                                   const AlignedDataset& data, const TrainOptions& opts) {
    std::vector<EnsembleLink::Member> members;
    for (const auto& l : links) members.push_back({l->source_id(), l});
    EnsembleLink ens(target, std::move(members));
    ens.train(data, opts);
    return ens;
}

/// Fuses arbitrary same-target predictors (local/global links,
/// cross-task links, nested ensembles) with the same weighted scheme.
inline EnsembleLink fuse(const ModelDescriptor& target,
                         const std::vector<EnsembleLink::Member>& members,
                         const AlignedDataset& data, const TrainOptions& opts) {
    EnsembleLink ens(target, members);
    ens.train(data, opts);
    return ens;
}

}  // namespace mlink
