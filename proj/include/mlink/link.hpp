#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mlink/aligned.hpp"
#include "mlink/metrics.hpp"
#include "mlink/model.hpp"
#include "mlink/nn/network.hpp"

#include <json.hpp>

namespace mlink {

/// Exact outputs of the currently executed models, keyed by model_id.
using OutputsById = std::map<std::string, ModelOutput>;

/// Anything that predicts one target model's output from executed
/// models' outputs: a single link, or an ensemble of them. Frozen
/// predictors are safe to share across threads.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual const std::string& target_id() const = 0;
    virtual bool sequence_target() const = 0;
    virtual std::vector<std::string> required_sources() const = 0;
    virtual std::size_t parameter_count() const = 0;

    /// Full prediction (greedy decode for sequence targets).
    virtual ModelOutput predict(const OutputsById& sources) const = 0;

    /// Step-wise decoding for sequence targets, so several predictors
    /// can be combined token by token.
    virtual std::unique_ptr<nn::DecodeSession> start_decode(const OutputsById& sources) const = 0;
};

struct TrainOptions {
    double learning_rate = 0.01;  // paper defaults: 0.01, 100 epochs, batch 32
    std::size_t epochs = 100;
    std::size_t batch = 32;
    std::uint64_t seed = 1;
    double width_factor = 2.0;
    std::size_t param_budget = 1u << 20;
};

struct TrainReport {
    std::vector<double> epoch_loss;
};

/// A trained mapping g_ij from the source model's output space to the
/// target's. Architecture is fixed by the format pair, the head
/// activation and loss by the target task.
class ModelLink : public Predictor {
public:
    ModelLink(const ModelDescriptor& source, const ModelDescriptor& target,
              double width_factor = 2.0, std::uint64_t seed = 1,
              std::size_t param_budget = TrainOptions{}.param_budget)
        : source_(source), target_(target) {
        require(!source.is_oracle, "link: the oracle node may only be a link target");
        source.validate();
        target.validate();
        net_ = nn::build_network(source.output, target.output, target.activation(), width_factor,
                                 seed);
        require(net_->params().total_count() < param_budget,
                "link " + source.model_id + "->" + target.model_id + ": parameter count " +
                    std::to_string(net_->params().total_count()) +
                    " breaches the lightweight budget " + std::to_string(param_budget));
    }

    const std::string& source_id() const { return source_.model_id; }
    const std::string& target_id() const override { return target_.model_id; }
    const ModelDescriptor& source_descriptor() const { return source_; }
    const ModelDescriptor& target_descriptor() const { return target_; }
    Architecture architecture() const { return net_->architecture(); }
    nn::LossKind loss_kind() const { return target_.loss_kind(); }
    bool sequence_target() const override { return is_sequence(target_.output); }
    std::vector<std::string> required_sources() const override { return {source_.model_id}; }
    std::size_t parameter_count() const override { return net_->params().total_count(); }

    nn::Network& net() { return *net_; }
    const nn::Network& net() const { return *net_; }

    /// Minimizes the target-task loss over the aligned rows by seeded
    /// mini-batch RMSprop; sequence targets use teacher forcing.
    /// Divergence (non-finite loss) aborts naming the epoch.
    TrainReport train(const AlignedDataset& data, const TrainOptions& opts) {
        require(data.source_ids.size() == 1 && data.source_ids[0] == source_.model_id &&
                    data.target_id == target_.model_id,
                "link train: dataset models do not match link " + source_.model_id + "->" +
                    target_.model_id);
        require(!data.rows.empty(), "link train: no rows");
        std::vector<nn::Sample> samples;
        samples.reserve(data.rows.size());
        for (const auto& row : data.rows) samples.push_back({row.sources[0], row.target});
        return fit(*net_, samples, loss_kind(), opts);
    }

    ModelOutput predict_output(const ModelOutput& source_output, Vec* hidden_out = nullptr) const {
        return net_->predict(source_output, hidden_out);
    }

    ModelOutput predict(const OutputsById& sources) const override {
        return net_->predict(source_output_from(sources));
    }

    std::unique_ptr<nn::DecodeSession> start_decode(const OutputsById& sources) const override {
        return net_->start_decode(source_output_from(sources));
    }

    /// Predicted-vs-exact performance over aligned rows, in the target
    /// metric and its [0,1] normalization.
    LinkPerformance evaluate(const AlignedDataset& data) const {
        std::vector<ModelOutput> preds, targets;
        preds.reserve(data.rows.size());
        for (const auto& row : data.rows) {
            preds.push_back(net_->predict(row.sources[data.source_index(source_.model_id)]));
            targets.push_back(row.target);
        }
        return evaluate_performance(preds, targets, target_.metric);
    }

    /// Shared mini-batch loop, also used by ensemble training.
    static TrainReport fit(nn::Network& net, const std::vector<nn::Sample>& samples,
                           nn::LossKind kind, const TrainOptions& opts) {
        nn::RmspropState opt(opts.learning_rate);
        Rng shuffle_rng(opts.seed);
        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        TrainReport report;
        for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
            shuffle_rng.shuffle(order);
            double epoch_loss = 0.0;
            std::size_t seen = 0;
            for (std::size_t at = 0; at < order.size(); at += opts.batch) {
                std::vector<nn::Sample> batch;
                for (std::size_t k = at; k < std::min(at + opts.batch, order.size()); ++k)
                    batch.push_back(samples[order[k]]);
                double loss;
                try {
                    loss = nn::train_step(net, batch, kind, opt);
                } catch (const Error& e) {
                    fail("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
                }
                epoch_loss += loss * double(batch.size());
                seen += batch.size();
            }
            report.epoch_loss.push_back(epoch_loss / double(seen));
        }
        return report;
    }

    // Checkpoint: JSON header (ids, architecture, activation, formats,
    // hidden width) followed by the parameter byte stream.
    std::vector<std::uint8_t> save() const {
        nlohmann::json h;
        h["source_id"] = source_.model_id;
        h["target_id"] = target_.model_id;
        h["architecture"] = to_string(net_->architecture());
        h["activation"] = nn::to_string(net_->output_activation());
        h["hidden"] = net_->hidden_width();
        h["source"] = descriptor_to_json(source_);
        h["target"] = descriptor_to_json(target_);
        std::string header = h.dump();
        ByteWriter w;
        w.bytes("MLKC", 4);
        w.u16(1);
        w.u32(std::uint32_t(header.size()));
        w.str(header);
        auto params = nn::save_params(net_->params());
        w.bytes(params.data(), params.size());
        return w.take();
    }

    static ModelLink load(const std::vector<std::uint8_t>& bytes) {
        ByteReader r(bytes);
        require(r.str(4) == "MLKC", "link checkpoint: bad magic");
        require(r.u16() == 1, "link checkpoint: unsupported version");
        std::uint32_t hlen = r.u32();
        nlohmann::json h = nlohmann::json::parse(r.str(hlen), nullptr, false);
        require(!h.is_discarded(), "link checkpoint: corrupt header");
        ModelDescriptor source = descriptor_from_json(h.at("source"));
        ModelDescriptor target = descriptor_from_json(h.at("target"));
        double hidden = double(h.at("hidden").get<std::size_t>());
        double wf = hidden / double(head_dim(target.output));
        ModelLink link(source, target, wf, 1);
        std::vector<std::uint8_t> pbytes(bytes.begin() + std::ptrdiff_t(r.pos()), bytes.end());
        nn::ParamSet loaded = nn::load_params(pbytes);
        require(loaded.tensor_count() == link.net_->params().tensor_count(),
                "link checkpoint: parameter layout mismatch");
        link.net_->params().assign_values(loaded.flatten_values());
        return link;
    }

    void save_file(const std::filesystem::path& path) const {
        auto bytes = save();
        std::ofstream f(path, std::ios::binary);
        require(f.good(), "link checkpoint: cannot open " + path.string());
        f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    }

    static ModelLink load_file(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        require(f.good(), "link checkpoint: cannot open " + path.string());
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
        return load(bytes);
    }

private:
    const ModelOutput& source_output_from(const OutputsById& sources) const {
        auto it = sources.find(source_.model_id);
        require(it != sources.end(), "link: no output provided for source " + source_.model_id);
        return it->second;
    }

    ModelDescriptor source_, target_;
    std::unique_ptr<nn::Network> net_;
};

/// Convenience constructor mirroring the build operation.
inline ModelLink build_link(const ModelDescriptor& source, const ModelDescriptor& target,
                            double width_factor = 2.0, std::uint64_t seed = 1) {
    return ModelLink(source, target, width_factor, seed);
}

}  // namespace mlink
