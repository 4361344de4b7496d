#pragma once

#include <map>
#include <string>
#include <vector>

#include "mlink/link.hpp"

namespace mlink {

/// One plain full-batch gradient-descent step: theta <- theta - lr * g.
/// Federated rounds use this (not RMSprop) so that one edge with one
/// local step per round reproduces centralized training exactly.
inline double plain_descent_step(nn::Network& net, const std::vector<nn::Sample>& samples,
                                 nn::LossKind kind, double learning_rate) {
    double loss = net.loss_and_grad(samples, kind);
    require(std::isfinite(loss), "descent: non-finite loss");
    auto& ps = net.params();
    for (std::size_t t = 0; t < ps.tensor_count(); ++t)
        for (std::size_t k = 0; k < ps.value(int(t)).size(); ++k)
            ps.value(int(t))[k] -= learning_rate * ps.grad(int(t))[k];
    return loss;
}

struct FederationConfig {
    double learning_rate = 0.01;
    std::size_t local_steps = 1;  // >1 trades exact equivalence for local epochs
    double width_factor = 2.0;
    std::uint64_t init_seed = 1;
};

/// An edge holds its private aligned rows; nothing outside this class
/// reads them. Only parameter byte streams cross the boundary: the
/// broadcast comes in, the lr-scaled gradient delta goes out. Every
/// read of the private rows bumps the audit counter.
class EdgeNode {
public:
    EdgeNode(std::string edge_id, const ModelDescriptor& source, const ModelDescriptor& target,
             AlignedDataset private_data, const FederationConfig& cfg)
        : edge_id_(std::move(edge_id)),
          cfg_(cfg),
          workspace_(source, target, cfg.width_factor, cfg.init_seed),
          data_(std::move(private_data)) {}

    const std::string& edge_id() const { return edge_id_; }
    std::size_t data_access_count() const { return data_accesses_; }
    std::size_t row_count() const { return data_.rows.size(); }

    struct LocalUpdate {
        std::vector<std::uint8_t> delta_stream;  // nn-kernel format
        double grad_norm = 0.0;
        std::size_t bytes_sent = 0;
        bool empty_data = false;
    };

    /// Computes the local delta from the broadcast snapshot: local_steps
    /// full-batch descent steps, the learning rate folded in, so the
    /// cloud applies deltas verbatim.
    LocalUpdate local_update(const std::vector<std::uint8_t>& broadcast_stream) {
        nn::ParamSet snapshot = nn::load_params(broadcast_stream);
        auto& ps = workspace_.net().params();
        require(snapshot.total_count() == ps.total_count(),
                "edge " + edge_id_ + ": broadcast parameter layout mismatch");
        ps.assign_values(snapshot.flatten_values());

        LocalUpdate out;
        if (data_.rows.empty()) {
            out.empty_data = true;
        } else {
            ++data_accesses_;
            std::vector<nn::Sample> batch;
            batch.reserve(data_.rows.size());
            for (const auto& row : data_.rows) batch.push_back({row.sources[0], row.target});
            for (std::size_t s = 0; s < cfg_.local_steps; ++s)
                plain_descent_step(workspace_.net(), batch, workspace_.loss_kind(),
                                   cfg_.learning_rate);
        }

        nn::ParamSet delta = nn::load_params(broadcast_stream);  // same layout, rewritten below
        std::vector<double> now = ps.flatten_values();
        std::vector<double> before = snapshot.flatten_values();
        for (std::size_t i = 0; i < now.size(); ++i) now[i] -= before[i];
        delta.assign_values(now);
        double norm2 = 0.0;
        for (double d : now) norm2 += d * d;
        out.grad_norm = std::sqrt(norm2);
        out.delta_stream = nn::save_params(delta);
        out.bytes_sent = out.delta_stream.size();
        return out;
    }

private:
    std::string edge_id_;
    FederationConfig cfg_;
    ModelLink workspace_;
    AlignedDataset data_;  // private: only gradients leave this object
    std::size_t data_accesses_ = 0;
};

/// Global parameters plus the round and communication counters.
class CloudState {
public:
    explicit CloudState(ModelLink global) : global_(std::move(global)) {}

    const ModelLink& global() const { return global_; }
    ModelLink& global() { return global_; }
    std::size_t round() const { return round_; }
    std::size_t total_bytes() const { return total_bytes_; }

    std::vector<std::uint8_t> broadcast() {
        auto stream = nn::save_params(global_.net().params());
        return stream;
    }

    void count_broadcast(std::size_t bytes) { total_bytes_ += bytes; }
    void count_upload(std::size_t bytes) { total_bytes_ += bytes; }

    /// Theta_G <- Theta_G + (1/K) sum_k Delta_k. Deltas are summed in
    /// sorted edge order so the result is permutation invariant
    /// bit-for-bit.
    void aggregate(std::map<std::string, std::vector<std::uint8_t>> deltas_by_edge) {
        require(!deltas_by_edge.empty(), "aggregate: no edge deltas");
        const double inv_k = 1.0 / double(deltas_by_edge.size());
        auto& ps = global_.net().params();
        std::vector<double> theta = ps.flatten_values();
        std::vector<double> sum(theta.size(), 0.0);
        for (const auto& [edge, stream] : deltas_by_edge) {
            nn::ParamSet delta = nn::load_params(stream);
            require(delta.total_count() == theta.size(),
                    "aggregate: delta from edge " + edge + " has mismatched shape");
            std::vector<double> d = delta.flatten_values();
            for (std::size_t i = 0; i < d.size(); ++i) sum[i] += d[i];
        }
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += inv_k * sum[i];
        ps.assign_values(theta);
        ++round_;
    }

private:
    ModelLink global_;
    std::size_t round_ = 0;
    std::size_t total_bytes_ = 0;
};

struct RoundRecord {
    std::size_t round = 0;
    std::map<std::string, double> grad_norms;  // per edge
    std::size_t comm_bytes = 0;                // this round: broadcasts + uploads
    std::map<std::string, double> domain_p;    // global link evaluated per domain
};

struct FederationResult {
    CloudState cloud;
    std::vector<RoundRecord> rounds;
};

/// Synchronous rounds of Alg.-style aggregation: broadcast the global
/// parameters, let every edge compute its local delta in parallel
/// (sequentially here; edges share no state), then average. Returns
/// the final cloud state and per-round records.
inline FederationResult run_federation(std::vector<EdgeNode>& edges,
                                       const ModelDescriptor& source,
                                       const ModelDescriptor& target, std::size_t rounds,
                                       const FederationConfig& cfg,
                                       const std::map<std::string, AlignedDataset>& eval_domains =
                                           {}) {
    require(!edges.empty(), "federation: need at least one edge");
    require(rounds >= 1, "federation: need at least one round");
    FederationResult result{CloudState(ModelLink(source, target, cfg.width_factor,
                                                 cfg.init_seed)),
                            {}};
    for (std::size_t t = 0; t < rounds; ++t) {
        auto broadcast = result.cloud.broadcast();
        RoundRecord record;
        record.round = t;
        std::map<std::string, std::vector<std::uint8_t>> deltas;
        for (auto& edge : edges) {
            result.cloud.count_broadcast(broadcast.size());
            auto update = edge.local_update(broadcast);
            result.cloud.count_upload(update.bytes_sent);
            record.comm_bytes += broadcast.size() + update.bytes_sent;
            record.grad_norms[edge.edge_id()] = update.grad_norm;
            deltas[edge.edge_id()] = std::move(update.delta_stream);
        }
        result.cloud.aggregate(std::move(deltas));
        for (const auto& [domain, data] : eval_domains)
            record.domain_p[domain] = result.cloud.global().evaluate(data).p;
        result.rounds.push_back(std::move(record));
    }
    return result;
}

}  // namespace mlink
