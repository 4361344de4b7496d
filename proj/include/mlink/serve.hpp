#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mlink/ensemble.hpp"
#include "mlink/schedule.hpp"

namespace mlink {

/// Pairwise links g_ij keyed by (source, target).
struct LinkSet {
    std::map<std::pair<std::string, std::string>, std::shared_ptr<ModelLink>> by_pair;

    void put(std::shared_ptr<ModelLink> link) {
        by_pair[{link->source_id(), link->target_id()}] = std::move(link);
    }
    const std::shared_ptr<ModelLink>& get(const std::string& source,
                                          const std::string& target) const {
        auto it = by_pair.find({source, target});
        require(it != by_pair.end(), "link set: no link " + source + "->" + target);
        return it->second;
    }
};

struct PeriodConfig {
    std::size_t length = 0;       // N items per period
    double profile_ratio = 0.01;  // leading fraction re-estimating link performance
    // Link serving cost per parameter: 8 bytes under a memory budget,
    // 1e-6 ms under a time budget.
    double per_param_cost_memory = 8.0;
    double per_param_cost_time = 1e-6;

    void validate() const {
        require(profile_ratio > 0.0 && profile_ratio <= 0.5,
                "period: profile ratio must lie in (0, 0.5]");
        require(length >= 1 && double(length) >= 1.0 / profile_ratio,
                "period: length must be at least 1/profile_ratio");
    }
};

struct PeriodReport {
    std::size_t period = 0;
    std::vector<std::string> activated;
    double total_cost = 0.0;
    bool infeasible_fallback = false;
    std::map<std::string, double> per_model_accuracy;  // p vs the exact trace
    double average_output_accuracy = 0.0;
    LinkPerfMatrix profiled;
};

struct ServeResult {
    std::vector<PeriodReport> periods;
    // Outputs actually served on non-profiling items: exact trace rows
    // for activated models, ensemble predictions otherwise.
    std::map<std::string, InferenceTrace> served;
};

/// The periodic serve loop: profile the leading items of each period on
/// every model, re-estimate the link performance matrix, re-select the
/// activated set greedily, then serve the remainder from exact outputs
/// (activated) or restricted ensembles (the rest). When nothing fits
/// the budget the period is served standalone with the cheapest model
/// and flagged.
inline ServeResult run_periods(const TraceSet& traces, const LinkSet& links,
                               const std::map<std::string, std::shared_ptr<EnsembleLink>>& ensembles,
                               const Budget& budget, const PeriodConfig& cfg) {
    cfg.validate();
    budget.validate();

    // Schedulable models: everything but the oracle node.
    std::vector<const ModelDescriptor*> models;
    for (const auto& d : traces.descriptors)
        if (!d.is_oracle) models.push_back(&d);
    const std::size_t k = models.size();
    require(k >= 2, "serve: need at least two schedulable models");

    std::vector<std::string> ids;
    for (const auto* d : models) ids.push_back(d->model_id);

    const bool memory_kind = budget.kind == Budget::Kind::MemoryBytes;
    const double per_param =
        memory_kind ? cfg.per_param_cost_memory : cfg.per_param_cost_time;
    std::vector<double> costs;
    for (const auto* d : models) costs.push_back(d->cost(memory_kind));

    // One aligned row stream across all models, sorted by input_id.
    std::vector<const InferenceTrace*> sources;
    for (std::size_t i = 0; i + 1 < k; ++i) sources.push_back(&traces.trace(ids[i]));
    AlignedDataset all = join_aligned(sources, traces.trace(ids[k - 1]));
    auto output_of = [&](const AlignedDataset::Row& row, std::size_t model_ix) -> const ModelOutput& {
        return model_ix + 1 == k ? row.target : row.sources[model_ix];
    };

    // Ensemble combiner size for a restricted subset: one weight vector
    // per activated source plus the bias.
    auto link_cost_fn = [&](const std::vector<std::size_t>& A, std::size_t j) {
        if (A.empty()) return 0.0;
        std::size_t params = 0;
        for (std::size_t i : A) params += links.get(ids[i], ids[j])->parameter_count();
        params += (A.size() + 1) * head_dim(models[j]->output);
        return double(params) * per_param;
    };

    ServeResult result;
    for (const auto& id : ids) {
        InferenceTrace t;
        t.model_id = id;
        result.served[id] = t;
    }

    const std::size_t n_rows = all.rows.size();
    const std::size_t profile_n = std::size_t(std::ceil(cfg.profile_ratio * double(cfg.length)));
    for (std::size_t start = 0, period = 0; start < n_rows; start += cfg.length, ++period) {
        const std::size_t end = std::min(start + cfg.length, n_rows);
        const std::size_t profile_end = std::min(start + std::max<std::size_t>(profile_n, 1), end);

        // Profile: run every link on the leading items and re-estimate p.
        LinkPerfMatrix matrix = LinkPerfMatrix::zeros(ids);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j) continue;
                std::vector<ModelOutput> preds, exact;
                const auto& link = links.get(ids[i], ids[j]);
                for (std::size_t r = start; r < profile_end; ++r) {
                    preds.push_back(link->predict_output(output_of(all.rows[r], i)));
                    exact.push_back(output_of(all.rows[r], j));
                }
                matrix.p[i][j] = evaluate_performance(preds, exact, models[j]->metric).p;
            }
        }

        auto profiles = activation_probabilities(matrix, costs);
        Schedule schedule = greedy_select(profiles, budget, link_cost_fn, zero_perf());

        PeriodReport report;
        report.period = period;
        report.profiled = matrix;
        if (!schedule.feasible) {
            // Standalone fallback: cheapest model only, links unused.
            std::size_t cheapest = 0;
            for (std::size_t i = 1; i < k; ++i)
                if (costs[i] < costs[cheapest]) cheapest = i;
            schedule.activated = {cheapest};
            schedule.total_cost = costs[cheapest];
            report.infeasible_fallback = true;
        }
        for (std::size_t i : schedule.activated) report.activated.push_back(ids[i]);
        report.total_cost = schedule.total_cost;

        std::vector<bool> active(k, false);
        for (std::size_t i : schedule.activated) active[i] = true;

        // Serve the rest of the period.
        std::map<std::size_t, EnsembleLink> restricted;
        if (!report.infeasible_fallback) {
            for (std::size_t j = 0; j < k; ++j) {
                if (active[j]) continue;
                auto it = ensembles.find(ids[j]);
                require(it != ensembles.end(), "serve: no ensemble for target " + ids[j]);
                restricted.emplace(j, it->second->restrict_to_subset(report.activated));
            }
        }

        std::vector<std::vector<ModelOutput>> served_outputs(k), exact_outputs(k);
        for (std::size_t r = profile_end; r < end; ++r) {
            const auto& row = all.rows[r];
            OutputsById activated_outputs;
            for (std::size_t i = 0; i < k; ++i)
                if (active[i]) activated_outputs[ids[i]] = output_of(row, i);
            for (std::size_t i = 0; i < k; ++i) {
                ModelOutput out;
                if (active[i]) {
                    out = output_of(row, i);
                } else if (!report.infeasible_fallback) {
                    out = restricted.at(i).predict(activated_outputs);
                } else {
                    // Standalone period: unanswered models produce the
                    // empty output of their format.
                    out = is_sequence(models[i]->output)
                              ? ModelOutput(TokenSeq{})
                              : ModelOutput(Vec(head_dim(models[i]->output), 0.0));
                }
                served_outputs[i].push_back(out);
                exact_outputs[i].push_back(output_of(row, i));
                result.served[ids[i]].records.push_back({row.input_id, std::move(out)});
            }
        }

        std::vector<double> predicted_p;
        for (std::size_t i = 0; i < k; ++i) {
            double p;
            if (active[i]) {
                p = 1.0;
            } else if (report.infeasible_fallback || served_outputs[i].empty()) {
                p = 0.0;
            } else {
                p = evaluate_performance(served_outputs[i], exact_outputs[i], models[i]->metric).p;
            }
            report.per_model_accuracy[ids[i]] = p;
            if (!active[i]) predicted_p.push_back(p);
        }
        report.average_output_accuracy =
            output_accuracy(schedule.activated.size(), predicted_p, k);
        result.periods.push_back(std::move(report));
    }
    return result;
}

}  // namespace mlink
