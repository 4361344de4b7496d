#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mlink/error.hpp"

namespace mlink {

struct Budget {
    enum class Kind { MemoryBytes, TimeMs };
    Kind kind = Kind::MemoryBytes;
    double limit = 0.0;

    void validate() const { require(limit > 0.0, "budget: limit must be positive"); }
};

/// Pairwise link performances p(g_ij) with an unused diagonal, indexed
/// by the position of each model in `model_ids` (kept sorted).
struct LinkPerfMatrix {
    std::vector<std::string> model_ids;
    std::vector<std::vector<double>> p;

    std::size_t k() const { return model_ids.size(); }

    static LinkPerfMatrix zeros(std::vector<std::string> ids) {
        LinkPerfMatrix m;
        m.model_ids = std::move(ids);
        m.p.assign(m.model_ids.size(), std::vector<double>(m.model_ids.size(), 0.0));
        return m;
    }

    void validate() const {
        require(p.size() == k(), "perf matrix: row count mismatch");
        for (std::size_t i = 0; i < k(); ++i) {
            require(p[i].size() == k(), "perf matrix: column count mismatch");
            for (std::size_t j = 0; j < k(); ++j) {
                if (i == j) continue;
                require(p[i][j] >= 0.0 && p[i][j] <= 1.0,
                        "perf matrix: entry outside [0,1] at (" + std::to_string(i) + "," +
                            std::to_string(j) + ")");
            }
        }
    }
};

/// Per-model activation statistics: outgoing link quality P1, incoming
/// predictability P2, cost, and the probability ranking the greedy uses.
struct ActivationProfile {
    std::string model_id;
    double p_out = 0.0;       // P1: mean p of links from this model
    double p_in = 0.0;        // P2: mean p of links onto this model
    double cost = 0.0;
    double probability = 0.0; // (1 + P1 - P2) / (w c), w = 2 / min cost
};

/// P_i = (1 + P1_i - P2_i) / (w c_i) with w = 2 / min_i c(f_i), which
/// pins the best case (min cost, P1 = 1, P2 = 0) to exactly 1.
inline std::vector<ActivationProfile> activation_probabilities(const LinkPerfMatrix& matrix,
                                                               const std::vector<double>& costs) {
    const std::size_t k = matrix.k();
    require(k >= 2, "activation: need at least two models");
    require(costs.size() == k, "activation: cost count mismatch");
    matrix.validate();
    double min_cost = *std::min_element(costs.begin(), costs.end());
    for (double c : costs) require(c > 0.0, "activation: zero or negative cost rejected");
    const double w = 2.0 / min_cost;

    std::vector<ActivationProfile> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        double p1 = 0.0, p2 = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            p1 += matrix.p[i][j];
            p2 += matrix.p[j][i];
        }
        out[i].model_id = matrix.model_ids[i];
        out[i].p_out = p1 / double(k - 1);
        out[i].p_in = p2 / double(k - 1);
        out[i].cost = costs[i];
        out[i].probability = (1.0 + out[i].p_out - out[i].p_in) / (w * costs[i]);
    }
    return out;
}

/// Average output accuracy: activated models score 1, predicted models
/// score their ensemble p.
inline double output_accuracy(std::size_t activated_count,
                              const std::vector<double>& predicted_p, std::size_t k) {
    require(activated_count + predicted_p.size() == k, "output accuracy: |A| + predicted != k");
    double sum = double(activated_count);
    for (double p : predicted_p) {
        require(p >= 0.0 && p <= 1.0, "output accuracy: p outside [0,1]");
        sum += p;
    }
    return sum / double(k);
}

/// p(h_{A,j}) for an activated index set A (sorted) and target j not in
/// A; must return 0 for empty A.
using SubsetPerfFn = std::function<double(const std::vector<std::size_t>&, std::size_t)>;
/// c(h_{A,j}) charged for serving target j from A.
using SubsetLinkCostFn = std::function<double(const std::vector<std::size_t>&, std::size_t)>;

struct Schedule {
    bool feasible = false;
    std::vector<std::size_t> activated;  // sorted indices into model_ids
    double total_cost = 0.0;             // exact inference + link costs
    double objective = 0.0;              // average output accuracy
};

namespace detail {

inline double schedule_cost(const std::vector<std::size_t>& activated,
                            const std::vector<double>& costs,
                            const SubsetLinkCostFn& link_cost) {
    double total = 0.0;
    for (std::size_t i : activated) total += costs[i];
    std::vector<bool> in(costs.size(), false);
    for (std::size_t i : activated) in[i] = true;
    for (std::size_t j = 0; j < costs.size(); ++j)
        if (!in[j]) total += link_cost(activated, j);
    return total;
}

inline double schedule_value(const std::vector<std::size_t>& activated, std::size_t k,
                             const SubsetPerfFn& perf) {
    std::vector<bool> in(k, false);
    for (std::size_t i : activated) in[i] = true;
    std::vector<double> predicted;
    for (std::size_t j = 0; j < k; ++j)
        if (!in[j]) predicted.push_back(std::clamp(perf(activated, j), 0.0, 1.0));
    return output_accuracy(activated.size(), predicted, k);
}

}  // namespace detail

/// Greedy selection: walk the remaining models in activation
/// probability order (ties: lower cost, then model id) and add each
/// one whose addition keeps the budget constraint satisfied, until no
/// remaining model fits. A model that does not fit is skipped rather
/// than ending the walk: the returned set must be non-empty whenever
/// any single model fits. Explicitly infeasible when nothing does.
inline Schedule greedy_select(const std::vector<ActivationProfile>& profiles,
                              const Budget& budget, const SubsetLinkCostFn& link_cost,
                              const SubsetPerfFn& perf) {
    budget.validate();
    const std::size_t k = profiles.size();
    std::vector<double> costs(k);
    for (std::size_t i = 0; i < k; ++i) costs[i] = profiles[i].cost;

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (profiles[a].probability != profiles[b].probability)
            return profiles[a].probability > profiles[b].probability;
        if (profiles[a].cost != profiles[b].cost) return profiles[a].cost < profiles[b].cost;
        return profiles[a].model_id < profiles[b].model_id;
    });

    Schedule s;
    bool added = true;
    std::vector<bool> taken(k, false);
    while (added) {
        added = false;
        for (std::size_t i : order) {
            if (taken[i]) continue;
            std::vector<std::size_t> candidate = s.activated;
            candidate.insert(std::upper_bound(candidate.begin(), candidate.end(), i), i);
            double cost = detail::schedule_cost(candidate, costs, link_cost);
            if (cost > budget.limit) continue;
            s.activated = std::move(candidate);
            s.total_cost = cost;
            taken[i] = true;
            added = true;
            break;  // re-rank from the top after every addition
        }
    }
    s.feasible = !s.activated.empty();
    if (s.feasible) s.objective = detail::schedule_value(s.activated, k, perf);
    return s;
}

/// Exact maximizer of the average output accuracy under the budget, by
/// enumeration of all non-empty subsets. Ties prefer lower cost, then
/// the lexicographically smallest index set.
inline Schedule brute_force_optimal(std::size_t k, const std::vector<double>& costs,
                                    const Budget& budget, const SubsetLinkCostFn& link_cost,
                                    const SubsetPerfFn& perf) {
    budget.validate();
    require(k >= 1 && k <= 20, "brute force: k must be in [1, 20] for 2^k enumeration");
    require(costs.size() == k, "brute force: cost count mismatch");
    Schedule best;
    for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
        std::vector<std::size_t> subset;
        for (std::size_t i = 0; i < k; ++i)
            if (mask & (1u << i)) subset.push_back(i);
        double cost = detail::schedule_cost(subset, costs, link_cost);
        if (cost > budget.limit) continue;
        double value = detail::schedule_value(subset, k, perf);
        bool better = false;
        if (!best.feasible) better = true;
        else if (value != best.objective) better = value > best.objective;
        else if (cost != best.total_cost) better = cost < best.total_cost;
        else better = subset < best.activated;
        if (better) {
            best.feasible = true;
            best.activated = std::move(subset);
            best.total_cost = cost;
            best.objective = value;
        }
    }
    return best;
}

inline SubsetLinkCostFn zero_link_cost() {
    return [](const std::vector<std::size_t>&, std::size_t) { return 0.0; };
}

inline SubsetPerfFn zero_perf() {
    return [](const std::vector<std::size_t>&, std::size_t) { return 0.0; };
}

}  // namespace mlink
