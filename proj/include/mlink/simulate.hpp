#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mlink/csv.hpp"
#include "mlink/rng.hpp"
#include "mlink/schedule.hpp"

namespace mlink {

/// Scheduling simulation protocol: sample pairwise link performances
/// and model costs, model ensembles as best-source-plus-gain, and
/// compare standalone / greedy / optimal schedules over a budget grid.
struct SimulationSpec {
    enum class Dist { Normal, Beta };
    std::size_t k = 10;
    Dist dist = Dist::Normal;
    double normal_mean = 0.5, normal_std = 0.2;
    double beta_alpha = 0.5, beta_beta = 0.5;
    double ensemble_gain = 0.02;
    std::size_t budget_points = 11;
    std::size_t trials = 20;
    std::uint64_t seed = 1;

    void validate() const {
        require(k >= 2 && k <= 20, "simulation: k must be in [2, 20]");
        require(budget_points >= 2, "simulation: need at least two budget points");
        require(trials >= 1, "simulation: need at least one trial");
        require(ensemble_gain >= 0.0, "simulation: ensemble gain must be non-negative");
    }
};

inline const char* to_string(SimulationSpec::Dist d) {
    return d == SimulationSpec::Dist::Normal ? "normal" : "beta";
}

struct SimulatedInstance {
    LinkPerfMatrix matrix;
    std::vector<double> costs;
};

/// One draw of the k x k link-performance matrix and the model costs,
/// i.i.d. from the spec's distribution; performances clipped into
/// [0,1], costs clipped away from zero.
inline SimulatedInstance simulate_link_matrix(const SimulationSpec& spec, Rng& rng) {
    spec.validate();
    auto draw = [&] {
        return spec.dist == SimulationSpec::Dist::Normal
                   ? rng.normal(spec.normal_mean, spec.normal_std)
                   : rng.beta(spec.beta_alpha, spec.beta_beta);
    };
    SimulatedInstance inst;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < spec.k; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "m%02zu", i);
        ids.push_back(buf);
    }
    inst.matrix = LinkPerfMatrix::zeros(ids);
    for (std::size_t i = 0; i < spec.k; ++i)
        for (std::size_t j = 0; j < spec.k; ++j)
            if (i != j) inst.matrix.p[i][j] = std::clamp(draw(), 0.0, 1.0);
    inst.costs.resize(spec.k);
    for (double& c : inst.costs) c = std::max(draw(), 0.01);
    return inst;
}

/// p(A,j) = min(1, max_{i in A} p(g_ij) + gain * (|A| - 1)); 0 when A
/// is empty. The minimal model consistent with the dominance and
/// mutual-assistance regimes.
inline SubsetPerfFn gain_ensemble_perf(const LinkPerfMatrix& matrix, double gain) {
    return [&matrix, gain](const std::vector<std::size_t>& A, std::size_t j) {
        if (A.empty()) return 0.0;
        double best = 0.0;
        for (std::size_t i : A) best = std::max(best, matrix.p[i][j]);
        return std::min(1.0, best + gain * double(A.size() - 1));
    };
}

struct SimulationRow {
    std::size_t budget_index = 0;
    double mean_budget = 0.0;
    double standalone = 0.0;  // best links-unused subset, |A|/k
    double greedy = 0.0;
    double optimal = 0.0;
};

/// Averages over trials at each grid point. The grid spans min model
/// cost to total cost per trial; link costs are not charged here (the
/// protocol varies only model performances and costs).
inline std::vector<SimulationRow> simulate_schedule(const SimulationSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::vector<SimulationRow> rows(spec.budget_points);
    for (std::size_t b = 0; b < spec.budget_points; ++b) rows[b].budget_index = b;

    for (std::size_t trial = 0; trial < spec.trials; ++trial) {
        SimulatedInstance inst = simulate_link_matrix(spec, rng);
        auto perf = gain_ensemble_perf(inst.matrix, spec.ensemble_gain);
        auto profiles = activation_probabilities(inst.matrix, inst.costs);
        double min_cost = *std::min_element(inst.costs.begin(), inst.costs.end());
        double total = 0.0;
        for (double c : inst.costs) total += c;

        for (std::size_t b = 0; b < spec.budget_points; ++b) {
            double limit = min_cost + (total - min_cost) * double(b) /
                                          double(spec.budget_points - 1);
            Budget budget{Budget::Kind::MemoryBytes, limit};
            auto standalone =
                brute_force_optimal(spec.k, inst.costs, budget, zero_link_cost(), zero_perf());
            auto greedy = greedy_select(profiles, budget, zero_link_cost(), perf);
            auto optimal =
                brute_force_optimal(spec.k, inst.costs, budget, zero_link_cost(), perf);
            require(standalone.feasible && optimal.feasible,
                    "simulation: the grid starts at the cheapest model, budgets must be feasible");
            rows[b].mean_budget += limit;
            rows[b].standalone += standalone.objective;
            rows[b].greedy += greedy.feasible ? greedy.objective : 0.0;
            rows[b].optimal += optimal.objective;
        }
    }
    for (auto& r : rows) {
        r.mean_budget /= double(spec.trials);
        r.standalone /= double(spec.trials);
        r.greedy /= double(spec.trials);
        r.optimal /= double(spec.trials);
    }
    return rows;
}

inline std::string simulation_csv(const SimulationSpec& spec,
                                  const std::vector<SimulationRow>& rows) {
    CsvWriter csv({"seed", "dist", "budget_index", "mean_budget", "standalone", "greedy",
                   "optimal"});
    for (const auto& r : rows) {
        csv.cell(std::size_t(spec.seed))
            .cell(std::string(to_string(spec.dist)))
            .cell(r.budget_index)
            .cell(r.mean_budget)
            .cell(r.standalone)
            .cell(r.greedy)
            .cell(r.optimal)
            .end_row();
    }
    return csv.text();
}

}  // namespace mlink
