#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mlink/config.hpp"
#include "mlink/csv.hpp"
#include "mlink/serve.hpp"
#include "mlink/world.hpp"

namespace mlink {

struct ExperimentConfig {
    SyntheticWorldSpec world;                 // used when trace_dir is empty
    std::filesystem::path trace_dir;          // pre-existing traces win over generation
    TrainOptions train;
    double train_ratio = 0.1;                 // leading fraction for link/ensemble training
    Budget budget{Budget::Kind::MemoryBytes, 1.0};
    PeriodConfig period;
    std::filesystem::path out_dir = "artifacts";
    std::uint64_t seed = 1;
};

struct TrainedStack {
    TraceSet traces;
    LinkSet links;
    std::map<std::string, std::shared_ptr<EnsembleLink>> ensembles;
    std::vector<std::string> model_ids;  // schedulable (non-oracle), sorted
};

/// Alg.-style line 1 and 2: pairwise links between every ordered model
/// pair on the leading rows, then the all-sources ensemble per target.
inline TrainedStack train_stack(const TraceSet& traces, double train_ratio,
                                const TrainOptions& opts) {
    TrainedStack stack;
    stack.traces = traces;
    for (const auto& d : traces.descriptors)
        if (!d.is_oracle) stack.model_ids.push_back(d.model_id);
    require(stack.model_ids.size() >= 2, "experiment: need at least two schedulable models");

    std::map<std::string, InferenceTrace> train_traces;
    for (const auto& id : stack.model_ids) {
        const auto& full = traces.trace(id);
        InferenceTrace head = full;
        std::size_t keep = std::max<std::size_t>(1, std::size_t(double(full.records.size()) *
                                                                train_ratio));
        head.records.resize(std::min(keep, head.records.size()));
        train_traces[id] = std::move(head);
    }

    for (const auto& src : stack.model_ids) {
        for (const auto& dst : stack.model_ids) {
            if (src == dst) continue;
            auto link = std::make_shared<ModelLink>(traces.descriptor(src),
                                                    traces.descriptor(dst), opts.width_factor,
                                                    opts.seed);
            link->train(join_aligned(train_traces.at(src), train_traces.at(dst)), opts);
            stack.links.put(std::move(link));
        }
    }
    for (const auto& dst : stack.model_ids) {
        std::vector<std::shared_ptr<const ModelLink>> members;
        std::vector<const InferenceTrace*> sources;
        for (const auto& src : stack.model_ids) {
            if (src == dst) continue;
            members.push_back(stack.links.get(src, dst));
            sources.push_back(&train_traces.at(src));
        }
        auto data = join_aligned(sources, train_traces.at(dst));
        stack.ensembles.emplace(dst, std::make_shared<EnsembleLink>(train_ensemble(
                                         traces.descriptor(dst), members, data, opts)));
    }
    return stack;
}

inline std::string schedule_report_csv(const std::vector<PeriodReport>& periods,
                                       const std::vector<std::string>& model_ids,
                                       std::uint64_t seed) {
    std::vector<std::string> header{"seed", "period", "activated_ids", "total_cost"};
    for (const auto& id : model_ids) header.push_back("acc_" + id);
    header.push_back("average_output_accuracy");
    CsvWriter csv(header);
    for (const auto& p : periods) {
        std::string activated;
        for (std::size_t i = 0; i < p.activated.size(); ++i) {
            if (i) activated += ';';
            activated += p.activated[i];
        }
        csv.cell(std::size_t(seed)).cell(p.period).cell(activated).cell(p.total_cost);
        for (const auto& id : model_ids) csv.cell(p.per_model_accuracy.at(id));
        csv.cell(p.average_output_accuracy).end_row();
    }
    return csv.text();
}

struct ExperimentResult {
    TrainedStack stack;
    ServeResult serve;
    std::filesystem::path schedule_csv;
    std::filesystem::path links_csv;
    double mean_output_accuracy = 0.0;
};

/// The end-to-end pipeline: obtain traces (generate or load), train
/// links and ensembles on the leading fraction, run the periodic serve
/// loop on the remainder, and write checkpoints plus CSV reports. Every
/// output is a pure function of the config, so reruns are
/// byte-identical.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    TraceSet traces;
    if (!cfg.trace_dir.empty()) {
        traces = load_trace_dir(cfg.trace_dir);
    } else {
        traces = generate_traces(cfg.world).traces;
    }

    ExperimentResult result;
    result.stack = train_stack(traces, cfg.train_ratio, cfg.train);

    // Serve on the remainder of the stream.
    TraceSet serving = traces;
    for (auto& t : serving.traces) {
        std::size_t skip = std::size_t(double(t.records.size()) * cfg.train_ratio);
        t.records.erase(t.records.begin(), t.records.begin() + std::ptrdiff_t(skip));
    }
    result.serve = run_periods(serving, result.stack.links, result.stack.ensembles, cfg.budget,
                               cfg.period);

    fs::create_directories(cfg.out_dir / "links");
    for (const auto& [pair, link] : result.stack.links.by_pair)
        link->save_file(cfg.out_dir / "links" / (pair.first + "__" + pair.second + ".link"));
    for (const auto& [target, ens] : result.stack.ensembles)
        ens->save_file(cfg.out_dir / "links" / (target + ".ens"));

    // Link inventory with training-set sizes and parameter counts.
    CsvWriter links_csv({"seed", "source", "target", "architecture", "parameters"});
    for (const auto& [pair, link] : result.stack.links.by_pair) {
        links_csv.cell(std::size_t(cfg.seed))
            .cell(pair.first)
            .cell(pair.second)
            .cell(std::string(to_string(link->architecture())))
            .cell(link->parameter_count())
            .end_row();
    }
    result.links_csv = cfg.out_dir / "links.csv";
    std::ofstream(result.links_csv, std::ios::binary) << links_csv.text();

    result.schedule_csv = cfg.out_dir / "schedule.csv";
    std::ofstream(result.schedule_csv, std::ios::binary)
        << schedule_report_csv(result.serve.periods, result.stack.model_ids, cfg.seed);

    double sum = 0.0;
    for (const auto& p : result.serve.periods) sum += p.average_output_accuracy;
    result.mean_output_accuracy =
        result.serve.periods.empty() ? 0.0 : sum / double(result.serve.periods.size());
    return result;
}

// ---------------------------------------------------------------------------
// Config-file bindings shared by the CLI subcommands.

inline SyntheticWorldSpec world_from_config(const Config& cfg) {
    SyntheticWorldSpec spec;
    spec.latent_classes = std::size_t(cfg.integer_or("world.classes", 8));
    spec.items = std::size_t(cfg.integer_or("world.items", 1000));
    spec.seed = std::uint64_t(cfg.integer_or("world.seed", 1));
    spec.oracle = cfg.boolean_or("world.oracle", true);
    for (auto cp : cfg.integer_list_or("world.change_points"))
        spec.change_points.push_back(std::size_t(cp));
    for (const auto& name : cfg.subsections("model")) {
        WorldModelSpec m;
        m.id = name;
        const std::string p = "model." + name + ".";
        m.task = task_class_from(cfg.str_or(p + "task", "single-label"));
        m.dim = std::size_t(cfg.integer_or(p + "dim", 4));
        m.vocab = std::size_t(cfg.integer_or(p + "vocab", 12));
        m.max_len = std::size_t(cfg.integer_or(p + "max_len", 6));
        m.noise = cfg.number_or(p + "noise", 0.0);
        m.cost_memory = cfg.number_or(p + "cost_memory", 1e9);
        m.cost_time = cfg.number_or(p + "cost_time", 30.0);
        spec.models.push_back(std::move(m));
    }
    require(!spec.models.empty(), "config: no [model.<id>] sections");
    return spec;
}

inline TrainOptions train_from_config(const Config& cfg) {
    TrainOptions t;
    t.learning_rate = cfg.number_or("train.lr", 0.01);
    t.epochs = std::size_t(cfg.integer_or("train.epochs", 100));
    t.batch = std::size_t(cfg.integer_or("train.batch", 32));
    t.width_factor = cfg.number_or("train.width_factor", 2.0);
    t.seed = std::uint64_t(cfg.integer_or("train.seed", cfg.integer_or("run.seed", 1)));
    return t;
}

inline ExperimentConfig experiment_from_config(const Config& cfg) {
    ExperimentConfig e;
    e.world = world_from_config(cfg);
    e.train = train_from_config(cfg);
    e.train_ratio = cfg.number_or("run.train_ratio", 0.1);
    e.seed = std::uint64_t(cfg.integer_or("run.seed", 1));
    std::string kind = cfg.str_or("schedule.budget_kind", "mem");
    require(kind == "mem" || kind == "time", "config: schedule.budget_kind must be mem or time");
    e.budget.kind = kind == "mem" ? Budget::Kind::MemoryBytes : Budget::Kind::TimeMs;
    e.budget.limit = cfg.number("schedule.budget");
    e.period.length = std::size_t(cfg.integer_or("schedule.period", 200));
    e.period.profile_ratio = cfg.number_or("schedule.profile_ratio", 0.05);
    e.out_dir = cfg.str_or("run.out", "artifacts");
    return e;
}

}  // namespace mlink
