#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "mlink/aligned.hpp"
#include "mlink/trace.hpp"

namespace mlink {

/// Deterministic desk-scale stand-in for real model traces. Every
/// model's output is a fixed function of a shared latent (class c plus
/// a uniform coordinate u), so cross-model mappings exist by
/// construction and the generator itself is the oracle tests query.
struct WorldModelSpec {
    std::string id;
    TaskClass task = TaskClass::SingleLabel;
    std::size_t dim = 4;        // vector formats
    std::size_t vocab = 12;     // sequence formats
    std::size_t max_len = 6;
    double noise = 0.0;         // confidence jitter / coordinate jitter
    double cost_memory = 1e9;
    double cost_time = 30.0;
};

struct SyntheticWorldSpec {
    std::size_t latent_classes = 8;
    std::size_t items = 1000;
    std::uint64_t seed = 1;
    std::vector<WorldModelSpec> models;
    std::vector<std::size_t> change_points;  // drift: the planted maps are re-drawn here
    bool oracle = true;                      // emit the ground-truth label trace
    std::string oracle_id = "oracle";
};

namespace world_detail {

/// Fixed-point-free permutation of [0, n), seeded: guarantees a planted
/// re-draw disagrees everywhere with the identity.
inline std::vector<std::size_t> derangement(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    if (n < 2) return p;
    for (;;) {
        rng.shuffle(p);
        bool ok = true;
        for (std::size_t i = 0; i < n; ++i) ok = ok && p[i] != i;
        if (ok) return p;
    }
}

/// Per-model class permutation for one drift variant. Variant 0 is the
/// identity; each later variant composes a fresh derangement.
inline std::vector<std::size_t> class_map(std::size_t classes, const std::string& model_id,
                                          std::uint64_t world_seed, std::size_t variant) {
    std::uint64_t h = world_seed;
    for (char ch : model_id) h = h * 1099511628211ull + std::uint64_t(ch);
    std::vector<std::size_t> map(classes);
    std::iota(map.begin(), map.end(), std::size_t{0});
    for (std::size_t v = 1; v <= variant; ++v) {
        Rng rng(h ^ (0x9e3779b97f4a7c15ull * v));
        auto d = derangement(classes, rng);
        for (std::size_t c = 0; c < classes; ++c) map[c] = d[map[c]];
    }
    return map;
}

struct Latent {
    std::size_t cls;
    double u;
};

inline ModelOutput model_output(const WorldModelSpec& m, const Latent& z, std::size_t mapped,
                                Rng& noise_rng) {
    switch (m.task) {
        case TaskClass::SingleLabel: {
            double conf = 0.9 - m.noise * noise_rng.uniform(0.0, 0.5);
            Vec v(m.dim, (1.0 - conf) / double(m.dim - 1));
            v[mapped % m.dim] = conf;
            return v;
        }
        case TaskClass::MultiLabel: {
            Vec v(m.dim);
            for (std::size_t j = 0; j < m.dim; ++j) {
                bool active = (mapped >> (j % 8)) & 1u;
                double logit = (active ? 2.0 : -2.0) + m.noise * noise_rng.normal(0.0, 1.0);
                v[j] = 1.0 / (1.0 + std::exp(-logit));
            }
            return v;
        }
        case TaskClass::Localization: {
            if (mapped % 4 == 0) return Vec{0.0, 0.0, 0.0, 0.0};
            double jitter = m.noise * noise_rng.normal(0.0, 0.1);
            double x1 = z.u * 5.0 + jitter;
            double y1 = (1.0 - z.u) * 5.0;
            return Vec{x1, y1, x1 + 1.0 + double(mapped % 3), y1 + 1.0 + double(mapped % 2)};
        }
        case TaskClass::Regression: {
            double v = double(mapped) + 0.4 * z.u + m.noise * noise_rng.normal(0.0, 0.1);
            return Vec{v};
        }
        case TaskClass::SequenceGeneration: {
            const std::size_t base = m.vocab - 4;
            TokenSeq toks;
            std::size_t x = mapped + 1;
            while (x > 0 && toks.size() < m.max_len) {
                toks.push_back(int(4 + x % base));
                x /= base;
            }
            return toks;
        }
    }
    fail("world: unreachable task");
}

}  // namespace world_detail

/// Generated traces plus the planted structure, queryable by tests.
struct SyntheticWorld {
    TraceSet traces;
    std::vector<std::size_t> latent_class;  // per item

    /// Fraction of sampled items whose planted class map changes across
    /// the given change point (the generator self-audit).
    double mapping_disagreement(const SyntheticWorldSpec& spec, const std::string& model_id,
                                std::size_t change_index) const {
        auto before = world_detail::class_map(spec.latent_classes, model_id, spec.seed,
                                              change_index);
        auto after = world_detail::class_map(spec.latent_classes, model_id, spec.seed,
                                             change_index + 1);
        std::size_t differ = 0;
        for (std::size_t c : latent_class) differ += before[c] != after[c];
        return double(differ) / double(latent_class.size());
    }
};

inline SyntheticWorld generate_traces(const SyntheticWorldSpec& spec) {
    require(spec.items >= 1, "world: need at least one item");
    require(!spec.models.empty(), "world: no models");
    SyntheticWorld world;
    Rng latent_rng(spec.seed);
    Rng noise_rng(spec.seed ^ 0x517cc1b727220a95ull);

    std::vector<ModelDescriptor> descs;
    for (const auto& m : spec.models) {
        ModelDescriptor d;
        d.model_id = m.id;
        d.task_class = m.task;
        if (m.task == TaskClass::SequenceGeneration)
            d.output = SequenceFormat{m.vocab, m.max_len};
        else
            d.output = VectorFormat{m.task == TaskClass::Localization
                                        ? 4
                                        : (m.task == TaskClass::Regression ? 1 : m.dim)};
        switch (m.task) {
            case TaskClass::SingleLabel: d.metric.kind = TaskMetric::Kind::Accuracy; break;
            case TaskClass::MultiLabel: d.metric.kind = TaskMetric::Kind::MeanAveragePrecision; break;
            case TaskClass::Localization: d.metric.kind = TaskMetric::Kind::Iou; break;
            case TaskClass::Regression:
                d.metric.kind = TaskMetric::Kind::CountingAccuracy;
                break;
            case TaskClass::SequenceGeneration: d.metric.kind = TaskMetric::Kind::Wer; break;
        }
        d.cost_memory = m.cost_memory;
        d.cost_time = m.cost_time;
        d.validate();
        descs.push_back(d);
        InferenceTrace t;
        t.model_id = m.id;
        world.traces.traces.push_back(t);
    }
    world.traces.descriptors = descs;

    ModelDescriptor oracle_desc;
    InferenceTrace oracle_trace;
    if (spec.oracle) {
        oracle_desc.model_id = spec.oracle_id;
        oracle_desc.task_class = TaskClass::SingleLabel;
        oracle_desc.output = VectorFormat{spec.latent_classes};
        oracle_desc.metric.kind = TaskMetric::Kind::Accuracy;
        oracle_desc.is_oracle = true;
        oracle_trace.model_id = spec.oracle_id;
    }

    std::vector<std::vector<std::size_t>> maps(spec.models.size());
    std::size_t variant = 0;
    for (std::size_t m = 0; m < spec.models.size(); ++m)
        maps[m] = world_detail::class_map(spec.latent_classes, spec.models[m].id, spec.seed, 0);

    for (std::size_t i = 0; i < spec.items; ++i) {
        for (std::size_t cp : spec.change_points) {
            if (i == cp) {
                ++variant;
                for (std::size_t m = 0; m < spec.models.size(); ++m)
                    maps[m] = world_detail::class_map(spec.latent_classes, spec.models[m].id,
                                                      spec.seed, variant);
            }
        }
        world_detail::Latent z{latent_rng.index(spec.latent_classes),
                               latent_rng.uniform(0.0, 1.0)};
        world.latent_class.push_back(z.cls);
        char id[20];
        std::snprintf(id, sizeof(id), "i%08zu", i);
        for (std::size_t m = 0; m < spec.models.size(); ++m) {
            ModelOutput out =
                world_detail::model_output(spec.models[m], z, maps[m][z.cls], noise_rng);
            world.traces.traces[m].records.push_back({id, std::move(out)});
        }
        if (spec.oracle) {
            Vec truth(spec.latent_classes, 0.0);
            truth[z.cls] = 1.0;
            oracle_trace.records.push_back({id, truth});
        }
    }
    if (spec.oracle) {
        world.traces.descriptors.push_back(oracle_desc);
        world.traces.traces.push_back(std::move(oracle_trace));
    }
    return world;
}

inline void write_trace_dir(const std::filesystem::path& dir, const TraceSet& set) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < set.descriptors.size(); ++i) {
        const auto& d = set.descriptors[i];
        save_descriptor(dir / (d.model_id + ".desc.json"), d);
        save_trace(dir / (d.model_id + ".trace.jsonl"), set.traces[i], d);
    }
}

// ---------------------------------------------------------------------------
// The flip-at-midpoint drift stream: before the change point the source
// support is the lower half of the classes and the mapping is the
// identity; after it the support moves to the upper half and the
// mapping shifts by one class, so the pre- and post-segment mappings
// disagree on the full support.

struct FlipStreamSpec {
    std::size_t classes = 10;
    std::size_t items = 10000;
    std::size_t flip_at = 5000;
    std::uint64_t seed = 1;
    // Sources are exact one-hots (unseen classes leave their input
    // columns untrained); targets are soft, which bounds the trained
    // logits and keeps prediction confidence calibrated.
    double source_confidence = 1.0;
    double target_confidence = 0.95;
};

struct FlipStream {
    ModelDescriptor source_desc, target_desc;
    AlignedDataset stream;          // time-ordered (ids are zero-padded)
    double mapping_disagreement;    // audit over the sampled support
    std::size_t flip_at;
};

inline FlipStream make_flip_stream(const FlipStreamSpec& spec) {
    require(spec.classes >= 4 && spec.classes % 2 == 0, "flip stream: need an even class count");
    require(spec.flip_at <= spec.items, "flip stream: change point outside the stream");
    FlipStream out;
    out.flip_at = spec.flip_at;
    out.source_desc.model_id = "source";
    out.source_desc.task_class = TaskClass::SingleLabel;
    out.source_desc.output = VectorFormat{spec.classes};
    out.source_desc.metric.kind = TaskMetric::Kind::Accuracy;
    out.target_desc = out.source_desc;
    out.target_desc.model_id = "target";

    out.stream.source_ids = {"source"};
    out.stream.target_id = "target";

    Rng rng(spec.seed);
    std::size_t disagree = 0;
    const std::size_t half = spec.classes / 2;
    for (std::size_t i = 0; i < spec.items; ++i) {
        const bool post = i >= spec.flip_at;
        std::size_t c = rng.index(half) + (post ? half : 0);
        std::size_t mapped = post ? (c + 1) % spec.classes : c;
        // Audit f1 (identity) against f2 (+1) on this item's latent.
        disagree += ((c + 1) % spec.classes) != c;
        auto one_hotish = [&](std::size_t cls, double conf) {
            Vec v(spec.classes,
                  conf >= 1.0 ? 0.0 : (1.0 - conf) / double(spec.classes - 1));
            v[cls] = conf >= 1.0 ? 1.0 : conf;
            return v;
        };
        char id[20];
        std::snprintf(id, sizeof(id), "i%08zu", i);
        out.stream.rows.push_back({id,
                                   {one_hotish(c, spec.source_confidence)},
                                   one_hotish(mapped, spec.target_confidence)});
    }
    out.mapping_disagreement = double(disagree) / double(spec.items);
    return out;
}

}  // namespace mlink
