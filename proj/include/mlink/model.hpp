#pragma once

#include <string>

#include "mlink/error.hpp"
#include "mlink/nn/ops.hpp"
#include "mlink/types.hpp"

#include <json.hpp>

namespace mlink {

enum class TaskClass { SingleLabel, MultiLabel, Localization, Regression, SequenceGeneration };

inline const char* to_string(TaskClass t) {
    switch (t) {
        case TaskClass::SingleLabel: return "single-label";
        case TaskClass::MultiLabel: return "multi-label";
        case TaskClass::Localization: return "localization";
        case TaskClass::Regression: return "regression";
        case TaskClass::SequenceGeneration: return "sequence-generation";
    }
    return "?";
}

inline TaskClass task_class_from(const std::string& s) {
    if (s == "single-label") return TaskClass::SingleLabel;
    if (s == "multi-label") return TaskClass::MultiLabel;
    if (s == "localization") return TaskClass::Localization;
    if (s == "regression") return TaskClass::Regression;
    if (s == "sequence-generation") return TaskClass::SequenceGeneration;
    fail("unknown task class '" + s + "'");
}

/// Task-specific quality measure. MAE carries a positive range used to
/// normalize into [0,1]; counting accuracy uses the fixed 0.5 rule.
struct TaskMetric {
    enum class Kind { Accuracy, MeanAveragePrecision, Iou, Mae, Wer, CountingAccuracy };
    Kind kind = Kind::Accuracy;
    double mae_range = 1.0;

    static constexpr double kCountingThreshold = 0.5;

    void validate() const {
        if (kind == Kind::Mae)
            require(mae_range > 0.0, "metric: MAE range must be positive");
    }
};

inline const char* to_string(TaskMetric::Kind k) {
    using K = TaskMetric::Kind;
    switch (k) {
        case K::Accuracy: return "accuracy";
        case K::MeanAveragePrecision: return "mAP";
        case K::Iou: return "IoU";
        case K::Mae: return "MAE";
        case K::Wer: return "WER";
        case K::CountingAccuracy: return "counting-accuracy";
    }
    return "?";
}

inline TaskMetric::Kind metric_kind_from(const std::string& s) {
    using K = TaskMetric::Kind;
    if (s == "accuracy") return K::Accuracy;
    if (s == "mAP") return K::MeanAveragePrecision;
    if (s == "IoU") return K::Iou;
    if (s == "MAE") return K::Mae;
    if (s == "WER") return K::Wer;
    if (s == "counting-accuracy") return K::CountingAccuracy;
    fail("unknown metric kind '" + s + "'");
}

/// A black-box model: identity, output format, task, metric and cost
/// profile. Oracle descriptors stand for the ground-truth generator;
/// they serve at zero cost and are never activated or used as a link
/// source.
struct ModelDescriptor {
    std::string model_id;
    TaskClass task_class = TaskClass::SingleLabel;
    OutputFormat output = VectorFormat{1};
    TaskMetric metric;
    double cost_memory = 0.0;  // bytes
    double cost_time = 0.0;    // milliseconds per item
    bool is_oracle = false;

    void validate() const {
        require(!model_id.empty(), "descriptor: model_id must be non-empty");
        if (const auto* v = std::get_if<VectorFormat>(&output)) {
            require(v->dim >= 1, "descriptor " + model_id + ": vector dim must be >= 1");
            require(task_class != TaskClass::SequenceGeneration,
                    "descriptor " + model_id + ": sequence task needs a sequence format");
        } else {
            const auto& s = std::get<SequenceFormat>(output);
            require(s.vocab >= 4,
                    "descriptor " + model_id + ": vocabulary must hold the 4 reserved tokens");
            require(s.max_len >= 1, "descriptor " + model_id + ": max_len must be >= 1");
            require(task_class == TaskClass::SequenceGeneration,
                    "descriptor " + model_id + ": sequence format implies a sequence task");
        }
        require(cost_memory >= 0.0 && cost_time >= 0.0,
                "descriptor " + model_id + ": costs must be non-negative");
        if (is_oracle)
            require(cost_memory == 0.0 && cost_time == 0.0,
                    "descriptor " + model_id + ": oracle nodes serve at zero cost");
        metric.validate();
    }

    /// Output activation by target task: softmax for single-label,
    /// sigmoid for multi-label, linear for regression and localization.
    /// Sequence heads use per-step token softmax.
    nn::Activation activation() const {
        switch (task_class) {
            case TaskClass::SingleLabel: return nn::Activation::Softmax;
            case TaskClass::MultiLabel: return nn::Activation::Sigmoid;
            case TaskClass::Localization:
            case TaskClass::Regression: return nn::Activation::Linear;
            case TaskClass::SequenceGeneration: return nn::Activation::Softmax;
        }
        return nn::Activation::Linear;
    }

    nn::LossKind loss_kind() const {
        switch (task_class) {
            case TaskClass::SingleLabel: return nn::LossKind::CategoricalCrossEntropy;
            case TaskClass::MultiLabel: return nn::LossKind::BinaryCrossEntropy;
            case TaskClass::Localization:
            case TaskClass::Regression: return nn::LossKind::MeanSquaredError;
            case TaskClass::SequenceGeneration: return nn::LossKind::SequenceTokenCrossEntropy;
        }
        return nn::LossKind::MeanSquaredError;
    }

    double cost(bool memory_kind) const { return memory_kind ? cost_memory : cost_time; }
};

inline nlohmann::json descriptor_to_json(const ModelDescriptor& d) {
    nlohmann::json j;
    j["model_id"] = d.model_id;
    j["task_class"] = to_string(d.task_class);
    if (const auto* v = std::get_if<VectorFormat>(&d.output)) {
        j["output"] = {{"kind", "vector"}, {"dim", v->dim}};
    } else {
        const auto& s = std::get<SequenceFormat>(d.output);
        j["output"] = {{"kind", "sequence"}, {"vocab", s.vocab}, {"max_len", s.max_len}};
    }
    j["metric"] = {{"kind", to_string(d.metric.kind)}};
    if (d.metric.kind == TaskMetric::Kind::Mae) j["metric"]["range"] = d.metric.mae_range;
    j["cost_memory"] = d.cost_memory;
    j["cost_time"] = d.cost_time;
    j["is_oracle"] = d.is_oracle;
    return j;
}

inline ModelDescriptor descriptor_from_json(const nlohmann::json& j) {
    ModelDescriptor d;
    d.model_id = j.at("model_id").get<std::string>();
    d.task_class = task_class_from(j.at("task_class").get<std::string>());
    const auto& out = j.at("output");
    if (out.at("kind") == "vector") {
        d.output = VectorFormat{out.at("dim").get<std::size_t>()};
    } else if (out.at("kind") == "sequence") {
        d.output = SequenceFormat{out.at("vocab").get<std::size_t>(),
                                  out.at("max_len").get<std::size_t>()};
    } else {
        fail("descriptor: unknown output kind");
    }
    d.metric.kind = metric_kind_from(j.at("metric").at("kind").get<std::string>());
    if (j.at("metric").contains("range")) d.metric.mae_range = j.at("metric").at("range").get<double>();
    d.cost_memory = j.value("cost_memory", 0.0);
    d.cost_time = j.value("cost_time", 0.0);
    d.is_oracle = j.value("is_oracle", false);
    d.validate();
    return d;
}

}  // namespace mlink
