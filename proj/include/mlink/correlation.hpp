#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mlink/model.hpp"
#include "mlink/trace.hpp"

namespace mlink {

/// Scalar label derived from one output for correlation: argmax index
/// for classification, box emptiness 0/1 for localization (the all-zero
/// encoding is the empty box), the raw scalar for regression.
inline double correlation_label(const ModelDescriptor& desc, const ModelOutput& out) {
    require(desc.task_class != TaskClass::SequenceGeneration,
            "correlation: sequence-generation models are skipped");
    const Vec& v = std::get<Vec>(out);
    switch (desc.task_class) {
        case TaskClass::SingleLabel:
        case TaskClass::MultiLabel:
            return double(std::max_element(v.begin(), v.end()) - v.begin());
        case TaskClass::Localization: {
            bool empty = true;
            for (double x : v) empty = empty && x == 0.0;
            return empty ? 0.0 : 1.0;
        }
        case TaskClass::Regression:
            return v[0];
        case TaskClass::SequenceGeneration:
            break;
    }
    fail("correlation: unreachable task class");
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size() && a.size() >= 2, "pearson: need two equal series of length >= 2");
    const double n = double(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    require(va > 0.0 && vb > 0.0, "pearson: undefined for a constant label series");
    return cov / std::sqrt(va * vb);
}

/// Pearson correlation between the derived label series of two aligned
/// traces. Preconditions: neither model is sequence-output, at least
/// two aligned rows, both series non-constant (constant series are
/// reported as undefined rather than 0).
inline double pearson_label_correlation(const ModelDescriptor& desc_a,
                                        const InferenceTrace& trace_a,
                                        const ModelDescriptor& desc_b,
                                        const InferenceTrace& trace_b) {
    std::map<std::string, const ModelOutput*> by_id;
    for (const auto& r : trace_a.records) by_id[r.input_id] = &r.output;
    std::vector<double> la, lb;
    for (const auto& r : trace_b.records) {
        auto it = by_id.find(r.input_id);
        if (it == by_id.end()) continue;
        la.push_back(correlation_label(desc_a, *it->second));
        lb.push_back(correlation_label(desc_b, r.output));
    }
    return pearson(la, lb);
}

}  // namespace mlink
