#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mlink/model.hpp"

namespace mlink {

/// Raw task metric plus its [0,1] normalization p. Accuracy, mAP, IoU
/// and counting accuracy are already in [0,1]; MAE maps through
/// max(0, 1 - MAE/range) and WER through max(0, 1 - WER).
struct LinkPerformance {
    double raw_metric = 0.0;
    double p = 0.0;
};

namespace metrics {

inline std::size_t argmax(const Vec& v) {
    return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

inline double accuracy(const std::vector<Vec>& pred, const std::vector<Vec>& target) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += argmax(pred[i]) == argmax(target[i]);
    return double(hit) / double(pred.size());
}

/// 11-point interpolated average precision, mean over classes that have
/// at least one positive (target score >= 0.5).
inline double mean_average_precision(const std::vector<Vec>& pred,
                                     const std::vector<Vec>& target) {
    const std::size_t n = pred.size(), classes = pred.front().size();
    double ap_sum = 0.0;
    std::size_t valid = 0;
    std::vector<std::size_t> order(n);
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t positives = 0;
        for (std::size_t i = 0; i < n; ++i) positives += target[i][c] >= 0.5;
        if (positives == 0) continue;
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return pred[a][c] > pred[b][c]; });
        std::vector<double> precision(n), recall(n);
        std::size_t tp = 0;
        for (std::size_t rank = 0; rank < n; ++rank) {
            tp += target[order[rank]][c] >= 0.5;
            precision[rank] = double(tp) / double(rank + 1);
            recall[rank] = double(tp) / double(positives);
        }
        double ap = 0.0;
        for (int pt = 0; pt <= 10; ++pt) {
            double r = pt / 10.0;
            double best = 0.0;
            for (std::size_t rank = 0; rank < n; ++rank)
                if (recall[rank] >= r) best = std::max(best, precision[rank]);
            ap += best / 11.0;
        }
        ap_sum += ap;
        ++valid;
    }
    return valid ? ap_sum / double(valid) : 0.0;
}

/// Axis-aligned box IoU on (x1,y1,x2,y2). Degenerate boxes have zero
/// area; when both boxes are empty the pair agrees and scores 1.
inline double box_iou(const Vec& a, const Vec& b) {
    auto area = [](const Vec& r) {
        return std::max(0.0, r[2] - r[0]) * std::max(0.0, r[3] - r[1]);
    };
    double ia = area(a), ib = area(b);
    double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
    double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
    double inter = iw * ih;
    double uni = ia + ib - inter;
    if (uni <= 0.0) return (ia == 0.0 && ib == 0.0) ? 1.0 : 0.0;
    return inter / uni;
}

inline double mean_iou(const std::vector<Vec>& pred, const std::vector<Vec>& target) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += box_iou(pred[i], target[i]);
    return sum / double(pred.size());
}

inline double mean_absolute_error(const std::vector<Vec>& pred, const std::vector<Vec>& target) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (std::size_t k = 0; k < pred[i].size(); ++k) {
            sum += std::abs(pred[i][k] - target[i][k]);
            ++count;
        }
    return sum / double(count);
}

/// Fraction of rows whose absolute error is strictly less than 0.5;
/// an error of exactly 0.5 counts as incorrect.
inline double counting_accuracy(const std::vector<Vec>& pred, const std::vector<Vec>& target) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        hit += std::abs(pred[i][0] - target[i][0]) < TaskMetric::kCountingThreshold;
    return double(hit) / double(pred.size());
}

inline std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

struct WerResult {
    double wer = 0.0;
    std::size_t skipped_empty_refs = 0;
};

/// Corpus word error rate: total edit distance over total reference
/// length. Rows with an empty reference are skipped and counted.
inline WerResult word_error_rate(const std::vector<TokenSeq>& pred,
                                 const std::vector<TokenSeq>& ref) {
    std::size_t edits = 0, ref_len = 0;
    WerResult r;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (ref[i].empty()) {
            ++r.skipped_empty_refs;
            continue;
        }
        edits += edit_distance(pred[i], ref[i]);
        ref_len += ref[i].size();
    }
    require(ref_len > 0, "wer: every reference is empty");
    r.wer = double(edits) / double(ref_len);
    return r;
}

}  // namespace metrics

/// Raw metric plus p over aligned prediction/target lists. Formats must
/// conform to the metric (sequences for WER, vectors otherwise).
inline LinkPerformance evaluate_performance(const std::vector<ModelOutput>& predictions,
                                            const std::vector<ModelOutput>& targets,
                                            const TaskMetric& metric) {
    require(predictions.size() == targets.size() && !predictions.empty(),
            "evaluate: prediction/target counts differ or are zero");
    using K = TaskMetric::Kind;
    LinkPerformance perf;
    if (metric.kind == K::Wer) {
        std::vector<TokenSeq> p, t;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            p.push_back(std::get<TokenSeq>(predictions[i]));
            t.push_back(std::get<TokenSeq>(targets[i]));
        }
        perf.raw_metric = metrics::word_error_rate(p, t).wer;
        perf.p = std::max(0.0, 1.0 - perf.raw_metric);
    } else {
        std::vector<Vec> p, t;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            p.push_back(std::get<Vec>(predictions[i]));
            t.push_back(std::get<Vec>(targets[i]));
        }
        switch (metric.kind) {
            case K::Accuracy:
                perf.raw_metric = metrics::accuracy(p, t);
                perf.p = perf.raw_metric;
                break;
            case K::MeanAveragePrecision:
                perf.raw_metric = metrics::mean_average_precision(p, t);
                perf.p = perf.raw_metric;
                break;
            case K::Iou:
                perf.raw_metric = metrics::mean_iou(p, t);
                perf.p = perf.raw_metric;
                break;
            case K::Mae:
                perf.raw_metric = metrics::mean_absolute_error(p, t);
                perf.p = std::max(0.0, 1.0 - perf.raw_metric / metric.mae_range);
                break;
            case K::CountingAccuracy:
                perf.raw_metric = metrics::counting_accuracy(p, t);
                perf.p = perf.raw_metric;
                break;
            case K::Wer:
                break;
        }
    }
    perf.p = std::clamp(perf.p, 0.0, 1.0);
    return perf;
}

}  // namespace mlink
