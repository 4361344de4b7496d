#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mlink/link.hpp"

namespace mlink {

/// Labeling budget over a finite stream: consuming a label means
/// reading both the source and target models' exact outputs for that
/// item. Schedule-driven policies (offline prefix, periodic chunks)
/// are capped cumulatively against the whole stream; adaptive policies
/// additionally accrue budget at the stream rate so unspent budget can
/// be burst after a change point.
class LabelBudget {
public:
    LabelBudget(double ratio, std::size_t stream_length)
        : ratio_(ratio), stream_length_(stream_length) {
        require(ratio > 0.0 && ratio <= 1.0, "label budget: ratio must lie in (0,1]");
        require(stream_length >= 1, "label budget: empty stream");
    }

    double ratio() const { return ratio_; }
    std::size_t consumed() const { return consumed_; }

    bool cumulative_allows() const {
        return double(consumed_ + 1) <= ratio_ * double(stream_length_) + 1.0;
    }
    bool rate_allows(std::size_t seen) const {
        return double(consumed_ + 1) <= ratio_ * double(seen + 1) + 1.0;
    }

    void consume() { ++consumed_; }

private:
    double ratio_;
    std::size_t stream_length_;
    std::size_t consumed_ = 0;
};

/// Shannon entropy for classification outputs; for multi-label sigmoid
/// scores the mean per-dimension binary entropy.
inline double classification_uncertainty(TaskClass task, const Vec& output) {
    if (task == TaskClass::MultiLabel) {
        double h = 0.0;
        for (double p : output) {
            double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
            h -= q * std::log(q) + (1.0 - q) * std::log(1.0 - q);
        }
        return h / double(output.size());
    }
    return nn::entropy(output);
}

/// Population variance; the regression confidence proxy.
inline double variance(const std::vector<double>& xs) {
    require(xs.size() >= 1, "variance: empty sample");
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - mean) * (x - mean);
    return v / double(xs.size());
}

/// Uncertainty of one link prediction. Classification scores by output
/// entropy. Regression and localization score by the variance of peer
/// predictions when at least two peers are available, otherwise by a
/// sliding window (32) over the link's own recent outputs; with a cold
/// window and no peers the score is undefined and treated as maximal.
class UncertaintyScorer {
public:
    explicit UncertaintyScorer(TaskClass task) : task_(task) {}

    double score(const Vec& prediction, const std::vector<Vec>* peer_predictions = nullptr) {
        if (task_ == TaskClass::SingleLabel || task_ == TaskClass::MultiLabel)
            return classification_uncertainty(task_, prediction);
        if (peer_predictions && peer_predictions->size() >= 2) {
            double v = 0.0;
            for (std::size_t k = 0; k < prediction.size(); ++k) {
                std::vector<double> col;
                for (const auto& p : *peer_predictions) col.push_back(p[k]);
                v += variance(col);
            }
            return v / double(prediction.size());
        }
        double mean0 = prediction.empty() ? 0.0 : prediction[0];
        window_.push_back(mean0);
        if (window_.size() > kWindow) window_.pop_front();
        if (window_.size() < 2) return std::numeric_limits<double>::infinity();
        return variance({window_.begin(), window_.end()});
    }

    static constexpr std::size_t kWindow = 32;

private:
    TaskClass task_;
    std::deque<double> window_;
};

/// Small MLP from the link's final-stage activations (last hidden
/// layer concatenated with the activated output) to a predicted
/// per-sample loss, trained with MSE on labeled items only.
class LossPredictor {
public:
    LossPredictor(std::size_t input_width, std::uint64_t seed, double learning_rate = 0.01)
        : opt_(learning_rate) {
        Rng rng(seed);
        net_ = std::make_unique<nn::VecToVecNet>(input_width, 1, nn::Activation::Linear, 16, rng);
    }

    double predict(const Vec& activations) const {
        return std::get<Vec>(net_->predict(activations))[0];
    }

    void step(const Vec& activations, double actual_loss) {
        nn::train_step(*net_, {{activations, Vec{actual_loss}}},
                       nn::LossKind::MeanSquaredError, opt_);
    }

private:
    std::unique_ptr<nn::VecToVecNet> net_;
    nn::RmspropState opt_;
};

/// Which stream items get labeled.
struct SamplingPolicy {
    enum class Kind { OfflineInit, Periodic, Uncertainty, LossPrediction };
    Kind kind = Kind::OfflineInit;

    // periodic
    std::size_t interval = 1000;
    std::size_t chunk = 10;
    // uncertainty: tau is set once from the leading profiling window,
    // at the midrange of the 10th and 90th score percentiles (the
    // window spans both the cold and the first trained segment, so the
    // midrange separates confident from unconfident predictions more
    // robustly than the median, which sits on a cluster edge). A fixed
    // tau overrides.
    std::size_t profile_window = 1000;
    std::optional<double> fixed_tau;
    // Loss prediction labels three ways, all under the rate budget:
    // a warmup while the predictor has no history, an upward-outlier
    // rule against a sliding buffer of recent predicted losses, and a
    // low exploration floor (an eighth of the label rate) that keeps
    // feeding the predictor real losses so it can notice a regime
    // change at all. A plain top-quantile rule fires at a constant
    // rate in steady state and can never concentrate labels after a
    // change point, so the outlier form is used instead.
    std::size_t min_history = 12;
    std::size_t buffer_window = 500;
    double z_threshold = 3.0;
    double exploration_fraction = 0.125;

    static SamplingPolicy offline_init() { return {}; }
    static SamplingPolicy periodic(std::size_t interval, std::size_t chunk) {
        SamplingPolicy p;
        p.kind = Kind::Periodic;
        p.interval = interval;
        p.chunk = chunk;
        return p;
    }
    static SamplingPolicy uncertainty(std::size_t profile_window = 500) {
        SamplingPolicy p;
        p.kind = Kind::Uncertainty;
        p.profile_window = profile_window;
        return p;
    }
    static SamplingPolicy loss_prediction() {
        SamplingPolicy p;
        p.kind = Kind::LossPrediction;
        return p;
    }
};

inline const char* to_string(SamplingPolicy::Kind k) {
    switch (k) {
        case SamplingPolicy::Kind::OfflineInit: return "offline";
        case SamplingPolicy::Kind::Periodic: return "periodic";
        case SamplingPolicy::Kind::Uncertainty: return "uncertainty";
        case SamplingPolicy::Kind::LossPrediction: return "losspred";
    }
    return "?";
}

/// Per-item labeling decisions for one policy over one stream.
/// Stateful: owns the budget, the uncertainty threshold and the
/// loss-prediction buffer.
class LabelSelector {
public:
    LabelSelector(const SamplingPolicy& policy, double label_ratio, std::size_t stream_length)
        : policy_(policy), budget_(label_ratio, stream_length) {
        prefix_ = std::size_t(std::ceil(label_ratio * double(stream_length)));
    }

    const LabelBudget& budget() const { return budget_; }
    std::optional<double> tau() const { return tau_; }

    /// The score argument is the policy-specific signal: uncertainty
    /// score or predicted loss. Consumes budget when true.
    bool select(std::size_t position, double score) {
        using K = SamplingPolicy::Kind;
        bool take = false;
        switch (policy_.kind) {
            case K::OfflineInit:
                take = position < prefix_ && budget_.cumulative_allows();
                break;
            case K::Periodic:
                take = (position % policy_.interval) < policy_.chunk &&
                       budget_.cumulative_allows();
                break;
            case K::Uncertainty: {
                if (policy_.fixed_tau) {
                    take = score >= *policy_.fixed_tau && budget_.rate_allows(position);
                } else if (position < policy_.profile_window) {
                    window_scores_.push_back(score);
                    take = budget_.rate_allows(position);
                } else {
                    if (!tau_) {
                        auto scores = window_scores_;
                        std::sort(scores.begin(), scores.end());
                        double lo = scores[scores.size() / 10];
                        double hi = scores[scores.size() - 1 - scores.size() / 10];
                        tau_ = (lo + hi) / 2.0;
                    }
                    take = score >= *tau_ && budget_.rate_allows(position);
                }
                break;
            }
            case K::LossPrediction: {
                if (history_.size() < policy_.min_history) {
                    take = budget_.rate_allows(position);
                } else {
                    double mean = 0.0;
                    for (double h : history_) mean += h;
                    mean /= double(history_.size());
                    double sd = std::sqrt(variance({history_.begin(), history_.end()}));
                    // Relative floor on sd: a converged predictor has a
                    // near-constant buffer and tiny jitter must not fire.
                    double z = (score - mean) / std::max(sd, 0.05 * std::abs(mean) + 1e-9);
                    bool explore = double(budget_.consumed()) <
                                   policy_.exploration_fraction * budget_.ratio() *
                                       double(position + 1);
                    take = (z >= policy_.z_threshold || explore) && budget_.rate_allows(position);
                }
                history_.push_back(score);
                if (history_.size() > policy_.buffer_window) history_.pop_front();
                break;
            }
        }
        if (take) budget_.consume();
        return take;
    }

private:
    SamplingPolicy policy_;
    LabelBudget budget_;
    std::size_t prefix_ = 0;
    std::vector<double> window_scores_;
    std::optional<double> tau_;
    std::deque<double> history_;
};

struct OnlineConfig {
    double label_ratio = 0.01;
    std::size_t segments = 20;
    std::size_t steps_per_update = 300;
    std::size_t batch = 32;
    double learning_rate = 0.01;
    std::size_t buffer_capacity = 128;
    std::uint64_t seed = 1;
};

struct SegmentRow {
    std::size_t segment = 0;
    std::size_t labels_spent = 0;
    double accuracy = 0.0;
};

struct OnlineResult {
    std::vector<SegmentRow> segments;
    std::size_t total_labels = 0;
};

/// Gradient steps on the buffered labeled pairs. An empty buffer (no
/// labels this segment) leaves the link unchanged by construction.
inline void online_update(ModelLink& link, const std::vector<nn::Sample>& buffer,
                          std::size_t steps, double learning_rate, Rng& rng,
                          nn::RmspropState& opt, std::size_t batch) {
    (void)learning_rate;
    if (buffer.empty()) return;
    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<nn::Sample> mini;
        for (std::size_t b = 0; b < std::min(batch, buffer.size()); ++b)
            mini.push_back(buffer[rng.index(buffer.size())]);
        nn::train_step(link.net(), mini, link.loss_kind(), opt);
    }
}

/// The online serving loop: predict every item with the link as of the
/// current segment, decide labeling per the policy under the budget,
/// and fold buffered labels in at segment boundaries. Reports one row
/// per segment: labels spent and accuracy against the exact trace.
inline OnlineResult run_online(ModelLink& link, const AlignedDataset& stream,
                               const SamplingPolicy& policy, const OnlineConfig& cfg) {
    require(!stream.rows.empty(), "online: empty stream");
    require(stream.source_ids.size() == 1 && stream.source_ids[0] == link.source_id() &&
                stream.target_id == link.target_id(),
            "online: stream models do not match the link");
    require(cfg.segments >= 1 && cfg.segments <= stream.rows.size(),
            "online: segment count must be in [1, items]");
    const std::size_t n = stream.rows.size();
    const std::size_t seg_len = (n + cfg.segments - 1) / cfg.segments;

    LabelSelector selector(policy, cfg.label_ratio, n);
    const bool classification = link.target_descriptor().task_class == TaskClass::SingleLabel ||
                                link.target_descriptor().task_class == TaskClass::MultiLabel;
    const bool seq_target = link.sequence_target();
    UncertaintyScorer scorer(link.target_descriptor().task_class);
    std::optional<LossPredictor> predictor;
    auto predictor_input = [&](const Vec& hidden, const ModelOutput& pred) {
        Vec in = hidden;
        if (!seq_target) {
            const Vec& y = std::get<Vec>(pred);
            in.insert(in.end(), y.begin(), y.end());
        }
        return in;
    };
    if (policy.kind == SamplingPolicy::Kind::LossPrediction)
        predictor.emplace(link.net().hidden_width() +
                              (seq_target ? 0 : head_dim(link.target_descriptor().output)),
                          cfg.seed ^ 0xA001u);

    std::vector<nn::Sample> buffer;
    Rng update_rng(cfg.seed);
    nn::RmspropState opt(cfg.learning_rate);

    OnlineResult result;
    std::vector<ModelOutput> seg_preds, seg_exact;
    std::size_t seg_labels = 0, seg_new_labels = 0;
    std::size_t seg_index = 0;

    auto close_segment = [&]() {
        SegmentRow row;
        row.segment = seg_index;
        row.labels_spent = seg_labels;
        row.accuracy = seg_preds.empty()
                           ? 0.0
                           : evaluate_performance(seg_preds, seg_exact,
                                                  link.target_descriptor().metric)
                                 .p;
        result.segments.push_back(row);
        if (seg_new_labels > 0) {
            online_update(link, buffer, cfg.steps_per_update, cfg.learning_rate, update_rng, opt,
                          cfg.batch);
            // Keep the loss predictor synchronized with the link it
            // describes: replay the buffered labels' losses under the
            // updated parameters. Labeled data only, so no extra budget.
            if (predictor) {
                for (int pass = 0; pass < 2; ++pass) {
                    for (const auto& s : buffer) {
                        Vec h;
                        ModelOutput y = link.predict_output(s.input, &h);
                        double actual = link.net().batch_loss({s}, link.loss_kind());
                        predictor->step(predictor_input(h, y), actual);
                    }
                }
            }
        }
        seg_preds.clear();
        seg_exact.clear();
        seg_labels = 0;
        seg_new_labels = 0;
        ++seg_index;
    };

    for (std::size_t pos = 0; pos < n; ++pos) {
        const auto& row = stream.rows[pos];
        Vec hidden;
        ModelOutput pred = link.predict_output(row.sources[0], &hidden);
        seg_preds.push_back(pred);
        seg_exact.push_back(row.target);

        double score = 0.0;
        switch (policy.kind) {
            case SamplingPolicy::Kind::Uncertainty:
                score = classification ? scorer.score(std::get<Vec>(pred))
                                       : scorer.score(std::get<Vec>(pred), nullptr);
                break;
            case SamplingPolicy::Kind::LossPrediction:
                score = predictor->predict(predictor_input(hidden, pred));
                break;
            default:
                break;
        }

        if (selector.select(pos, score)) {
            ++seg_labels;
            ++seg_new_labels;
            ++result.total_labels;
            nn::Sample sample{row.sources[0], row.target};
            if (predictor) {
                double actual = link.net().batch_loss({sample}, link.loss_kind());
                predictor->step(predictor_input(hidden, pred), actual);
            }
            buffer.push_back(std::move(sample));
            if (buffer.size() > cfg.buffer_capacity)
                buffer.erase(buffer.begin(), buffer.begin() +
                                                  std::ptrdiff_t(buffer.size() -
                                                                 cfg.buffer_capacity));
        }
        if ((pos + 1) % seg_len == 0 || pos + 1 == n) close_segment();
    }
    return result;
}

}  // namespace mlink
