#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "mlink/metrics.hpp"
#include "mlink/rng.hpp"

using namespace mlink;
using Catch::Matchers::WithinAbs;

namespace {

// Independent DP oracle for edit distance: full-matrix recursion,
// distinct from the rolling-row implementation under test.
std::size_t edit_distance_oracle(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::vector<std::size_t>> m(a.size() + 1,
                                            std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 0; i <= a.size(); ++i) m[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) m[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t best = m[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            best = std::min(best, m[i - 1][j] + 1);
            best = std::min(best, m[i][j - 1] + 1);
            m[i][j] = best;
        }
    return m[a.size()][b.size()];
}

TokenSeq random_tokens(Rng& rng, std::size_t max_len, std::size_t alphabet) {
    TokenSeq t(rng.index(max_len + 1));
    for (int& tok : t) tok = 4 + int(rng.index(alphabet));
    return t;
}

}  // namespace

TEST_CASE("box IoU closed forms") {
    Vec a{0.0, 0.0, 2.0, 2.0};
    CHECK_THAT(metrics::box_iou(a, a), WithinAbs(1.0, 1e-15));
    Vec b{3.0, 3.0, 4.0, 4.0};
    CHECK_THAT(metrics::box_iou(a, b), WithinAbs(0.0, 1e-15));
    // Half-overlapping unit squares: inter 0.5, union 1.5.
    Vec c{0.0, 0.0, 1.0, 1.0}, d{0.5, 0.0, 1.5, 1.0};
    CHECK_THAT(metrics::box_iou(c, d), WithinAbs(1.0 / 3.0, 1e-12));
    // Both empty boxes agree; a single empty one does not.
    Vec empty{0.0, 0.0, 0.0, 0.0};
    CHECK(metrics::box_iou(empty, empty) == 1.0);
    CHECK(metrics::box_iou(empty, a) == 0.0);
}

TEST_CASE("IoU matches closed-form rectangle arithmetic on random boxes") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        auto mk = [&] {
            double x1 = rng.uniform(0.0, 8.0), y1 = rng.uniform(0.0, 8.0);
            return Vec{x1, y1, x1 + rng.uniform(0.0, 4.0), y1 + rng.uniform(0.0, 4.0)};
        };
        Vec a = mk(), b = mk();
        double ax = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
        double ay = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
        double inter = ax * ay;
        double uni = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
        double expect = uni <= 0.0 ? 1.0 : inter / uni;
        CHECK_THAT(metrics::box_iou(a, b), WithinAbs(expect, 1e-12));
    }
}

TEST_CASE("counting accuracy applies the strict 0.5 rule") {
    std::vector<Vec> pred{{3.4}, {3.6}, {3.5}, {2.5001}};
    std::vector<Vec> tgt{{3.0}, {3.0}, {3.0}, {3.0}};
    // |0.4| < 0.5 correct; |0.6| incorrect; the |err| = 0.5 tie is
    // incorrect; 0.4999 correct.
    CHECK_THAT(metrics::counting_accuracy(pred, tgt), WithinAbs(0.5, 1e-15));
}

TEST_CASE("word error rate of a one-substitution triple is 1/3") {
    std::vector<TokenSeq> pred{{10, 99, 12}};
    std::vector<TokenSeq> ref{{10, 11, 12}};
    auto r = metrics::word_error_rate(pred, ref);
    CHECK_THAT(r.wer, WithinAbs(1.0 / 3.0, 1e-15));
    CHECK(r.skipped_empty_refs == 0);
}

TEST_CASE("edit distance matches the DP oracle on random pairs") {
    Rng rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        TokenSeq a = random_tokens(rng, 12, 5);
        TokenSeq b = random_tokens(rng, 12, 5);
        CHECK(metrics::edit_distance(a, b) == edit_distance_oracle(a, b));
    }
}

TEST_CASE("empty references are skipped and counted") {
    std::vector<TokenSeq> pred{{4, 5}, {4}};
    std::vector<TokenSeq> ref{{}, {4}};
    auto r = metrics::word_error_rate(pred, ref);
    CHECK(r.skipped_empty_refs == 1);
    CHECK_THAT(r.wer, WithinAbs(0.0, 1e-15));
    std::vector<TokenSeq> all_empty{{}};
    CHECK_THROWS_AS(metrics::word_error_rate({TokenSeq{4}}, all_empty), Error);
}

TEST_CASE("evaluating an output against itself gives p = 1") {
    Rng rng(31);
    std::vector<ModelOutput> vecs, boxes, seqs, scalars;
    for (int i = 0; i < 20; ++i) {
        Vec v(4);
        double s = 0;
        for (double& x : v) {
            x = rng.uniform(0.01, 1.0);
            s += x;
        }
        for (double& x : v) x /= s;
        vecs.push_back(v);
        double x1 = rng.uniform(0.0, 5.0), y1 = rng.uniform(0.0, 5.0);
        boxes.push_back(Vec{x1, y1, x1 + 1.0, y1 + 2.0});
        seqs.push_back(random_tokens(rng, 6, 4));
        scalars.push_back(Vec{rng.uniform(0.0, 9.0)});
    }
    TaskMetric acc{TaskMetric::Kind::Accuracy};
    TaskMetric iou{TaskMetric::Kind::Iou};
    TaskMetric wer{TaskMetric::Kind::Wer};
    TaskMetric mae{TaskMetric::Kind::Mae, 9.0};
    TaskMetric cnt{TaskMetric::Kind::CountingAccuracy};
    CHECK(evaluate_performance(vecs, vecs, acc).p == 1.0);
    CHECK(evaluate_performance(boxes, boxes, iou).p == 1.0);
    CHECK(evaluate_performance(seqs, seqs, wer).p == 1.0);
    CHECK(evaluate_performance(scalars, scalars, mae).p == 1.0);
    CHECK(evaluate_performance(scalars, scalars, cnt).p == 1.0);
}

TEST_CASE("p stays in [0,1] even for terrible predictions") {
    TaskMetric mae{TaskMetric::Kind::Mae, 1.0};
    std::vector<ModelOutput> pred{Vec{100.0}}, tgt{Vec{0.0}};
    auto perf = evaluate_performance(pred, tgt, mae);
    CHECK(perf.raw_metric == 100.0);
    CHECK(perf.p == 0.0);

    TaskMetric wer{TaskMetric::Kind::Wer};
    std::vector<ModelOutput> p2{TokenSeq{4, 5, 6, 7, 8, 9}}, t2{TokenSeq{10}};
    auto perf2 = evaluate_performance(p2, t2, wer);
    CHECK(perf2.raw_metric > 1.0);  // more edits than reference tokens
    CHECK(perf2.p == 0.0);
}

TEST_CASE("mean average precision ranks perfect predictions at 1") {
    // Two classes, clean separation.
    std::vector<Vec> tgt{{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}};
    std::vector<Vec> good{{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}, {0.2, 0.8}};
    CHECK_THAT(metrics::mean_average_precision(good, tgt), WithinAbs(1.0, 1e-12));
    // Reversed ranking for class 0: AP drops.
    std::vector<Vec> bad{{0.1, 0.9}, {0.2, 0.8}, {0.9, 0.1}, {0.8, 0.2}};
    CHECK(metrics::mean_average_precision(bad, tgt) < 0.7);
}

TEST_CASE("mAP against an enumerated interpolation oracle") {
    // Single class; the oracle enumerates the 11 interpolation points
    // from first principles on a tiny instance.
    std::vector<Vec> tgt{{1.0}, {0.0}, {1.0}, {0.0}, {1.0}};
    std::vector<Vec> pred{{0.9}, {0.8}, {0.7}, {0.6}, {0.5}};
    // Ranked: + - + - +  =>  precisions at hits: 1/1, 2/3, 3/5.
    double ap = 0.0;
    for (int pt = 0; pt <= 10; ++pt) {
        double r = pt / 10.0;
        double best = 0.0;
        if (r <= 1.0 / 3.0) best = 1.0;
        else if (r <= 2.0 / 3.0) best = 2.0 / 3.0;
        else best = 3.0 / 5.0;
        ap += best / 11.0;
    }
    CHECK_THAT(metrics::mean_average_precision(pred, tgt), WithinAbs(ap, 1e-12));
}
