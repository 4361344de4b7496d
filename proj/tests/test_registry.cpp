#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mlink/aligned.hpp"
#include "mlink/correlation.hpp"
#include "mlink/rng.hpp"
#include "mlink/trace.hpp"

using namespace mlink;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path p = fs::temp_directory_path() / "mlink_registry_test";
    fs::create_directories(p);
    return p;
}

ModelDescriptor vec_desc(const std::string& id, std::size_t dim,
                         TaskClass task = TaskClass::SingleLabel) {
    ModelDescriptor d;
    d.model_id = id;
    d.task_class = task;
    d.output = VectorFormat{dim};
    d.metric.kind = TaskMetric::Kind::Accuracy;
    return d;
}

InferenceTrace make_trace(const std::string& id, std::vector<InferenceTrace::Record> recs) {
    InferenceTrace t;
    t.model_id = id;
    t.records = std::move(recs);
    return t;
}

}  // namespace

TEST_CASE("empty trace body loads as zero records") {
    auto dir = temp_dir();
    std::ofstream(dir / "empty.trace.jsonl").close();
    auto t = load_trace(dir / "empty.trace.jsonl", vec_desc("empty", 2));
    CHECK(t.records.empty());
}

TEST_CASE("three-row vector trace loads and validates") {
    auto dir = temp_dir();
    {
        std::ofstream f(dir / "m.trace.jsonl");
        f << R"({"input_id":"a","output":[0.25,0.75]})" << "\n";
        f << R"({"input_id":"b","output":[0.5,0.5]})" << "\n";
        f << R"({"input_id":"c","output":[1.0,0.0]})" << "\n";
    }
    auto t = load_trace(dir / "m.trace.jsonl", vec_desc("m", 2));
    REQUIRE(t.records.size() == 3);
    CHECK(t.records[1].input_id == "b");
}

TEST_CASE("dimension mismatch is rejected with the line number") {
    auto dir = temp_dir();
    {
        std::ofstream f(dir / "bad.trace.jsonl");
        f << R"({"input_id":"a","output":[0.5,0.5]})" << "\n";
        f << R"({"input_id":"b","output":[0.2,0.3,0.5]})" << "\n";
    }
    CHECK_THROWS_WITH(load_trace(dir / "bad.trace.jsonl", vec_desc("bad", 2)),
                      ContainsSubstring(":2"));
}

TEST_CASE("duplicate input ids are rejected") {
    auto dir = temp_dir();
    {
        std::ofstream f(dir / "dup.trace.jsonl");
        f << R"({"input_id":"a","output":[1.0,0.0]})" << "\n";
        f << R"({"input_id":"a","output":[0.0,1.0]})" << "\n";
    }
    CHECK_THROWS_WITH(load_trace(dir / "dup.trace.jsonl", vec_desc("dup", 2)),
                      ContainsSubstring("duplicate"));
}

TEST_CASE("sequence traces must carry a trailing EOS and respect max_len") {
    auto dir = temp_dir();
    ModelDescriptor d;
    d.model_id = "s";
    d.task_class = TaskClass::SequenceGeneration;
    d.output = SequenceFormat{8, 3};
    d.metric.kind = TaskMetric::Kind::Wer;
    {
        std::ofstream f(dir / "s.trace.jsonl");
        f << R"({"input_id":"a","output":[4,5,2]})" << "\n";
        f << R"({"input_id":"b","output":[2]})" << "\n";
    }
    auto t = load_trace(dir / "s.trace.jsonl", d);
    REQUIRE(t.records.size() == 2);
    CHECK(std::get<TokenSeq>(t.records[0].output) == TokenSeq{4, 5});
    CHECK(std::get<TokenSeq>(t.records[1].output).empty());

    {
        std::ofstream f(dir / "s2.trace.jsonl");
        f << R"({"input_id":"a","output":[4,5]})" << "\n";
    }
    CHECK_THROWS_WITH(load_trace(dir / "s2.trace.jsonl", d), ContainsSubstring("EOS"));
    {
        std::ofstream f(dir / "s3.trace.jsonl");
        f << R"({"input_id":"a","output":[4,5,6,7,2]})" << "\n";
    }
    CHECK_THROWS_WITH(load_trace(dir / "s3.trace.jsonl", d), ContainsSubstring("max_len"));
}

TEST_CASE("accepted traces re-serialize to an equivalent file") {
    auto dir = temp_dir();
    auto d = vec_desc("round", 2);
    {
        std::ofstream f(dir / "round.trace.jsonl");
        f << R"({"input_id":"x","output":[0.125,0.875]})" << "\n";
        f << R"({"input_id":"y","output":[0.3333333333333333,0.6666666666666667]})" << "\n";
    }
    auto t1 = load_trace(dir / "round.trace.jsonl", d);
    save_trace(dir / "round2.trace.jsonl", t1, d);
    auto t2 = load_trace(dir / "round2.trace.jsonl", d);
    REQUIRE(t1.records.size() == t2.records.size());
    for (std::size_t i = 0; i < t1.records.size(); ++i) {
        CHECK(t1.records[i].input_id == t2.records[i].input_id);
        CHECK(std::get<Vec>(t1.records[i].output) == std::get<Vec>(t2.records[i].output));
    }
}

TEST_CASE("descriptor sidecars round-trip") {
    auto dir = temp_dir();
    ModelDescriptor d;
    d.model_id = "faces";
    d.task_class = TaskClass::Localization;
    d.output = VectorFormat{4};
    d.metric.kind = TaskMetric::Kind::Iou;
    d.cost_memory = 4.6e9;
    d.cost_time = 44.0;
    save_descriptor(dir / "faces.desc.json", d);
    auto back = load_descriptor(dir / "faces.desc.json");
    CHECK(back.model_id == "faces");
    CHECK(back.task_class == TaskClass::Localization);
    CHECK(back.cost_time == 44.0);
}

TEST_CASE("oracle descriptors must have zero serving cost") {
    ModelDescriptor d = vec_desc("oracle", 3);
    d.is_oracle = true;
    d.cost_time = 5.0;
    CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("join keeps the id intersection sorted") {
    auto a = make_trace("a", {{"a", Vec{1.0, 0.0}}, {"b", Vec{0.0, 1.0}}, {"c", Vec{1.0, 0.0}}});
    auto b = make_trace("b", {{"c", Vec{0.5, 0.5}}, {"a", Vec{0.5, 0.5}}, {"b", Vec{0.5, 0.5}}});
    auto joined = join_aligned(a, b);
    REQUIRE(joined.rows.size() == 3);
    CHECK(joined.rows[0].input_id == "a");
    CHECK(joined.rows[2].input_id == "c");

    auto c = make_trace("c", {{"b", Vec{1.0, 0.0}}, {"z", Vec{0.0, 1.0}}});
    auto partial = join_aligned(a, c);
    REQUIRE(partial.rows.size() == 1);
    CHECK(partial.rows[0].input_id == "b");

    auto d = make_trace("d", {{"q", Vec{1.0, 0.0}}});
    CHECK_THROWS_WITH(join_aligned(a, d), ContainsSubstring("empty"));
}

TEST_CASE("join row set is insensitive to source order") {
    auto a = make_trace("a", {{"1", Vec{1.0}}, {"2", Vec{2.0}}, {"3", Vec{3.0}}});
    auto b = make_trace("b", {{"2", Vec{4.0}}, {"3", Vec{5.0}}, {"4", Vec{6.0}}});
    auto t = make_trace("t", {{"3", Vec{0.0}}, {"2", Vec{1.0}}});
    auto j1 = join_aligned({&a, &b}, t);
    auto j2 = join_aligned({&b, &a}, t);
    REQUIRE(j1.rows.size() == j2.rows.size());
    for (std::size_t i = 0; i < j1.rows.size(); ++i) {
        CHECK(j1.rows[i].input_id == j2.rows[i].input_id);
        CHECK(std::get<Vec>(j1.rows[i].sources[0]) == std::get<Vec>(j2.rows[i].sources[1]));
    }
}

TEST_CASE("pearson on identical and negated series") {
    std::vector<double> x{1.0, 2.0, 5.0, 3.0};
    std::vector<double> neg{-1.0, -2.0, -5.0, -3.0};
    CHECK_THAT(pearson(x, x), WithinAbs(1.0, 1e-12));
    CHECK_THAT(pearson(x, neg), WithinAbs(-1.0, 1e-12));
    CHECK_THAT(pearson(x, neg), WithinAbs(pearson(neg, x), 1e-12));
    std::vector<double> flat{2.0, 2.0, 2.0, 2.0};
    CHECK_THROWS_WITH(pearson(x, flat), ContainsSubstring("constant"));
}

TEST_CASE("label correlation on planted traces matches a direct two-pass oracle") {
    // Two single-label models whose argmax labels agree on a planted
    // fraction of rows.
    Rng rng(99);
    auto da = vec_desc("a", 2);
    auto db = vec_desc("b", 2);
    InferenceTrace ta, tb;
    ta.model_id = "a";
    tb.model_id = "b";
    std::vector<double> la, lb;
    for (int i = 0; i < 400; ++i) {
        int cls = int(rng.index(2));
        int cls_b = rng.uniform(0.0, 1.0) < 0.7 ? cls : int(rng.index(2));
        std::string id = "i" + std::to_string(i);
        ta.records.push_back({id, cls ? Vec{0.1, 0.9} : Vec{0.9, 0.1}});
        tb.records.push_back({id, cls_b ? Vec{0.2, 0.8} : Vec{0.8, 0.2}});
        la.push_back(cls);
        lb.push_back(cls_b);
    }
    double got = pearson_label_correlation(da, ta, db, tb);

    // Oracle: textbook two-pass formula over the planted labels.
    // Correlation is invariant under the pair reordering the join does.
    double n = double(la.size()), ma = 0, mb = 0;
    for (std::size_t i = 0; i < la.size(); ++i) {
        ma += la[i];
        mb += lb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < la.size(); ++i) {
        cov += (la[i] - ma) * (lb[i] - mb);
        va += (la[i] - ma) * (la[i] - ma);
        vb += (lb[i] - mb) * (lb[i] - mb);
    }
    double expect = cov / std::sqrt(va * vb);
    CHECK_THAT(got, WithinAbs(expect, 1e-12));
    CHECK(got > 0.3);  // planted agreement implies positive correlation

    ModelDescriptor ds;
    ds.model_id = "s";
    ds.task_class = TaskClass::SequenceGeneration;
    ds.output = SequenceFormat{8, 4};
    ds.metric.kind = TaskMetric::Kind::Wer;
    CHECK_THROWS_WITH(pearson_label_correlation(ds, ta, db, tb), ContainsSubstring("skipped"));
}

TEST_CASE("localization labels derive from box emptiness") {
    auto d = vec_desc("loc", 4, TaskClass::Localization);
    CHECK(correlation_label(d, Vec{0.0, 0.0, 0.0, 0.0}) == 0.0);
    CHECK(correlation_label(d, Vec{1.0, 1.0, 3.0, 4.0}) == 1.0);
}
