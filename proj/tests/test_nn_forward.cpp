#include <catch2/catch_amalgamated.hpp>

#include "mlink/nn/network.hpp"
#include "support/test_nets.hpp"

using namespace mlink;
using nn::Activation;
using Catch::Matchers::WithinAbs;

TEST_CASE("dense layer with identity weights and zero bias passes input through") {
    Rng rng(1);
    nn::ParamSet ps;
    auto dense = nn::Dense::create(ps, "d", 2, 2, rng);
    ps.value(dense.w).values = {1.0, 0.0, 0.0, 1.0};
    ps.value(dense.b).fill(0.0);
    Vec y = dense.forward(ps, {0.2, 0.8});
    CHECK_THAT(y[0], WithinAbs(0.2, 1e-15));
    CHECK_THAT(y[1], WithinAbs(0.8, 1e-15));
}

TEST_CASE("softmax of equal logits is uniform and sums to one") {
    Vec y = nn::softmax({0.0, 0.0});
    CHECK_THAT(y[0], WithinAbs(0.5, 1e-12));
    CHECK_THAT(y[1], WithinAbs(0.5, 1e-12));

    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        Vec logits = testing::random_reals(rng, 1 + rng.index(8), -20.0, 20.0);
        Vec p = nn::softmax(logits);
        double sum = 0.0;
        for (double v : p) sum += v;
        CHECK_THAT(sum, WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("sigmoid outputs stay inside [0, 1]") {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        double s = nn::sigmoid(rng.uniform(-50.0, 50.0));
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

// Independent scalar-by-scalar recomputation of the two-layer MLP
// forward pass, reading tensors straight out of the ParamSet.
static Vec mlp_by_hand(const nn::VecToVecNet& net, const Vec& x) {
    const auto& ps = net.params();
    const auto& l1 = net.layer1();
    const auto& l2 = net.layer2();
    Vec h(l1.out, 0.0);
    for (std::size_t r = 0; r < l1.out; ++r) {
        double acc = ps.value(l1.b)[r];
        for (std::size_t c = 0; c < l1.in; ++c) acc += ps.value(l1.w).at(r, c) * x[c];
        h[r] = acc > 0.0 ? acc : 0.0;
    }
    Vec y(l2.out, 0.0);
    for (std::size_t r = 0; r < l2.out; ++r) {
        double acc = ps.value(l2.b)[r];
        for (std::size_t c = 0; c < l2.in; ++c) acc += ps.value(l2.w).at(r, c) * h[c];
        y[r] = acc;
    }
    return y;
}

TEST_CASE("two-layer MLP with seed 7 matches hand recomputation") {
    Rng rng(7);
    nn::VecToVecNet net(3, 2, Activation::Linear, 4, rng);

    // All-zero input rides the bias path; biases start at zero.
    Vec zero_out = std::get<Vec>(net.predict(Vec{0.0, 0.0, 0.0}));
    for (double v : zero_out) CHECK_THAT(v, WithinAbs(0.0, 1e-15));

    Rng data(77);
    for (int trial = 0; trial < 20; ++trial) {
        Vec x = testing::random_reals(data, 3);
        Vec expect = mlp_by_hand(net, x);
        Vec got = std::get<Vec>(net.predict(x));
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK_THAT(got[i], WithinAbs(expect[i], 1e-12));
    }
}

TEST_CASE("shape mismatches and bad tokens are rejected") {
    Rng rng(2);
    nn::VecToVecNet net(3, 2, Activation::Softmax, 4, rng);
    CHECK_THROWS_AS(net.predict(Vec{1.0, 2.0}), Error);
    CHECK_THROWS_AS(net.predict(TokenSeq{4, 5}), Error);

    nn::SeqToVecNet snet(8, 2, Activation::Softmax, 4, rng);
    CHECK_THROWS_WITH(snet.predict(TokenSeq{4, 99}),
                      Catch::Matchers::ContainsSubstring("vocabulary"));
}

TEST_CASE("sequence outputs respect max_len and EOS termination") {
    Rng rng(4);
    nn::VecToSeqNet net(2, 8, 5, 6, rng);
    TokenSeq out = std::get<TokenSeq>(net.predict(Vec{0.3, -0.2}));
    CHECK(out.size() <= 5);
    for (int tok : out) CHECK(tok != kEos);
}

TEST_CASE("decode session distributions match greedy decoding") {
    Rng rng(12);
    nn::SeqToSeqNet net(8, 8, 4, 6, rng);
    ModelOutput input = TokenSeq{4, 6, 5};
    TokenSeq direct = std::get<TokenSeq>(net.predict(input));

    auto session = net.start_decode(input);
    TokenSeq stepped;
    int prev = kBos;
    for (std::size_t s = 0; s <= 4; ++s) {
        Vec dist = session->step(prev);
        double sum = 0.0;
        for (double p : dist) sum += p;
        CHECK_THAT(sum, WithinAbs(1.0, 1e-9));
        int tok = int(std::max_element(dist.begin(), dist.end()) - dist.begin());
        if (tok == kEos || stepped.size() == 4) break;
        stepped.push_back(tok);
        prev = tok;
    }
    CHECK(stepped == direct);
}

TEST_CASE("architecture selection covers the 2x2 format table") {
    OutputFormat vec = VectorFormat{3};
    OutputFormat seq = SequenceFormat{8, 4};
    CHECK(select_architecture(vec, vec) == Architecture::Vec2Vec);
    CHECK(select_architecture(seq, vec) == Architecture::Seq2Vec);
    CHECK(select_architecture(vec, seq) == Architecture::Vec2Seq);
    CHECK(select_architecture(seq, seq) == Architecture::Seq2Seq);

    auto net = nn::build_network(vec, vec, Activation::Softmax, 2.0, 1);
    CHECK(net->hidden_width() == 6);
}
