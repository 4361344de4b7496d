#include <catch2/catch_amalgamated.hpp>

#include "mlink/nn/network.hpp"
#include "support/test_nets.hpp"

using namespace mlink;
using nn::Activation;
using nn::LossKind;
using nn::Sample;

namespace {

std::vector<Sample> vec_batch(Rng& rng, std::size_t in, std::size_t out, LossKind kind,
                              std::size_t n = 4) {
    std::vector<Sample> b;
    for (std::size_t i = 0; i < n; ++i)
        b.push_back(Sample{testing::random_reals(rng, in), testing::target_for(rng, kind, out)});
    return b;
}

std::vector<Sample> seq_in_batch(Rng& rng, std::size_t vocab, std::size_t out, LossKind kind,
                                 std::size_t n = 4) {
    std::vector<Sample> b;
    for (std::size_t i = 0; i < n; ++i)
        b.push_back(
            Sample{testing::random_content(rng, vocab, 5), testing::target_for(rng, kind, out)});
    return b;
}

}  // namespace

TEST_CASE("linear net with mse is exact to finite-difference precision") {
    Rng rng(31);
    nn::VecToVecNet net(2, 2, Activation::Linear, 3, rng);
    Rng data(131);
    auto batch = vec_batch(data, 2, 2, LossKind::MeanSquaredError);
    CHECK(nn::grad_check(net, batch, LossKind::MeanSquaredError) < 1e-6);
}

TEST_CASE("dense layers pass grad check under every vector loss") {
    for (auto kind : {LossKind::CategoricalCrossEntropy, LossKind::BinaryCrossEntropy,
                      LossKind::MeanSquaredError}) {
        Rng rng(32);
        nn::VecToVecNet net(3, 4, testing::head_for(kind), 5, rng);
        Rng data(132);
        auto batch = vec_batch(data, 3, 4, kind);
        INFO(nn::to_string(kind));
        CHECK(nn::grad_check(net, batch, kind) < 1e-3);
    }
}

TEST_CASE("embedding and recurrent cell pass grad check under vector losses") {
    for (auto kind : {LossKind::CategoricalCrossEntropy, LossKind::BinaryCrossEntropy,
                      LossKind::MeanSquaredError}) {
        Rng rng(33);
        nn::SeqToVecNet net(8, 3, testing::head_for(kind), 4, rng);
        Rng data(133);
        auto batch = seq_in_batch(data, 8, 3, kind);
        INFO(nn::to_string(kind));
        CHECK(nn::grad_check(net, batch, kind) < 1e-3);
    }
}

TEST_CASE("attention passes grad check under vector losses") {
    for (auto kind : {LossKind::CategoricalCrossEntropy, LossKind::BinaryCrossEntropy,
                      LossKind::MeanSquaredError}) {
        Rng rng(34);
        testing::AttentionPoolNet net(8, 3, testing::head_for(kind), 4, rng);
        Rng data(134);
        auto batch = seq_in_batch(data, 8, 3, kind);
        INFO(nn::to_string(kind));
        CHECK(nn::grad_check(net, batch, kind) < 1e-3);
    }
}

TEST_CASE("recurrent cell unrolled over sequence targets passes grad check") {
    Rng rng(35);
    nn::SeqToSeqNet net(8, 8, 6, 4, rng);
    Rng data(135);
    std::vector<Sample> batch;
    for (int i = 0; i < 5; ++i)
        batch.push_back(Sample{testing::random_content(data, 8, 4),
                               testing::random_content(data, 8, 5)});
    // Check at a generic point: a few steps away from the symmetric
    // init, where the attention scores have differentiated and no true
    // gradient sits at the finite-difference noise floor.
    nn::RmspropState opt(0.01);
    for (int s = 0; s < 20; ++s) nn::train_step(net, batch, LossKind::SequenceTokenCrossEntropy, opt);
    CHECK(nn::grad_check(net, batch, LossKind::SequenceTokenCrossEntropy) < 1e-3);
}

TEST_CASE("encoder-decoder with attention passes grad check on sequence loss") {
    Rng rng(36);
    nn::VecToSeqNet net(3, 8, 4, 4, rng);
    Rng data(136);
    std::vector<Sample> batch;
    for (int i = 0; i < 3; ++i)
        batch.push_back(
            Sample{testing::random_reals(data, 3), testing::random_content(data, 8, 3)});
    CHECK(nn::grad_check(net, batch, LossKind::SequenceTokenCrossEntropy) < 1e-3);
}
