#include <catch2/catch_amalgamated.hpp>

#include "mlink/nn/network.hpp"
#include "support/test_nets.hpp"

using namespace mlink;
using nn::Activation;
using nn::LossKind;
using nn::Sample;
using Catch::Matchers::WithinAbs;

TEST_CASE("training at a zero-gradient fixed point changes nothing") {
    Rng rng(21);
    nn::VecToVecNet net(2, 2, Activation::Linear, 3, rng);
    Vec x{0.4, -0.7};
    Vec y = std::get<Vec>(net.predict(x));
    auto before = net.params().flatten_values();
    nn::RmspropState opt;
    double loss = nn::train_step(net, {Sample{x, y}}, LossKind::MeanSquaredError, opt);
    CHECK_THAT(loss, WithinAbs(0.0, 1e-12));
    CHECK(net.params().flatten_values() == before);
}

TEST_CASE("one step on y=wx with w=0 and sample (1,1) reports loss 1") {
    Rng rng(1);
    nn::VecToVecNet net(1, 1, Activation::Linear, 1, rng);
    // Wire the net into a single effective linear unit with w = 0.
    net.params().value(net.layer1().w).values = {1.0};
    net.params().value(net.layer1().b).values = {0.0};
    net.params().value(net.layer2().w).values = {0.0};
    net.params().value(net.layer2().b).values = {0.0};
    nn::RmspropState opt;
    double loss = nn::train_step(net, {Sample{Vec{1.0}, Vec{1.0}}}, LossKind::MeanSquaredError, opt);
    CHECK_THAT(loss, WithinAbs(1.0, 1e-12));
}

TEST_CASE("loss on a separable two-class toy set is non-increasing after step 5") {
    Rng rng(7);
    nn::VecToVecNet net(2, 2, Activation::Softmax, 4, rng);
    std::vector<Sample> batch;
    Rng data(70);
    for (int i = 0; i < 16; ++i) {
        bool cls = i % 2;
        Vec x{data.uniform(0.0, 1.0) + (cls ? 2.0 : -2.0), data.uniform(-0.5, 0.5)};
        batch.push_back(Sample{x, cls ? Vec{0.0, 1.0} : Vec{1.0, 0.0}});
    }
    nn::RmspropState opt(0.01);
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step)
        losses.push_back(nn::train_step(net, batch, LossKind::CategoricalCrossEntropy, opt));
    for (std::size_t i = 5; i + 1 < losses.size(); ++i) CHECK(losses[i + 1] <= losses[i] + 1e-6);
    CHECK(losses.back() < losses.front());
}

TEST_CASE("identical seed and data order give bit-identical parameters") {
    auto run = [] {
        Rng rng(42);
        nn::SeqToVecNet net(8, 3, Activation::Softmax, 4, rng);
        nn::RmspropState opt(0.01);
        Rng data(5);
        for (int step = 0; step < 8; ++step) {
            std::vector<Sample> batch;
            for (int i = 0; i < 4; ++i)
                batch.push_back(Sample{testing::random_content(data, 8, 5),
                                       testing::random_distribution(data, 3)});
            nn::train_step(net, batch, LossKind::CategoricalCrossEntropy, opt);
        }
        return net.params().flatten_values();
    };
    CHECK(run() == run());
}

TEST_CASE("non-finite targets abort the step with parameters unchanged") {
    Rng rng(3);
    nn::VecToVecNet net(1, 1, Activation::Linear, 2, rng);
    auto before = net.params().flatten_values();
    nn::RmspropState opt;
    std::vector<Sample> batch{Sample{Vec{1.0}, Vec{std::nan("")}}};
    CHECK_THROWS_AS(nn::train_step(net, batch, LossKind::MeanSquaredError, opt), Error);
    CHECK(net.params().flatten_values() == before);
    CHECK_THROWS_AS(nn::train_step(net, {}, LossKind::MeanSquaredError, opt), Error);
}

TEST_CASE("parameters and outputs stay finite over a long noisy run") {
    Rng rng(8);
    nn::VecToVecNet net(3, 2, Activation::Sigmoid, 4, rng);
    nn::RmspropState opt(0.05);
    Rng data(80);
    for (int step = 0; step < 200; ++step) {
        std::vector<Sample> batch;
        for (int i = 0; i < 8; ++i)
            batch.push_back(Sample{testing::random_reals(data, 3, -3.0, 3.0),
                                   testing::random_unit_range(data, 2)});
        nn::train_step(net, batch, LossKind::BinaryCrossEntropy, opt);
    }
    CHECK(net.params().values_finite());
    Vec y = std::get<Vec>(net.predict(Vec{0.1, 0.2, 0.3}));
    for (double v : y) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}
