#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mlink/error.hpp"
#include "mlink/types.hpp"

namespace mlink::nn {

enum class Activation { Softmax, Sigmoid, Linear };

enum class LossKind {
    CategoricalCrossEntropy,
    BinaryCrossEntropy,
    MeanSquaredError,
    SequenceTokenCrossEntropy,
};

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::Softmax: return "softmax";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Linear: return "linear";
    }
    return "?";
}

inline const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::CategoricalCrossEntropy: return "cce";
        case LossKind::BinaryCrossEntropy: return "bce";
        case LossKind::MeanSquaredError: return "mse";
        case LossKind::SequenceTokenCrossEntropy: return "seq-ce";
    }
    return "?";
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec softmax(const Vec& logits) {
    Vec out(logits.size());
    double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline Vec apply_activation(Activation act, const Vec& logits) {
    switch (act) {
        case Activation::Softmax: return softmax(logits);
        case Activation::Sigmoid: {
            Vec out(logits.size());
            for (std::size_t i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]);
            return out;
        }
        case Activation::Linear: return logits;
    }
    return logits;
}

inline constexpr double kLogFloor = 1e-12;

/// Per-sample loss for a vector output plus the gradient w.r.t. the
/// pre-activation logits. Only the canonical activation/loss pairings
/// are defined (softmax+CCE, sigmoid+BCE, linear+MSE); the combined
/// gradient forms below assume them.
struct VectorLoss {
    double loss;
    Vec dlogits;
};

inline VectorLoss vector_loss(LossKind kind, Activation act, const Vec& output,
                              const Vec& target) {
    require(output.size() == target.size(), "loss: output/target dimension mismatch");
    const std::size_t d = output.size();
    VectorLoss r{0.0, Vec(d, 0.0)};
    switch (kind) {
        case LossKind::CategoricalCrossEntropy: {
            require(act == Activation::Softmax, "cce loss requires a softmax head");
            for (std::size_t i = 0; i < d; ++i) {
                r.loss -= target[i] * std::log(std::max(output[i], kLogFloor));
                r.dlogits[i] = output[i] - target[i];
            }
            return r;
        }
        case LossKind::BinaryCrossEntropy: {
            require(act == Activation::Sigmoid, "bce loss requires a sigmoid head");
            for (std::size_t i = 0; i < d; ++i) {
                double p = std::clamp(output[i], kLogFloor, 1.0 - kLogFloor);
                r.loss -= (target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p)) / double(d);
                r.dlogits[i] = (output[i] - target[i]) / double(d);
            }
            return r;
        }
        case LossKind::MeanSquaredError: {
            require(act == Activation::Linear, "mse loss requires a linear head");
            for (std::size_t i = 0; i < d; ++i) {
                double e = output[i] - target[i];
                r.loss += e * e / double(d);
                r.dlogits[i] = 2.0 * e / double(d);
            }
            return r;
        }
        case LossKind::SequenceTokenCrossEntropy:
            fail("sequence loss applied to a vector output");
    }
    return r;
}

/// Cross entropy of a softmax step distribution against a hard token,
/// with the combined gradient w.r.t. the step logits.
inline double token_loss(const Vec& dist, int token, Vec& dlogits_out) {
    dlogits_out = dist;
    dlogits_out[std::size_t(token)] -= 1.0;
    return -std::log(std::max(dist[std::size_t(token)], kLogFloor));
}

/// Shannon entropy of a distribution, in nats.
inline double entropy(const Vec& dist) {
    double h = 0.0;
    for (double p : dist)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

}  // namespace mlink::nn
