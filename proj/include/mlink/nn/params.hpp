#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mlink/bytes.hpp"
#include "mlink/error.hpp"
#include "mlink/rng.hpp"
#include "mlink/tensor.hpp"

namespace mlink::nn {

/// Ordered, named parameter tensors plus their gradient buffers.
/// Iteration order is the creation order and is what the byte stream
/// serializes, so round trips are bit-exact.
class ParamSet {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
    };

    /// Adds a tensor initialized uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    int add_uniform(const std::string& name, std::vector<std::size_t> shape,
                    std::size_t fan_in, Rng& rng) {
        Tensor t(shape);
        double bound = 1.0 / std::sqrt(double(fan_in > 0 ? fan_in : 1));
        for (double& v : t.values) v = rng.uniform(-bound, bound);
        return add(name, std::move(t));
    }

    int add_zeros(const std::string& name, std::vector<std::size_t> shape) {
        return add(name, Tensor(std::move(shape)));
    }

    int add(const std::string& name, Tensor value) {
        for (const Entry& e : entries_)
            require(e.name != name, "param set: duplicate tensor name '" + name + "'");
        Entry e;
        e.name = name;
        e.grad = Tensor(value.shape);
        e.value = std::move(value);
        entries_.push_back(std::move(e));
        return int(entries_.size()) - 1;
    }

    Entry& operator[](int i) { return entries_[std::size_t(i)]; }
    const Entry& operator[](int i) const { return entries_[std::size_t(i)]; }
    Tensor& value(int i) { return entries_[std::size_t(i)].value; }
    const Tensor& value(int i) const { return entries_[std::size_t(i)].value; }
    Tensor& grad(int i) { return entries_[std::size_t(i)].grad; }
    const Tensor& grad(int i) const { return entries_[std::size_t(i)].grad; }

    std::size_t tensor_count() const { return entries_.size(); }

    /// Total scalar parameter count across all tensors.
    std::size_t total_count() const {
        std::size_t n = 0;
        for (const Entry& e : entries_) n += e.value.size();
        return n;
    }

    void zero_grads() {
        for (Entry& e : entries_) e.grad.fill(0.0);
    }

    bool grads_finite() const {
        for (const Entry& e : entries_)
            if (!e.grad.all_finite()) return false;
        return true;
    }

    bool values_finite() const {
        for (const Entry& e : entries_)
            if (!e.value.all_finite()) return false;
        return true;
    }

    std::vector<double> flatten_values() const {
        std::vector<double> out;
        out.reserve(total_count());
        for (const Entry& e : entries_) out.insert(out.end(), e.value.values.begin(), e.value.values.end());
        return out;
    }

    std::vector<double> flatten_grads() const {
        std::vector<double> out;
        out.reserve(total_count());
        for (const Entry& e : entries_) out.insert(out.end(), e.grad.values.begin(), e.grad.values.end());
        return out;
    }

    void assign_values(const std::vector<double>& flat) {
        require(flat.size() == total_count(), "param set: flat vector size mismatch");
        std::size_t k = 0;
        for (Entry& e : entries_)
            for (double& v : e.value.values) v = flat[k++];
    }

    bool operator==(const ParamSet& o) const {
        if (entries_.size() != o.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].name != o.entries_[i].name || !(entries_[i].value == o.entries_[i].value))
                return false;
        return true;
    }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::vector<Entry> entries_;
};

// Parameter byte stream: magic "MLNK", version u16, tensor count u32,
// then per tensor: name length u16 + UTF-8 name, rank u8, extents u32
// each, little-endian f64 values; trailing CRC32 over all preceding
// bytes.
inline constexpr char kParamMagic[4] = {'M', 'L', 'N', 'K'};
inline constexpr std::uint16_t kParamVersion = 1;

inline std::vector<std::uint8_t> save_params(const ParamSet& params) {
    ByteWriter w;
    w.bytes(kParamMagic, 4);
    w.u16(kParamVersion);
    w.u32(std::uint32_t(params.tensor_count()));
    for (const auto& e : params) {
        w.u16(std::uint16_t(e.name.size()));
        w.str(e.name);
        w.u8(std::uint8_t(e.value.shape.size()));
        for (std::size_t ext : e.value.shape) w.u32(std::uint32_t(ext));
        for (double v : e.value.values) w.f64(v);
    }
    w.u32(crc32(w.data()));
    return w.take();
}

inline ParamSet load_params(const std::vector<std::uint8_t>& stream) {
    require(stream.size() >= 4 + 2 + 4 + 4, "param stream: too short to hold header and checksum");
    ByteReader r(stream.data(), stream.size() - 4);  // checksum excluded from body
    std::string magic = r.str(4);
    require(magic == std::string(kParamMagic, 4), "param stream: bad magic at offset 0");
    std::uint16_t version = r.u16();
    require(version == kParamVersion,
            "param stream: unsupported version " + std::to_string(version));
    std::uint32_t count = r.u32();
    ParamSet out;
    for (std::uint32_t t = 0; t < count; ++t) {
        std::uint16_t name_len = r.u16();
        std::string name = r.str(name_len);
        std::uint8_t rank = r.u8();
        std::vector<std::size_t> shape(rank);
        for (auto& ext : shape) ext = r.u32();
        Tensor tensor{shape};
        for (double& v : tensor.values) v = r.f64();
        out.add(name, std::move(tensor));
    }
    require(r.remaining() == 0, "param stream: " + std::to_string(r.remaining()) +
                                    " unexpected byte(s) before checksum at offset " +
                                    std::to_string(r.pos()));
    std::uint32_t stored = ByteReader(stream.data() + stream.size() - 4, 4).u32();
    std::uint32_t actual = crc32(stream.data(), stream.size() - 4);
    require(stored == actual, "param stream: checksum mismatch at offset " +
                                  std::to_string(stream.size() - 4));
    return out;
}

/// RMSprop: per-parameter running mean of squared gradients.
///   acc <- decay * acc + (1 - decay) * g^2
///   theta <- theta - lr * g / (sqrt(acc) + epsilon)
/// A zero gradient leaves parameters unchanged.
class RmspropState {
public:
    explicit RmspropState(double learning_rate = 0.01, double decay = 0.9,
                          double epsilon = 1e-7)
        : learning_rate_(learning_rate), decay_(decay), epsilon_(epsilon) {
        require(learning_rate_ > 0.0, "rmsprop: learning rate must be positive");
        require(decay_ > 0.0 && decay_ < 1.0, "rmsprop: decay must lie in (0,1)");
        require(epsilon_ > 0.0, "rmsprop: epsilon must be positive");
    }

    double learning_rate() const { return learning_rate_; }

    void step(ParamSet& params) {
        sync(params);
        for (std::size_t i = 0; i < params.tensor_count(); ++i) {
            auto& entry = params[int(i)];
            Tensor& acc = accum_[i];
            for (std::size_t k = 0; k < entry.value.size(); ++k) {
                double g = entry.grad[k];
                acc[k] = decay_ * acc[k] + (1.0 - decay_) * g * g;
                entry.value[k] -= learning_rate_ * g / (std::sqrt(acc[k]) + epsilon_);
            }
        }
    }

    const std::vector<Tensor>& accumulators() const { return accum_; }

private:
    void sync(const ParamSet& params) {
        if (accum_.size() == params.tensor_count()) return;
        require(accum_.empty(), "rmsprop: parameter set changed shape mid-training");
        accum_.reserve(params.tensor_count());
        for (const auto& e : params) accum_.emplace_back(e.value.shape);
    }

    double learning_rate_;
    double decay_;
    double epsilon_;
    std::vector<Tensor> accum_;
};

}  // namespace mlink::nn
