#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace mlink {

using Vec = std::vector<double>;
using TokenSeq = std::vector<int>;

/// Reserved token ids for sequence-format outputs. Vocabularies must
/// have size >= 4 to hold them. Stored sequences are content tokens
/// with one trailing EOS on the wire; in memory, content only.
enum ReservedToken : int { kPad = 0, kBos = 1, kEos = 2, kUnk = 3 };

/// One model output: a fixed-length vector or a token sequence.
using ModelOutput = std::variant<Vec, TokenSeq>;

inline bool is_sequence(const ModelOutput& o) { return std::holds_alternative<TokenSeq>(o); }

struct VectorFormat {
    std::size_t dim = 0;
    bool operator==(const VectorFormat&) const = default;
};

struct SequenceFormat {
    std::size_t vocab = 0;
    std::size_t max_len = 0;
    bool operator==(const SequenceFormat&) const = default;
};

using OutputFormat = std::variant<VectorFormat, SequenceFormat>;

inline bool is_sequence(const OutputFormat& f) {
    return std::holds_alternative<SequenceFormat>(f);
}

/// Output dimension used for sizing: vector length, or per-step
/// vocabulary size for sequences.
inline std::size_t head_dim(const OutputFormat& f) {
    if (auto* v = std::get_if<VectorFormat>(&f)) return v->dim;
    return std::get<SequenceFormat>(f).vocab;
}

enum class Architecture { Vec2Vec, Seq2Vec, Vec2Seq, Seq2Seq };

inline const char* to_string(Architecture a) {
    switch (a) {
        case Architecture::Vec2Vec: return "vec2vec";
        case Architecture::Seq2Vec: return "seq2vec";
        case Architecture::Vec2Seq: return "vec2seq";
        case Architecture::Seq2Seq: return "seq2seq";
    }
    return "?";
}

/// The architecture is a pure function of the format pair.
inline Architecture select_architecture(const OutputFormat& source, const OutputFormat& target) {
    const bool s = is_sequence(source), t = is_sequence(target);
    if (!s && !t) return Architecture::Vec2Vec;
    if (s && !t) return Architecture::Seq2Vec;
    if (!s && t) return Architecture::Vec2Seq;
    return Architecture::Seq2Seq;
}

}  // namespace mlink
