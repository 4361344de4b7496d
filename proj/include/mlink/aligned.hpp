#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "mlink/trace.hpp"

namespace mlink {

/// Rows joined on input_id across several traces: one row per id
/// present in every participating trace, sorted by input_id.
struct AlignedDataset {
    std::vector<std::string> source_ids;
    std::string target_id;
    struct Row {
        std::string input_id;
        std::vector<ModelOutput> sources;  // one per source_id, same order
        ModelOutput target;
    };
    std::vector<Row> rows;

    std::size_t source_index(const std::string& id) const {
        for (std::size_t i = 0; i < source_ids.size(); ++i)
            if (source_ids[i] == id) return i;
        fail("aligned dataset: '" + id + "' is not a source");
    }
};

/// Joins source traces with a target trace on the intersection of
/// input ids. The row set does not depend on the order the sources are
/// given in; an empty intersection is an error since it leaves nothing
/// to train on.
inline AlignedDataset join_aligned(const std::vector<const InferenceTrace*>& sources,
                                   const InferenceTrace& target) {
    require(!sources.empty(), "join: at least one source trace required");

    std::map<std::string, const ModelOutput*> target_by_id;
    for (const auto& r : target.records) target_by_id[r.input_id] = &r.output;

    std::vector<std::map<std::string, const ModelOutput*>> source_by_id(sources.size());
    for (std::size_t s = 0; s < sources.size(); ++s)
        for (const auto& r : sources[s]->records) source_by_id[s][r.input_id] = &r.output;

    AlignedDataset out;
    out.target_id = target.model_id;
    for (const auto* s : sources) out.source_ids.push_back(s->model_id);

    for (const auto& [id, tout] : target_by_id) {
        std::vector<ModelOutput> srcs;
        srcs.reserve(sources.size());
        bool all = true;
        for (std::size_t s = 0; s < sources.size(); ++s) {
            auto it = source_by_id[s].find(id);
            if (it == source_by_id[s].end()) {
                all = false;
                break;
            }
            srcs.push_back(*it->second);
        }
        if (all) out.rows.push_back({id, std::move(srcs), *tout});
    }
    require(!out.rows.empty(), "join: input_id intersection is empty, nothing to train on");
    return out;
}

inline AlignedDataset join_aligned(const InferenceTrace& source, const InferenceTrace& target) {
    return join_aligned(std::vector<const InferenceTrace*>{&source}, target);
}

/// Deterministic split into a training prefix and held-out remainder
/// (row order is already canonical).
inline std::pair<AlignedDataset, AlignedDataset> split_rows(const AlignedDataset& data,
                                                            double train_fraction) {
    require(train_fraction > 0.0 && train_fraction < 1.0, "split: fraction must be in (0,1)");
    AlignedDataset train = data, held = data;
    train.rows.clear();
    held.rows.clear();
    std::size_t cut = std::size_t(double(data.rows.size()) * train_fraction);
    cut = std::clamp<std::size_t>(cut, 1, data.rows.size() - 1);
    for (std::size_t i = 0; i < data.rows.size(); ++i)
        (i < cut ? train : held).rows.push_back(data.rows[i]);
    return {std::move(train), std::move(held)};
}

}  // namespace mlink
