#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mlink/model.hpp"

#include <json.hpp>

namespace mlink {

/// Aligned per-input outputs of one model: the training and evaluation
/// substrate. Immutable after load; input_ids are unique. Sequence
/// outputs are held as content tokens (the wire format carries one
/// trailing EOS, stripped on load).
struct InferenceTrace {
    std::string model_id;
    struct Record {
        std::string input_id;
        ModelOutput output;
    };
    std::vector<Record> records;

    const ModelOutput* find(const std::string& input_id) const {
        for (const Record& r : records)
            if (r.input_id == input_id) return &r.output;
        return nullptr;
    }
};

namespace detail {

inline std::string format_or(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline void validate_output(const ModelDescriptor& d, const ModelOutput& out,
                            const std::string& where) {
    if (const auto* vf = std::get_if<VectorFormat>(&d.output)) {
        const Vec* v = std::get_if<Vec>(&out);
        require(v != nullptr, where + ": expected a vector output");
        require(v->size() == vf->dim, where + ": dimension " + std::to_string(v->size()) +
                                          " does not match descriptor dim " +
                                          std::to_string(vf->dim));
        for (double x : *v)
            require(std::isfinite(x), where + ": non-finite output value");
        if (d.task_class == TaskClass::SingleLabel) {
            double sum = 0.0;
            for (double x : *v) sum += x;
            require(std::abs(sum - 1.0) <= 1e-6,
                    where + ": softmax-task vector sums to " + format_or(sum));
        }
    } else {
        const auto& sf = std::get<SequenceFormat>(d.output);
        const TokenSeq* t = std::get_if<TokenSeq>(&out);
        require(t != nullptr, where + ": expected a token sequence");
        require(t->size() <= sf.max_len, where + ": content length " +
                                             std::to_string(t->size()) + " exceeds max_len " +
                                             std::to_string(sf.max_len));
        for (int tok : *t) {
            require(tok >= 0 && std::size_t(tok) < sf.vocab,
                    where + ": token id " + std::to_string(tok) + " outside vocabulary");
            require(tok != kPad && tok != kBos && tok != kEos,
                    where + ": reserved token inside content");
        }
    }
}

}  // namespace detail

/// Trace wire format: one JSON object per line with fields `input_id`
/// and `output`. Vector outputs are arrays of numbers; sequence outputs
/// are arrays of integer token ids ending in exactly one EOS.
inline InferenceTrace load_trace(const std::filesystem::path& path, const ModelDescriptor& desc) {
    std::ifstream f(path);
    require(f.good(), "trace: cannot open " + path.string());
    InferenceTrace trace;
    trace.model_id = desc.model_id;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(line_no);
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        require(!j.is_discarded(), where + ": malformed JSON record");
        require(j.contains("input_id") && j.contains("output"), where + ": missing field");
        std::string id = j.at("input_id").get<std::string>();
        require(seen.insert(id).second, where + ": duplicate input_id '" + id + "'");

        ModelOutput out;
        if (is_sequence(desc.output)) {
            TokenSeq toks = j.at("output").get<TokenSeq>();
            require(!toks.empty() && toks.back() == kEos,
                    where + ": sequence output must terminate with EOS");
            toks.pop_back();
            out = std::move(toks);
        } else {
            out = j.at("output").get<Vec>();
        }
        detail::validate_output(desc, out, where);
        trace.records.push_back({std::move(id), std::move(out)});
    }
    return trace;
}

inline void save_trace(const std::filesystem::path& path, const InferenceTrace& trace,
                       const ModelDescriptor& desc) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "trace: cannot open " + path.string() + " for writing");
    for (const auto& r : trace.records) {
        nlohmann::json j;
        j["input_id"] = r.input_id;
        if (is_sequence(desc.output)) {
            TokenSeq toks = std::get<TokenSeq>(r.output);
            toks.push_back(kEos);
            j["output"] = toks;
        } else {
            j["output"] = std::get<Vec>(r.output);
        }
        f << j.dump() << '\n';
    }
}

inline ModelDescriptor load_descriptor(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(f.good(), "descriptor: cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    require(!j.is_discarded(), "descriptor: malformed JSON in " + path.string());
    return descriptor_from_json(j);
}

inline void save_descriptor(const std::filesystem::path& path, const ModelDescriptor& d) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "descriptor: cannot open " + path.string() + " for writing");
    f << descriptor_to_json(d).dump(2) << '\n';
}

/// A trace directory holds `<model_id>.desc.json` sidecars next to
/// `<model_id>.trace.jsonl` files. Loaded in model_id order.
struct TraceSet {
    std::vector<ModelDescriptor> descriptors;
    std::vector<InferenceTrace> traces;

    const ModelDescriptor& descriptor(const std::string& id) const {
        for (const auto& d : descriptors)
            if (d.model_id == id) return d;
        fail("trace set: unknown model '" + id + "'");
    }
    const InferenceTrace& trace(const std::string& id) const {
        for (const auto& t : traces)
            if (t.model_id == id) return t;
        fail("trace set: no trace for model '" + id + "'");
    }
};

inline TraceSet load_trace_dir(const std::filesystem::path& dir) {
    require(std::filesystem::is_directory(dir), "trace dir: " + dir.string() + " is not a directory");
    std::map<std::string, std::filesystem::path> descs;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        std::string name = e.path().filename().string();
        const std::string suffix = ".desc.json";
        if (name.size() > suffix.size() && name.ends_with(suffix))
            descs[name.substr(0, name.size() - suffix.size())] = e.path();
    }
    require(!descs.empty(), "trace dir: no .desc.json descriptors in " + dir.string());
    TraceSet set;
    for (const auto& [id, dpath] : descs) {
        ModelDescriptor d = load_descriptor(dpath);
        require(d.model_id == id, "trace dir: descriptor file " + dpath.string() +
                                      " names model '" + d.model_id + "'");
        set.traces.push_back(load_trace(dir / (id + ".trace.jsonl"), d));
        set.descriptors.push_back(std::move(d));
    }
    return set;
}

}  // namespace mlink
