// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "alto/checkpoint.hpp"
#include "alto/optim.hpp"

namespace alto {

template <typename S>
std::vector<CheckpointEntry> export_params(const ParamStore<S>& ps) {
    std::vector<CheckpointEntry> out;
    out.reserve(ps.size());
    for (size_t i = 0; i < ps.size(); ++i) {
        const Param<S>& p = ps.at(i);
        CheckpointEntry e;
        e.name = p.name;
        if (p.shape.rank >= 1) e.dims.push_back(static_cast<uint32_t>(p.shape.d0));
        if (p.shape.rank == 2) e.dims.push_back(static_cast<uint32_t>(p.shape.d1));
        e.data.reserve(p.value.size());
        for (S v : p.value) e.data.push_back(static_cast<float>(v));
        out.push_back(std::move(e));
    }
    return out;
}

/// Loads matching entries by name; every parameter in the store must be
/// present with the right element count.
template <typename S>
void import_params(ParamStore<S>& ps, const std::vector<CheckpointEntry>& entries) {
    for (size_t i = 0; i < ps.size(); ++i) {
        Param<S>& p = ps.at(i);
        const CheckpointEntry* e = find_entry(entries, p.name);
        require(e != nullptr, "checkpoint: missing entry ", p.name);
        require(e->data.size() == p.value.size(), "checkpoint: entry ", p.name, " has ",
                e->data.size(), " values, parameter expects ", p.value.size());
        for (size_t k = 0; k < p.value.size(); ++k) p.value[k] = static_cast<S>(e->data[k]);
    }
}

inline void push_config_scalar(std::vector<CheckpointEntry>& entries, const std::string& name,
                               double value) {
    CheckpointEntry e;
    e.name = name;
    e.data.push_back(static_cast<float>(value));
    entries.push_back(std::move(e));
}

inline double config_scalar(const std::vector<CheckpointEntry>& entries,
                            const std::string& name, double fallback) {
    const CheckpointEntry* e = find_entry(entries, name);
    if (e == nullptr || e->data.empty()) return fallback;
    return static_cast<double>(e->data[0]);
}

}  // namespace alto
