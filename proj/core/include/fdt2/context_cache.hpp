#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "fdt2/selection.hpp"
#include "fdt2/tensor.hpp"

namespace fdt2 {

// Layers that process reference tokens. Layer 0 is always present.
class LayerPlan {
public:
    LayerPlan() = default;
    LayerPlan(std::size_t total_layers, std::vector<std::size_t> active);

    static LayerPlan all(std::size_t total_layers);
    // {0, 1, ..., count - 1}
    static LayerPlan leading(std::size_t total_layers, std::size_t count);

    const std::vector<std::size_t>& active() const { return active_; }
    std::size_t total_layers() const { return total_; }
    std::size_t active_count() const { return active_.size(); }
    bool contains(std::size_t layer) const;

    friend bool operator==(const LayerPlan&, const LayerPlan&) = default;

private:
    std::size_t total_ = 0;
    std::vector<std::size_t> active_;
};

struct BIReport {
    std::vector<Real> bi;               // per layer, in [0, 2]
    std::vector<Real> mean_cosine;      // per layer, the raw with/without-ref similarity
    std::size_t samples = 0;

    std::size_t layers() const { return bi.size(); }
};

// Layer 0 plus the `extra` highest-BI layers among 1..L-1 (ties to the lower index).
LayerPlan choose_layers(const BIReport& report, std::size_t extra);

struct CacheEntry {
    Tensor k;
    Tensor v;
    SelectionResult selection;
    int step = 0;
};

// Reference K/V for one sampling run. Each active layer is written once and
// is read-only afterwards.
class SessionCache {
public:
    explicit SessionCache(LayerPlan plan);

    void populate(std::size_t layer, Tensor k, Tensor v, SelectionResult selection, int step);
    const CacheEntry& lookup(std::size_t layer) const;
    bool populated(std::size_t layer) const;
    bool complete() const;
    const LayerPlan& plan() const { return plan_; }

private:
    LayerPlan plan_;
    std::vector<std::optional<CacheEntry>> entries_;
};

}  // namespace fdt2
