#include "fdt2/context_cache.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "fdt2/errors.hpp"

namespace fdt2 {

LayerPlan::LayerPlan(std::size_t total_layers, std::vector<std::size_t> active)
    : total_(total_layers), active_(std::move(active)) {
    std::sort(active_.begin(), active_.end());
    active_.erase(std::unique(active_.begin(), active_.end()), active_.end());
    if (total_ == 0) throw ConfigError("LayerPlan: model must have at least one layer");
    if (active_.empty() || active_.front() != 0) {
        throw ConfigError("LayerPlan: layer 0 must be active");
    }
    if (active_.back() >= total_) {
        throw ConfigError("LayerPlan: layer " + std::to_string(active_.back()) +
                          " outside a " + std::to_string(total_) + "-layer model");
    }
}

LayerPlan LayerPlan::all(std::size_t total_layers) { return leading(total_layers, total_layers); }

LayerPlan LayerPlan::leading(std::size_t total_layers, std::size_t count) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return LayerPlan(total_layers, std::move(idx));
}

bool LayerPlan::contains(std::size_t layer) const {
    return std::binary_search(active_.begin(), active_.end(), layer);
}

LayerPlan choose_layers(const BIReport& report, std::size_t extra) {
    const std::size_t n = report.layers();
    if (n == 0 || extra + 1 > n) {
        throw ConfigError("choose_layers: cannot pick " + std::to_string(extra) +
                          " extra layers from " + std::to_string(n));
    }
    std::vector<std::size_t> candidates(n - 1);
    std::iota(candidates.begin(), candidates.end(), std::size_t{1});
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return report.bi[a] > report.bi[b];
    });
    std::vector<std::size_t> active{0};
    active.insert(active.end(), candidates.begin(),
                  candidates.begin() + static_cast<std::ptrdiff_t>(extra));
    return LayerPlan(n, std::move(active));
}

SessionCache::SessionCache(LayerPlan plan)
    : plan_(std::move(plan)), entries_(plan_.total_layers()) {}

void SessionCache::populate(std::size_t layer, Tensor k, Tensor v, SelectionResult selection,
                            int step) {
    if (!plan_.contains(layer)) {
        throw ProtocolError("cache_populate: layer " + std::to_string(layer) + " is not active");
    }
    if (entries_[layer]) {
        throw ProtocolError("cache_populate: layer " + std::to_string(layer) +
                            " already populated at step " + std::to_string(entries_[layer]->step));
    }
    entries_[layer] = CacheEntry{std::move(k), std::move(v), std::move(selection), step};
}

const CacheEntry& SessionCache::lookup(std::size_t layer) const {
    if (layer >= entries_.size() || !entries_[layer]) {
        throw ProtocolError("cache_lookup: no entry for layer " + std::to_string(layer));
    }
    return *entries_[layer];
}

bool SessionCache::populated(std::size_t layer) const {
    return layer < entries_.size() && entries_[layer].has_value();
}

bool SessionCache::complete() const {
    return std::all_of(plan_.active().begin(), plan_.active().end(),
                       [&](std::size_t l) { return populated(l); });
}

}  // namespace fdt2
