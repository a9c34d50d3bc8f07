#include "fdt2/modes.hpp"

#include <stdexcept>
#include <string>

namespace fdt2 {

std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::no_condition: return "no_condition";
        case Mode::baseline_icc: return "baseline_icc";
        case Mode::dts_only: return "dts_only";
        case Mode::step_cache_only: return "step_cache_only";
        case Mode::layer_cache_only: return "layer_cache_only";
        case Mode::fulldit2: return "fulldit2";
        case Mode::fulldit2_no_dts: return "fulldit2_no_dts";
        case Mode::fulldit2_no_step_cache: return "fulldit2_no_step_cache";
        case Mode::fulldit2_no_layer_cache: return "fulldit2_no_layer_cache";
    }
    return "?";
}

std::string_view to_string(AttentionStyle s) {
    switch (s) {
        case AttentionStyle::full: return "full";
        case AttentionStyle::decoupled: return "decoupled";
        case AttentionStyle::masked_oracle: return "masked_oracle";
    }
    return "?";
}

Mode parse_mode(std::string_view name) {
    for (Mode m : kAllModes) {
        if (to_string(m) == name) return m;
    }
    throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

AttentionStyle parse_attention_style(std::string_view name) {
    for (auto s : {AttentionStyle::full, AttentionStyle::decoupled, AttentionStyle::masked_oracle}) {
        if (to_string(s) == name) return s;
    }
    throw std::invalid_argument("unknown attention style '" + std::string(name) + "'");
}

}  // namespace fdt2
