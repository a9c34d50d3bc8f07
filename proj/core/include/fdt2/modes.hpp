#pragma once

#include <array>
#include <string>
#include <string_view>

namespace fdt2 {

// The nine execution configurations. Each one is a combination of the four
// efficiency mechanisms plus whether context is present at all.
enum class Mode {
    no_condition,
    baseline_icc,
    dts_only,
    step_cache_only,
    layer_cache_only,
    fulldit2,
    fulldit2_no_dts,
    fulldit2_no_step_cache,
    fulldit2_no_layer_cache,
};

inline constexpr std::array<Mode, 9> kAllModes = {
    Mode::no_condition,      Mode::baseline_icc,         Mode::fulldit2,
    Mode::step_cache_only,   Mode::layer_cache_only,     Mode::dts_only,
    Mode::fulldit2_no_dts,   Mode::fulldit2_no_step_cache, Mode::fulldit2_no_layer_cache,
};

enum class AttentionStyle { full, decoupled, masked_oracle };

struct ModeFeatures {
    bool conditioned = true;   // context tokens enter the sequence
    bool selection = false;    // dynamic token selection
    bool step_cache = false;   // reference K/V reused after the first step
    bool layer_cache = false;  // only the planned layers process context
    AttentionStyle natural_style = AttentionStyle::full;
};

constexpr ModeFeatures features(Mode m) {
    using S = AttentionStyle;
    switch (m) {
        case Mode::no_condition: return {false, false, false, false, S::full};
        case Mode::baseline_icc: return {true, false, false, false, S::full};
        case Mode::dts_only: return {true, true, false, false, S::full};
        case Mode::step_cache_only: return {true, false, true, false, S::decoupled};
        case Mode::layer_cache_only: return {true, false, false, true, S::full};
        case Mode::fulldit2: return {true, true, true, true, S::decoupled};
        case Mode::fulldit2_no_dts: return {true, false, true, true, S::decoupled};
        case Mode::fulldit2_no_step_cache: return {true, true, false, true, S::decoupled};
        case Mode::fulldit2_no_layer_cache: return {true, true, true, false, S::decoupled};
    }
    return {};
}

std::string_view to_string(Mode m);
std::string_view to_string(AttentionStyle s);
// Throw std::invalid_argument on unknown names.
Mode parse_mode(std::string_view name);
AttentionStyle parse_attention_style(std::string_view name);

}  // namespace fdt2
