#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fdt2/attention.hpp"
#include "fdt2/ops.hpp"
#include "fdt2/tensor.hpp"

namespace fdt2 {

// Per-layer importance network. Input features are [||v||_2, v] for each
// context value row, so w1 has d + 1 rows; the output is one scalar per row.
struct ImportanceScorer {
    MlpWeights mlp;

    std::size_t input_width() const { return mlp.w1.rows(); }
};

// n_c x (d + 1) feature matrix: column 0 holds the row L2 norm, the rest the row itself.
Tensor value_features(const Tensor& v_c);

struct ScoreTape {
    Tensor values;
    MlpTape mlp;
};

// n_c x 1 scores. An empty V_c gives a 0 x 1 result.
Tensor score_tokens(const ImportanceScorer& scorer, const Tensor& v_c, ScoreTape* tape = nullptr);

// Gradient of the scores with respect to V_c; accumulates scorer gradients.
Tensor score_tokens_backward(const Tensor& d_scores, const ImportanceScorer& scorer,
                             const ScoreTape& tape, ImportanceScorer& grad);

struct SelectionResult {
    Tensor scores;                    // n_c x 1
    std::vector<std::size_t> kept;    // ascending
    std::vector<std::size_t> skipped; // ascending

    std::size_t k() const { return kept.size(); }
    std::size_t n_c() const { return kept.size() + skipped.size(); }

    // Selection that keeps every row; used when token selection is disabled.
    static SelectionResult keep_all(std::size_t n_c);

    friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

// max(1, floor(ratio * n_c)) for n_c >= 1, else 0.
std::size_t selected_count(std::size_t n_c, Real ratio);

// Keeps the k highest scores; equal scores prefer the lower index.
SelectionResult select_topk(const Tensor& scores, Real ratio);

// Rows of t at the given strictly ascending indices.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx);

// Rebuilds the full (n_z + n_c) x d sequence: noisy rows and kept context rows
// come from `processed` (n_z + k rows, kept rows in ascending order), skipped
// context rows from `bypassed`.
Tensor scatter_merge(const Tensor& processed, const Tensor& bypassed, const SequenceLayout& layout,
                     const SelectionResult& sel);

}  // namespace fdt2
