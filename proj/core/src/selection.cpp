#include "fdt2/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fdt2/errors.hpp"

namespace fdt2 {

Tensor value_features(const Tensor& v_c) {
    const std::size_t n = v_c.rows(), d = v_c.cols();
    Tensor f = Tensor::matrix(n, d + 1);
    for (std::size_t i = 0; i < n; ++i) {
        f(i, 0) = l2_norm(v_c.row(i));
        for (std::size_t j = 0; j < d; ++j) f(i, j + 1) = v_c(i, j);
    }
    return f;
}

Tensor score_tokens(const ImportanceScorer& scorer, const Tensor& v_c, ScoreTape* tape) {
    if (v_c.cols() + 1 != scorer.input_width()) {
        throw DimensionError("score_tokens: scorer expects width " +
                             std::to_string(scorer.input_width() - 1) + ", got " +
                             v_c.shape_string());
    }
    if (v_c.rows() == 0) return Tensor::matrix(0, 1);
    MlpTape* mlp_tape = nullptr;
    if (tape) {
        tape->values = v_c;
        mlp_tape = &tape->mlp;
    }
    return mlp_forward(value_features(v_c), scorer.mlp, mlp_tape);
}

Tensor score_tokens_backward(const Tensor& d_scores, const ImportanceScorer& scorer,
                             const ScoreTape& tape, ImportanceScorer& grad) {
    const Tensor& v = tape.values;
    Tensor dv = zeros_like(v);
    if (v.rows() == 0) return dv;
    const Tensor dfeat = mlp_backward(d_scores, scorer.mlp, tape.mlp, grad.mlp);
    for (std::size_t i = 0; i < v.rows(); ++i) {
        const Real norm = l2_norm(v.row(i));
        for (std::size_t j = 0; j < v.cols(); ++j) {
            dv(i, j) = dfeat(i, j + 1);
            if (norm > 0.0) dv(i, j) += dfeat(i, 0) * v(i, j) / norm;
        }
    }
    return dv;
}

SelectionResult SelectionResult::keep_all(std::size_t n_c) {
    SelectionResult r;
    r.scores = Tensor::matrix(n_c, 1);
    r.kept.resize(n_c);
    std::iota(r.kept.begin(), r.kept.end(), std::size_t{0});
    return r;
}

std::size_t selected_count(std::size_t n_c, Real ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("selection ratio must lie in (0, 1]");
    }
    if (n_c == 0) return 0;
    // The small slack keeps ratios like 0.3 * 10 from landing on 2.9999...
    const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<Real>(n_c) + 1e-9));
    return std::clamp<std::size_t>(k, 1, n_c);
}

SelectionResult select_topk(const Tensor& scores, Real ratio) {
    const std::size_t n = scores.rows();
    const std::size_t k = selected_count(n, ratio);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    SelectionResult r;
    r.scores = scores;
    r.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(r.kept.begin(), r.kept.end());
    std::vector<bool> is_kept(n, false);
    for (std::size_t i : r.kept) is_kept[i] = true;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_kept[i]) r.skipped.push_back(i);
    }
    return r;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
    const std::size_t d = t.cols();
    Tensor out = Tensor::matrix(idx.size(), d);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= t.rows()) {
            throw DimensionError("gather_rows: index " + std::to_string(idx[r]) + " out of " +
                                 std::to_string(t.rows()) + " rows");
        }
        if (r > 0 && idx[r] <= idx[r - 1]) {
            throw DimensionError("gather_rows: indices must be strictly ascending");
        }
        std::copy(t.row(idx[r]).begin(), t.row(idx[r]).end(), out.row(r).begin());
    }
    return out;
}

Tensor scatter_merge(const Tensor& processed, const Tensor& bypassed, const SequenceLayout& layout,
                     const SelectionResult& sel) {
    const std::size_t n_z = layout.n_z(), n_c = layout.n_c();
    if (sel.n_c() != n_c) throw DimensionError("scatter_merge: selection does not cover layout");
    if (n_c > 0 && sel.k() == 0) {
        throw DimensionError("scatter_merge: at least one context row must be kept");
    }
    if (processed.rows() != n_z + sel.k() || bypassed.rows() != sel.skipped.size() ||
        (bypassed.rows() > 0 && bypassed.cols() != processed.cols())) {
        throw DimensionError("scatter_merge: processed " + processed.shape_string() +
                             " / bypassed " + bypassed.shape_string() + " inconsistent with layout");
    }
    const std::size_t d = processed.cols();
    Tensor out = Tensor::matrix(n_z + n_c, d);
    for (std::size_t i = 0; i < n_z; ++i) {
        std::copy(processed.row(i).begin(), processed.row(i).end(), out.row(i).begin());
    }
    for (std::size_t r = 0; r < sel.kept.size(); ++r) {
        const auto src = processed.row(n_z + r);
        std::copy(src.begin(), src.end(), out.row(n_z + sel.kept[r]).begin());
    }
    for (std::size_t r = 0; r < sel.skipped.size(); ++r) {
        const auto src = bypassed.row(r);
        std::copy(src.begin(), src.end(), out.row(n_z + sel.skipped[r]).begin());
    }
    return out;
}

}  // namespace fdt2
