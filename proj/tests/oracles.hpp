#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond the Tensor container, and compute in long
// double where precision matters.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fdt2/attention.hpp"
#include "fdt2/modes.hpp"
#include "fdt2/rng.hpp"
#include "fdt2/tensor.hpp"

namespace oracle {

using fdt2::Real;
using fdt2::Tensor;
using LD = long double;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::matrix(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            LD acc = 0;
            for (std::size_t p = 0; p < a.cols(); ++p) acc += static_cast<LD>(a(i, p)) * b(p, j);
            out(i, j) = static_cast<Real>(acc);
        }
    }
    return out;
}

inline std::vector<LD> softmax(const std::vector<LD>& logits) {
    std::vector<LD> out(logits.size());
    LD sum = 0;
    for (std::size_t j = 0; j < logits.size(); ++j) sum += (out[j] = std::exp(logits[j]));
    for (auto& v : out) v /= sum;
    return out;
}

// Allowed(i, j): whether query row i may see key row j. Disallowed pairs are
// excluded outright (probability exactly zero).
template <typename Allowed>
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, Real d_k, Allowed allowed,
                 Tensor* weights = nullptr) {
    const std::size_t m = q.rows(), n = k.rows(), d = v.cols();
    Tensor out = Tensor::matrix(m, d);
    if (weights) *weights = Tensor::matrix(m, n);
    const LD scale = 1.0L / std::sqrt(static_cast<LD>(d_k));
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::size_t> cols;
        std::vector<LD> logits;
        for (std::size_t j = 0; j < n; ++j) {
            if (!allowed(i, j)) continue;
            LD s = 0;
            for (std::size_t p = 0; p < q.cols(); ++p) s += static_cast<LD>(q(i, p)) * k(j, p);
            cols.push_back(j);
            logits.push_back(s * scale);
        }
        const auto w = softmax(logits);
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (weights) (*weights)(i, cols[c]) = static_cast<Real>(w[c]);
        }
        for (std::size_t p = 0; p < d; ++p) {
            LD acc = 0;
            for (std::size_t c = 0; c < cols.size(); ++c) acc += w[c] * v(cols[c], p);
            out(i, p) = static_cast<Real>(acc);
        }
    }
    return out;
}

inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, Real d_k) {
    return attention(q, k, v, d_k, [](std::size_t, std::size_t) { return true; });
}

inline Tensor stack(const Tensor& a, const Tensor& b) {
    const std::size_t d = a.rows() ? a.cols() : b.cols();
    Tensor out = Tensor::matrix(a.rows() + b.rows(), d);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < d; ++c) out(r, c) = a(r, c);
    for (std::size_t r = 0; r < b.rows(); ++r)
        for (std::size_t c = 0; c < d; ++c) out(a.rows() + r, c) = b(r, c);
    return out;
}

inline Tensor rows(const Tensor& t, std::size_t begin, std::size_t end) {
    Tensor out = Tensor::matrix(end - begin, t.cols());
    for (std::size_t r = begin; r < end; ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out(r - begin, c) = t(r, c);
    return out;
}

// Block-matrix form of joint attention: the score matrix is assembled from
// S_zz, S_zc, S_cz and S_cc, each computed separately. When `mask_cz` is set
// the S_cz block is excluded.
inline std::pair<Tensor, Tensor> block_attention(const fdt2::AttentionInputs& in, bool mask_cz) {
    const std::size_t nz = in.q_z.rows(), nc = in.q_c.rows();
    const std::size_t d = in.v_z.rows() ? in.v_z.cols() : in.v_c.cols();
    auto scores = [&](const Tensor& q, const Tensor& k) {
        std::vector<std::vector<LD>> s(q.rows(), std::vector<LD>(k.rows()));
        for (std::size_t i = 0; i < q.rows(); ++i)
            for (std::size_t j = 0; j < k.rows(); ++j) {
                LD acc = 0;
                for (std::size_t p = 0; p < q.cols(); ++p) acc += static_cast<LD>(q(i, p)) * k(j, p);
                s[i][j] = acc / std::sqrt(static_cast<LD>(in.d_k));
            }
        return s;
    };
    const auto s_zz = scores(in.q_z, in.k_z), s_zc = scores(in.q_z, in.k_c);
    const auto s_cz = scores(in.q_c, in.k_z), s_cc = scores(in.q_c, in.k_c);
    auto combine = [&](const std::vector<LD>& left, const std::vector<LD>& right, bool drop_left) {
        std::vector<LD> logits;
        if (!drop_left) logits.insert(logits.end(), left.begin(), left.end());
        logits.insert(logits.end(), right.begin(), right.end());
        const auto w = softmax(logits);
        std::vector<LD> out(d, 0.0L);
        std::size_t c = 0;
        if (!drop_left) {
            for (std::size_t j = 0; j < nz; ++j, ++c)
                for (std::size_t p = 0; p < d; ++p) out[p] += w[c] * in.v_z(j, p);
        }
        for (std::size_t j = 0; j < nc; ++j, ++c)
            for (std::size_t p = 0; p < d; ++p) out[p] += w[c] * in.v_c(j, p);
        return out;
    };
    Tensor o_z = Tensor::matrix(nz, d), o_c = Tensor::matrix(nc, d);
    for (std::size_t i = 0; i < nz; ++i) {
        const auto r = combine(s_zz[i], s_zc[i], false);
        for (std::size_t p = 0; p < d; ++p) o_z(i, p) = static_cast<Real>(r[p]);
    }
    for (std::size_t i = 0; i < nc; ++i) {
        const auto r = combine(s_cz[i], s_cc[i], mask_cz);
        for (std::size_t p = 0; p < d; ++p) o_c(i, p) = static_cast<Real>(r[p]);
    }
    return {o_z, o_c};
}

// Multi-head attention by explicit head slicing.
inline Tensor multihead(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                        std::vector<Tensor>* weights = nullptr) {
    const std::size_t d = q.cols(), dh = d / heads;
    Tensor out = Tensor::matrix(q.rows(), d);
    if (weights) weights->clear();
    for (std::size_t h = 0; h < heads; ++h) {
        auto slice = [&](const Tensor& t) {
            Tensor s = Tensor::matrix(t.rows(), dh);
            for (std::size_t r = 0; r < t.rows(); ++r)
                for (std::size_t c = 0; c < dh; ++c) s(r, c) = t(r, h * dh + c);
            return s;
        };
        Tensor w;
        const Tensor o = attention(slice(q), slice(k), slice(v), static_cast<Real>(dh),
                                   [](std::size_t, std::size_t) { return true; }, &w);
        if (weights) weights->push_back(w);
        for (std::size_t r = 0; r < o.rows(); ++r)
            for (std::size_t c = 0; c < dh; ++c) out(r, h * dh + c) = o(r, c);
    }
    return out;
}

inline LD cosine(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
    LD ab = 0, aa = 0, bb = 0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        ab += static_cast<LD>(a(ra, c)) * b(rb, c);
        aa += static_cast<LD>(a(ra, c)) * a(ra, c);
        bb += static_cast<LD>(b(rb, c)) * b(rb, c);
    }
    if (aa == 0 && bb == 0) return 1;
    if (aa == 0 || bb == 0) return 0;
    return ab / std::sqrt(aa * bb);
}

// Indices of the k largest scores, ties to the lower index, returned ascending.
inline std::vector<std::size_t> topk(const std::vector<Real>& scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Simulates the attention calls a sampling run issues and tallies
// queries x keys per call. Written as a literal walk over steps and layers.
struct CostScenario {
    std::uint64_t T, L, N_x, N_c;
    std::vector<bool> layer_active;  // context processed in this layer (layer caching)
    bool conditioned, selection, step_cache, decoupled;
    double ratio;
};

inline std::uint64_t simulate_logits(const CostScenario& s) {
    std::uint64_t kept = s.N_c;
    if (s.selection && s.N_c > 0) {
        kept = static_cast<std::uint64_t>(std::floor(s.ratio * static_cast<double>(s.N_c) + 1e-9));
        kept = std::clamp<std::uint64_t>(kept, 1, s.N_c);
    }
    std::uint64_t total = 0;
    for (std::uint64_t step = 0; step < s.T; ++step) {
        for (std::uint64_t l = 0; l < s.L; ++l) {
            const bool with_context = s.conditioned && s.N_c > 0 && s.layer_active[l];
            if (!with_context) {
                total += s.N_x * s.N_x;  // noisy self-attention only
                continue;
            }
            const bool cached = s.step_cache && step > 0;
            if (s.decoupled || cached) {
                total += s.N_x * (s.N_x + kept);     // noisy queries over all keys
                if (!cached) total += kept * kept;   // reference self-attention
            } else {
                total += (s.N_x + kept) * (s.N_x + kept);
            }
        }
    }
    return total;
}

}  // namespace oracle
