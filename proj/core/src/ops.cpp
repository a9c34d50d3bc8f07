#include "fdt2/ops.hpp"

#include <algorithm>
#include <cmath>

#include "fdt2/errors.hpp"

namespace fdt2 {

namespace {

void require(bool ok, const char* what, const Tensor& a, const Tensor& b) {
    if (!ok) {
        throw DimensionError(std::string(what) + ": " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected rank 2, got " +
                                            t.shape_string());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    require(a.cols() == b.rows(), "matmul inner extents", a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::matrix(m, n);
    std::vector<Real> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = a(i, p);
            const Real* brow = b.row(p).data();
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
        std::copy(acc.begin(), acc.end(), out.row(i).begin());
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    require(a.cols() == b.cols(), "matmul_nt inner extents", a, b);
    const std::size_t m = a.rows(), n = b.rows();
    Tensor out = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out(i, j) = dot(a.row(i), b.row(j));
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    require(a.rows() == b.rows(), "matmul_tn inner extents", a, b);
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    Tensor out = Tensor::matrix(m, n);
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t i = 0; i < m; ++i) {
            const Real av = a(p, i);
            if (av == 0.0) continue;
            Real* orow = out.row(i).data();
            const Real* brow = b.row(p).data();
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    Tensor out = Tensor::matrix(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    }
    return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
    require(dst.shape() == src.shape(), "add_inplace", dst, src);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void scale_inplace(Tensor& t, Real s) {
    for (auto& v : t.values()) v *= s;
}

void add_row_bias(Tensor& t, const Tensor& bias) {
    require(bias.size() == t.cols(), "add_row_bias", t, bias);
    for (std::size_t i = 0; i < t.rows(); ++i) {
        auto r = t.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
}

Tensor column_sums(const Tensor& t) {
    Tensor out = Tensor::matrix(1, t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = 0; j < t.cols(); ++j) out[j] += t(i, j);
    }
    return out;
}

Tensor softmax_rows(const Tensor& s) {
    require_matrix(s, "softmax_rows");
    Tensor out = Tensor::matrix(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        auto in = s.row(i);
        auto o = out.row(i);
        if (in.empty()) continue;
        const Real mx = *std::max_element(in.begin(), in.end());
        Real sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        const Real inv = 1.0 / sum;
        for (auto& v : o) v *= inv;
    }
    return out;
}

Real gelu(Real x) {
    const Real inner = kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(inner));
}

Real gelu_grad(Real x) {
    const Real inner = kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x);
    const Real th = std::tanh(inner);
    const Real dinner = kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner;
}

Real sigmoid(Real x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const Real e = std::exp(x);
    return e / (1.0 + e);
}

Tensor vstack(const Tensor& top, const Tensor& bottom) {
    require(top.cols() == bottom.cols(), "vstack", top, bottom);
    Tensor out = Tensor::matrix(top.rows() + bottom.rows(), top.cols());
    std::copy(top.storage().begin(), top.storage().end(), out.storage().begin());
    std::copy(bottom.storage().begin(), bottom.storage().end(),
              out.storage().begin() + static_cast<std::ptrdiff_t>(top.size()));
    return out;
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
    if (begin > end || end > t.rows()) {
        throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of " + t.shape_string());
    }
    const std::size_t c = t.cols();
    std::vector<Real> data(t.storage().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           t.storage().begin() + static_cast<std::ptrdiff_t>(end * c));
    return Tensor({end - begin, c}, std::move(data));
}

Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end) {
    if (begin > end || end > t.cols()) {
        throw DimensionError("slice_cols out of range for " + t.shape_string());
    }
    Tensor out = Tensor::matrix(t.rows(), end - begin);
    for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = t(i, j);
    }
    return out;
}

void set_cols(Tensor& dst, std::size_t begin, const Tensor& src) {
    if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
        throw DimensionError("set_cols: " + src.shape_string() + " into " + dst.shape_string());
    }
    for (std::size_t i = 0; i < src.rows(); ++i) {
        for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) = src(i, j);
    }
}

void set_rows(Tensor& dst, std::size_t begin, const Tensor& src) {
    if (src.cols() != dst.cols() || begin + src.rows() > dst.rows()) {
        throw DimensionError("set_rows: " + src.shape_string() + " into " + dst.shape_string());
    }
    std::copy(src.storage().begin(), src.storage().end(),
              dst.storage().begin() + static_cast<std::ptrdiff_t>(begin * dst.cols()));
}

Real dot(std::span<const Real> a, std::span<const Real> b) {
    Real s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Real l2_norm(std::span<const Real> a) { return std::sqrt(dot(a, a)); }

Real cosine(std::span<const Real> a, std::span<const Real> b) {
    const Real na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormTape* tape) {
    const std::size_t n = x.rows(), d = x.cols();
    require(gain.size() == d && bias.size() == d, "layer_norm params", x, gain);
    Tensor out = Tensor::matrix(n, d);
    Tensor normalized = Tensor::matrix(n, d);
    std::vector<Real> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = x.row(i);
        Real mean = 0.0;
        for (Real v : r) mean += v;
        mean /= static_cast<Real>(d);
        Real var = 0.0;
        for (Real v : r) var += (v - mean) * (v - mean);
        var /= static_cast<Real>(d);
        inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t j = 0; j < d; ++j) {
            normalized(i, j) = (r[j] - mean) * inv_std[i];
            out(i, j) = normalized(i, j) * gain[j] + bias[j];
        }
    }
    if (tape) {
        tape->normalized = std::move(normalized);
        tape->inv_std = std::move(inv_std);
    }
    return out;
}

Tensor layer_norm_backward(const Tensor& dy, const Tensor& gain, const LayerNormTape& tape,
                           Tensor& dgain, Tensor& dbias) {
    const std::size_t n = dy.rows(), d = dy.cols();
    Tensor dx = Tensor::matrix(n, d);
    std::vector<Real> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
        Real mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const Real xhat = tape.normalized(i, j);
            dgain[j] += dy(i, j) * xhat;
            dbias[j] += dy(i, j);
            dxhat[j] = dy(i, j) * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat;
        }
        mean_dxhat /= static_cast<Real>(d);
        mean_dxhat_xhat /= static_cast<Real>(d);
        for (std::size_t j = 0; j < d; ++j) {
            dx(i, j) = tape.inv_std[i] *
                       (dxhat[j] - mean_dxhat - tape.normalized(i, j) * mean_dxhat_xhat);
        }
    }
    return dx;
}

Tensor mlp_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                   const Tensor& b2) {
    return mlp_forward(x, MlpWeights{w1, b1, w2, b2});
}

Tensor mlp_forward(const Tensor& x, const MlpWeights& w, MlpTape* tape) {
    Tensor pre = matmul(x, w.w1);
    add_row_bias(pre, w.b1);
    Tensor act = pre;
    for (auto& v : act.values()) v = gelu(v);
    Tensor out = matmul(act, w.w2);
    add_row_bias(out, w.b2);
    if (tape) {
        tape->input = x;
        tape->pre_activation = std::move(pre);
        tape->activation = std::move(act);
    }
    return out;
}

Tensor mlp_backward(const Tensor& dy, const MlpWeights& w, const MlpTape& tape, MlpWeights& grad) {
    add_inplace(grad.w2, matmul_tn(tape.activation, dy));
    add_inplace(grad.b2, column_sums(dy));
    Tensor dact = matmul_nt(dy, w.w2);
    for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= gelu_grad(tape.pre_activation[i]);
    add_inplace(grad.w1, matmul_tn(tape.input, dact));
    add_inplace(grad.b1, column_sums(dact));
    return matmul_nt(dact, w.w1);
}

}  // namespace fdt2
