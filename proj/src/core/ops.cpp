#include "rcl/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "rcl/error.hpp"

namespace rcl::ops {
namespace {

Tensor checked(Tensor t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite output in ") + op);
    return t;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
    if (a.shape().size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
    }
}

void accumulate(Tensor* dst, const Tensor& src, double factor = 1.0) {
    if (!dst) return;
    auto d = dst->data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

// c (n x m) += a (n x k) * b (k x m)
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c + i * m;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

// c (n x k) += a (n x m) * b^T, b is (k x m)
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m, std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * m;
        double* ci = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * m;
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += ai[j] * bp[j];
            ci[p] += s;
        }
    }
}

// c (k x m) += a^T * b, a is (n x k), b is (n x m)
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double* cp = c + p * m;
            for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
        }
    }
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    auto o = out.data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    const std::array inputs{a, b};
    return a.tape().record(checked(std::move(out), "add"), inputs, [](const BackwardContext& ctx) {
        accumulate(ctx.grad_inputs[0], ctx.grad_out);
        accumulate(ctx.grad_inputs[1], ctx.grad_out);
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    auto o = out.data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    const std::array inputs{a, b};
    return a.tape().record(checked(std::move(out), "sub"), inputs, [](const BackwardContext& ctx) {
        accumulate(ctx.grad_inputs[0], ctx.grad_out);
        accumulate(ctx.grad_inputs[1], ctx.grad_out, -1.0);
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    auto o = out.data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
    const std::array inputs{a, b};
    return a.tape().record(checked(std::move(out), "mul"), inputs, [](const BackwardContext& ctx) {
        const auto g = ctx.grad_out.data();
        const auto av = ctx.inputs[0]->data();
        const auto bv = ctx.inputs[1]->data();
        if (auto* ga = ctx.grad_inputs[0]) {
            auto d = ga->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
        }
        if (auto* gb = ctx.grad_inputs[1]) {
            auto d = gb->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
        }
    });
}

Var div(Var a, Var b) {
    require_same_shape(a, b, "div");
    Tensor out = a.value();
    auto o = out.data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (bv[i] == 0.0) throw NumericError("div: division by zero");
        o[i] /= bv[i];
    }
    const std::array inputs{a, b};
    return a.tape().record(checked(std::move(out), "div"), inputs, [](const BackwardContext& ctx) {
        const auto g = ctx.grad_out.data();
        const auto bv = ctx.inputs[1]->data();
        const auto ov = ctx.output.data();
        if (auto* ga = ctx.grad_inputs[0]) {
            auto d = ga->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / bv[i];
        }
        if (auto* gb = ctx.grad_inputs[1]) {
            auto d = gb->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i] * ov[i] / bv[i];
        }
    });
}

Var scale(Var a, double factor) {
    Tensor out = a.value();
    for (auto& v : out.data()) v *= factor;
    const std::array inputs{a};
    return a.tape().record(checked(std::move(out), "scale"), inputs, [factor](const BackwardContext& ctx) {
        accumulate(ctx.grad_inputs[0], ctx.grad_out, factor);
    });
}

Var add_bias(Var x, Var bias) {
    require_rank(x, 2, "add_bias");
    require_rank(bias, 1, "add_bias");
    const std::size_t n = x.shape()[0], m = x.shape()[1];
    if (bias.shape()[0] != m) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
    }
    Tensor out = x.value();
    auto o = out.data();
    auto b = bias.value().data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) o[i * m + j] += b[j];
    const std::array inputs{x, bias};
    return x.tape().record(checked(std::move(out), "add_bias"), inputs, [n, m](const BackwardContext& ctx) {
        accumulate(ctx.grad_inputs[0], ctx.grad_out);
        if (auto* gb = ctx.grad_inputs[1]) {
            const auto g = ctx.grad_out.data();
            auto d = gb->data();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) d[j] += g[i * m + j];
        }
    });
}

Var matmul(Var a, Var b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Tensor out({n, m});
    gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), n, k, m);
    const std::array inputs{a, b};
    return a.tape().record(checked(std::move(out), "matmul"), inputs, [n, k, m](const BackwardContext& ctx) {
        const double* g = ctx.grad_out.data().data();
        if (auto* ga = ctx.grad_inputs[0]) {
            gemm_nt(g, ctx.inputs[1]->data().data(), ga->data().data(), n, m, k);
        }
        if (auto* gb = ctx.grad_inputs[1]) {
            gemm_tn(ctx.inputs[0]->data().data(), g, gb->data().data(), n, k, m);
        }
    });
}

Var transpose(Var a) {
    require_rank(a, 2, "transpose");
    const std::size_t n = a.shape()[0], m = a.shape()[1];
    Tensor out({m, n});
    const auto av = a.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) o[j * n + i] = av[i * m + j];
    const std::array inputs{a};
    return a.tape().record(std::move(out), inputs, [n, m](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            const auto g = ctx.grad_out.data();
            auto d = ga->data();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) d[i * m + j] += g[j * n + i];
        }
    });
}

Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    const std::array inputs{a};
    return a.tape().record(std::move(out), inputs, [](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            auto d = ga->data();
            const auto g = ctx.grad_out.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
    });
}

Var conv2d_3x3(Var x, Var weight, Var bias) {
    require_rank(x, 4, "conv2d_3x3");
    require_rank(weight, 4, "conv2d_3x3");
    require_rank(bias, 1, "conv2d_3x3");
    const std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t O = weight.shape()[0];
    if (weight.shape()[1] != C || weight.shape()[2] != 3 || weight.shape()[3] != 3 || bias.shape()[0] != O) {
        throw ShapeError("conv2d_3x3: weight " + shape_str(weight.shape()) + " / bias " +
                         shape_str(bias.shape()) + " incompatible with input " + shape_str(x.shape()));
    }
    Tensor out({N, O, H, W});
    const double* xv = x.value().data().data();
    const double* wv = weight.value().data().data();
    const double* bv = bias.value().data().data();
    double* ov = out.data().data();
    const std::size_t HW = H * W;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
            double* op = ov + (n * O + o) * HW;
            std::fill(op, op + HW, bv[o]);
            for (std::size_t c = 0; c < C; ++c) {
                const double* xp = xv + (n * C + c) * HW;
                const double* wp = wv + (o * C + c) * 9;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const double w = wp[ky * 3 + kx];
                        // output (i, j) reads input (i + ky - 1, j + kx - 1)
                        const std::size_t i0 = ky == 0 ? 1 : 0, i1 = ky == 2 ? H - 1 : H;
                        const std::size_t j0 = kx == 0 ? 1 : 0, j1 = kx == 2 ? W - 1 : W;
                        for (std::size_t i = i0; i < i1; ++i) {
                            const double* xr = xp + (i + ky - 1) * W;
                            double* orow = op + i * W;
                            for (std::size_t j = j0; j < j1; ++j) orow[j] += w * xr[j + kx - 1];
                        }
                    }
                }
            }
        }
    }
    const std::array inputs{x, weight, bias};
    return x.tape().record(checked(std::move(out), "conv2d_3x3"), inputs,
                           [N, C, H, W, O](const BackwardContext& ctx) {
        const std::size_t HW = H * W;
        const double* g = ctx.grad_out.data().data();
        const double* xv = ctx.inputs[0]->data().data();
        const double* wv = ctx.inputs[1]->data().data();
        double* gx = ctx.grad_inputs[0] ? ctx.grad_inputs[0]->data().data() : nullptr;
        double* gw = ctx.grad_inputs[1] ? ctx.grad_inputs[1]->data().data() : nullptr;
        double* gb = ctx.grad_inputs[2] ? ctx.grad_inputs[2]->data().data() : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t o = 0; o < O; ++o) {
                const double* gp = g + (n * O + o) * HW;
                if (gb) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < HW; ++i) s += gp[i];
                    gb[o] += s;
                }
                for (std::size_t c = 0; c < C; ++c) {
                    const double* xp = xv + (n * C + c) * HW;
                    const double* wp = wv + (o * C + c) * 9;
                    double* gxp = gx ? gx + (n * C + c) * HW : nullptr;
                    double* gwp = gw ? gw + (o * C + c) * 9 : nullptr;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const std::size_t i0 = ky == 0 ? 1 : 0, i1 = ky == 2 ? H - 1 : H;
                            const std::size_t j0 = kx == 0 ? 1 : 0, j1 = kx == 2 ? W - 1 : W;
                            const double w = wp[ky * 3 + kx];
                            double acc = 0.0;
                            for (std::size_t i = i0; i < i1; ++i) {
                                const std::size_t xrow = (i + ky - 1) * W;
                                const double* grow = gp + i * W;
                                for (std::size_t j = j0; j < j1; ++j) {
                                    acc += grow[j] * xp[xrow + j + kx - 1];
                                    if (gxp) gxp[xrow + j + kx - 1] += grow[j] * w;
                                }
                            }
                            if (gwp) gwp[ky * 3 + kx] += acc;
                        }
                    }
                }
            }
        }
    });
}

Var max_pool2x2(Var x) {
    require_rank(x, 4, "max_pool2x2");
    const std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (H % 2 || W % 2) throw ShapeError("max_pool2x2: spatial extents must be even, got " + shape_str(x.shape()));
    const std::size_t Ho = H / 2, Wo = W / 2;
    Tensor out({N, C, Ho, Wo});
    std::vector<std::size_t> argmax(out.size());
    const auto xv = x.value().data();
    auto ov = out.data();
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        for (std::size_t i = 0; i < Ho; ++i) {
            for (std::size_t j = 0; j < Wo; ++j) {
                const std::size_t base = nc * H * W + 2 * i * W + 2 * j;
                std::size_t best = base;
                for (std::size_t off : {base + 1, base + W, base + W + 1})
                    if (xv[off] > xv[best]) best = off;
                const std::size_t k = nc * Ho * Wo + i * Wo + j;
                ov[k] = xv[best];
                argmax[k] = best;
            }
        }
    }
    const std::array inputs{x};
    return x.tape().record(std::move(out), inputs, [argmax = std::move(argmax)](const BackwardContext& ctx) {
        if (auto* gx = ctx.grad_inputs[0]) {
            auto d = gx->data();
            const auto g = ctx.grad_out.data();
            for (std::size_t k = 0; k < g.size(); ++k) d[argmax[k]] += g[k];
        }
    });
}

Var relu(Var a) {
    Tensor out = a.value();
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    const std::array inputs{a};
    return a.tape().record(std::move(out), inputs, [](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            auto d = ga->data();
            const auto g = ctx.grad_out.data();
            const auto o = ctx.output.data();
            for (std::size_t i = 0; i < d.size(); ++i)
                if (o[i] > 0.0) d[i] += g[i];
        }
    });
}

Var exp(Var a) {
    Tensor out = a.value();
    for (auto& v : out.data()) v = std::exp(v);
    const std::array inputs{a};
    return a.tape().record(checked(std::move(out), "exp"), inputs, [](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            auto d = ga->data();
            const auto g = ctx.grad_out.data();
            const auto o = ctx.output.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * o[i];
        }
    });
}

Var log(Var a) {
    Tensor out = a.value();
    for (auto& v : out.data()) {
        if (!(v > 0.0)) throw NumericError("log: non-positive argument");
        v = std::log(v);
    }
    const std::array inputs{a};
    return a.tape().record(checked(std::move(out), "log"), inputs, [](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            auto d = ga->data();
            const auto g = ctx.grad_out.data();
            const auto x = ctx.inputs[0]->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / x[i];
        }
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const std::array inputs{a};
    return a.tape().record(checked(Tensor::scalar(s), "sum"), inputs, [](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            const double g = ctx.grad_out[0];
            for (auto& v : ga->data()) v += g;
        }
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ShapeError("mean of an empty tensor");
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const std::array inputs{a};
    return a.tape().record(checked(Tensor::scalar(s / static_cast<double>(n)), "mean"), inputs,
                           [n](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            const double g = ctx.grad_out[0] / static_cast<double>(n);
            for (auto& v : ga->data()) v += g;
        }
    });
}

Var max_reduce(Var a) {
    const auto v = a.value().data();
    if (v.empty()) throw ShapeError("max_reduce of an empty tensor");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    const std::array inputs{a};
    return a.tape().record(Tensor::scalar(v[best]), inputs, [best](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) ga->data()[best] += ctx.grad_out[0];
    });
}

Var l2_normalize_rows(Var a) {
    require_rank(a, 2, "l2_normalize_rows");
    const std::size_t n = a.shape()[0], m = a.shape()[1];
    Tensor out = a.value();
    std::vector<double> norms(n);
    auto o = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += o[i * m + j] * o[i * m + j];
        const double norm = std::sqrt(s);
        if (norm == 0.0) throw NumericError("l2_normalize_rows: zero row " + std::to_string(i));
        norms[i] = norm;
        for (std::size_t j = 0; j < m; ++j) o[i * m + j] /= norm;
    }
    const std::array inputs{a};
    return a.tape().record(checked(std::move(out), "l2_normalize_rows"), inputs,
                           [n, m, norms = std::move(norms)](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            // d(x/|x|) = (g - y (y.g)) / |x|
            auto d = ga->data();
            const auto g = ctx.grad_out.data();
            const auto y = ctx.output.data();
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < m; ++j) dot += y[i * m + j] * g[i * m + j];
                for (std::size_t j = 0; j < m; ++j) d[i * m + j] += (g[i * m + j] - y[i * m + j] * dot) / norms[i];
            }
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    std::vector<Tensor> values;
    values.reserve(parts.size());
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        values.push_back(p.value());
        offsets.push_back(offset);
        offset += p.value().size();
    }
    Tensor out = stack_rows(values);
    return parts[0].tape().record(std::move(out), parts, [offsets = std::move(offsets)](const BackwardContext& ctx) {
        const auto g = ctx.grad_out.data();
        for (std::size_t k = 0; k < ctx.grad_inputs.size(); ++k) {
            if (auto* gi = ctx.grad_inputs[k]) {
                auto d = gi->data();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[offsets[k] + i];
            }
        }
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    Tensor out = a.value().slice_rows(begin, end);
    const std::size_t offset = begin * a.value().cols();
    const std::array inputs{a};
    return a.tape().record(std::move(out), inputs, [offset](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            auto d = ga->data();
            const auto g = ctx.grad_out.data();
            for (std::size_t i = 0; i < g.size(); ++i) d[offset + i] += g[i];
        }
    });
}

Var log_softmax_rows(Var a, const std::optional<Tensor>& mask) {
    require_rank(a, 2, "log_softmax_rows");
    const std::size_t n = a.shape()[0], m = a.shape()[1];
    if (mask && mask->shape() != a.shape()) {
        throw ShapeError("log_softmax_rows: mask " + shape_str(mask->shape()) + " vs " + shape_str(a.shape()));
    }
    std::vector<unsigned char> keep(n * m, 1);
    if (mask)
        for (std::size_t i = 0; i < n * m; ++i) keep[i] = (*mask)[i] != 0.0;

    Tensor out({n, m});
    const auto x = a.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j)
            if (keep[i * m + j]) mx = std::max(mx, x[i * m + j]);
        if (!std::isfinite(mx)) throw NumericError("log_softmax_rows: row " + std::to_string(i) + " fully masked");
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            if (keep[i * m + j]) s += std::exp(x[i * m + j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < m; ++j) o[i * m + j] = keep[i * m + j] ? x[i * m + j] - lse : 0.0;
    }
    const std::array inputs{a};
    return a.tape().record(checked(std::move(out), "log_softmax_rows"), inputs,
                           [n, m, keep = std::move(keep)](const BackwardContext& ctx) {
        if (auto* ga = ctx.grad_inputs[0]) {
            auto d = ga->data();
            const auto g = ctx.grad_out.data();
            const auto o = ctx.output.data();
            for (std::size_t i = 0; i < n; ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    if (keep[i * m + j]) gs += g[i * m + j];
                for (std::size_t j = 0; j < m; ++j)
                    if (keep[i * m + j]) d[i * m + j] += g[i * m + j] - std::exp(o[i * m + j]) * gs;
            }
        }
    });
}

}  // namespace rcl::ops
