#include "gsmo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gsmo {

namespace {

bool any_grad(std::initializer_list<Value> vs) {
    for (const Value& v : vs) {
        if (v.tape->requires_grad(v.id)) return true;
    }
    return false;
}

void require_rank(const Tensor& t, int rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape));
    }
}

struct ConvGeometry {
    int out_h, out_w;
    int pad_top, pad_left;
};

ConvGeometry conv_geometry(int h, int w, int kh, int kw, Padding padding, int stride) {
    ConvGeometry g{};
    if (padding == Padding::valid) {
        if (kh > h || kw > w) {
            throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                             " exceeds input " + std::to_string(h) + "x" + std::to_string(w));
        }
        g.out_h = (h - kh) / stride + 1;
        g.out_w = (w - kw) / stride + 1;
        g.pad_top = 0;
        g.pad_left = 0;
    } else {
        g.out_h = (h + stride - 1) / stride;
        g.out_w = (w + stride - 1) / stride;
        int pad_h = std::max(0, (g.out_h - 1) * stride + kh - h);
        int pad_w = std::max(0, (g.out_w - 1) * stride + kw - w);
        g.pad_top = pad_h / 2;
        g.pad_left = pad_w / 2;
    }
    return g;
}

} // namespace

Value conv2d(Tape& tape, Value input, Value kernels, Value bias, Padding padding, int stride) {
    const Tensor& in = input.tensor();
    const Tensor& k = kernels.tensor();
    const Tensor& b = bias.tensor();
    require_rank(in, 4, "conv2d input");
    require_rank(k, 4, "conv2d kernels");
    require_rank(b, 1, "conv2d bias");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const int n = in.shape[0], h = in.shape[1], w = in.shape[2], cin = in.shape[3];
    const int kh = k.shape[0], kw = k.shape[1], cout = k.shape[3];
    if (k.shape[2] != cin) {
        throw ShapeError("conv2d: input channels " + shape_str(in.shape) +
                         " do not match kernels " + shape_str(k.shape));
    }
    if (b.shape[0] != cout) {
        throw ShapeError("conv2d: bias " + shape_str(b.shape) + " does not match kernels " +
                         shape_str(k.shape));
    }

    const ConvGeometry g = conv_geometry(h, w, kh, kw, padding, stride);
    Tensor out = Tensor::zeros({n, g.out_h, g.out_w, cout});

    const float* ind = in.data.data();
    const float* kd = k.data.data();
    float* od = out.data.data();
    for (int ni = 0; ni < n; ++ni) {
        for (int oh = 0; oh < g.out_h; ++oh) {
            for (int ow = 0; ow < g.out_w; ++ow) {
                float* orow = od + (((static_cast<std::size_t>(ni) * g.out_h + oh) * g.out_w + ow) *
                                    cout);
                for (int co = 0; co < cout; ++co) orow[co] = b.data[static_cast<std::size_t>(co)];
                for (int dh = 0; dh < kh; ++dh) {
                    const int ih = oh * stride - g.pad_top + dh;
                    if (ih < 0 || ih >= h) continue;
                    for (int dw = 0; dw < kw; ++dw) {
                        const int iw = ow * stride - g.pad_left + dw;
                        if (iw < 0 || iw >= w) continue;
                        const float* irow =
                            ind + (((static_cast<std::size_t>(ni) * h + ih) * w + iw) * cin);
                        const float* krow =
                            kd + ((static_cast<std::size_t>(dh) * kw + dw) * cin) * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const float x = irow[ci];
                            const float* kc = krow + static_cast<std::size_t>(ci) * cout;
                            for (int co = 0; co < cout; ++co) orow[co] += x * kc[co];
                        }
                    }
                }
            }
        }
    }

    bool track = any_grad({input, kernels, bias});
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = input.id, k_id = kernels.id, b_id = bias.id, out_id = out_v.id;
        tape.step([&tape, in_id, k_id, b_id, out_id, g, stride, n, h, w, cin, kh, kw, cout]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dout = tape.grad(out_id);
            const Tensor& in_t = tape.value_of(in_id);
            const Tensor& k_t = tape.value_of(k_id);
            const bool need_in = tape.requires_grad(in_id);
            const bool need_k = tape.requires_grad(k_id);
            const bool need_b = tape.requires_grad(b_id);
            Tensor* din = need_in ? &tape.grad(in_id) : nullptr;
            Tensor* dk = need_k ? &tape.grad(k_id) : nullptr;
            Tensor* db = need_b ? &tape.grad(b_id) : nullptr;

            for (int ni = 0; ni < n; ++ni) {
                for (int oh = 0; oh < g.out_h; ++oh) {
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const float* grow =
                            dout.data.data() +
                            (((static_cast<std::size_t>(ni) * g.out_h + oh) * g.out_w + ow) * cout);
                        if (db) {
                            for (int co = 0; co < cout; ++co) db->data[co] += grow[co];
                        }
                        for (int dh = 0; dh < kh; ++dh) {
                            const int ih = oh * stride - g.pad_top + dh;
                            if (ih < 0 || ih >= h) continue;
                            for (int dw = 0; dw < kw; ++dw) {
                                const int iw = ow * stride - g.pad_left + dw;
                                if (iw < 0 || iw >= w) continue;
                                const std::size_t in_off =
                                    ((static_cast<std::size_t>(ni) * h + ih) * w + iw) * cin;
                                const std::size_t k_off =
                                    ((static_cast<std::size_t>(dh) * kw + dw) * cin) * cout;
                                for (int ci = 0; ci < cin; ++ci) {
                                    const float x = in_t.data[in_off + ci];
                                    const float* kc = k_t.data.data() + k_off + ci * cout;
                                    if (dk) {
                                        float* dkc = dk->data.data() + k_off + ci * cout;
                                        for (int co = 0; co < cout; ++co)
                                            dkc[co] += x * grow[co];
                                    }
                                    if (din) {
                                        float acc = 0.0f;
                                        for (int co = 0; co < cout; ++co) acc += kc[co] * grow[co];
                                        din->data[in_off + ci] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out_v;
}

Value batchnorm2d(Tape& tape, Value input, Value gamma, Value beta, Mode mode,
                  Tensor& running_mean, Tensor& running_var, float epsilon, float momentum) {
    const Tensor& in = input.tensor();
    require_rank(in, 4, "batchnorm2d input");
    if (epsilon <= 0.0f) throw ConfigError("batchnorm2d: epsilon must be > 0");
    const int n = in.shape[0], h = in.shape[1], w = in.shape[2], c = in.shape[3];
    const Tensor& g = gamma.tensor();
    const Tensor& b = beta.tensor();
    if (g.shape != std::vector<int>{c} || b.shape != std::vector<int>{c}) {
        throw ShapeError("batchnorm2d: gamma/beta must be [" + std::to_string(c) + "], got " +
                         shape_str(g.shape) + " and " + shape_str(b.shape));
    }
    const std::size_t m = static_cast<std::size_t>(n) * h * w;
    if (mode == Mode::train && m < 2) {
        throw ShapeError("batchnorm2d: train mode needs N*H*W >= 2 per channel, got " +
                         std::to_string(m));
    }

    std::vector<float> mean(c), invstd(c);
    if (mode == Mode::train) {
        for (int ci = 0; ci < c; ++ci) {
            double s = 0.0;
            for (std::size_t i = ci; i < in.data.size(); i += c) s += in.data[i];
            const double mu = s / static_cast<double>(m);
            double sq = 0.0;
            for (std::size_t i = ci; i < in.data.size(); i += c) {
                const double d = in.data[i] - mu;
                sq += d * d;
            }
            const double var = sq / static_cast<double>(m);
            mean[ci] = static_cast<float>(mu);
            invstd[ci] = static_cast<float>(1.0 / std::sqrt(var + epsilon));
            running_mean.data[ci] =
                momentum * running_mean.data[ci] + (1.0f - momentum) * static_cast<float>(mu);
            running_var.data[ci] =
                momentum * running_var.data[ci] + (1.0f - momentum) * static_cast<float>(var);
        }
    } else {
        for (int ci = 0; ci < c; ++ci) {
            mean[ci] = running_mean.data[ci];
            invstd[ci] = 1.0f / std::sqrt(running_var.data[ci] + epsilon);
        }
    }

    Tensor out = Tensor::zeros(in.shape);
    Tensor xhat = Tensor::zeros(in.shape); // cached for backward
    for (std::size_t i = 0; i < in.data.size(); ++i) {
        const int ci = static_cast<int>(i % c);
        const float xh = (in.data[i] - mean[ci]) * invstd[ci];
        xhat.data[i] = xh;
        out.data[i] = g.data[ci] * xh + b.data[ci];
    }

    bool track = any_grad({input, gamma, beta});
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = input.id, g_id = gamma.id, b_id = beta.id, out_id = out_v.id;
        auto xhat_p = std::make_shared<Tensor>(std::move(xhat));
        auto invstd_p = std::make_shared<std::vector<float>>(std::move(invstd));
        tape.step([&tape, in_id, g_id, b_id, out_id, xhat_p, invstd_p, mode, c, m]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dy = tape.grad(out_id);
            const Tensor& g_t = tape.value_of(g_id);
            const Tensor& xh = *xhat_p;

            if (tape.requires_grad(g_id)) {
                Tensor& dg = tape.grad(g_id);
                for (std::size_t i = 0; i < dy.data.size(); ++i)
                    dg.data[i % c] += dy.data[i] * xh.data[i];
            }
            if (tape.requires_grad(b_id)) {
                Tensor& db = tape.grad(b_id);
                for (std::size_t i = 0; i < dy.data.size(); ++i) db.data[i % c] += dy.data[i];
            }
            if (!tape.requires_grad(in_id)) return;
            Tensor& dx = tape.grad(in_id);
            if (mode == Mode::eval) {
                // Running stats are constants in eval mode.
                for (std::size_t i = 0; i < dy.data.size(); ++i) {
                    const int ci = static_cast<int>(i % c);
                    dx.data[i] += dy.data[i] * g_t.data[ci] * (*invstd_p)[ci];
                }
                return;
            }
            std::vector<double> sum_dy(c, 0.0), sum_dy_xh(c, 0.0);
            for (std::size_t i = 0; i < dy.data.size(); ++i) {
                const int ci = static_cast<int>(i % c);
                sum_dy[ci] += dy.data[i];
                sum_dy_xh[ci] += static_cast<double>(dy.data[i]) * xh.data[i];
            }
            for (std::size_t i = 0; i < dy.data.size(); ++i) {
                const int ci = static_cast<int>(i % c);
                const double term = dy.data[i] - sum_dy[ci] / static_cast<double>(m) -
                                    xh.data[i] * sum_dy_xh[ci] / static_cast<double>(m);
                dx.data[i] += static_cast<float>(g_t.data[ci] * (*invstd_p)[ci] * term);
            }
        });
    }
    return out_v;
}

Value maxpool2d(Tape& tape, Value input, int pool) {
    if (pool <= 0) throw ShapeError("maxpool2d: pool must be positive");
    const Tensor& in = input.tensor();
    require_rank(in, 4, "maxpool2d input");
    const int n = in.shape[0], h = in.shape[1], w = in.shape[2], c = in.shape[3];
    const int oh = (h + pool - 1) / pool; // -inf padding on the bottom/right
    const int ow = (w + pool - 1) / pool;

    Tensor out = Tensor::zeros({n, oh, ow, c});
    std::vector<std::size_t> argmax(out.numel());
    for (int ni = 0; ni < n; ++ni) {
        for (int po = 0; po < oh; ++po) {
            for (int qo = 0; qo < ow; ++qo) {
                for (int ci = 0; ci < c; ++ci) {
                    float best = -std::numeric_limits<float>::infinity();
                    std::size_t best_idx = 0;
                    bool found = false;
                    for (int dh = 0; dh < pool; ++dh) {
                        const int ih = po * pool + dh;
                        if (ih >= h) break;
                        for (int dw = 0; dw < pool; ++dw) {
                            const int iw = qo * pool + dw;
                            if (iw >= w) break;
                            const std::size_t idx =
                                ((static_cast<std::size_t>(ni) * h + ih) * w + iw) * c + ci;
                            if (!found || in.data[idx] > best) {
                                best = in.data[idx];
                                best_idx = idx;
                                found = true;
                            }
                        }
                    }
                    const std::size_t o =
                        ((static_cast<std::size_t>(ni) * oh + po) * ow + qo) * c + ci;
                    out.data[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }

    bool track = tape.requires_grad(input.id);
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = input.id, out_id = out_v.id;
        auto arg_p = std::make_shared<std::vector<std::size_t>>(std::move(argmax));
        tape.step([&tape, in_id, out_id, arg_p]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dout = tape.grad(out_id);
            Tensor& din = tape.grad(in_id);
            for (std::size_t i = 0; i < dout.data.size(); ++i)
                din.data[(*arg_p)[i]] += dout.data[i];
        });
    }
    return out_v;
}

Value dense(Tape& tape, Value input, Value weight, Value bias) {
    const Tensor& in = input.tensor();
    const Tensor& wt = weight.tensor();
    const Tensor& b = bias.tensor();
    require_rank(in, 2, "dense input");
    require_rank(wt, 2, "dense weight");
    require_rank(b, 1, "dense bias");
    const int n = in.shape[0], f = in.shape[1], g = wt.shape[1];
    if (wt.shape[0] != f) {
        throw ShapeError("dense: input " + shape_str(in.shape) + " does not match weight " +
                         shape_str(wt.shape));
    }
    if (b.shape[0] != g) {
        throw ShapeError("dense: bias " + shape_str(b.shape) + " does not match weight " +
                         shape_str(wt.shape));
    }

    Tensor out = Tensor::zeros({n, g});
    for (int ni = 0; ni < n; ++ni) {
        float* orow = out.data.data() + static_cast<std::size_t>(ni) * g;
        for (int gi = 0; gi < g; ++gi) orow[gi] = b.data[static_cast<std::size_t>(gi)];
        const float* irow = in.data.data() + static_cast<std::size_t>(ni) * f;
        for (int fi = 0; fi < f; ++fi) {
            const float x = irow[fi];
            const float* wrow = wt.data.data() + static_cast<std::size_t>(fi) * g;
            for (int gi = 0; gi < g; ++gi) orow[gi] += x * wrow[gi];
        }
    }

    bool track = any_grad({input, weight, bias});
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = input.id, w_id = weight.id, b_id = bias.id, out_id = out_v.id;
        tape.step([&tape, in_id, w_id, b_id, out_id, n, f, g]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dout = tape.grad(out_id);
            const Tensor& in_t = tape.value_of(in_id);
            const Tensor& w_t = tape.value_of(w_id);
            if (tape.requires_grad(b_id)) {
                Tensor& db = tape.grad(b_id);
                for (int ni = 0; ni < n; ++ni) {
                    const float* grow = dout.data.data() + static_cast<std::size_t>(ni) * g;
                    for (int gi = 0; gi < g; ++gi) db.data[gi] += grow[gi];
                }
            }
            const bool need_in = tape.requires_grad(in_id);
            const bool need_w = tape.requires_grad(w_id);
            if (!need_in && !need_w) return;
            Tensor* din = need_in ? &tape.grad(in_id) : nullptr;
            Tensor* dw = need_w ? &tape.grad(w_id) : nullptr;
            for (int ni = 0; ni < n; ++ni) {
                const float* grow = dout.data.data() + static_cast<std::size_t>(ni) * g;
                const float* irow = in_t.data.data() + static_cast<std::size_t>(ni) * f;
                for (int fi = 0; fi < f; ++fi) {
                    const float* wrow = w_t.data.data() + static_cast<std::size_t>(fi) * g;
                    if (dw) {
                        float* dwrow = dw->data.data() + static_cast<std::size_t>(fi) * g;
                        const float x = irow[fi];
                        for (int gi = 0; gi < g; ++gi) dwrow[gi] += x * grow[gi];
                    }
                    if (din) {
                        float acc = 0.0f;
                        for (int gi = 0; gi < g; ++gi) acc += wrow[gi] * grow[gi];
                        din->data[static_cast<std::size_t>(ni) * f + fi] += acc;
                    }
                }
            }
        });
    }
    return out_v;
}

Value relu(Tape& tape, Value x) {
    const Tensor& in = x.tensor();
    Tensor out = in;
    for (float& v : out.data) v = std::max(0.0f, v);
    bool track = tape.requires_grad(x.id);
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = x.id, out_id = out_v.id;
        tape.step([&tape, in_id, out_id]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dout = tape.grad(out_id);
            const Tensor& in_t = tape.value_of(in_id);
            Tensor& din = tape.grad(in_id);
            for (std::size_t i = 0; i < dout.data.size(); ++i) {
                if (in_t.data[i] > 0.0f) din.data[i] += dout.data[i];
            }
        });
    }
    return out_v;
}

Value flatten(Tape& tape, Value x) {
    const Tensor& in = x.tensor();
    require_rank(in, 4, "flatten input");
    const int n = in.shape[0];
    const int rest = in.shape[1] * in.shape[2] * in.shape[3];
    Tensor out = in.reshaped({n, rest});
    bool track = tape.requires_grad(x.id);
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = x.id, out_id = out_v.id;
        tape.step([&tape, in_id, out_id]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dout = tape.grad(out_id);
            Tensor& din = tape.grad(in_id);
            for (std::size_t i = 0; i < dout.data.size(); ++i) din.data[i] += dout.data[i];
        });
    }
    return out_v;
}

Value concat(Tape& tape, Value a, Value b) {
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    if (ta.rank() != tb.rank() || ta.rank() < 1) {
        throw ShapeError("concat: rank mismatch " + shape_str(ta.shape) + " vs " +
                         shape_str(tb.shape));
    }
    for (int i = 0; i + 1 < ta.rank(); ++i) {
        if (ta.shape[i] != tb.shape[i]) {
            throw ShapeError("concat: leading extents differ, " + shape_str(ta.shape) + " vs " +
                             shape_str(tb.shape));
        }
    }
    const int la = ta.shape.back(), lb = tb.shape.back();
    std::vector<int> out_shape = ta.shape;
    out_shape.back() = la + lb;
    const std::size_t rows = ta.numel() / static_cast<std::size_t>(la);

    Tensor out = Tensor::zeros(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(ta.data.data() + r * la, la, out.data.data() + r * (la + lb));
        std::copy_n(tb.data.data() + r * lb, lb, out.data.data() + r * (la + lb) + la);
    }

    bool track = any_grad({a, b});
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int a_id = a.id, b_id = b.id, out_id = out_v.id;
        tape.step([&tape, a_id, b_id, out_id, rows, la, lb]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dout = tape.grad(out_id);
            if (tape.requires_grad(a_id)) {
                Tensor& da = tape.grad(a_id);
                for (std::size_t r = 0; r < rows; ++r)
                    for (int i = 0; i < la; ++i)
                        da.data[r * la + i] += dout.data[r * (la + lb) + i];
            }
            if (tape.requires_grad(b_id)) {
                Tensor& db = tape.grad(b_id);
                for (std::size_t r = 0; r < rows; ++r)
                    for (int i = 0; i < lb; ++i)
                        db.data[r * lb + i] += dout.data[r * (la + lb) + la + i];
            }
        });
    }
    return out_v;
}

Value softmax(Tape& tape, Value x) {
    const Tensor& in = x.tensor();
    require_rank(in, 2, "softmax input");
    const int n = in.shape[0], k = in.shape[1];
    Tensor out = Tensor::zeros(in.shape);
    for (int ni = 0; ni < n; ++ni) {
        const float* irow = in.data.data() + static_cast<std::size_t>(ni) * k;
        float* orow = out.data.data() + static_cast<std::size_t>(ni) * k;
        float mx = irow[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, irow[i]);
        double s = 0.0;
        for (int i = 0; i < k; ++i) {
            orow[i] = std::exp(irow[i] - mx);
            s += orow[i];
        }
        const float inv = static_cast<float>(1.0 / s);
        for (int i = 0; i < k; ++i) orow[i] *= inv;
    }

    bool track = tape.requires_grad(x.id);
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = x.id, out_id = out_v.id;
        tape.step([&tape, in_id, out_id, n, k]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dy = tape.grad(out_id);
            const Tensor& y = tape.value_of(out_id);
            Tensor& dx = tape.grad(in_id);
            for (int ni = 0; ni < n; ++ni) {
                const float* yrow = y.data.data() + static_cast<std::size_t>(ni) * k;
                const float* grow = dy.data.data() + static_cast<std::size_t>(ni) * k;
                double dot = 0.0;
                for (int i = 0; i < k; ++i) dot += static_cast<double>(grow[i]) * yrow[i];
                for (int i = 0; i < k; ++i)
                    dx.data[static_cast<std::size_t>(ni) * k + i] +=
                        yrow[i] * (grow[i] - static_cast<float>(dot));
            }
        });
    }
    return out_v;
}

Value cross_entropy(Tape& tape, Value probabilities, Value targets) {
    const Tensor& p = probabilities.tensor();
    const Tensor& t = targets.tensor();
    require_rank(p, 2, "cross_entropy probabilities");
    require_same_shape(p, t, "cross_entropy");
    const int n = p.shape[0], k = p.shape[1];
    constexpr float kClampLo = 1e-12f;

    double loss = 0.0;
    std::vector<int> target_idx(static_cast<std::size_t>(n));
    for (int ni = 0; ni < n; ++ni) {
        const float* prow = p.data.data() + static_cast<std::size_t>(ni) * k;
        const float* trow = t.data.data() + static_cast<std::size_t>(ni) * k;
        double row_sum = 0.0;
        int ones = 0, idx = -1;
        for (int i = 0; i < k; ++i) {
            row_sum += prow[i];
            if (trow[i] == 1.0f) {
                ++ones;
                idx = i;
            } else if (trow[i] != 0.0f) {
                ones = -k; // non-binary entry, force rejection
            }
        }
        if (ones != 1) {
            throw std::invalid_argument("cross_entropy: target row " + std::to_string(ni) +
                                        " is not one-hot");
        }
        if (std::abs(row_sum - 1.0) > 1e-4) {
            throw std::invalid_argument("cross_entropy: probability row " + std::to_string(ni) +
                                        " sums to " + std::to_string(row_sum));
        }
        target_idx[static_cast<std::size_t>(ni)] = idx;
        const float pv = std::min(1.0f, std::max(kClampLo, prow[idx]));
        loss -= std::log(static_cast<double>(pv));
    }
    Tensor out({1}, {static_cast<float>(loss / n)});

    bool track = tape.requires_grad(probabilities.id);
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int p_id = probabilities.id, out_id = out_v.id;
        auto idx_p = std::make_shared<std::vector<int>>(std::move(target_idx));
        tape.step([&tape, p_id, out_id, idx_p, n, k]() {
            if (!tape.has_grad(out_id)) return;
            const float dl = tape.grad(out_id).data[0];
            const Tensor& p_t = tape.value_of(p_id);
            Tensor& dp = tape.grad(p_id);
            for (int ni = 0; ni < n; ++ni) {
                const int idx = (*idx_p)[static_cast<std::size_t>(ni)];
                const float pv = p_t.data[static_cast<std::size_t>(ni) * k + idx];
                if (pv <= 1e-12f || pv > 1.0f) continue; // clamped region, zero slope
                dp.data[static_cast<std::size_t>(ni) * k + idx] -= dl / (pv * n);
            }
        });
    }
    return out_v;
}

Value add(Tape& tape, Value a, Value b) {
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    require_same_shape(ta, tb, "add");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    bool track = any_grad({a, b});
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int a_id = a.id, b_id = b.id, out_id = out_v.id;
        tape.step([&tape, a_id, b_id, out_id]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dout = tape.grad(out_id);
            for (int id : {a_id, b_id}) {
                if (!tape.requires_grad(id)) continue;
                Tensor& d = tape.grad(id);
                for (std::size_t i = 0; i < dout.data.size(); ++i) d.data[i] += dout.data[i];
            }
        });
    }
    return out_v;
}

Value scale(Tape& tape, Value x, float c) {
    Tensor out = x.tensor();
    for (float& v : out.data) v *= c;
    bool track = tape.requires_grad(x.id);
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = x.id, out_id = out_v.id;
        tape.step([&tape, in_id, out_id, c]() {
            if (!tape.has_grad(out_id)) return;
            const Tensor& dout = tape.grad(out_id);
            Tensor& din = tape.grad(in_id);
            for (std::size_t i = 0; i < dout.data.size(); ++i) din.data[i] += c * dout.data[i];
        });
    }
    return out_v;
}

Value sum(Tape& tape, Value x) {
    const Tensor& in = x.tensor();
    double s = 0.0;
    for (float v : in.data) s += v;
    Tensor out({1}, {static_cast<float>(s)});
    bool track = tape.requires_grad(x.id);
    Value out_v = tape.node(std::move(out), track);
    if (track) {
        int in_id = x.id, out_id = out_v.id;
        tape.step([&tape, in_id, out_id]() {
            if (!tape.has_grad(out_id)) return;
            const float d = tape.grad(out_id).data[0];
            Tensor& din = tape.grad(in_id);
            for (float& v : din.data) v += d;
        });
    }
    return out_v;
}

} // namespace gsmo
