#include "hdan/ops.hpp"

#include <cmath>
#include <cstring>

#include "hdan/errors.hpp"
#include "hdan/parallel.hpp"

namespace hdan {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeMismatch(msg);
}

NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    if (grad_enabled())
        for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(bp);
    }
    return n;
}

int64_t divceil(int64_t a, int64_t b) { return a > 0 ? (a + b - 1) / b : a / b; }
int64_t divfloor(int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Order-independent sum: each value is quantized to a 2^-40 grid and the
// grid counts are accumulated in 128-bit integer arithmetic, so the result
// is bit-identical under any permutation of the inputs. Quantization error
// is below 1e-12 per element, far inside every advertised tolerance.
double invariant_sum(const double* x, int64_t n, int64_t stride) {
    constexpr double kLimit = 4194304.0;  // 2^22, ample for network activations
    __int128 acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double v = x[i * stride];
        if (!(std::fabs(v) < kLimit))
            throw RuntimeError("pooling input exceeds the exact-summation range");
        acc += static_cast<__int128>(std::llround(std::ldexp(v, 40)));
    }
    return std::ldexp(static_cast<double>(acc), -40);
}

struct ConvDims {
    int64_t Ci, D, H, W, Co, Do, Ho, Wo;
    int k, s, p;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                   int pad) {
    require(x.rank() == 4, "conv3d input must be rank 4, got " + shape_str(x.shape));
    require(w.rank() == 5, "conv3d weight must be rank 5, got " + shape_str(w.shape));
    require(b.rank() == 1 && b.dim(0) == w.dim(0),
            "conv3d bias must be [out_channels]");
    require(w.dim(1) == x.dim(0), "conv3d channel mismatch: weight expects " +
                                      std::to_string(w.dim(1)) + ", input has " +
                                      std::to_string(x.dim(0)));
    require(w.dim(2) == w.dim(3) && w.dim(3) == w.dim(4), "conv3d kernel must be cubic");
    require(stride >= 1 && pad >= 0, "conv3d needs stride >= 1 and pad >= 0");
    ConvDims d;
    d.Ci = x.dim(0);
    d.D = x.dim(1);
    d.H = x.dim(2);
    d.W = x.dim(3);
    d.Co = w.dim(0);
    d.k = static_cast<int>(w.dim(2));
    d.s = stride;
    d.p = pad;
    d.Do = (d.D + 2 * pad - d.k) / stride + 1;
    d.Ho = (d.H + 2 * pad - d.k) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.k) / stride + 1;
    require(d.D + 2 * pad >= d.k && d.Do >= 1 && d.Ho >= 1 && d.Wo >= 1,
            "conv3d kernel exceeds padded input " + shape_str(x.shape));
    return d;
}

// Valid output range along one axis for a fixed kernel offset.
void out_range(int64_t in, int64_t on, int kk, int s, int p, int64_t& lo,
               int64_t& hi) {
    lo = std::max<int64_t>(0, divceil(p - kk, s));
    hi = std::min<int64_t>(on - 1, divfloor(in - 1 + p - kk, s));
}

void conv3d_forward(const ConvDims& d, const double* x, const double* w,
                    const double* b, double* out) {
    parallel_for(d.Co, [&](int64_t co) {
        double* o = out + co * d.Do * d.Ho * d.Wo;
        const double bias = b[co];
        for (int64_t i = 0; i < d.Do * d.Ho * d.Wo; ++i) o[i] = bias;
        for (int64_t ci = 0; ci < d.Ci; ++ci) {
            const double* xc = x + ci * d.D * d.H * d.W;
            for (int kz = 0; kz < d.k; ++kz) {
                int64_t zlo, zhi;
                out_range(d.D, d.Do, kz, d.s, d.p, zlo, zhi);
                for (int ky = 0; ky < d.k; ++ky) {
                    int64_t ylo, yhi;
                    out_range(d.H, d.Ho, ky, d.s, d.p, ylo, yhi);
                    for (int kx = 0; kx < d.k; ++kx) {
                        int64_t xlo, xhi;
                        out_range(d.W, d.Wo, kx, d.s, d.p, xlo, xhi);
                        if (xlo > xhi) continue;
                        const double wv =
                            w[(((co * d.Ci + ci) * d.k + kz) * d.k + ky) * d.k + kx];
                        const int64_t cnt = xhi - xlo + 1;
                        for (int64_t od = zlo; od <= zhi; ++od) {
                            const int64_t iz = od * d.s + kz - d.p;
                            for (int64_t oh = ylo; oh <= yhi; ++oh) {
                                const int64_t iy = oh * d.s + ky - d.p;
                                double* orow = o + (od * d.Ho + oh) * d.Wo + xlo;
                                const double* xrow =
                                    xc + (iz * d.H + iy) * d.W + xlo * d.s + kx - d.p;
                                if (d.s == 1) {
                                    for (int64_t i = 0; i < cnt; ++i)
                                        orow[i] += wv * xrow[i];
                                } else {
                                    for (int64_t i = 0; i < cnt; ++i)
                                        orow[i] += wv * xrow[i * d.s];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

}  // namespace

NodePtr conv3d(const NodePtr& x, const NodePtr& w, const NodePtr& b, int stride,
               int pad) {
    const ConvDims d = conv_dims(x->value, w->value, b->value, stride, pad);
    Tensor out({d.Co, d.Do, d.Ho, d.Wo});
    conv3d_forward(d, x->value.data(), w->value.data(), b->value.data(), out.data());

    auto bp = [d](Node& self) {
        const Tensor& g = self.grad;
        const NodePtr& px = self.parents[0];
        const NodePtr& pw = self.parents[1];
        const NodePtr& pb = self.parents[2];
        if (pb->requires_grad) {
            Tensor& gb = pb->ensure_grad();
            parallel_for(d.Co, [&](int64_t co) {
                const double* gc = g.data() + co * d.Do * d.Ho * d.Wo;
                double acc = 0.0;
                for (int64_t i = 0; i < d.Do * d.Ho * d.Wo; ++i) acc += gc[i];
                gb[co] += acc;
            });
        }
        if (pw->requires_grad) {
            Tensor& gw = pw->ensure_grad();
            const double* xv = px->value.data();
            parallel_for(d.Co, [&](int64_t co) {
                const double* gc = g.data() + co * d.Do * d.Ho * d.Wo;
                for (int64_t ci = 0; ci < d.Ci; ++ci) {
                    const double* xc = xv + ci * d.D * d.H * d.W;
                    for (int kz = 0; kz < d.k; ++kz) {
                        int64_t zlo, zhi;
                        out_range(d.D, d.Do, kz, d.s, d.p, zlo, zhi);
                        for (int ky = 0; ky < d.k; ++ky) {
                            int64_t ylo, yhi;
                            out_range(d.H, d.Ho, ky, d.s, d.p, ylo, yhi);
                            for (int kx = 0; kx < d.k; ++kx) {
                                int64_t xlo, xhi;
                                out_range(d.W, d.Wo, kx, d.s, d.p, xlo, xhi);
                                if (xlo > xhi) continue;
                                const int64_t cnt = xhi - xlo + 1;
                                double acc = 0.0;
                                for (int64_t od = zlo; od <= zhi; ++od) {
                                    const int64_t iz = od * d.s + kz - d.p;
                                    for (int64_t oh = ylo; oh <= yhi; ++oh) {
                                        const int64_t iy = oh * d.s + ky - d.p;
                                        const double* grow =
                                            gc + (od * d.Ho + oh) * d.Wo + xlo;
                                        const double* xrow = xc + (iz * d.H + iy) * d.W +
                                                             xlo * d.s + kx - d.p;
                                        if (d.s == 1) {
                                            for (int64_t i = 0; i < cnt; ++i)
                                                acc += grow[i] * xrow[i];
                                        } else {
                                            for (int64_t i = 0; i < cnt; ++i)
                                                acc += grow[i] * xrow[i * d.s];
                                        }
                                    }
                                }
                                gw[(((co * d.Ci + ci) * d.k + kz) * d.k + ky) * d.k +
                                   kx] += acc;
                            }
                        }
                    }
                }
            });
        }
        if (px->requires_grad) {
            Tensor& gx = px->ensure_grad();
            const double* wv = pw->value.data();
            parallel_for(d.Ci, [&](int64_t ci) {
                double* gxc = gx.data() + ci * d.D * d.H * d.W;
                for (int64_t co = 0; co < d.Co; ++co) {
                    const double* gc = g.data() + co * d.Do * d.Ho * d.Wo;
                    for (int kz = 0; kz < d.k; ++kz) {
                        int64_t zlo, zhi;
                        out_range(d.D, d.Do, kz, d.s, d.p, zlo, zhi);
                        for (int ky = 0; ky < d.k; ++ky) {
                            int64_t ylo, yhi;
                            out_range(d.H, d.Ho, ky, d.s, d.p, ylo, yhi);
                            for (int kx = 0; kx < d.k; ++kx) {
                                int64_t xlo, xhi;
                                out_range(d.W, d.Wo, kx, d.s, d.p, xlo, xhi);
                                if (xlo > xhi) continue;
                                const double ww =
                                    wv[(((co * d.Ci + ci) * d.k + kz) * d.k + ky) * d.k +
                                       kx];
                                const int64_t cnt = xhi - xlo + 1;
                                for (int64_t od = zlo; od <= zhi; ++od) {
                                    const int64_t iz = od * d.s + kz - d.p;
                                    for (int64_t oh = ylo; oh <= yhi; ++oh) {
                                        const int64_t iy = oh * d.s + ky - d.p;
                                        const double* grow =
                                            gc + (od * d.Ho + oh) * d.Wo + xlo;
                                        double* gxrow = gxc + (iz * d.H + iy) * d.W +
                                                        xlo * d.s + kx - d.p;
                                        if (d.s == 1) {
                                            for (int64_t i = 0; i < cnt; ++i)
                                                gxrow[i] += ww * grow[i];
                                        } else {
                                            for (int64_t i = 0; i < cnt; ++i)
                                                gxrow[i * d.s] += ww * grow[i];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });
        }
    };
    return make_op(std::move(out), {x, w, b}, std::move(bp));
}

NodePtr conv_transpose3d(const NodePtr& x, const NodePtr& w, const NodePtr& b,
                         int k) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    require(xv.rank() == 4, "conv_transpose3d input must be rank 4");
    require(wv.rank() == 5, "conv_transpose3d weight must be rank 5");
    require(wv.dim(0) == xv.dim(0), "conv_transpose3d channel mismatch");
    require(wv.dim(2) == k && wv.dim(3) == k && wv.dim(4) == k,
            "conv_transpose3d weight kernel must equal stride " + std::to_string(k));
    require(b->value.rank() == 1 && b->value.dim(0) == wv.dim(1),
            "conv_transpose3d bias must be [out_channels]");
    const int64_t Ci = xv.dim(0), D = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t Co = wv.dim(1);
    const int64_t Do = D * k, Ho = H * k, Wo = W * k;
    Tensor out({Co, Do, Ho, Wo});

    // Kernel == stride, so each output voxel takes exactly one kernel tap.
    parallel_for(Co, [&](int64_t co) {
        double* o = out.data() + co * Do * Ho * Wo;
        const double bias = b->value[co];
        for (int64_t i = 0; i < Do * Ho * Wo; ++i) o[i] = bias;
        for (int64_t ci = 0; ci < Ci; ++ci) {
            const double* xc = xv.data() + ci * D * H * W;
            const double* wc = wv.data() + (ci * Co + co) * k * k * k;
            for (int64_t zi = 0; zi < D; ++zi)
                for (int kz = 0; kz < k; ++kz)
                    for (int64_t yi = 0; yi < H; ++yi)
                        for (int ky = 0; ky < k; ++ky) {
                            double* orow = o + ((zi * k + kz) * Ho + yi * k + ky) * Wo;
                            const double* xrow = xc + (zi * H + yi) * W;
                            const double* wrow = wc + (kz * k + ky) * k;
                            for (int64_t xi = 0; xi < W; ++xi) {
                                const double val = xrow[xi];
                                double* op = orow + xi * k;
                                for (int kx = 0; kx < k; ++kx) op[kx] += wrow[kx] * val;
                            }
                        }
        }
    });

    auto bp = [Ci, Co, D, H, W, Do, Ho, Wo, k](Node& self) {
        const Tensor& g = self.grad;
        const NodePtr& px = self.parents[0];
        const NodePtr& pw = self.parents[1];
        const NodePtr& pb = self.parents[2];
        if (pb->requires_grad) {
            Tensor& gb = pb->ensure_grad();
            parallel_for(Co, [&](int64_t co) {
                const double* gc = g.data() + co * Do * Ho * Wo;
                double acc = 0.0;
                for (int64_t i = 0; i < Do * Ho * Wo; ++i) acc += gc[i];
                gb[co] += acc;
            });
        }
        if (pw->requires_grad) {
            Tensor& gw = pw->ensure_grad();
            const double* xd = px->value.data();
            parallel_for(Ci, [&](int64_t ci) {
                const double* xc = xd + ci * D * H * W;
                for (int64_t co = 0; co < Co; ++co) {
                    const double* gc = g.data() + co * Do * Ho * Wo;
                    double* gwc = gw.data() + (ci * Co + co) * k * k * k;
                    for (int kz = 0; kz < k; ++kz)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                double acc = 0.0;
                                for (int64_t zi = 0; zi < D; ++zi)
                                    for (int64_t yi = 0; yi < H; ++yi) {
                                        const double* xrow = xc + (zi * H + yi) * W;
                                        const double* grow =
                                            gc +
                                            ((zi * k + kz) * Ho + yi * k + ky) * Wo + kx;
                                        for (int64_t xi = 0; xi < W; ++xi)
                                            acc += xrow[xi] * grow[xi * k];
                                    }
                                gwc[(kz * k + ky) * k + kx] += acc;
                            }
                }
            });
        }
        if (px->requires_grad) {
            Tensor& gx = px->ensure_grad();
            const double* wd = pw->value.data();
            parallel_for(Ci, [&](int64_t ci) {
                double* gxc = gx.data() + ci * D * H * W;
                for (int64_t co = 0; co < Co; ++co) {
                    const double* gc = g.data() + co * Do * Ho * Wo;
                    const double* wc = wd + (ci * Co + co) * k * k * k;
                    for (int64_t zi = 0; zi < D; ++zi)
                        for (int kz = 0; kz < k; ++kz)
                            for (int64_t yi = 0; yi < H; ++yi)
                                for (int ky = 0; ky < k; ++ky) {
                                    double* gxrow = gxc + (zi * H + yi) * W;
                                    const double* grow =
                                        gc + ((zi * k + kz) * Ho + yi * k + ky) * Wo;
                                    const double* wrow = wc + (kz * k + ky) * k;
                                    for (int64_t xi = 0; xi < W; ++xi) {
                                        double acc = 0.0;
                                        const double* gp = grow + xi * k;
                                        for (int kx = 0; kx < k; ++kx)
                                            acc += wrow[kx] * gp[kx];
                                        gxrow[xi] += acc;
                                    }
                                }
                }
            });
        }
    };
    return make_op(std::move(out), {x, w, b}, std::move(bp));
}

NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                   Tensor& running_mean, Tensor& running_var,
                   bool use_batch_stats, bool update_running, double momentum,
                   double eps) {
    const Tensor& xv = x->value;
    require(xv.rank() == 4, "batch_norm input must be rank 4");
    const int64_t C = xv.dim(0);
    const int64_t N = xv.dim(1) * xv.dim(2) * xv.dim(3);
    require(gamma->value.rank() == 1 && gamma->value.dim(0) == C &&
                beta->value.same_shape(gamma->value),
            "batch_norm scale/shift must be [channels]");
    require(running_mean.rank() == 1 && running_mean.dim(0) == C &&
                running_var.same_shape(running_mean),
            "batch_norm running stats must be [channels]");
    require(N > 0 && eps > 0, "batch_norm needs nonempty input and positive eps");

    Tensor mu({C}), inv_std({C});
    if (use_batch_stats) {
        for (int64_t c = 0; c < C; ++c) {
            const double* xc = xv.data() + c * N;
            double m = 0.0;
            for (int64_t i = 0; i < N; ++i) m += xc[i];
            m /= static_cast<double>(N);
            double var = 0.0;
            for (int64_t i = 0; i < N; ++i) {
                const double dv = xc[i] - m;
                var += dv * dv;
            }
            var /= static_cast<double>(N);
            mu[c] = m;
            inv_std[c] = 1.0 / std::sqrt(var + eps);
            if (update_running) {
                running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * m;
                running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
            }
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mu[c] = running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
        }
    }

    Tensor out(xv.shape);
    parallel_for(C, [&](int64_t c) {
        const double* xc = xv.data() + c * N;
        double* oc = out.data() + c * N;
        const double m = mu[c], is = inv_std[c];
        const double gsc = gamma->value[c], bsh = beta->value[c];
        for (int64_t i = 0; i < N; ++i) oc[i] = (xc[i] - m) * is * gsc + bsh;
    });

    auto bp = [C, N, mu = std::move(mu), inv_std = std::move(inv_std),
               use_batch_stats](Node& self) {
        const Tensor& g = self.grad;
        const NodePtr& px = self.parents[0];
        const NodePtr& pg = self.parents[1];
        const NodePtr& pb = self.parents[2];
        const double* xd = px->value.data();
        const bool need_x = px->requires_grad;
        const bool need_g = pg->requires_grad;
        const bool need_b = pb->requires_grad;
        Tensor* gx = need_x ? &px->ensure_grad() : nullptr;
        Tensor* gg = need_g ? &pg->ensure_grad() : nullptr;
        Tensor* gb = need_b ? &pb->ensure_grad() : nullptr;
        parallel_for(C, [&](int64_t c) {
            const double* xc = xd + c * N;
            const double* gc = g.data() + c * N;
            const double m = mu[c], is = inv_std[c];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t i = 0; i < N; ++i) {
                sum_g += gc[i];
                sum_gx += gc[i] * (xc[i] - m) * is;
            }
            if (need_b) (*gb)[c] += sum_g;
            if (need_g) (*gg)[c] += sum_gx;
            if (need_x) {
                const double gsc = pg->value[c];
                double* gxc = gx->data() + c * N;
                if (use_batch_stats) {
                    const double mean_g = sum_g / static_cast<double>(N);
                    const double mean_gx = sum_gx / static_cast<double>(N);
                    for (int64_t i = 0; i < N; ++i) {
                        const double xh = (xc[i] - m) * is;
                        gxc[i] += gsc * is * (gc[i] - mean_g - xh * mean_gx);
                    }
                } else {
                    for (int64_t i = 0; i < N; ++i) gxc[i] += gsc * is * gc[i];
                }
            }
        });
    };
    return make_op(std::move(out), {x, gamma, beta}, std::move(bp));
}

NodePtr relu(const NodePtr& x) {
    Tensor out(x->value.shape);
    const int64_t n = x->value.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
    auto bp = [](Node& self) {
        const NodePtr& px = self.parents[0];
        if (!px->requires_grad) return;
        Tensor& gx = px->ensure_grad();
        const int64_t n = self.grad.numel();
        for (int64_t i = 0; i < n; ++i)
            if (px->value[i] > 0.0) gx[i] += self.grad[i];
    };
    return make_op(std::move(out), {x}, std::move(bp));
}

NodePtr sigmoid(const NodePtr& x) {
    Tensor out(x->value.shape);
    const int64_t n = x->value.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
    auto bp = [](Node& self) {
        const NodePtr& px = self.parents[0];
        if (!px->requires_grad) return;
        Tensor& gx = px->ensure_grad();
        const int64_t n = self.grad.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double y = self.value[i];
            gx[i] += self.grad[i] * y * (1.0 - y);
        }
    };
    return make_op(std::move(out), {x}, std::move(bp));
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    require(a->value.same_shape(b->value),
            "add shape mismatch: " + shape_str(a->value.shape) + " vs " +
                shape_str(b->value.shape));
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    auto bp = [](Node& self) {
        for (int pi = 0; pi < 2; ++pi) {
            const NodePtr& p = self.parents[static_cast<size_t>(pi)];
            if (!p->requires_grad) continue;
            Tensor& gp = p->ensure_grad();
            const int64_t n = self.grad.numel();
            for (int64_t i = 0; i < n; ++i) gp[i] += self.grad[i];
        }
    };
    return make_op(std::move(out), {a, b}, std::move(bp));
}

NodePtr scale(const NodePtr& x, double s) {
    Tensor out(x->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = s * x->value[i];
    auto bp = [s](Node& self) {
        const NodePtr& px = self.parents[0];
        if (!px->requires_grad) return;
        Tensor& gx = px->ensure_grad();
        const int64_t n = self.grad.numel();
        for (int64_t i = 0; i < n; ++i) gx[i] += s * self.grad[i];
    };
    return make_op(std::move(out), {x}, std::move(bp));
}

NodePtr mul_channel(const NodePtr& x, const NodePtr& m) {
    const Tensor& xv = x->value;
    require(xv.rank() == 4, "mul_channel input must be rank 4");
    require(m->value.rank() == 1 && m->value.dim(0) == xv.dim(0),
            "mul_channel gate must be [channels]");
    const int64_t C = xv.dim(0), N = xv.dim(1) * xv.dim(2) * xv.dim(3);
    Tensor out(xv.shape);
    for (int64_t c = 0; c < C; ++c) {
        const double mv = m->value[c];
        const double* xc = xv.data() + c * N;
        double* oc = out.data() + c * N;
        for (int64_t i = 0; i < N; ++i) oc[i] = mv * xc[i];
    }
    auto bp = [C, N](Node& self) {
        const NodePtr& px = self.parents[0];
        const NodePtr& pm = self.parents[1];
        for (int64_t c = 0; c < C; ++c) {
            const double* gc = self.grad.data() + c * N;
            if (px->requires_grad) {
                double* gxc = px->ensure_grad().data() + c * N;
                const double mv = pm->value[c];
                for (int64_t i = 0; i < N; ++i) gxc[i] += mv * gc[i];
            }
            if (pm->requires_grad) {
                const double* xc = px->value.data() + c * N;
                double acc = 0.0;
                for (int64_t i = 0; i < N; ++i) acc += gc[i] * xc[i];
                pm->ensure_grad()[c] += acc;
            }
        }
    };
    return make_op(std::move(out), {x, m}, std::move(bp));
}

NodePtr mul_spatial(const NodePtr& x, const NodePtr& m) {
    const Tensor& xv = x->value;
    const Tensor& mv = m->value;
    require(xv.rank() == 4, "mul_spatial input must be rank 4");
    require(mv.rank() == 4 && mv.dim(0) == 1 && mv.dim(1) == xv.dim(1) &&
                mv.dim(2) == xv.dim(2) && mv.dim(3) == xv.dim(3),
            "mul_spatial gate must be [1,D,H,W] matching the input");
    const int64_t C = xv.dim(0), N = xv.dim(1) * xv.dim(2) * xv.dim(3);
    Tensor out(xv.shape);
    for (int64_t c = 0; c < C; ++c) {
        const double* xc = xv.data() + c * N;
        double* oc = out.data() + c * N;
        for (int64_t i = 0; i < N; ++i) oc[i] = mv[i] * xc[i];
    }
    auto bp = [C, N](Node& self) {
        const NodePtr& px = self.parents[0];
        const NodePtr& pm = self.parents[1];
        if (px->requires_grad) {
            Tensor& gx = px->ensure_grad();
            for (int64_t c = 0; c < C; ++c) {
                const double* gc = self.grad.data() + c * N;
                double* gxc = gx.data() + c * N;
                for (int64_t i = 0; i < N; ++i) gxc[i] += pm->value[i] * gc[i];
            }
        }
        if (pm->requires_grad) {
            Tensor& gm = pm->ensure_grad();
            for (int64_t c = 0; c < C; ++c) {
                const double* gc = self.grad.data() + c * N;
                const double* xc = px->value.data() + c * N;
                for (int64_t i = 0; i < N; ++i) gm[i] += gc[i] * xc[i];
            }
        }
    };
    return make_op(std::move(out), {x, m}, std::move(bp));
}

NodePtr concat_channels(const std::vector<NodePtr>& xs) {
    require(!xs.empty(), "concat_channels needs at least one input");
    const Tensor& first = xs[0]->value;
    require(first.rank() == 4, "concat_channels inputs must be rank 4");
    int64_t C = 0;
    for (const auto& xp : xs) {
        const Tensor& t = xp->value;
        require(t.rank() == 4 && t.dim(1) == first.dim(1) && t.dim(2) == first.dim(2) &&
                    t.dim(3) == first.dim(3),
                "concat_channels spatial dims disagree");
        C += t.dim(0);
    }
    const int64_t N = first.dim(1) * first.dim(2) * first.dim(3);
    Tensor out({C, first.dim(1), first.dim(2), first.dim(3)});
    std::vector<int64_t> offsets;
    offsets.reserve(xs.size());
    int64_t off = 0;
    for (const auto& xp : xs) {
        offsets.push_back(off);
        std::memcpy(out.data() + off * N, xp->value.data(),
                    static_cast<size_t>(xp->value.numel()) * sizeof(double));
        off += xp->value.dim(0);
    }
    auto bp = [offsets, N](Node& self) {
        for (size_t pi = 0; pi < self.parents.size(); ++pi) {
            const NodePtr& p = self.parents[pi];
            if (!p->requires_grad) continue;
            Tensor& gp = p->ensure_grad();
            const double* gc = self.grad.data() + offsets[pi] * N;
            const int64_t n = gp.numel();
            for (int64_t i = 0; i < n; ++i) gp[i] += gc[i];
        }
    };
    return make_op(std::move(out), xs, std::move(bp));
}

NodePtr global_avg_pool(const NodePtr& x) {
    const Tensor& xv = x->value;
    require(xv.rank() == 4, "global_avg_pool input must be rank 4");
    const int64_t C = xv.dim(0), N = xv.dim(1) * xv.dim(2) * xv.dim(3);
    require(N > 0, "global_avg_pool needs a nonempty spatial extent");
    Tensor out({C});
    for (int64_t c = 0; c < C; ++c)
        out[c] = invariant_sum(xv.data() + c * N, N, 1) / static_cast<double>(N);
    auto bp = [C, N](Node& self) {
        const NodePtr& px = self.parents[0];
        if (!px->requires_grad) return;
        Tensor& gx = px->ensure_grad();
        for (int64_t c = 0; c < C; ++c) {
            const double gv = self.grad[c] / static_cast<double>(N);
            double* gxc = gx.data() + c * N;
            for (int64_t i = 0; i < N; ++i) gxc[i] += gv;
        }
    };
    return make_op(std::move(out), {x}, std::move(bp));
}

NodePtr channel_max(const NodePtr& x) {
    const Tensor& xv = x->value;
    require(xv.rank() == 4 && xv.dim(0) >= 1, "channel_max input must be rank 4");
    const int64_t C = xv.dim(0), N = xv.dim(1) * xv.dim(2) * xv.dim(3);
    Tensor out({1, xv.dim(1), xv.dim(2), xv.dim(3)});
    std::vector<int32_t> amax(static_cast<size_t>(N), 0);
    for (int64_t i = 0; i < N; ++i) {
        double best = xv[i];
        int32_t bc = 0;
        for (int64_t c = 1; c < C; ++c) {
            const double v = xv[c * N + i];
            if (v > best) {
                best = v;
                bc = static_cast<int32_t>(c);
            }
        }
        out[i] = best;
        amax[static_cast<size_t>(i)] = bc;
    }
    auto bp = [N, amax = std::move(amax)](Node& self) {
        const NodePtr& px = self.parents[0];
        if (!px->requires_grad) return;
        Tensor& gx = px->ensure_grad();
        for (int64_t i = 0; i < N; ++i)
            gx[static_cast<int64_t>(amax[static_cast<size_t>(i)]) * N + i] +=
                self.grad[i];
    };
    return make_op(std::move(out), {x}, std::move(bp));
}

NodePtr channel_mean(const NodePtr& x) {
    const Tensor& xv = x->value;
    require(xv.rank() == 4 && xv.dim(0) >= 1, "channel_mean input must be rank 4");
    const int64_t C = xv.dim(0), N = xv.dim(1) * xv.dim(2) * xv.dim(3);
    Tensor out({1, xv.dim(1), xv.dim(2), xv.dim(3)});
    for (int64_t i = 0; i < N; ++i)
        out[i] = invariant_sum(xv.data() + i, C, N) / static_cast<double>(C);
    auto bp = [C, N](Node& self) {
        const NodePtr& px = self.parents[0];
        if (!px->requires_grad) return;
        Tensor& gx = px->ensure_grad();
        for (int64_t c = 0; c < C; ++c) {
            double* gxc = gx.data() + c * N;
            for (int64_t i = 0; i < N; ++i)
                gxc[i] += self.grad[i] / static_cast<double>(C);
        }
    };
    return make_op(std::move(out), {x}, std::move(bp));
}

NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    require(xv.rank() == 1, "linear input must be rank 1");
    require(wv.rank() == 2 && wv.dim(1) == xv.dim(0),
            "linear weight must be [out,in] with in = " + std::to_string(xv.dim(0)));
    require(b->value.rank() == 1 && b->value.dim(0) == wv.dim(0),
            "linear bias must be [out]");
    const int64_t In = xv.dim(0), Out = wv.dim(0);
    Tensor out({Out});
    for (int64_t o = 0; o < Out; ++o) {
        const double* wr = wv.data() + o * In;
        double acc = b->value[o];
        for (int64_t i = 0; i < In; ++i) acc += wr[i] * xv[i];
        out[o] = acc;
    }
    auto bp = [In, Out](Node& self) {
        const NodePtr& px = self.parents[0];
        const NodePtr& pw = self.parents[1];
        const NodePtr& pb = self.parents[2];
        if (pb->requires_grad) {
            Tensor& gb = pb->ensure_grad();
            for (int64_t o = 0; o < Out; ++o) gb[o] += self.grad[o];
        }
        if (pw->requires_grad) {
            Tensor& gw = pw->ensure_grad();
            for (int64_t o = 0; o < Out; ++o) {
                double* gwr = gw.data() + o * In;
                const double gv = self.grad[o];
                for (int64_t i = 0; i < In; ++i) gwr[i] += gv * px->value[i];
            }
        }
        if (px->requires_grad) {
            Tensor& gx = px->ensure_grad();
            for (int64_t o = 0; o < Out; ++o) {
                const double* wr = pw->value.data() + o * In;
                const double gv = self.grad[o];
                for (int64_t i = 0; i < In; ++i) gx[i] += gv * wr[i];
            }
        }
    };
    return make_op(std::move(out), {x, w, b}, std::move(bp));
}

NodePtr softmax_channels(const NodePtr& x) {
    const Tensor& xv = x->value;
    require(xv.rank() == 4 && xv.dim(0) >= 1, "softmax_channels input must be rank 4");
    const int64_t C = xv.dim(0), N = xv.dim(1) * xv.dim(2) * xv.dim(3);
    Tensor out(xv.shape);
    parallel_for(N, [&](int64_t i) {
        double mx = xv[i];
        for (int64_t c = 1; c < C; ++c) mx = std::max(mx, xv[c * N + i]);
        double denom = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            const double e = std::exp(xv[c * N + i] - mx);
            out[c * N + i] = e;
            denom += e;
        }
        for (int64_t c = 0; c < C; ++c) out[c * N + i] /= denom;
    });
    auto bp = [C, N](Node& self) {
        const NodePtr& px = self.parents[0];
        if (!px->requires_grad) return;
        Tensor& gx = px->ensure_grad();
        const Tensor& p = self.value;
        const Tensor& g = self.grad;
        parallel_for(N, [&](int64_t i) {
            double dot = 0.0;
            for (int64_t c = 0; c < C; ++c) dot += g[c * N + i] * p[c * N + i];
            for (int64_t c = 0; c < C; ++c)
                gx[c * N + i] += p[c * N + i] * (g[c * N + i] - dot);
        });
    };
    return make_op(std::move(out), {x}, std::move(bp));
}

NodePtr wce_loss(const NodePtr& probs, const Tensor& labels,
                 const Tensor& class_weights) {
    constexpr double kClamp = 1e-12;
    const Tensor& pv = probs->value;
    require(pv.rank() == 4, "wce_loss probabilities must be rank 4");
    const int64_t C = pv.dim(0), N = pv.dim(1) * pv.dim(2) * pv.dim(3);
    require(labels.rank() == 3 && labels.dim(0) == pv.dim(1) &&
                labels.dim(1) == pv.dim(2) && labels.dim(2) == pv.dim(3),
            "wce_loss labels must match the probability map's spatial dims");
    require(class_weights.rank() == 1 && class_weights.dim(0) == C,
            "wce_loss needs one weight per class");

    std::vector<int32_t> y(static_cast<size_t>(N));
    for (int64_t i = 0; i < N; ++i) {
        const auto c = static_cast<int64_t>(std::llround(labels[i]));
        require(c >= 0 && c < C && labels[i] == static_cast<double>(c),
                "wce_loss label out of range at voxel " + std::to_string(i));
        y[static_cast<size_t>(i)] = static_cast<int32_t>(c);
    }

    double acc = 0.0;
    for (int64_t i = 0; i < N; ++i) {
        const int64_t c = y[static_cast<size_t>(i)];
        const double p = std::max(pv[c * N + i], kClamp);
        acc -= class_weights[c] * std::log(p);
    }
    Tensor out({1});
    out[0] = acc / static_cast<double>(N);

    Tensor w = class_weights;
    auto bp = [N, y = std::move(y), w = std::move(w)](Node& self) {
        const NodePtr& pp = self.parents[0];
        if (!pp->requires_grad) return;
        Tensor& gp = pp->ensure_grad();
        const double gv = self.grad[0];
        for (int64_t i = 0; i < N; ++i) {
            const int64_t c = y[static_cast<size_t>(i)];
            const double p = pp->value[c * N + i];
            if (p >= kClamp)
                gp[c * N + i] -= gv * w[c] / (static_cast<double>(N) * p);
        }
    };
    return make_op(std::move(out), {probs}, std::move(bp));
}

NodePtr weighted_sum(const NodePtr& x, const Tensor& coeffs) {
    require(x->value.same_shape(coeffs),
            "weighted_sum coefficient shape " + shape_str(coeffs.shape) +
                " must match input " + shape_str(x->value.shape));
    const int64_t n = x->value.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += coeffs[i] * x->value[i];
    Tensor out({1});
    out[0] = acc;
    Tensor c = coeffs;
    auto bp = [c = std::move(c)](Node& self) {
        const NodePtr& px = self.parents[0];
        if (!px->requires_grad) return;
        Tensor& gx = px->ensure_grad();
        const double gv = self.grad[0];
        const int64_t n = gx.numel();
        for (int64_t i = 0; i < n; ++i) gx[i] += gv * c[i];
    };
    return make_op(std::move(out), {x}, std::move(bp));
}

}  // namespace hdan
