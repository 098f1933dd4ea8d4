#include "bfe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bfe::nn {

namespace detail {

struct TensorImpl {
    std::vector<int64_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily, on first accumulation
    bool requires_grad = false;

    // tape edge: parents kept alive until backward() releases them
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backprop;

    int64_t numel() const { return static_cast<int64_t>(values.size()); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

}  // namespace detail

using detail::TensorImpl;

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must be non-empty");
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
        n *= e;
    }
    return n;
}

std::shared_ptr<TensorImpl> make_impl(std::vector<int64_t> shape, double fill) {
    auto impl = std::make_shared<TensorImpl>();
    int64_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->values.assign(static_cast<size_t>(n), fill);
    return impl;
}

void require_4d(const Tensor& x, const char* op) {
    if (!x.defined() || x.shape().size() != 4) {
        throw std::invalid_argument(std::string(op) + ": expected a 4-D (B,C,H,W) tensor");
    }
}

std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

OpCounters g_counters;

// Stable helpers shared by sigmoid and the focal loss.
inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {  // log(1 + exp(x)) without overflow
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

OpCounters& op_counters() { return g_counters; }
void reset_op_counters() { g_counters = OpCounters{}; }

// ---------------------------------------------------------------------------
// Tensor basics

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    return Tensor(make_impl(std::move(shape), 0.0));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    return Tensor(make_impl(std::move(shape), value));
}

Tensor Tensor::from_vector(std::vector<int64_t> shape, std::vector<double> values) {
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(values.size())) {
        throw std::invalid_argument("from_vector: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    return Tensor(std::move(impl));
}

Tensor Tensor::randn(std::vector<int64_t> shape, std::mt19937_64& rng, double stddev) {
    Tensor t = zeros(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    double* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = dist(rng);
    return t;
}

const std::vector<int64_t>& Tensor::shape() const {
    if (!impl_) throw std::logic_error("shape() on an undefined tensor");
    return impl_->shape;
}

int64_t Tensor::dim(int i) const { return shape().at(static_cast<size_t>(i)); }

int64_t Tensor::numel() const {
    if (!impl_) return 0;
    return impl_->numel();
}

double* Tensor::data() {
    if (!impl_) throw std::logic_error("data() on an undefined tensor");
    return impl_->values.data();
}

const double* Tensor::data() const {
    if (!impl_) throw std::logic_error("data() on an undefined tensor");
    return impl_->values.data();
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
    return impl_->values[0];
}

void Tensor::set_requires_grad(bool v) {
    if (!impl_) throw std::logic_error("set_requires_grad on an undefined tensor");
    impl_->requires_grad = v;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->values.size(); }

double* Tensor::grad_data() {
    if (!has_grad()) throw std::logic_error("grad_data(): no gradient populated");
    return impl_->grad.data();
}

const double* Tensor::grad_data() const {
    if (!has_grad()) throw std::logic_error("grad_data(): no gradient populated");
    return impl_->grad.data();
}

std::vector<double> Tensor::grad_to_vector() const {
    if (!has_grad()) throw std::logic_error("grad_to_vector(): no gradient populated");
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_) throw std::logic_error("zero_grad on an undefined tensor");
    impl_->ensure_grad();
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::backward() {
    if (numel() != 1) throw std::invalid_argument("backward() requires a 1-element tensor");
    TensorImpl* root = impl_.get();
    if (!root->backprop && root->parents.empty()) {
        throw std::logic_error("backward(): no tape recorded (already consumed, or nothing requires grad)");
    }

    // Topological order over the recorded tape. The order holds owning
    // pointers: releasing a node's edges must not free nodes that are still
    // waiting for their backprop sweep.
    std::vector<std::shared_ptr<TensorImpl>> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack;
    stack.emplace_back(impl_, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            std::shared_ptr<TensorImpl> parent = node->parents[next++];
            if (seen.insert(parent.get()).second) stack.emplace_back(std::move(parent), 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = it->get();
        if (node->backprop) {
            node->backprop(*node);
            node->backprop = nullptr;  // one backward per tape
        }
        node->parents.clear();
    }
}

// Builds the output node of an op: value storage plus the tape edge. The
// backprop closure receives the output node (for its grad) and must
// accumulate into the parents' grad buffers; it runs only when some input
// requires a gradient.
Tensor make_op_result(std::vector<int64_t> shape, std::vector<Tensor> inputs,
                      std::function<void(TensorImpl&)> backprop) {
    auto impl = make_impl(std::move(shape), 0.0);
    bool needs_grad = false;
    for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
    if (needs_grad) {
        impl->requires_grad = true;
        impl->parents.reserve(inputs.size());
        for (const Tensor& t : inputs) impl->parents.push_back(t.impl_);
        impl->backprop = std::move(backprop);
    }
    return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------
// ConvSpec

ConvSpec ConvSpec::create(int64_t in_channels, int64_t out_channels, int64_t kernel_size,
                          int64_t stride, int64_t dilation, int64_t padding,
                          std::mt19937_64& rng) {
    ConvSpec spec;
    spec.in_channels = in_channels;
    spec.out_channels = out_channels;
    spec.kernel_size = kernel_size;
    spec.stride = stride;
    spec.dilation = dilation;
    spec.padding = padding;
    double fan_in = static_cast<double>(in_channels * kernel_size * kernel_size);
    spec.weight = Tensor::randn({out_channels, in_channels, kernel_size, kernel_size}, rng,
                                std::sqrt(2.0 / fan_in));
    spec.bias = Tensor::zeros({out_channels});
    spec.weight.set_requires_grad(true);
    spec.bias.set_requires_grad(true);
    spec.validate();
    return spec;
}

int64_t ConvSpec::out_extent(int64_t in_extent) const {
    return (in_extent + 2 * padding - dilation * (kernel_size - 1) - 1) / stride + 1;
}

void ConvSpec::validate() const {
    if (in_channels <= 0 || out_channels <= 0 || kernel_size <= 0 || stride <= 0 || dilation <= 0 ||
        padding < 0) {
        throw std::invalid_argument("ConvSpec: extents/stride/dilation must be positive, padding >= 0");
    }
    if (!weight.defined() || weight.shape() != std::vector<int64_t>{out_channels, in_channels,
                                                                    kernel_size, kernel_size}) {
        throw std::invalid_argument("ConvSpec: weight shape does not match (out,in,k,k)");
    }
    if (!bias.defined() || bias.shape() != std::vector<int64_t>{out_channels}) {
        throw std::invalid_argument("ConvSpec: bias shape does not match (out)");
    }
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

// Valid output range [lo, hi) along one axis for a given kernel tap, so the
// inner loops run branch-free: in = out*stride + off must land in [0, extent).
inline void tap_range(int64_t off, int64_t stride, int64_t in_extent, int64_t out_extent,
                      int64_t& lo, int64_t& hi) {
    lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    int64_t last = in_extent - 1 - off;           // largest in-coordinate numerator
    hi = last < 0 ? 0 : std::min(out_extent, last / stride + 1);
    if (lo > hi) lo = hi;
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvSpec& spec) {
    ++g_counters.conv2d;
    require_4d(x, "conv2d");
    spec.validate();
    const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (Ci != spec.in_channels) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(Ci) + " channels, spec expects " +
                                    std::to_string(spec.in_channels));
    }
    const int64_t Ho = spec.out_extent(H), Wo = spec.out_extent(W);
    if (Ho < 1 || Wo < 1) {
        throw std::invalid_argument("conv2d: non-positive output extent for input " + shape_str(x.shape()));
    }
    const int64_t Co = spec.out_channels, K = spec.kernel_size;
    const int64_t s = spec.stride, d = spec.dilation, p = spec.padding;

    Tensor out = make_op_result(
        {B, Co, Ho, Wo}, {x, spec.weight, spec.bias},
        [x, w = spec.weight, b = spec.bias, B, Ci, H, W, Ho, Wo, Co, K, s, d, p](TensorImpl& self) {
            const double* gout = self.grad.data();
            const double* xd = x.data();
            const double* wd = w.data();

            if (b.requires_grad()) {
                b.impl()->ensure_grad();
                double* gb = b.impl()->grad.data();
                for (int64_t co = 0; co < Co; ++co) {
                    double acc = 0.0;
                    for (int64_t bi = 0; bi < B; ++bi) {
                        const double* g = gout + ((bi * Co + co) * Ho) * Wo;
                        for (int64_t i = 0; i < Ho * Wo; ++i) acc += g[i];
                    }
                    gb[co] += acc;
                }
            }

            if (w.requires_grad()) {
                w.impl()->ensure_grad();
                double* gw = w.impl()->grad.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (int64_t co = 0; co < Co; ++co) {
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        for (int64_t kh = 0; kh < K; ++kh) {
                            const int64_t hoff = kh * d - p;
                            int64_t oh_lo, oh_hi;
                            tap_range(hoff, s, H, Ho, oh_lo, oh_hi);
                            for (int64_t kw = 0; kw < K; ++kw) {
                                const int64_t woff = kw * d - p;
                                int64_t ow_lo, ow_hi;
                                tap_range(woff, s, W, Wo, ow_lo, ow_hi);
                                double acc = 0.0;
                                for (int64_t bi = 0; bi < B; ++bi) {
                                    const double* gplane = gout + ((bi * Co + co) * Ho) * Wo;
                                    const double* xplane = xd + ((bi * Ci + ci) * H) * W;
                                    for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                                        const double* grow = gplane + oh * Wo;
                                        const double* xrow = xplane + (oh * s + hoff) * W + woff;
                                        for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                            acc += grow[ow] * xrow[ow * s];
                                        }
                                    }
                                }
                                gw[((co * Ci + ci) * K + kh) * K + kw] += acc;
                            }
                        }
                    }
                }
            }

            if (x.requires_grad()) {
                x.impl()->ensure_grad();
                double* gx = x.impl()->grad.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
                for (int64_t bi = 0; bi < B; ++bi) {
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        double* gxplane = gx + ((bi * Ci + ci) * H) * W;
                        for (int64_t co = 0; co < Co; ++co) {
                            const double* gplane = gout + ((bi * Co + co) * Ho) * Wo;
                            for (int64_t kh = 0; kh < K; ++kh) {
                                const int64_t hoff = kh * d - p;
                                int64_t oh_lo, oh_hi;
                                tap_range(hoff, s, H, Ho, oh_lo, oh_hi);
                                for (int64_t kw = 0; kw < K; ++kw) {
                                    const int64_t woff = kw * d - p;
                                    int64_t ow_lo, ow_hi;
                                    tap_range(woff, s, W, Wo, ow_lo, ow_hi);
                                    const double wv = wd[((co * Ci + ci) * K + kh) * K + kw];
                                    if (wv == 0.0) continue;
                                    for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                                        const double* grow = gplane + oh * Wo;
                                        double* gxrow = gxplane + (oh * s + hoff) * W + woff;
                                        for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                            gxrow[ow * s] += wv * grow[ow];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });

    // forward
    double* od = out.data();
    const double* xd = x.data();
    const double* wd = spec.weight.data();
    const double* bd = spec.bias.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
    for (int64_t bi = 0; bi < B; ++bi) {
        for (int64_t co = 0; co < Co; ++co) {
            double* oplane = od + ((bi * Co + co) * Ho) * Wo;
            std::fill(oplane, oplane + Ho * Wo, bd[co]);
            for (int64_t ci = 0; ci < Ci; ++ci) {
                const double* xplane = xd + ((bi * Ci + ci) * H) * W;
                for (int64_t kh = 0; kh < K; ++kh) {
                    const int64_t hoff = kh * d - p;
                    int64_t oh_lo, oh_hi;
                    tap_range(hoff, s, H, Ho, oh_lo, oh_hi);
                    for (int64_t kw = 0; kw < K; ++kw) {
                        const int64_t woff = kw * d - p;
                        int64_t ow_lo, ow_hi;
                        tap_range(woff, s, W, Wo, ow_lo, ow_hi);
                        const double wv = wd[((co * Ci + ci) * K + kh) * K + kw];
                        if (wv == 0.0) continue;
                        for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                            double* orow = oplane + oh * Wo;
                            const double* xrow = xplane + (oh * s + hoff) * W + woff;
                            for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                orow[ow] += wv * xrow[ow * s];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// elementwise ops

Tensor relu(const Tensor& x) {
    ++g_counters.relu;
    if (!x.defined()) throw std::invalid_argument("relu: undefined tensor");
    Tensor out = make_op_result(x.shape(), {x}, [x](TensorImpl& self) {
        if (!x.requires_grad()) return;
        x.impl()->ensure_grad();
        double* gx = x.impl()->grad.data();
        const double* xd = x.data();
        const double* g = self.grad.data();
        const int64_t n = x.numel();
        for (int64_t i = 0; i < n; ++i) {
            if (xd[i] > 0.0) gx[i] += g[i];  // subgradient at 0 is 0
        }
    });
    const double* xd = x.data();
    double* od = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) od[i] = xd[i] > 0.0 ? xd[i] : 0.0;
    return out;
}

Tensor sigmoid(const Tensor& x) {
    ++g_counters.sigmoid;
    if (!x.defined()) throw std::invalid_argument("sigmoid: undefined tensor");
    Tensor out = make_op_result(x.shape(), {x}, [x](TensorImpl& self) {
        if (!x.requires_grad()) return;
        x.impl()->ensure_grad();
        double* gx = x.impl()->grad.data();
        const double* s = self.values.data();
        const double* g = self.grad.data();
        const int64_t n = x.numel();
        for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * s[i] * (1.0 - s[i]);
    });
    const double* xd = x.data();
    double* od = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) od[i] = stable_sigmoid(xd[i]);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    ++g_counters.add;
    if (!a.defined() || !b.defined()) throw std::invalid_argument("add: undefined tensor");
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    Tensor out = make_op_result(a.shape(), {a, b}, [a, b](TensorImpl& self) {
        const double* g = self.grad.data();
        const int64_t n = self.numel();
        for (const Tensor& t : {a, b}) {
            if (!t.requires_grad()) continue;
            t.impl()->ensure_grad();
            double* gt = t.impl()->grad.data();
            for (int64_t i = 0; i < n; ++i) gt[i] += g[i];
        }
    });
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    for (int64_t i = 0; i < a.numel(); ++i) od[i] = ad[i] + bd[i];
    return out;
}

Tensor scale(const Tensor& x, double factor) {
    ++g_counters.scale;
    if (!x.defined()) throw std::invalid_argument("scale: undefined tensor");
    Tensor out = make_op_result(x.shape(), {x}, [x, factor](TensorImpl& self) {
        if (!x.requires_grad()) return;
        x.impl()->ensure_grad();
        double* gx = x.impl()->grad.data();
        const double* g = self.grad.data();
        for (int64_t i = 0; i < self.numel(); ++i) gx[i] += factor * g[i];
    });
    const double* xd = x.data();
    double* od = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) od[i] = factor * xd[i];
    return out;
}

Tensor mean_all(const Tensor& x) {
    ++g_counters.mean_all;
    if (!x.defined()) throw std::invalid_argument("mean_all: undefined tensor");
    const int64_t n = x.numel();
    const double inv = 1.0 / static_cast<double>(n);
    Tensor out = make_op_result({1}, {x}, [x, n, inv](TensorImpl& self) {
        if (!x.requires_grad()) return;
        x.impl()->ensure_grad();
        double* gx = x.impl()->grad.data();
        const double gv = self.grad[0] * inv;
        for (int64_t i = 0; i < n; ++i) gx[i] += gv;
    });
    const double* xd = x.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += xd[i];
    out.data()[0] = acc * inv;
    return out;
}

// ---------------------------------------------------------------------------
// spatial ops

namespace {

// Source taps for align_corners=false bilinear interpolation along one axis.
struct AxisTap {
    int64_t i0, i1;
    double w1;  // weight of i1; i0 gets (1 - w1)
};

std::vector<AxisTap> bilinear_taps(int64_t in_extent, int64_t out_extent) {
    std::vector<AxisTap> taps(static_cast<size_t>(out_extent));
    const double scale = static_cast<double>(in_extent) / static_cast<double>(out_extent);
    for (int64_t o = 0; o < out_extent; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int64_t i0 = static_cast<int64_t>(std::floor(src));
        if (i0 > in_extent - 1) i0 = in_extent - 1;
        int64_t i1 = std::min(i0 + 1, in_extent - 1);
        taps[static_cast<size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& x, int64_t factor) {
    ++g_counters.bilinear_upsample;
    require_4d(x, "bilinear_upsample");
    if (factor < 1) throw std::invalid_argument("bilinear_upsample: factor must be >= 1");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = H * factor, Wo = W * factor;
    auto htaps = bilinear_taps(H, Ho);
    auto wtaps = bilinear_taps(W, Wo);

    Tensor out = make_op_result(
        {B, C, Ho, Wo}, {x}, [x, B, C, H, W, Ho, Wo, htaps, wtaps](TensorImpl& self) {
            if (!x.requires_grad()) return;
            x.impl()->ensure_grad();
            double* gx = x.impl()->grad.data();
            const double* g = self.grad.data();
            for (int64_t bc = 0; bc < B * C; ++bc) {
                double* gxp = gx + bc * H * W;
                const double* gp = g + bc * Ho * Wo;
                for (int64_t oh = 0; oh < Ho; ++oh) {
                    const AxisTap& th = htaps[static_cast<size_t>(oh)];
                    for (int64_t ow = 0; ow < Wo; ++ow) {
                        const AxisTap& tw = wtaps[static_cast<size_t>(ow)];
                        const double gv = gp[oh * Wo + ow];
                        gxp[th.i0 * W + tw.i0] += (1.0 - th.w1) * (1.0 - tw.w1) * gv;
                        gxp[th.i0 * W + tw.i1] += (1.0 - th.w1) * tw.w1 * gv;
                        gxp[th.i1 * W + tw.i0] += th.w1 * (1.0 - tw.w1) * gv;
                        gxp[th.i1 * W + tw.i1] += th.w1 * tw.w1 * gv;
                    }
                }
            }
        });

    const double* xd = x.data();
    double* od = out.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* xp = xd + bc * H * W;
        double* op = od + bc * Ho * Wo;
        for (int64_t oh = 0; oh < Ho; ++oh) {
            const AxisTap& th = htaps[static_cast<size_t>(oh)];
            for (int64_t ow = 0; ow < Wo; ++ow) {
                const AxisTap& tw = wtaps[static_cast<size_t>(ow)];
                const double v0 = (1.0 - tw.w1) * xp[th.i0 * W + tw.i0] + tw.w1 * xp[th.i0 * W + tw.i1];
                const double v1 = (1.0 - tw.w1) * xp[th.i1 * W + tw.i0] + tw.w1 * xp[th.i1 * W + tw.i1];
                op[oh * Wo + ow] = (1.0 - th.w1) * v0 + th.w1 * v1;
            }
        }
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    ++g_counters.global_avg_pool;
    require_4d(x, "global_avg_pool");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const double inv = 1.0 / static_cast<double>(H * W);

    Tensor out = make_op_result({B, C, 1, 1}, {x}, [x, B, C, H, W, inv](TensorImpl& self) {
        if (!x.requires_grad()) return;
        x.impl()->ensure_grad();
        double* gx = x.impl()->grad.data();
        const double* g = self.grad.data();
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double gv = g[bc] * inv;
            double* gxp = gx + bc * H * W;
            for (int64_t i = 0; i < H * W; ++i) gxp[i] += gv;
        }
    });

    const double* xd = x.data();
    double* od = out.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* xp = xd + bc * H * W;
        double acc = 0.0;
        for (int64_t i = 0; i < H * W; ++i) acc += xp[i];
        od[bc] = acc * inv;
    }
    return out;
}

Tensor broadcast_spatial(const Tensor& x, int64_t out_h, int64_t out_w) {
    ++g_counters.broadcast_spatial;
    require_4d(x, "broadcast_spatial");
    if (x.dim(2) != 1 || x.dim(3) != 1) {
        throw std::invalid_argument("broadcast_spatial: input must be (B,C,1,1)");
    }
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("broadcast_spatial: extents must be positive");
    const int64_t B = x.dim(0), C = x.dim(1);

    Tensor out = make_op_result({B, C, out_h, out_w}, {x}, [x, B, C, out_h, out_w](TensorImpl& self) {
        if (!x.requires_grad()) return;
        x.impl()->ensure_grad();
        double* gx = x.impl()->grad.data();
        const double* g = self.grad.data();
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* gp = g + bc * out_h * out_w;
            double acc = 0.0;
            for (int64_t i = 0; i < out_h * out_w; ++i) acc += gp[i];
            gx[bc] += acc;
        }
    });

    const double* xd = x.data();
    double* od = out.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        std::fill(od + bc * out_h * out_w, od + (bc + 1) * out_h * out_w, xd[bc]);
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
    ++g_counters.concat_channels;
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
    for (const Tensor& t : xs) require_4d(t, "concat_channels");
    const int64_t B = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
    int64_t Co = 0;
    for (const Tensor& t : xs) {
        if (t.dim(0) != B || t.dim(2) != H || t.dim(3) != W) {
            throw std::invalid_argument("concat_channels: spatial/batch mismatch " + shape_str(t.shape()) +
                                        " vs " + shape_str(xs[0].shape()));
        }
        Co += t.dim(1);
    }

    Tensor out = make_op_result({B, Co, H, W}, xs, [xs, B, Co, H, W](TensorImpl& self) {
        const double* g = self.grad.data();
        const int64_t plane = H * W;
        int64_t c_base = 0;
        for (const Tensor& t : xs) {
            const int64_t Ci = t.dim(1);
            if (t.requires_grad()) {
                t.impl()->ensure_grad();
                double* gt = t.impl()->grad.data();
                for (int64_t bi = 0; bi < B; ++bi) {
                    const double* src = g + ((bi * Co + c_base) * plane);
                    double* dst = gt + (bi * Ci * plane);
                    for (int64_t i = 0; i < Ci * plane; ++i) dst[i] += src[i];
                }
            }
            c_base += Ci;
        }
    });

    double* od = out.data();
    const int64_t plane = H * W;
    int64_t c_base = 0;
    for (const Tensor& t : xs) {
        const int64_t Ci = t.dim(1);
        const double* src = t.data();
        for (int64_t bi = 0; bi < B; ++bi) {
            std::copy(src + bi * Ci * plane, src + (bi + 1) * Ci * plane,
                      od + (bi * Co + c_base) * plane);
        }
        c_base += Ci;
    }
    return out;
}

Tensor crop2d(const Tensor& x, int64_t margin) {
    ++g_counters.crop2d;
    require_4d(x, "crop2d");
    if (margin < 0) throw std::invalid_argument("crop2d: margin must be >= 0");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Ho = H - 2 * margin, Wo = W - 2 * margin;
    if (Ho < 1 || Wo < 1) {
        throw std::invalid_argument("crop2d: margin " + std::to_string(margin) + " too large for " +
                                    shape_str(x.shape()));
    }

    Tensor out = make_op_result({B, C, Ho, Wo}, {x}, [x, B, C, H, W, Ho, Wo, margin](TensorImpl& self) {
        if (!x.requires_grad()) return;
        x.impl()->ensure_grad();
        double* gx = x.impl()->grad.data();
        const double* g = self.grad.data();
        for (int64_t bc = 0; bc < B * C; ++bc) {
            double* gxp = gx + bc * H * W;
            const double* gp = g + bc * Ho * Wo;
            for (int64_t oh = 0; oh < Ho; ++oh) {
                double* gxrow = gxp + (oh + margin) * W + margin;
                const double* grow = gp + oh * Wo;
                for (int64_t ow = 0; ow < Wo; ++ow) gxrow[ow] += grow[ow];
            }
        }
    });

    const double* xd = x.data();
    double* od = out.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* xp = xd + bc * H * W;
        double* op = od + bc * Ho * Wo;
        for (int64_t oh = 0; oh < Ho; ++oh) {
            const double* xrow = xp + (oh + margin) * W + margin;
            std::copy(xrow, xrow + Wo, op + oh * Wo);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// focal loss

Tensor focal_loss(const Tensor& logits, const Tensor& target, double alpha, double gamma) {
    ++g_counters.focal_loss;
    if (!logits.defined() || !target.defined()) throw std::invalid_argument("focal_loss: undefined tensor");
    if (logits.shape() != target.shape()) {
        throw std::invalid_argument("focal_loss: logits " + shape_str(logits.shape()) +
                                    " vs target " + shape_str(target.shape()));
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("focal_loss: alpha must be in (0,1]");
    if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
    const int64_t n = logits.numel();
    const double* td = target.data();
    for (int64_t i = 0; i < n; ++i) {
        if (td[i] != 0.0 && td[i] != 1.0) {
            throw std::invalid_argument("focal_loss: target values must be exactly 0 or 1");
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);

    Tensor out = make_op_result({1}, {logits}, [logits, target, alpha, gamma, n, inv_n](TensorImpl& self) {
        if (!logits.requires_grad()) return;
        logits.impl()->ensure_grad();
        double* gx = logits.impl()->grad.data();
        const double* xd = logits.data();
        const double* td = target.data();
        const double gup = self.grad[0] * inv_n;
        for (int64_t i = 0; i < n; ++i) {
            const bool pos = td[i] == 1.0;
            const double sign = pos ? 1.0 : -1.0;
            const double at = pos ? alpha : 1.0 - alpha;
            const double z = sign * xd[i];
            const double pt = stable_sigmoid(z);
            const double one_minus_pt = stable_sigmoid(-z);
            const double m = softplus(-z);  // -log(pt), >= 0
            // d/dx of -at*(1-pt)^g*log(pt); every factor stays bounded.
            const double g1 = std::pow(one_minus_pt, gamma + 1.0);
            const double g2 = gamma > 0.0 ? gamma * std::pow(one_minus_pt, gamma) * pt * m : 0.0;
            gx[i] += gup * (-at * sign * (g1 + g2));
        }
    });

    const double* xd = logits.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const bool pos = td[i] == 1.0;
        const double at = pos ? alpha : 1.0 - alpha;
        const double z = pos ? xd[i] : -xd[i];
        const double one_minus_pt = stable_sigmoid(-z);
        const double m = softplus(-z);
        acc += at * std::pow(one_minus_pt, gamma) * m;
    }
    out.data()[0] = acc * inv_n;
    return out;
}

// ---------------------------------------------------------------------------
// optimizer and gradient checking

void sgd_step(const std::vector<Tensor>& params, double lr) {
    for (const Tensor& p : params) {
        if (!p.defined()) throw std::logic_error("sgd_step: undefined parameter");
        if (!p.has_grad()) throw std::logic_error("sgd_step: parameter has no populated gradient");
    }
    for (const Tensor& p : params) {
        TensorImpl* impl = p.impl();
        double* v = impl->values.data();
        double* g = impl->grad.data();
        const int64_t n = impl->numel();
        for (int64_t i = 0; i < n; ++i) {
            v[i] -= lr * g[i];
            g[i] = 0.0;
        }
    }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double epsilon) {
    if (!x.defined()) throw std::invalid_argument("grad_check: undefined tensor");
    if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be positive");
    x.set_requires_grad(true);

    x.zero_grad();
    Tensor y = f(x);
    y.backward();
    std::vector<double> analytic = x.grad_to_vector();

    double worst = 0.0;
    double* xd = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double saved = xd[i];
        xd[i] = saved + epsilon;
        const double fp = f(x).item();
        xd[i] = saved - epsilon;
        const double fm = f(x).item();
        xd[i] = saved;
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double a = analytic[static_cast<size_t>(i)];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace bfe::nn
