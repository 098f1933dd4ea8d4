#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

// Dense 64-bit float tensors with reverse-mode autodiff, plus the handful of
// layers the segmentation network needs. The backward graph is a tape built
// during the forward pass; calling backward() consumes it, so each forward
// pass supports exactly one backward.

namespace bfe::nn {

namespace detail {
struct TensorImpl;
}

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor from_vector(std::vector<int64_t> shape, std::vector<double> values);
    /// Normal(0, stddev) initialization from a caller-owned generator.
    static Tensor randn(std::vector<int64_t> shape, std::mt19937_64& rng, double stddev);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int64_t>& shape() const;
    int64_t dim(int i) const;
    int64_t numel() const;

    double* data();
    const double* data() const;
    /// Value of a 1-element tensor.
    double item() const;

    void set_requires_grad(bool v);
    bool requires_grad() const;

    /// True once a gradient buffer has been populated by backward().
    bool has_grad() const;
    double* grad_data();
    const double* grad_data() const;
    std::vector<double> grad_to_vector() const;
    void zero_grad();

    /// Reverse-mode sweep from a 1-element tensor. Consumes the tape: the
    /// recorded graph is released and a second call on the same graph throws.
    void backward();

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    detail::TensorImpl* impl() const { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend Tensor make_op_result(std::vector<int64_t>, std::vector<Tensor>,
                                 std::function<void(detail::TensorImpl&)>);
};

/// Convolution parameters together with the trainable weight (out,in,k,k)
/// and bias (out). Kernels are square; padding is zero-fill.
struct ConvSpec {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t kernel_size = 1;
    int64_t stride = 1;
    int64_t dilation = 1;
    int64_t padding = 0;
    Tensor weight;
    Tensor bias;

    /// He fan-in scaled init for the weight, zero bias.
    static ConvSpec create(int64_t in_channels, int64_t out_channels, int64_t kernel_size,
                           int64_t stride, int64_t dilation, int64_t padding,
                           std::mt19937_64& rng);

    int64_t out_extent(int64_t in_extent) const;
    void validate() const;
};

// Layer ops. Every op registers an exact backward rule when any input
// requires a gradient.

/// Cross-correlation with stride/dilation/zero-padding.
Tensor conv2d(const Tensor& x, const ConvSpec& spec);
Tensor relu(const Tensor& x);
/// Numerically stable logistic; safe for |x| far beyond 700.
Tensor sigmoid(const Tensor& x);
/// Bilinear interpolation by an integer factor, align_corners = false.
Tensor bilinear_upsample(const Tensor& x, int64_t factor);
Tensor global_avg_pool(const Tensor& x);
/// Spread a (B,C,1,1) map to (B,C,h,w); the 1x1 special case of bilinear
/// upsampling, provided separately so the pooling branch can restore
/// non-square feature maps.
Tensor broadcast_spatial(const Tensor& x, int64_t out_h, int64_t out_w);
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// Mean over every element, as a 1-element tensor.
Tensor mean_all(const Tensor& x);
/// Remove `margin` pixels from every spatial side.
Tensor crop2d(const Tensor& x, int64_t margin);

/// Mean over all pixels of -alpha_t * (1 - p_t)^gamma * log(p_t), computed
/// from logits without forming exp(x) for large |x|. Targets must be exactly
/// 0 or 1; alpha weights class 1, (1 - alpha) weights class 0.
Tensor focal_loss(const Tensor& logits, const Tensor& target, double alpha, double gamma);

/// param <- param - lr * grad for every param, then zero the grads.
/// Throws std::logic_error if any param has no populated gradient.
void sgd_step(const std::vector<Tensor>& params, double lr);

/// Max relative error between the analytic gradient of f at x and central
/// finite differences, with denominator max(|analytic|, |numeric|, 1e-8).
/// f must be a pure function of x's values; it is re-evaluated ~2*numel times.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double epsilon);

/// Per-op invocation counters, for tests that pin how often a layer runs.
struct OpCounters {
    int64_t conv2d = 0;
    int64_t relu = 0;
    int64_t sigmoid = 0;
    int64_t bilinear_upsample = 0;
    int64_t global_avg_pool = 0;
    int64_t broadcast_spatial = 0;
    int64_t concat_channels = 0;
    int64_t add = 0;
    int64_t scale = 0;
    int64_t mean_all = 0;
    int64_t crop2d = 0;
    int64_t focal_loss = 0;
};
OpCounters& op_counters();
void reset_op_counters();

}  // namespace bfe::nn
