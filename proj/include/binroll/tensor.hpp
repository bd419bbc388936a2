#ifndef BINROLL_TENSOR_HPP
#define BINROLL_TENSOR_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "binroll/errors.hpp"

namespace binroll {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);
bool all_finite(std::span<const double> xs);

// Trainable tensor living outside the tape. Gradients accumulate here.
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;

    Parameter() = default;
    Parameter(std::string n, Shape s)
        : name(std::move(n)), shape(std::move(s)), data(numel(shape), 0.0), grad(numel(shape), 0.0) {}

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; invalid when id < 0.
struct Value {
    Tape* tape = nullptr;
    int id = -1;
    bool ok() const { return tape != nullptr && id >= 0; }
};

struct OpBase;

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<int> inputs;
    std::unique_ptr<OpBase> op;  // null for leaves
    bool requires_grad = false;
    Parameter* param = nullptr;  // set for parameter leaves
};

// Backward passes are expressed as ops on the same tape, so gradients are
// themselves differentiable (needed for the gradient penalty).
struct OpBase {
    virtual ~OpBase() = default;
    virtual const char* name() const = 0;
    virtual bool differentiable() const { return true; }
    // Appends gradient Values for each input of `out` to `in_grads`
    // (invalid Value = no gradient for that input).
    virtual void backward(Tape& t, int out_id, Value gy, std::vector<Value>& in_grads) = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Value constant(Shape shape, std::vector<double> data);
    Value constant_scalar(double v);
    Value zeros(Shape shape, bool requires_grad = false);
    Value input(Shape shape, std::vector<double> data, bool requires_grad);
    Value param(Parameter& p, bool trainable = true);

    Value emit(std::unique_ptr<OpBase> op, Shape shape, std::vector<double> data,
               std::initializer_list<Value> inputs);
    Value emit(std::unique_ptr<OpBase> op, Shape shape, std::vector<double> data,
               const std::vector<Value>& inputs);

    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }

    const Shape& shape(Value v) const { return node(v.id).shape; }
    std::span<const double> data(Value v) const { return node(v.id).data; }
    double scalar(Value v) const;

    // Gradients of `loss` w.r.t. `wrt`, as tape Values (so further ops may be
    // built on them). Entries are invalid Values when no path exists.
    std::vector<Value> grad(Value loss, std::span<const Value> wrt);

    // Accumulates d loss / d p into p.grad for every trainable parameter leaf.
    void backward(Value loss);

    // True iff some ancestor op of `v` is non-differentiable (hard step with
    // no estimator). Gradient checks skip such graphs.
    bool has_nondifferentiable_ancestor(Value v) const;

private:
    std::vector<Node> nodes_;
};

// ---- primitive ops -------------------------------------------------------

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value divide(Value a, Value b);
Value neg(Value a);
Value add_scalar(Value a, double c);
Value mul_scalar(Value a, double c);
Value relu(Value a);
Value leaky_relu(Value a, double slope);
Value sigmoid(Value a);
Value sqrt_op(Value a);

Value matmul(Value a, Value b);    // [m,k] x [k,n]
Value transpose2d(Value a);
Value reshape(Value a, Shape shape);

// Insert a new axis of extent n at `axis` (values repeated along it).
Value broadcast_axis(Value a, int axis, int64_t n);
// Remove `axis` by summing over it.
Value sum_axis(Value a, int axis);
Value sum_all(Value a);   // -> scalar shape {1}
Value mean_all(Value a);  // -> scalar shape {1}

Value slice_axis(Value a, int axis, int64_t start, int64_t len);
Value concat_axis(const std::vector<Value>& xs, int axis);

// Zero padding / cropping of the three spatial axes of a 5-D tensor
// [batch, d0, d1, d2, channel].
Value pad3d(Value x, const std::array<int64_t, 3>& lo, const std::array<int64_t, 3>& hi);
Value crop3d(Value x, const std::array<int64_t, 3>& lo, const std::array<int64_t, 3>& hi);

// im2col over the spatial axes of [batch, d0, d1, d2, cin]:
// -> [batch * prod(out), prod(kernel) * cin], valid windows only.
Value unfold3d(Value x, const std::array<int64_t, 3>& kernel, const std::array<int64_t, 3>& strides);
// Adjoint of unfold3d: scatter-add columns back into spatial positions.
Value fold3d(Value cols, const Shape& out_shape, const std::array<int64_t, 3>& kernel,
             const std::array<int64_t, 3>& strides);

// ---- composite layers (built from primitives) ----------------------------

// y[i,j] = sum_k x[i,k] W[k,j] + b[j]
Value dense_forward(Value x, Value w, Value b);

// x: [B,d0,d1,d2,cin], kernel: [k0,k1,k2,cin,cout] -> [B,o0,o1,o2,cout],
// valid cross-correlation, oi = (di-ki)/si + 1.
Value conv3d_forward(Value x, Value kernel, Value bias, const std::array<int64_t, 3>& strides);

// x: [B,d0,d1,d2,cin], kernel: [k0,k1,k2,cout,cin] -> [B,O0,O1,O2,cout],
// Oi = (di-1)*si + ki (adjoint of the matching valid convolution).
Value transposed_conv3d_forward(Value x, Value kernel, Value bias,
                                const std::array<int64_t, 3>& strides);

std::array<int64_t, 3> conv3d_out_extents(const Shape& in, const std::array<int64_t, 3>& kernel,
                                          const std::array<int64_t, 3>& strides);
std::array<int64_t, 3> transposed_conv3d_out_extents(const Shape& in,
                                                     const std::array<int64_t, 3>& kernel,
                                                     const std::array<int64_t, 3>& strides);

struct BatchNormParams {
    Parameter gamma;
    Parameter beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.9;

    BatchNormParams() = default;
    BatchNormParams(const std::string& prefix, int64_t channels)
        : gamma(prefix + ".gamma", {channels}), beta(prefix + ".beta", {channels}),
          running_mean(static_cast<size_t>(channels), 0.0),
          running_var(static_cast<size_t>(channels), 1.0) {
        std::fill(gamma.data.begin(), gamma.data.end(), 1.0);
    }
};

enum class Mode { train, inference };

// Per-channel batch norm over the last axis of a 5-D (or 2-D) tensor.
// In train mode batch statistics are used and running statistics updated
// (update_stats=false freezes them, e.g. during finite-difference probes).
Value batch_norm_forward(Value x, BatchNormParams& bn, Mode mode, bool update_stats = true,
                         bool trainable = true);

// ---- Adam ----------------------------------------------------------------

struct AdamConfig {
    double alpha = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
};

struct AdamState {
    int64_t step = 0;
    // Moments keyed by parameter, in registration order.
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

class AdamOptimizer {
public:
    AdamOptimizer() = default;
    explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

    void attach(const std::vector<Parameter*>& params);
    // Applies one Adam update from p.grad for every attached parameter not in
    // `frozen`, then increments the step counter. Throws on NaN gradients.
    void step(const std::vector<Parameter*>& params,
              const std::function<bool(const Parameter&)>& frozen = nullptr);

    AdamConfig& config() { return cfg_; }
    const AdamConfig& config() const { return cfg_; }
    AdamState& state() { return state_; }
    const AdamState& state() const { return state_; }

private:
    AdamConfig cfg_;
    AdamState state_;
};

// ---- finite-difference verification ---------------------------------------

struct FdProbe {
    Parameter* param = nullptr;
    std::vector<int64_t> coords;  // flat indices to probe
};

struct FdReport {
    double max_rel_err = 0.0;
    int checked = 0;
    bool skipped_nondifferentiable = false;
    std::string worst;  // "param[i]" of the worst coordinate
};

// Compares analytic gradients of the scalar built by `build` against central
// finite differences on the probed coordinates. `build` must construct a fresh
// graph from current parameter values on the given tape and return the loss.
FdReport finite_diff_check(const std::function<Value(Tape&)>& build,
                           const std::vector<FdProbe>& probes, double h = 1e-3);

}  // namespace binroll

#endif
