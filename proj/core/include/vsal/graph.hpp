#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vsal/tensor.hpp"

namespace vsal {

using VarId = std::int32_t;

/// Reverse-mode autodiff on a dynamic tape. Each op appends a node holding
/// the forward value and a closure that scatters the node's gradient into
/// its parents. backward() walks the tape in reverse creation order, which
/// is a valid topological order by construction.
///
/// All computation is double precision; backward passes are exact
/// transposes of the forward linearizations so analytic gradients can be
/// validated against central finite differences.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    VarId leaf(Tensor value, bool requires_grad);
    VarId constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(VarId id) const { return nodes_[static_cast<size_t>(id)].value; }
    /// Gradient of the last backward() root w.r.t. this node (zeros if the
    /// node was not reached).
    const Tensor& grad(VarId id);
    bool requires_grad(VarId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    size_t node_count() const { return nodes_.size(); }

    /// Backpropagate from a scalar-valued node.
    void backward(VarId root);

    // --- elementwise / activation ---
    VarId relu(VarId x);
    VarId sigmoid(VarId x);
    VarId tanh_(VarId x);
    VarId add(VarId a, VarId b);
    VarId sub(VarId a, VarId b);
    VarId mul(VarId a, VarId b);
    VarId scale(VarId x, double k);
    VarId add_const(VarId x, double k);
    VarId mul_const(VarId x, Tensor w);       // elementwise by a constant tensor
    VarId smooth_sqrt(VarId x, double eps2);  // sqrt(x^2 + eps2)

    // --- linear algebra ---
    VarId conv2d(VarId x, VarId w, VarId b, int stride = 1, int pad = 0, int dilation = 1);
    VarId linear(VarId x, VarId w, VarId b);  // x:[n], w:[m,n], b:[m] -> [m]
    VarId gram(VarId a, VarId b);             // a,b:[C,N] -> [N,N] = a^T b

    // --- shape / selection ---
    VarId concat(VarId a, VarId b);                 // along dim 0
    VarId slice0(VarId x, int from, int to);        // along dim 0
    VarId reshape(VarId x, std::vector<int> shape);
    VarId pick(VarId x, std::int64_t index);        // -> scalar
    VarId broadcast_chw(VarId v, int h, int w);     // [C] -> [C,H,W]
    VarId outer_sc(VarId s, VarId c);               // s:[1,H,W]|[H,W], c:[C] -> [C,H,W]
    VarId mul_scalar_var(VarId x, VarId s);         // s: scalar node

    // --- normalization / pooling / resampling ---
    VarId instance_norm(VarId x, VarId gamma, VarId beta, double eps = 1e-5);
    VarId softmax_groups(VarId x, int group);       // softmax within consecutive groups
    VarId global_avg_pool(VarId x);                 // [C,H,W] -> [C]
    VarId global_max_pool(VarId x);                 // [C,H,W] -> [C]
    VarId upsample_bilinear(VarId x, int oh, int ow);

    // --- spatial differences (structure loss) ---
    VarId diff_x(VarId x);  // [H,W] -> [H,W-1]
    VarId diff_y(VarId x);  // [H,W] -> [H-1,W]

    // --- reductions / losses ---
    VarId sum_all(VarId x);
    VarId mean_all(VarId x);
    VarId wsum(const std::vector<VarId>& scalars, const std::vector<double>& weights);
    /// Binary cross-entropy on logits with probability clamp to
    /// [eps, 1-eps]. `mask` (same shape, 0/1) selects contributing elements;
    /// nullptr means all. `mean` divides by the number of contributing
    /// elements, otherwise the raw sum is returned. Zero contributing
    /// elements yield 0.
    VarId bce_with_logits(VarId logits, Tensor target, const Tensor* mask, bool mean,
                          double eps = 1e-7);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_ready = false;
        std::function<void(Graph&)> back;  // empty for leaves
    };

    VarId emplace(Tensor value, bool requires_grad, std::function<void(Graph&)> back);
    Tensor& grad_buf(VarId id);
    void accumulate(VarId id, const Tensor& g);

    std::vector<Node> nodes_;
    std::vector<double> scratch_;  // im2col workspace shared across conv nodes
    friend struct ConvBackward;
};

}  // namespace vsal
