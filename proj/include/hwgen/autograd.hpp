#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hwgen/tensor.hpp"

namespace hwgen {

// Reverse-mode autodiff over Tensor values. The graph is dynamic: every op
// returns a node holding its forward value plus a closure that scatters the
// incoming gradient to its parents. Children own their parents, so keeping
// the loss node alive keeps the whole tape alive; dropping it frees the step.
struct Var;
using VarPtr = std::shared_ptr<Var>;

struct Var {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::vector<VarPtr> parents;
    std::function<void(Var&)> backward_fn;

    Tensor& g() {
        if (!grad_alloc) {
            grad = Tensor::zeros(val.shape);
            grad_alloc = true;
        }
        return grad;
    }
    void zero_grad() {
        if (grad_alloc) std::fill(grad.v.begin(), grad.v.end(), 0.f);
    }
    float scalar() const { return val.v.at(0); }
};

VarPtr leaf(Tensor t, bool requires_grad = false);
VarPtr constant(Tensor t);

// global switch; sampling and evaluation run with gradients off
bool grad_enabled();
struct NoGrad {
    NoGrad();
    ~NoGrad();
    bool prev;
};

// seeds root grad with ones and runs the tape in reverse topological order
void backward(const VarPtr& root);

// ---- elementwise ----
VarPtr add(const VarPtr& a, const VarPtr& b);       // same shape
VarPtr sub(const VarPtr& a, const VarPtr& b);       // same shape
VarPtr mul(const VarPtr& a, const VarPtr& b);       // same shape
VarPtr add_scalar(const VarPtr& a, float c);
VarPtr mul_scalar(const VarPtr& a, float c);
VarPtr relu(const VarPtr& a);
VarPtr silu(const VarPtr& a);
VarPtr sigmoid(const VarPtr& a);
VarPtr tanh_op(const VarPtr& a);

// ---- shape ----
VarPtr reshape(const VarPtr& a, std::vector<int> shape);
VarPtr slice_lastdim(const VarPtr& a, int from, int to);
VarPtr concat_channels(const VarPtr& a, const VarPtr& b);     // NCHW, along C
VarPtr concat_seq(const VarPtr& a, const VarPtr& b);          // [N,La,D]+[N,Lb,D]
VarPtr reverse_seq(const VarPtr& a);                          // [N,L,D], flip L
VarPtr stack_seq(const std::vector<VarPtr>& steps);           // L x [N,D] -> [N,L,D]
VarPtr seq_step(const VarPtr& a, int l);                      // [N,L,D] -> [N,D]

// ---- bias / broadcast adds ----
VarPtr add_bias(const VarPtr& x, const VarPtr& b);            // [...,D] + [D]
VarPtr add_channel_bias(const VarPtr& x, const VarPtr& b);    // [N,C,H,W] + [C]
VarPtr add_channel_bias_nc(const VarPtr& x, const VarPtr& b); // [N,C,H,W] + [N,C]

// ---- linear algebra ----
VarPtr matmul(const VarPtr& a, const VarPtr& b);              // [m,k]x[k,n]
// x [..., In] * W [In, Out] (+ optional bias [Out]); leading dims folded
VarPtr linear(const VarPtr& x, const VarPtr& W, const VarPtr& b);
// batched matmul with transpose flags: [N,·,·] x [N,·,·]
VarPtr bmm(const VarPtr& a, const VarPtr& b, bool ta, bool tb);

// ---- nn primitives ----
VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b,
              int sh, int sw, int ph, int pw);
VarPtr group_norm(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta,
                  int groups, float eps = 1e-5f);
VarPtr layer_norm_lastdim(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta,
                          float eps = 1e-5f);
VarPtr nchw_to_nlc(const VarPtr& x);  // (N,C,H,W) -> (N,H*W,C)
VarPtr nlc_to_nchw(const VarPtr& x, int H, int W);  // inverse
VarPtr upsample_nearest2x(const VarPtr& x);
VarPtr global_avg_pool(const VarPtr& x);                      // [N,C,H,W] -> [N,C]
// softmax over last dim; optional key mask [N,K] (0 = masked) for x [N,Q,K]
VarPtr softmax_lastdim(const VarPtr& x, const Tensor* key_mask = nullptr);
VarPtr gather_rows(const VarPtr& table, const std::vector<int>& ids); // [V,D] -> [n,D]

// ---- reductions / losses ----
VarPtr sum_all(const VarPtr& a);
VarPtr mean_all(const VarPtr& a);
VarPtr mse_loss(const VarPtr& pred, const Tensor& target);
VarPtr cross_entropy(const VarPtr& logits, const std::vector<int>& labels);
// rowwise Lp distance between [N,D] and [N,D] -> [N]
VarPtr p_distance(const VarPtr& a, const VarPtr& b, float p);

// generic op constructor for custom ops (ctc lives in recognizer.cpp)
VarPtr make_op(Tensor out, std::vector<VarPtr> parents, std::function<void(Var&)> bw);

}  // namespace hwgen
