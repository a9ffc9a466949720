#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "memf/rng.hpp"
#include "memf/tensor.hpp"

namespace memf {

/// Ordered collection of named trainable tensors. Insertion order is the
/// canonical order everywhere (checkpoints, Adam updates, gradient reports),
/// which keeps whole training trajectories bit-reproducible.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor init);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::size_t scalar_count() const;

    /// FNV-1a over names, shapes and raw f64 bytes. Used for the frozen-base
    /// guarantee and checkpoint sanity checks.
    std::uint64_t checksum() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> pos_;
};

/// Name-keyed gradient accumulator matching a ParamStore.
class GradStore {
public:
    void accumulate(const std::string& name, const Tensor& g);
    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;
    void clear();
    void scale_all(double s);

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> pos_;
};

/// Reverse-mode autodiff tape. Nodes are appended in execution order (the
/// graph is built eagerly, so ids already form a topological order); backward
/// walks ids in reverse, visiting every node exactly once.
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Var leaf(Tensor value, bool trainable = false);
    /// Trainable leaf bound to a ParamStore entry; its gradient can later be
    /// collected into a GradStore via collect_param_grads.
    Var param(const std::string& name, const Tensor& value);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;

    // ---- elementwise / shape ops ------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var tanh_(Var a);
    Var gelu(Var a);
    Var dropout(Var a, double p, Rng& rng, bool train_mode);

    // ---- linear algebra ----------------------------------------------------
    /// W [m x k] * x [k] + b [m]  (rank-1 x), or row-wise for X [T x k]:
    /// X * W^T + 1 b^T -> [T x m].
    Var affine(Var W, Var b, Var x);
    Var matmul(Var A, Var B);     // [m x k] * [k x n]
    Var matmul_nt(Var A, Var B);  // A * B^T
    /// Sum_t w[t] * X[t,:]  -> [d]
    Var weighted_rowsum(Var X, Var w);

    // ---- reductions / structure -------------------------------------------
    Var sum(Var a);                       // -> scalar [1]
    Var sse(Var a, Var b);                // sum((a-b)^2) -> scalar [1]
    Var row(Var X, std::size_t i);        // [T x d] -> [d]
    Var stack_rows(const std::vector<Var>& rows);  // T x [d] -> [T x d]
    Var concat(const std::vector<Var>& parts);     // rank-1 concat
    Var concat_cols(const std::vector<Var>& parts);  // [T x d_i] -> [T x sum d_i]

    // ---- normalization -----------------------------------------------------
    /// Softmax with temperature over the last axis (whole vector for rank 1,
    /// per row for rank 2). Numerically stabilized by max subtraction.
    Var softmax(Var a, double tau = 1.0);
    /// Per-row layer normalization with learnable gain/bias over features.
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

    /// Seed d(out)/d(out) = 1 for a scalar output and run the reverse sweep.
    void backward(Var output);
    /// Seed with an explicit output gradient.
    void backward(Var output, const Tensor& output_grad);

    /// Add each bound parameter's gradient into `grads`.
    void collect_param_grads(GradStore& grads) const;

    std::size_t node_count() const { return nodes_.size(); }
    bool backward_ran() const { return backward_ran_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Tape&, const Node&)> back;  // may be empty
        std::string op;
    };

    Var push(Tensor value, bool needs, std::string op,
             std::function<void(Tape&, const Node&)> back);
    Node& node(Var v);
    const Node& node(Var v) const;
    Tensor& grad_ref(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool needs_grad(Var v) const { return node(v).requires_grad; }
    void check_same_shape(Var a, Var b, const char* op) const;

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, int>> bound_params_;
    bool backward_ran_ = false;
};

} // namespace memf
