#ifndef BIOAUG_GRAPH_HPP
#define BIOAUG_GRAPH_HPP

#include <span>
#include <string>
#include <vector>

#include "bioaug/tensor.hpp"

namespace bioaug {

// Reverse-mode differentiation tape over a fixed primitive set. Ops evaluate
// eagerly; every intermediate value stays cached on the tape for backward().
// A Graph is a single-owner, single-threaded object; kernels themselves are
// pure, so independent graphs may run in parallel.
//
// Gradient storage is allocated only for nodes reachable from a
// requires_grad leaf; everything else reports has_grad() == false.
class Graph {
public:
    using NodeId = int;

    // Leaves. input() honors t.requires_grad; constant() never tracks.
    NodeId input(Tensor t);
    NodeId constant(Tensor t);

    // Primitives.
    NodeId matmul(NodeId a, NodeId b);                          // [m,k]x[k,n]
    NodeId conv1d(NodeId x, NodeId w, int stride, int padding); // x[B,Ci,L], w[Co,Ci,K]
    NodeId add(NodeId a, NodeId b);                             // broadcasting
    NodeId subtract(NodeId a, NodeId b);                        // broadcasting
    NodeId multiply(NodeId a, NodeId b);                        // broadcasting
    NodeId scalar_mul(NodeId a, double c);
    NodeId relu(NodeId a);
    NodeId exponential(NodeId a);
    NodeId logarithm(NodeId a);
    NodeId sum_all(NodeId a);
    NodeId sum_axis(NodeId a, int axis);
    NodeId mean_all(NodeId a);
    NodeId mean_axis(NodeId a, int axis);
    NodeId softmax(NodeId a, int axis);  // max-subtracted, numerically stable
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);  // last axis
    NodeId embedding(NodeId table, std::span<const int> ids);   // table[V,D] -> [n,D]
    NodeId concat(std::span<const NodeId> parts, int axis);
    NodeId transpose(NodeId a);                                 // 2-D
    NodeId l2_normalize_rows(NodeId a, double eps = 1e-12);     // [N,D]
    NodeId reshape(NodeId a, std::vector<int> new_shape);

    const Tensor& value(NodeId id) const;
    bool node_requires_grad(NodeId id) const;

    // Seeds the scalar loss with adjoint 1 and walks the tape in exact
    // reverse topological order. A second call without rebuilding the graph
    // is an error; so is a non-scalar loss.
    void backward(NodeId loss);

    bool has_grad(NodeId id) const;
    const Tensor& grad(NodeId id) const;

    size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf, MatMul, Conv1d, Add, Sub, Mul, ScalarMul, Relu, Exp, Log,
        SumAll, SumAxis, MeanAll, MeanAxis, Softmax, LayerNorm, Embedding,
        Concat, Transpose, L2NormRows, Reshape
    };

    struct Node {
        Op op;
        std::vector<NodeId> in;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        int axis = 0;
        int stride = 1;
        int padding = 0;
        double scalar = 0.0;  // scale factor or epsilon, depending on op
        std::vector<int> ids;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    NodeId push(Node n, const char* op_name);
    const Node& node(NodeId id) const;
    Node& mut(NodeId id);
    void check_id(NodeId id) const;
    void ensure_grad(NodeId id);
    void backward_node(NodeId id);
};

}  // namespace bioaug

#endif
