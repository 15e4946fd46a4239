#include "bioaug/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bioaug {
namespace {

// Right-aligned numpy-style broadcast of two shapes, rank <= 3 in practice.
struct Broadcast {
    std::vector<int> out_shape;
    bool ok = false;
};

Broadcast broadcast_shapes(const std::vector<int>& a, const std::vector<int>& b) {
    Broadcast r;
    const size_t rank = std::max(a.size(), b.size());
    r.out_shape.assign(rank, 1);
    for (size_t i = 0; i < rank; ++i) {
        const int da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const int db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) return r;
        r.out_shape[i] = std::max(da, db);
    }
    r.ok = true;
    return r;
}

// Maps a flat index in the broadcast output to a flat index in an operand.
struct BroadcastIndexer {
    // strides in the output space for each output axis, and the operand
    // stride to apply (0 where the operand dimension is broadcast)
    std::vector<size_t> out_stride;
    std::vector<size_t> in_stride;
    std::vector<int> out_dims;

    BroadcastIndexer(const std::vector<int>& out_shape, const std::vector<int>& in_shape) {
        const size_t rank = out_shape.size();
        out_dims.assign(out_shape.begin(), out_shape.end());
        out_stride.assign(rank, 1);
        for (size_t i = rank; i-- > 1;) out_stride[i - 1] = out_stride[i] * static_cast<size_t>(out_shape[i]);
        in_stride.assign(rank, 0);
        size_t s = 1;
        for (size_t i = rank; i-- > 0;) {
            const size_t off = rank - in_shape.size();
            if (i >= off) {
                const int d = in_shape[i - off];
                in_stride[i] = (d == 1) ? 0 : s;
                s *= static_cast<size_t>(d);
            }
        }
    }

    size_t map(size_t flat) const {
        size_t idx = 0;
        for (size_t i = 0; i < out_dims.size(); ++i) {
            const size_t c = flat / out_stride[i];
            flat -= c * out_stride[i];
            idx += c * in_stride[i];
        }
        return idx;
    }
};

// Lane decomposition for per-axis reductions and softmax.
struct Lanes {
    size_t outer, len, inner;
};

Lanes lanes_of(const std::vector<int>& shape, int axis) {
    Lanes l{1, 1, 1};
    for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
        if (i < axis)
            l.outer *= static_cast<size_t>(shape[i]);
        else if (i == axis)
            l.len = static_cast<size_t>(shape[i]);
        else
            l.inner *= static_cast<size_t>(shape[i]);
    }
    return l;
}

std::vector<int> squeeze_axis(const std::vector<int>& shape, int axis) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(shape.size()); ++i)
        if (i != axis) out.push_back(shape[i]);
    return out;
}

}  // namespace

void Graph::check_id(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
        throw ShapeError("graph: node id " + std::to_string(id) + " is not part of this graph");
}

const Graph::Node& Graph::node(NodeId id) const {
    check_id(id);
    return nodes_[static_cast<size_t>(id)];
}

Graph::Node& Graph::mut(NodeId id) {
    check_id(id);
    return nodes_[static_cast<size_t>(id)];
}

Graph::NodeId Graph::push(Node n, const char* op_name) {
    if (!n.value.all_finite())
        throw NumericError(std::string("numeric overflow: non-finite value produced by ") + op_name);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::input(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.requires_grad = t.requires_grad;
    n.value = std::move(t);
    return push(std::move(n), "input");
}

Graph::NodeId Graph::constant(Tensor t) {
    t.requires_grad = false;
    return input(std::move(t));
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

bool Graph::node_requires_grad(NodeId id) const { return node(id).requires_grad; }

bool Graph::has_grad(NodeId id) const {
    const Node& n = node(id);
    return n.requires_grad && n.grad_alloc;
}

const Tensor& Graph::grad(NodeId id) const {
    const Node& n = node(id);
    if (!n.requires_grad)
        throw ShapeError("graph: node " + std::to_string(id) +
                         " does not require gradients; no adjoint storage exists");
    if (!n.grad_alloc)
        throw ShapeError("graph: node " + std::to_string(id) + " received no gradient");
    return n.grad;
}

void Graph::ensure_grad(NodeId id) {
    Node& n = mut(id);
    if (!n.grad_alloc) {
        n.grad = Tensor(n.value.shape, 0.0);
        n.grad_alloc = true;
    }
}

// ---------------------------------------------------------------------------
// primitives: forward
// ---------------------------------------------------------------------------

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        throw ShapeError("matmul: incompatible shapes " + Tensor::shape_str(A.shape) + " and " +
                         Tensor::shape_str(B.shape));
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Node out;
    out.op = Op::MatMul;
    out.in = {a, b};
    out.requires_grad = node(a).requires_grad || node(b).requires_grad;
    out.value = Tensor({m, n});
    for (int i = 0; i < m; ++i) {
        double* dst = &out.value.data[static_cast<size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double av = A.at(i, p);
            const double* brow = &B.data[static_cast<size_t>(p) * n];
            for (int j = 0; j < n; ++j) dst[j] += av * brow[j];
        }
    }
    return push(std::move(out), "matmul");
}

Graph::NodeId Graph::conv1d(NodeId x, NodeId w, int stride, int padding) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    if (X.rank() != 3 || W.rank() != 3 || X.dim(1) != W.dim(1))
        throw ShapeError("conv1d: incompatible shapes " + Tensor::shape_str(X.shape) + " and " +
                         Tensor::shape_str(W.shape));
    if (stride < 1 || padding < 0)
        throw ShapeError("conv1d: stride must be >= 1 and padding >= 0");
    const int B = X.dim(0), Ci = X.dim(1), L = X.dim(2);
    const int Co = W.dim(0), K = W.dim(2);
    if (L + 2 * padding < K)
        throw ShapeError("conv1d: kernel longer than padded input, shapes " +
                         Tensor::shape_str(X.shape) + " and " + Tensor::shape_str(W.shape));
    const int Lo = (L + 2 * padding - K) / stride + 1;
    Node out;
    out.op = Op::Conv1d;
    out.in = {x, w};
    out.stride = stride;
    out.padding = padding;
    out.requires_grad = node(x).requires_grad || node(w).requires_grad;
    out.value = Tensor({B, Co, Lo});
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            double* dst = &out.value.data[(static_cast<size_t>(b) * Co + co) * Lo];
            for (int ci = 0; ci < Ci; ++ci) {
                const double* src = &X.data[(static_cast<size_t>(b) * Ci + ci) * L];
                const double* ker = &W.data[(static_cast<size_t>(co) * Ci + ci) * K];
                for (int k = 0; k < K; ++k) {
                    const double wv = ker[k];
                    if (wv == 0.0) continue;
                    // valid t range: 0 <= t*stride + k - padding < L
                    int t0 = 0;
                    if (k < padding) t0 = (padding - k + stride - 1) / stride;
                    int t1 = Lo;
                    {
                        const int jmax = L - 1 - k + padding;
                        if (jmax < 0)
                            t1 = 0;
                        else
                            t1 = std::min(Lo, jmax / stride + 1);
                    }
                    const double* s = src + (static_cast<long>(t0) * stride + k - padding);
                    for (int t = t0; t < t1; ++t, s += stride) dst[t] += wv * *s;
                }
            }
        }
    }
    return push(std::move(out), "conv1d");
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const Broadcast bc = broadcast_shapes(A.shape, B.shape);
    if (!bc.ok)
        throw ShapeError("add: incompatible shapes " + Tensor::shape_str(A.shape) + " and " +
                         Tensor::shape_str(B.shape));
    Node out;
    out.op = Op::Add;
    out.in = {a, b};
    out.requires_grad = node(a).requires_grad || node(b).requires_grad;
    out.value = Tensor(bc.out_shape);
    if (A.shape == B.shape) {
        for (size_t i = 0; i < out.value.numel(); ++i) out.value.data[i] = A.data[i] + B.data[i];
    } else {
        const BroadcastIndexer ia(bc.out_shape, A.shape), ib(bc.out_shape, B.shape);
        for (size_t i = 0; i < out.value.numel(); ++i)
            out.value.data[i] = A.data[ia.map(i)] + B.data[ib.map(i)];
    }
    return push(std::move(out), "add");
}

Graph::NodeId Graph::subtract(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const Broadcast bc = broadcast_shapes(A.shape, B.shape);
    if (!bc.ok)
        throw ShapeError("subtract: incompatible shapes " + Tensor::shape_str(A.shape) + " and " +
                         Tensor::shape_str(B.shape));
    Node out;
    out.op = Op::Sub;
    out.in = {a, b};
    out.requires_grad = node(a).requires_grad || node(b).requires_grad;
    out.value = Tensor(bc.out_shape);
    if (A.shape == B.shape) {
        for (size_t i = 0; i < out.value.numel(); ++i) out.value.data[i] = A.data[i] - B.data[i];
    } else {
        const BroadcastIndexer ia(bc.out_shape, A.shape), ib(bc.out_shape, B.shape);
        for (size_t i = 0; i < out.value.numel(); ++i)
            out.value.data[i] = A.data[ia.map(i)] - B.data[ib.map(i)];
    }
    return push(std::move(out), "subtract");
}

Graph::NodeId Graph::multiply(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const Broadcast bc = broadcast_shapes(A.shape, B.shape);
    if (!bc.ok)
        throw ShapeError("multiply: incompatible shapes " + Tensor::shape_str(A.shape) + " and " +
                         Tensor::shape_str(B.shape));
    Node out;
    out.op = Op::Mul;
    out.in = {a, b};
    out.requires_grad = node(a).requires_grad || node(b).requires_grad;
    out.value = Tensor(bc.out_shape);
    if (A.shape == B.shape) {
        for (size_t i = 0; i < out.value.numel(); ++i) out.value.data[i] = A.data[i] * B.data[i];
    } else {
        const BroadcastIndexer ia(bc.out_shape, A.shape), ib(bc.out_shape, B.shape);
        for (size_t i = 0; i < out.value.numel(); ++i)
            out.value.data[i] = A.data[ia.map(i)] * B.data[ib.map(i)];
    }
    return push(std::move(out), "multiply");
}

Graph::NodeId Graph::scalar_mul(NodeId a, double c) {
    const Tensor& A = value(a);
    Node out;
    out.op = Op::ScalarMul;
    out.in = {a};
    out.scalar = c;
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(A.shape);
    for (size_t i = 0; i < A.numel(); ++i) out.value.data[i] = c * A.data[i];
    return push(std::move(out), "scalar_mul");
}

Graph::NodeId Graph::relu(NodeId a) {
    const Tensor& A = value(a);
    Node out;
    out.op = Op::Relu;
    out.in = {a};
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(A.shape);
    for (size_t i = 0; i < A.numel(); ++i) out.value.data[i] = A.data[i] > 0.0 ? A.data[i] : 0.0;
    return push(std::move(out), "relu");
}

Graph::NodeId Graph::exponential(NodeId a) {
    const Tensor& A = value(a);
    Node out;
    out.op = Op::Exp;
    out.in = {a};
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(A.shape);
    for (size_t i = 0; i < A.numel(); ++i) out.value.data[i] = std::exp(A.data[i]);
    return push(std::move(out), "exponential");
}

Graph::NodeId Graph::logarithm(NodeId a) {
    const Tensor& A = value(a);
    Node out;
    out.op = Op::Log;
    out.in = {a};
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(A.shape);
    for (size_t i = 0; i < A.numel(); ++i) out.value.data[i] = std::log(A.data[i]);
    return push(std::move(out), "logarithm");
}

Graph::NodeId Graph::sum_all(NodeId a) {
    const Tensor& A = value(a);
    Node out;
    out.op = Op::SumAll;
    out.in = {a};
    out.requires_grad = node(a).requires_grad;
    double s = 0.0;
    for (double v : A.data) s += v;
    out.value = Tensor::scalar(s);
    return push(std::move(out), "sum");
}

Graph::NodeId Graph::mean_all(NodeId a) {
    const Tensor& A = value(a);
    if (A.numel() == 0) throw ShapeError("mean: empty tensor");
    Node out;
    out.op = Op::MeanAll;
    out.in = {a};
    out.requires_grad = node(a).requires_grad;
    double s = 0.0;
    for (double v : A.data) s += v;
    out.value = Tensor::scalar(s / static_cast<double>(A.numel()));
    return push(std::move(out), "mean");
}

Graph::NodeId Graph::sum_axis(NodeId a, int axis) {
    const Tensor& A = value(a);
    if (axis < 0 || axis >= A.rank())
        throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for shape " +
                         Tensor::shape_str(A.shape));
    const Lanes l = lanes_of(A.shape, axis);
    Node out;
    out.op = Op::SumAxis;
    out.in = {a};
    out.axis = axis;
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(squeeze_axis(A.shape, axis));
    for (size_t o = 0; o < l.outer; ++o)
        for (size_t i = 0; i < l.inner; ++i) {
            double s = 0.0;
            for (size_t j = 0; j < l.len; ++j) s += A.data[(o * l.len + j) * l.inner + i];
            out.value.data[o * l.inner + i] = s;
        }
    return push(std::move(out), "sum_axis");
}

Graph::NodeId Graph::mean_axis(NodeId a, int axis) {
    const Tensor& A = value(a);
    if (axis < 0 || axis >= A.rank())
        throw ShapeError("mean_axis: axis " + std::to_string(axis) + " out of range for shape " +
                         Tensor::shape_str(A.shape));
    const Lanes l = lanes_of(A.shape, axis);
    if (l.len == 0) throw ShapeError("mean_axis: reduction over empty axis");
    Node out;
    out.op = Op::MeanAxis;
    out.in = {a};
    out.axis = axis;
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(squeeze_axis(A.shape, axis));
    const double inv = 1.0 / static_cast<double>(l.len);
    for (size_t o = 0; o < l.outer; ++o)
        for (size_t i = 0; i < l.inner; ++i) {
            double s = 0.0;
            for (size_t j = 0; j < l.len; ++j) s += A.data[(o * l.len + j) * l.inner + i];
            out.value.data[o * l.inner + i] = s * inv;
        }
    return push(std::move(out), "mean_axis");
}

Graph::NodeId Graph::softmax(NodeId a, int axis) {
    const Tensor& A = value(a);
    if (axis < 0 || axis >= A.rank())
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                         Tensor::shape_str(A.shape));
    const Lanes l = lanes_of(A.shape, axis);
    if (l.len == 0) throw ShapeError("softmax: empty axis");
    Node out;
    out.op = Op::Softmax;
    out.in = {a};
    out.axis = axis;
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(A.shape);
    for (size_t o = 0; o < l.outer; ++o)
        for (size_t i = 0; i < l.inner; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t j = 0; j < l.len; ++j)
                mx = std::max(mx, A.data[(o * l.len + j) * l.inner + i]);
            double denom = 0.0;
            for (size_t j = 0; j < l.len; ++j) {
                const size_t idx = (o * l.len + j) * l.inner + i;
                const double e = std::exp(A.data[idx] - mx);
                out.value.data[idx] = e;
                denom += e;
            }
            for (size_t j = 0; j < l.len; ++j) out.value.data[(o * l.len + j) * l.inner + i] /= denom;
        }
    return push(std::move(out), "softmax");
}

Graph::NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& X = value(x);
    const Tensor& G = value(gamma);
    const Tensor& Bt = value(beta);
    if (X.rank() < 1) throw ShapeError("layer_norm: scalar input");
    const int D = X.shape.back();
    if (G.rank() != 1 || Bt.rank() != 1 || G.dim(0) != D || Bt.dim(0) != D)
        throw ShapeError("layer_norm: gamma/beta shape " + Tensor::shape_str(G.shape) +
                         " does not match normalized width of " + Tensor::shape_str(X.shape));
    Node out;
    out.op = Op::LayerNorm;
    out.in = {x, gamma, beta};
    out.scalar = eps;
    out.requires_grad = node(x).requires_grad || node(gamma).requires_grad || node(beta).requires_grad;
    out.value = Tensor(X.shape);
    const size_t lanes = X.numel() / static_cast<size_t>(D);
    for (size_t ln = 0; ln < lanes; ++ln) {
        const double* src = &X.data[ln * static_cast<size_t>(D)];
        double* dst = &out.value.data[ln * static_cast<size_t>(D)];
        double mu = 0.0;
        for (int j = 0; j < D; ++j) mu += src[j];
        mu /= D;
        double var = 0.0;
        for (int j = 0; j < D; ++j) var += (src[j] - mu) * (src[j] - mu);
        var /= D;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < D; ++j) dst[j] = (src[j] - mu) * inv * G.data[j] + Bt.data[j];
    }
    return push(std::move(out), "layer_norm");
}

Graph::NodeId Graph::embedding(NodeId table, std::span<const int> ids) {
    const Tensor& T = value(table);
    if (T.rank() != 2) throw ShapeError("embedding: table must be 2-D, got " + Tensor::shape_str(T.shape));
    const int V = T.dim(0), D = T.dim(1);
    Node out;
    out.op = Op::Embedding;
    out.in = {table};
    out.ids.assign(ids.begin(), ids.end());
    out.requires_grad = node(table).requires_grad;
    out.value = Tensor({static_cast<int>(ids.size()), D});
    for (size_t r = 0; r < ids.size(); ++r) {
        const int id = ids[r];
        if (id < 0 || id >= V)
            throw ShapeError("embedding: id " + std::to_string(id) + " outside table of " +
                             std::to_string(V) + " rows");
        std::copy_n(&T.data[static_cast<size_t>(id) * D], D, &out.value.data[r * static_cast<size_t>(D)]);
    }
    return push(std::move(out), "embedding");
}

Graph::NodeId Graph::concat(std::span<const NodeId> parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Tensor& first = value(parts[0]);
    const int rank = first.rank();
    if (axis < 0 || axis >= rank)
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                         Tensor::shape_str(first.shape));
    std::vector<int> out_shape = first.shape;
    bool rg = false;
    for (const NodeId p : parts) {
        const Tensor& t = value(p);
        if (t.rank() != rank)
            throw ShapeError("concat: rank mismatch between " + Tensor::shape_str(first.shape) +
                             " and " + Tensor::shape_str(t.shape));
        for (int i = 0; i < rank; ++i)
            if (i != axis && t.shape[i] != first.shape[i])
                throw ShapeError("concat: shape mismatch between " + Tensor::shape_str(first.shape) +
                                 " and " + Tensor::shape_str(t.shape));
        rg = rg || node(p).requires_grad;
    }
    out_shape[axis] = 0;
    for (const NodeId p : parts) out_shape[axis] += value(p).shape[axis];

    Node out;
    out.op = Op::Concat;
    out.in.assign(parts.begin(), parts.end());
    out.axis = axis;
    out.requires_grad = rg;
    out.value = Tensor(out_shape);
    const Lanes lo = lanes_of(out_shape, axis);
    size_t off = 0;
    for (const NodeId p : parts) {
        const Tensor& t = value(p);
        const Lanes li = lanes_of(t.shape, axis);
        for (size_t o = 0; o < li.outer; ++o)
            for (size_t j = 0; j < li.len; ++j)
                std::copy_n(&t.data[(o * li.len + j) * li.inner],
                            li.inner,
                            &out.value.data[(o * lo.len + off + j) * lo.inner]);
        off += li.len;
    }
    return push(std::move(out), "concat");
}

Graph::NodeId Graph::transpose(NodeId a) {
    const Tensor& A = value(a);
    if (A.rank() != 2) throw ShapeError("transpose: expected 2-D, got " + Tensor::shape_str(A.shape));
    Node out;
    out.op = Op::Transpose;
    out.in = {a};
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor({A.dim(1), A.dim(0)});
    for (int i = 0; i < A.dim(0); ++i)
        for (int j = 0; j < A.dim(1); ++j) out.value.at(j, i) = A.at(i, j);
    return push(std::move(out), "transpose");
}

Graph::NodeId Graph::l2_normalize_rows(NodeId a, double eps) {
    const Tensor& A = value(a);
    if (A.rank() != 2) throw ShapeError("l2_normalize_rows: expected 2-D, got " + Tensor::shape_str(A.shape));
    Node out;
    out.op = Op::L2NormRows;
    out.in = {a};
    out.scalar = eps;
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(A.shape);
    const int N = A.dim(0), D = A.dim(1);
    for (int r = 0; r < N; ++r) {
        double s = 0.0;
        for (int j = 0; j < D; ++j) s += A.at(r, j) * A.at(r, j);
        const double m = std::max(std::sqrt(s), eps);
        for (int j = 0; j < D; ++j) out.value.at(r, j) = A.at(r, j) / m;
    }
    return push(std::move(out), "l2_normalize_rows");
}

Graph::NodeId Graph::reshape(NodeId a, std::vector<int> new_shape) {
    const Tensor& A = value(a);
    if (Tensor::numel_of(new_shape) != A.numel())
        throw ShapeError("reshape: cannot view " + Tensor::shape_str(A.shape) + " as " +
                         Tensor::shape_str(new_shape));
    Node out;
    out.op = Op::Reshape;
    out.in = {a};
    out.requires_grad = node(a).requires_grad;
    out.value = Tensor(std::move(new_shape), A.data);
    return push(std::move(out), "reshape");
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void Graph::backward(NodeId loss) {
    check_id(loss);
    if (backward_done_)
        throw ShapeError("graph: backward already ran; rebuild the graph before differentiating again");
    const Node& ln = node(loss);
    if (ln.value.numel() != 1)
        throw ShapeError("graph: backward requires a scalar loss, got shape " +
                         Tensor::shape_str(ln.value.shape));
    backward_done_ = true;
    if (!ln.requires_grad) return;  // nothing trainable feeds the loss
    ensure_grad(loss);
    mut(loss).grad.data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) backward_node(id);
}

void Graph::backward_node(NodeId id) {
    Node& n = mut(id);
    if (!n.requires_grad || !n.grad_alloc || n.op == Op::Leaf) return;
    const Tensor& g = n.grad;

    auto in_rg = [&](size_t slot) { return node(n.in[slot]).requires_grad; };
    auto in_val = [&](size_t slot) -> const Tensor& { return node(n.in[slot]).value; };
    auto in_grad = [&](size_t slot) -> Tensor& {
        ensure_grad(n.in[slot]);
        return mut(n.in[slot]).grad;
    };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Tensor& A = in_val(0);
            const Tensor& B = in_val(1);
            const int m = A.dim(0), k = A.dim(1), nn = B.dim(1);
            if (in_rg(0)) {
                Tensor& da = in_grad(0);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < nn; ++j) {
                        const double gv = g.at(i, j);
                        if (gv == 0.0) continue;
                        for (int p = 0; p < k; ++p) da.at(i, p) += gv * B.at(p, j);
                    }
            }
            if (in_rg(1)) {
                Tensor& db = in_grad(1);
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const double av = A.at(i, p);
                        if (av == 0.0) continue;
                        double* drow = &db.data[static_cast<size_t>(p) * nn];
                        const double* grow = &g.data[static_cast<size_t>(i) * nn];
                        for (int j = 0; j < nn; ++j) drow[j] += av * grow[j];
                    }
            }
            break;
        }
        case Op::Conv1d: {
            const Tensor& X = in_val(0);
            const Tensor& W = in_val(1);
            const int B = X.dim(0), Ci = X.dim(1), L = X.dim(2);
            const int Co = W.dim(0), K = W.dim(2), Lo = n.value.dim(2);
            const int s = n.stride, p = n.padding;
            const bool need_dx = in_rg(0), need_dw = in_rg(1);
            Tensor* dx = need_dx ? &in_grad(0) : nullptr;
            Tensor* dw = need_dw ? &in_grad(1) : nullptr;
            for (int b = 0; b < B; ++b)
                for (int co = 0; co < Co; ++co) {
                    const double* gout = &g.data[(static_cast<size_t>(b) * Co + co) * Lo];
                    for (int ci = 0; ci < Ci; ++ci) {
                        const double* src = &X.data[(static_cast<size_t>(b) * Ci + ci) * L];
                        const double* ker = &W.data[(static_cast<size_t>(co) * Ci + ci) * K];
                        double* dsrc = need_dx ? &dx->data[(static_cast<size_t>(b) * Ci + ci) * L] : nullptr;
                        double* dker = need_dw ? &dw->data[(static_cast<size_t>(co) * Ci + ci) * K] : nullptr;
                        for (int k = 0; k < K; ++k) {
                            int t0 = 0;
                            if (k < p) t0 = (p - k + s - 1) / s;
                            int t1 = Lo;
                            {
                                const int jmax = L - 1 - k + p;
                                t1 = jmax < 0 ? 0 : std::min(Lo, jmax / s + 1);
                            }
                            const long base = static_cast<long>(t0) * s + k - p;
                            if (need_dx) {
                                const double wv = ker[k];
                                if (wv != 0.0) {
                                    double* d = dsrc + base;
                                    for (int t = t0; t < t1; ++t, d += s) *d += wv * gout[t];
                                }
                            }
                            if (need_dw) {
                                double acc = 0.0;
                                const double* sp = src + base;
                                for (int t = t0; t < t1; ++t, sp += s) acc += gout[t] * *sp;
                                dker[k] += acc;
                            }
                        }
                    }
                }
            break;
        }
        case Op::Add:
        case Op::Sub: {
            const double sgn = n.op == Op::Sub ? -1.0 : 1.0;
            for (int slot = 0; slot < 2; ++slot) {
                if (!in_rg(static_cast<size_t>(slot))) continue;
                const double f = slot == 0 ? 1.0 : sgn;
                Tensor& d = in_grad(static_cast<size_t>(slot));
                const Tensor& v = in_val(static_cast<size_t>(slot));
                if (v.shape == n.value.shape) {
                    for (size_t i = 0; i < g.numel(); ++i) d.data[i] += f * g.data[i];
                } else {
                    const BroadcastIndexer ix(n.value.shape, v.shape);
                    for (size_t i = 0; i < g.numel(); ++i) d.data[ix.map(i)] += f * g.data[i];
                }
            }
            break;
        }
        case Op::Mul: {
            for (int slot = 0; slot < 2; ++slot) {
                if (!in_rg(static_cast<size_t>(slot))) continue;
                Tensor& d = in_grad(static_cast<size_t>(slot));
                const Tensor& self = in_val(static_cast<size_t>(slot));
                const Tensor& other = in_val(static_cast<size_t>(1 - slot));
                if (self.shape == n.value.shape && other.shape == n.value.shape) {
                    for (size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i] * other.data[i];
                } else {
                    const BroadcastIndexer is(n.value.shape, self.shape);
                    const BroadcastIndexer io(n.value.shape, other.shape);
                    for (size_t i = 0; i < g.numel(); ++i)
                        d.data[is.map(i)] += g.data[i] * other.data[io.map(i)];
                }
            }
            break;
        }
        case Op::ScalarMul: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                for (size_t i = 0; i < g.numel(); ++i) d.data[i] += n.scalar * g.data[i];
            }
            break;
        }
        case Op::Relu: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const Tensor& x = in_val(0);
                for (size_t i = 0; i < g.numel(); ++i)
                    if (x.data[i] > 0.0) d.data[i] += g.data[i];
            }
            break;
        }
        case Op::Exp: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                for (size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i] * n.value.data[i];
            }
            break;
        }
        case Op::Log: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const Tensor& x = in_val(0);
                for (size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i] / x.data[i];
            }
            break;
        }
        case Op::SumAll: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const double gv = g.data[0];
                for (size_t i = 0; i < d.numel(); ++i) d.data[i] += gv;
            }
            break;
        }
        case Op::MeanAll: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const double gv = g.data[0] / static_cast<double>(d.numel());
                for (size_t i = 0; i < d.numel(); ++i) d.data[i] += gv;
            }
            break;
        }
        case Op::SumAxis:
        case Op::MeanAxis: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const Lanes l = lanes_of(in_val(0).shape, n.axis);
                const double f = n.op == Op::MeanAxis ? 1.0 / static_cast<double>(l.len) : 1.0;
                for (size_t o = 0; o < l.outer; ++o)
                    for (size_t i = 0; i < l.inner; ++i) {
                        const double gv = f * g.data[o * l.inner + i];
                        for (size_t j = 0; j < l.len; ++j) d.data[(o * l.len + j) * l.inner + i] += gv;
                    }
            }
            break;
        }
        case Op::Softmax: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const Tensor& y = n.value;
                const Lanes l = lanes_of(y.shape, n.axis);
                for (size_t o = 0; o < l.outer; ++o)
                    for (size_t i = 0; i < l.inner; ++i) {
                        double dot = 0.0;
                        for (size_t j = 0; j < l.len; ++j) {
                            const size_t idx = (o * l.len + j) * l.inner + i;
                            dot += g.data[idx] * y.data[idx];
                        }
                        for (size_t j = 0; j < l.len; ++j) {
                            const size_t idx = (o * l.len + j) * l.inner + i;
                            d.data[idx] += y.data[idx] * (g.data[idx] - dot);
                        }
                    }
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& X = in_val(0);
            const Tensor& G = in_val(1);
            const int D = X.shape.back();
            const size_t lanes = X.numel() / static_cast<size_t>(D);
            const bool need_dx = in_rg(0), need_dg = in_rg(1), need_db = in_rg(2);
            Tensor* dx = need_dx ? &in_grad(0) : nullptr;
            Tensor* dg = need_dg ? &in_grad(1) : nullptr;
            Tensor* db = need_db ? &in_grad(2) : nullptr;
            std::vector<double> xhat(static_cast<size_t>(D));
            for (size_t ln = 0; ln < lanes; ++ln) {
                const double* src = &X.data[ln * static_cast<size_t>(D)];
                const double* gy = &g.data[ln * static_cast<size_t>(D)];
                double mu = 0.0;
                for (int j = 0; j < D; ++j) mu += src[j];
                mu /= D;
                double var = 0.0;
                for (int j = 0; j < D; ++j) var += (src[j] - mu) * (src[j] - mu);
                var /= D;
                const double inv = 1.0 / std::sqrt(var + n.scalar);
                for (int j = 0; j < D; ++j) xhat[static_cast<size_t>(j)] = (src[j] - mu) * inv;
                if (need_dg)
                    for (int j = 0; j < D; ++j) dg->data[j] += gy[j] * xhat[static_cast<size_t>(j)];
                if (need_db)
                    for (int j = 0; j < D; ++j) db->data[j] += gy[j];
                if (need_dx) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < D; ++j) {
                        const double gh = gy[j] * G.data[j];
                        m1 += gh;
                        m2 += gh * xhat[static_cast<size_t>(j)];
                    }
                    m1 /= D;
                    m2 /= D;
                    double* dst = &dx->data[ln * static_cast<size_t>(D)];
                    for (int j = 0; j < D; ++j) {
                        const double gh = gy[j] * G.data[j];
                        dst[j] += inv * (gh - m1 - xhat[static_cast<size_t>(j)] * m2);
                    }
                }
            }
            break;
        }
        case Op::Embedding: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const int D = n.value.dim(1);
                for (size_t r = 0; r < n.ids.size(); ++r) {
                    double* drow = &d.data[static_cast<size_t>(n.ids[r]) * D];
                    const double* grow = &g.data[r * static_cast<size_t>(D)];
                    for (int j = 0; j < D; ++j) drow[j] += grow[j];
                }
            }
            break;
        }
        case Op::Concat: {
            const Lanes lo = lanes_of(n.value.shape, n.axis);
            size_t off = 0;
            for (size_t slot = 0; slot < n.in.size(); ++slot) {
                const Tensor& v = in_val(slot);
                const Lanes li = lanes_of(v.shape, n.axis);
                if (in_rg(slot)) {
                    Tensor& d = in_grad(slot);
                    for (size_t o = 0; o < li.outer; ++o)
                        for (size_t j = 0; j < li.len; ++j) {
                            const double* gsrc = &g.data[(o * lo.len + off + j) * lo.inner];
                            double* dst = &d.data[(o * li.len + j) * li.inner];
                            for (size_t i = 0; i < li.inner; ++i) dst[i] += gsrc[i];
                        }
                }
                off += li.len;
            }
            break;
        }
        case Op::Transpose: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const int R = n.value.dim(0), C = n.value.dim(1);
                for (int i = 0; i < R; ++i)
                    for (int j = 0; j < C; ++j) d.at(j, i) += g.at(i, j);
            }
            break;
        }
        case Op::L2NormRows: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                const Tensor& x = in_val(0);
                const int N = x.dim(0), D = x.dim(1);
                for (int r = 0; r < N; ++r) {
                    double s = 0.0;
                    for (int j = 0; j < D; ++j) s += x.at(r, j) * x.at(r, j);
                    const double m = std::sqrt(s);
                    if (m > n.scalar) {
                        double dot = 0.0;
                        for (int j = 0; j < D; ++j) dot += g.at(r, j) * x.at(r, j);
                        const double m3 = m * m * m;
                        for (int j = 0; j < D; ++j)
                            d.at(r, j) += g.at(r, j) / m - x.at(r, j) * dot / m3;
                    } else {
                        for (int j = 0; j < D; ++j) d.at(r, j) += g.at(r, j) / n.scalar;
                    }
                }
            }
            break;
        }
        case Op::Reshape: {
            if (in_rg(0)) {
                Tensor& d = in_grad(0);
                for (size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i];
            }
            break;
        }
    }
}

}  // namespace bioaug
