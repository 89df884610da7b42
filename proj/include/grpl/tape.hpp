#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grpl/common.hpp"

namespace grpl {

// Reverse-mode autodiff over vector-valued operations. Values and gradients
// live in one arena that is reused across sequences; parameter matrices stay
// outside the tape and accumulate their gradients into caller-owned buffers.
//
// Real is float in training and double in the finite-difference shadow
// checks, so the same graph code serves both.
template <class Real>
class Tape {
public:
    using NodeId = int32_t;

    int add_param(const Real* w, Real* g, int rows, int cols) {
        params_.push_back({w, g, rows, cols});
        return static_cast<int>(params_.size()) - 1;
    }

    // Drops all nodes but keeps parameter registrations and arena capacity.
    void reset() {
        nodes_.clear();
        pool_.clear();
        buf_.clear();
    }

    NodeId input(std::span<const Real> v) {
        NodeId id = make_node(Op::leaf, static_cast<int>(v.size()));
        Real* dst = val(id);
        for (size_t i = 0; i < v.size(); ++i) dst[i] = v[i];
        return id;
    }

    NodeId zeros(int len) { return make_node(Op::leaf, len); }

    NodeId embed(int param, int row) {
        const Param& p = params_[static_cast<size_t>(param)];
        if (row < 0 || row >= p.rows) throw RuntimeFailure("embed row out of range");
        NodeId id = make_node(Op::embed, p.cols);
        node(id).param = param;
        node(id).idx = row;
        const Real* src = p.w + static_cast<size_t>(row) * p.cols;
        Real* dst = val(id);
        for (int i = 0; i < p.cols; ++i) dst[i] = src[i];
        return id;
    }

    NodeId matvec(int param, NodeId x) {
        const Param& p = params_[static_cast<size_t>(param)];
        check_len(x, p.cols, "matvec");
        NodeId id = make_node(Op::matvec, p.rows, x);
        node(id).param = param;
        const Real* xv = val(x);
        const Real* w = p.w;
        Real* out = val(id);
        for (int r = 0; r < p.rows; ++r) {
            const Real* wr = w + static_cast<size_t>(r) * p.cols;
            Real acc = 0;
            for (int c = 0; c < p.cols; ++c) acc += wr[c] * xv[c];
            out[r] = acc;
        }
        return id;
    }

    NodeId add_bias(NodeId x, int param) {
        const Param& p = params_[static_cast<size_t>(param)];
        check_len(x, p.rows * p.cols, "add_bias");
        NodeId id = make_node(Op::add_bias, len(x), x);
        node(id).param = param;
        const Real* xv = val(x);
        Real* out = val(id);
        for (int i = 0; i < len(id); ++i) out[i] = xv[i] + p.w[i];
        return id;
    }

    NodeId add(NodeId a, NodeId b) {
        check_len(b, len(a), "add");
        NodeId id = make_node(Op::add, len(a), a, b);
        const Real* av = val(a);
        const Real* bv = val(b);
        Real* out = val(id);
        for (int i = 0; i < len(id); ++i) out[i] = av[i] + bv[i];
        return id;
    }

    NodeId mul(NodeId a, NodeId b) {
        check_len(b, len(a), "mul");
        NodeId id = make_node(Op::mul, len(a), a, b);
        const Real* av = val(a);
        const Real* bv = val(b);
        Real* out = val(id);
        for (int i = 0; i < len(id); ++i) out[i] = av[i] * bv[i];
        return id;
    }

    // Gated blend (1 - z) * h + z * n.
    NodeId lerp(NodeId z, NodeId h, NodeId n) {
        check_len(h, len(z), "lerp");
        check_len(n, len(z), "lerp");
        NodeId id = make_node(Op::lerp, len(z), z, h);
        node(id).c = n;
        const Real* zv = val(z);
        const Real* hv = val(h);
        const Real* nv = val(n);
        Real* out = val(id);
        for (int i = 0; i < len(id); ++i) out[i] = (Real(1) - zv[i]) * hv[i] + zv[i] * nv[i];
        return id;
    }

    NodeId sigmoid(NodeId a) {
        NodeId id = make_node(Op::sigmoid, len(a), a);
        const Real* av = val(a);
        Real* out = val(id);
        for (int i = 0; i < len(id); ++i) out[i] = Real(1) / (Real(1) + std::exp(-av[i]));
        return id;
    }

    NodeId tanh_(NodeId a) {
        NodeId id = make_node(Op::tanh_, len(a), a);
        const Real* av = val(a);
        Real* out = val(id);
        for (int i = 0; i < len(id); ++i) out[i] = std::tanh(av[i]);
        return id;
    }

    NodeId relu(NodeId a) {
        NodeId id = make_node(Op::relu, len(a), a);
        const Real* av = val(a);
        Real* out = val(id);
        for (int i = 0; i < len(id); ++i) out[i] = av[i] > Real(0) ? av[i] : Real(0);
        return id;
    }

    // log softmax(x)[index], a scalar node. Softmax probabilities are kept
    // as aux data for the backward pass.
    NodeId logsoftmax_pick(NodeId x, int index) {
        const int n = len(x);
        if (index < 0 || index >= n) throw RuntimeFailure("logsoftmax_pick index out of range");
        NodeId id = make_node(Op::logsoftmax_pick, 1, x);
        node(id).idx = index;
        alloc_aux(id, n);
        const Real* xv = val(x);
        Real m = xv[0];
        for (int i = 1; i < n; ++i) m = std::max(m, xv[i]);
        Real sum = 0;
        Real* probs = aux(id);
        for (int i = 0; i < n; ++i) {
            probs[i] = std::exp(xv[i] - m);
            sum += probs[i];
        }
        for (int i = 0; i < n; ++i) probs[i] /= sum;
        val(id)[0] = xv[index] - m - std::log(sum);
        return id;
    }

    NodeId dot(NodeId a, NodeId b) {
        check_len(b, len(a), "dot");
        NodeId id = make_node(Op::dot, 1, a, b);
        const Real* av = val(a);
        const Real* bv = val(b);
        Real acc = 0;
        for (int i = 0; i < len(a); ++i) acc += av[i] * bv[i];
        val(id)[0] = acc;
        return id;
    }

    // k scalar nodes -> one length-k vector.
    NodeId stack(std::span<const NodeId> scalars) {
        NodeId id = make_node(Op::stack, static_cast<int>(scalars.size()));
        node(id).extra = static_cast<int32_t>(pool_.size());
        node(id).extra_n = static_cast<int32_t>(scalars.size());
        Real* out = val(id);
        for (size_t i = 0; i < scalars.size(); ++i) {
            check_len(scalars[i], 1, "stack");
            pool_.push_back(scalars[i]);
            out[i] = val(scalars[i])[0];
        }
        return id;
    }

    NodeId softmax(NodeId a) {
        NodeId id = make_node(Op::softmax, len(a), a);
        const Real* av = val(a);
        Real* out = val(id);
        Real m = av[0];
        for (int i = 1; i < len(a); ++i) m = std::max(m, av[i]);
        Real sum = 0;
        for (int i = 0; i < len(a); ++i) {
            out[i] = std::exp(av[i] - m);
            sum += out[i];
        }
        for (int i = 0; i < len(a); ++i) out[i] /= sum;
        return id;
    }

    // sum_k alpha[k] * vec_k with alpha a length-k vector node.
    NodeId wsum(NodeId alpha, std::span<const NodeId> vecs) {
        if (len(alpha) != static_cast<int>(vecs.size())) {
            throw RuntimeFailure("wsum arity mismatch");
        }
        const int dim = len(vecs[0]);
        NodeId id = make_node(Op::wsum, dim, alpha);
        node(id).extra = static_cast<int32_t>(pool_.size());
        node(id).extra_n = static_cast<int32_t>(vecs.size());
        for (NodeId v : vecs) {
            check_len(v, dim, "wsum");
            pool_.push_back(v);
        }
        const Real* av = val(alpha);
        Real* out = val(id);
        for (int i = 0; i < dim; ++i) out[i] = 0;
        for (size_t k = 0; k < vecs.size(); ++k) {
            const Real* vv = val(vecs[k]);
            for (int i = 0; i < dim; ++i) out[i] += av[k] * vv[i];
        }
        return id;
    }

    // x / rms(x) * gain.
    NodeId rmsnorm(NodeId x, int gain_param) {
        const Param& p = params_[static_cast<size_t>(gain_param)];
        const int n = len(x);
        check_len(x, p.rows * p.cols, "rmsnorm");
        NodeId id = make_node(Op::rmsnorm, n, x);
        node(id).param = gain_param;
        alloc_aux(id, 1);
        const Real* xv = val(x);
        Real ms = 0;
        for (int i = 0; i < n; ++i) ms += xv[i] * xv[i];
        const Real r = std::sqrt(ms / Real(n) + Real(1e-8));
        aux(id)[0] = r;
        Real* out = val(id);
        for (int i = 0; i < n; ++i) out[i] = xv[i] / r * p.w[i];
        return id;
    }

    NodeId scale(NodeId a, Real c) {
        NodeId id = make_node(Op::scale_, len(a), a);
        alloc_aux(id, 1);
        aux(id)[0] = c;
        const Real* av = val(a);
        Real* out = val(id);
        for (int i = 0; i < len(a); ++i) out[i] = av[i] * c;
        return id;
    }

    std::span<const Real> value(NodeId id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return {buf_.data() + n.voff, static_cast<size_t>(n.vlen)};
    }

    void seed_grad(NodeId id, Real g) {
        if (len(id) != 1) throw RuntimeFailure("seed_grad expects a scalar node");
        grad(id)[0] += g;
    }

    void backward() {
        for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) {
            backward_node(i);
        }
    }

private:
    enum class Op : uint8_t {
        leaf, embed, matvec, add_bias, add, mul, lerp, sigmoid, tanh_, relu,
        logsoftmax_pick, dot, stack, softmax, wsum, rmsnorm, scale_,
    };

    struct Param {
        const Real* w;
        Real* g;
        int rows, cols;
    };

    struct Node {
        Op op;
        NodeId a = -1, b = -1, c = -1;
        int32_t param = -1;
        int32_t idx = 0;
        int32_t voff = 0, vlen = 0, goff = 0, aoff = -1;
        int32_t extra = -1, extra_n = 0;
    };

    NodeId make_node(Op op, int length, NodeId a = -1, NodeId b = -1) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.vlen = length;
        n.voff = static_cast<int32_t>(buf_.size());
        n.goff = n.voff + length;
        buf_.resize(buf_.size() + 2 * static_cast<size_t>(length), Real(0));
        nodes_.push_back(n);
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    void alloc_aux(NodeId id, int length) {
        node(id).aoff = static_cast<int32_t>(buf_.size());
        buf_.resize(buf_.size() + static_cast<size_t>(length), Real(0));
    }

    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    int len(NodeId id) const { return nodes_[static_cast<size_t>(id)].vlen; }
    Real* val(NodeId id) { return buf_.data() + nodes_[static_cast<size_t>(id)].voff; }
    Real* grad(NodeId id) { return buf_.data() + nodes_[static_cast<size_t>(id)].goff; }
    Real* aux(NodeId id) { return buf_.data() + nodes_[static_cast<size_t>(id)].aoff; }

    void check_len(NodeId id, int expect, const char* where) const {
        if (len(id) != expect) {
            throw RuntimeFailure(std::string(where) + ": operand length " +
                                 std::to_string(len(id)) + " != " + std::to_string(expect));
        }
    }

    void backward_node(NodeId id) {
        Node& n = node(id);
        const Real* g = grad(id);
        const Real* v = val(id);
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::embed: {
                Param& p = params_[static_cast<size_t>(n.param)];
                Real* dst = p.g + static_cast<size_t>(n.idx) * p.cols;
                for (int i = 0; i < n.vlen; ++i) dst[i] += g[i];
                break;
            }
            case Op::matvec: {
                Param& p = params_[static_cast<size_t>(n.param)];
                const Real* xv = val(n.a);
                Real* gx = grad(n.a);
                for (int r = 0; r < p.rows; ++r) {
                    const Real gr = g[r];
                    if (gr == Real(0)) continue;
                    const Real* wr = p.w + static_cast<size_t>(r) * p.cols;
                    Real* gwr = p.g + static_cast<size_t>(r) * p.cols;
                    for (int c = 0; c < p.cols; ++c) {
                        gwr[c] += gr * xv[c];
                        gx[c] += gr * wr[c];
                    }
                }
                break;
            }
            case Op::add_bias: {
                Param& p = params_[static_cast<size_t>(n.param)];
                Real* gx = grad(n.a);
                for (int i = 0; i < n.vlen; ++i) {
                    p.g[i] += g[i];
                    gx[i] += g[i];
                }
                break;
            }
            case Op::add: {
                Real* ga = grad(n.a);
                Real* gb = grad(n.b);
                for (int i = 0; i < n.vlen; ++i) {
                    ga[i] += g[i];
                    gb[i] += g[i];
                }
                break;
            }
            case Op::mul: {
                const Real* av = val(n.a);
                const Real* bv = val(n.b);
                Real* ga = grad(n.a);
                Real* gb = grad(n.b);
                for (int i = 0; i < n.vlen; ++i) {
                    ga[i] += g[i] * bv[i];
                    gb[i] += g[i] * av[i];
                }
                break;
            }
            case Op::lerp: {
                const Real* zv = val(n.a);
                const Real* hv = val(n.b);
                const Real* nv = val(n.c);
                Real* gz = grad(n.a);
                Real* gh = grad(n.b);
                Real* gn = grad(n.c);
                for (int i = 0; i < n.vlen; ++i) {
                    gz[i] += g[i] * (nv[i] - hv[i]);
                    gh[i] += g[i] * (Real(1) - zv[i]);
                    gn[i] += g[i] * zv[i];
                }
                break;
            }
            case Op::sigmoid: {
                Real* ga = grad(n.a);
                for (int i = 0; i < n.vlen; ++i) ga[i] += g[i] * v[i] * (Real(1) - v[i]);
                break;
            }
            case Op::tanh_: {
                Real* ga = grad(n.a);
                for (int i = 0; i < n.vlen; ++i) ga[i] += g[i] * (Real(1) - v[i] * v[i]);
                break;
            }
            case Op::relu: {
                const Real* av = val(n.a);
                Real* ga = grad(n.a);
                for (int i = 0; i < n.vlen; ++i) ga[i] += av[i] > Real(0) ? g[i] : Real(0);
                break;
            }
            case Op::logsoftmax_pick: {
                const Real gs = g[0];
                if (gs == Real(0)) break;
                const Real* probs = aux(id);
                Real* gx = grad(n.a);
                const int nn = len(n.a);
                for (int i = 0; i < nn; ++i) gx[i] -= gs * probs[i];
                gx[n.idx] += gs;
                break;
            }
            case Op::dot: {
                const Real gs = g[0];
                const Real* av = val(n.a);
                const Real* bv = val(n.b);
                Real* ga = grad(n.a);
                Real* gb = grad(n.b);
                for (int i = 0; i < len(n.a); ++i) {
                    ga[i] += gs * bv[i];
                    gb[i] += gs * av[i];
                }
                break;
            }
            case Op::stack: {
                for (int k = 0; k < n.extra_n; ++k) {
                    grad(pool_[static_cast<size_t>(n.extra + k)])[0] += g[k];
                }
                break;
            }
            case Op::softmax: {
                Real* ga = grad(n.a);
                Real pg = 0;
                for (int i = 0; i < n.vlen; ++i) pg += v[i] * g[i];
                for (int i = 0; i < n.vlen; ++i) ga[i] += v[i] * (g[i] - pg);
                break;
            }
            case Op::wsum: {
                const Real* av = val(n.a);
                Real* galpha = grad(n.a);
                for (int k = 0; k < n.extra_n; ++k) {
                    NodeId vk = pool_[static_cast<size_t>(n.extra + k)];
                    const Real* vv = val(vk);
                    Real* gv = grad(vk);
                    Real dk = 0;
                    for (int i = 0; i < n.vlen; ++i) {
                        dk += g[i] * vv[i];
                        gv[i] += av[k] * g[i];
                    }
                    galpha[k] += dk;
                }
                break;
            }
            case Op::rmsnorm: {
                Param& p = params_[static_cast<size_t>(n.param)];
                const Real r = aux(id)[0];
                const Real* xv = val(n.a);
                Real* gx = grad(n.a);
                const int nn = n.vlen;
                Real dot_gx = 0;  // sum_i g_i * gain_i * x_i
                for (int i = 0; i < nn; ++i) {
                    p.g[i] += g[i] * xv[i] / r;
                    dot_gx += g[i] * p.w[i] * xv[i];
                }
                const Real inv_r = Real(1) / r;
                const Real corr = dot_gx / (Real(nn) * r * r * r);
                for (int i = 0; i < nn; ++i) gx[i] += g[i] * p.w[i] * inv_r - xv[i] * corr;
                break;
            }
            case Op::scale_: {
                const Real c = aux(id)[0];
                Real* ga = grad(n.a);
                for (int i = 0; i < n.vlen; ++i) ga[i] += g[i] * c;
                break;
            }
        }
    }

    std::vector<Param> params_;
    std::vector<Node> nodes_;
    std::vector<NodeId> pool_;
    std::vector<Real> buf_;
};

}  // namespace grpl
