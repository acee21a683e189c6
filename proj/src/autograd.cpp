#include "affectkit/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "affectkit/errors.hpp"

namespace affectkit::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Index = Eigen::Index;

thread_local bool t_grad_enabled = true;

Index ix(std::size_t v) { return static_cast<Index>(v); }

void require_rank(const Var& v, std::size_t rank, const char* op) {
    if (v.shape().size() != rank) {
        throw ContractViolation(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                to_string(v.shape()));
    }
}

bool needs(const Node& self, std::size_t i) { return self.inputs[i]->requires_grad; }

// Maps every flat output index to the flat index of a broadcast input.
std::vector<std::size_t> broadcast_map(const Shape& out, const Shape& in) {
    const std::size_t rank = out.size();
    std::vector<std::size_t> in_strides(rank, 0);
    std::size_t stride = 1;
    for (std::size_t d = rank; d-- > 0;) {
        in_strides[d] = in[d] == 1 ? 0 : stride;
        stride *= in[d];
    }
    std::vector<std::size_t> map(element_count(out));
    std::vector<std::size_t> idx(rank, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < map.size(); ++flat) {
        map[flat] = offset;
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            offset += in_strides[d];
            if (idx[d] < out[d]) break;
            offset -= in_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    return map;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size()) {
        throw ContractViolation(std::string(op) + ": rank mismatch " + to_string(a) + " vs " + to_string(b));
    }
    Shape out(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) {
        if (a[d] == b[d] || b[d] == 1) {
            out[d] = a[d];
        } else if (a[d] == 1) {
            out[d] = b[d];
        } else {
            throw ContractViolation(std::string(op) + ": incompatible shapes " + to_string(a) + " vs " +
                                    to_string(b));
        }
    }
    return out;
}

struct Broadcast {
    Shape out;
    std::vector<std::size_t> a_map;
    std::vector<std::size_t> b_map;
    bool a_same;
    bool b_same;
};

std::shared_ptr<Broadcast> plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    auto plan = std::make_shared<Broadcast>();
    plan->out = broadcast_shape(a, b, op);
    plan->a_same = a == plan->out;
    plan->b_same = b == plan->out;
    if (!plan->a_same) plan->a_map = broadcast_map(plan->out, a);
    if (!plan->b_same) plan->b_map = broadcast_map(plan->out, b);
    return plan;
}

inline std::size_t pick(bool same, const std::vector<std::size_t>& map, std::size_t i) {
    return same ? i : map[i];
}

template <typename Fwd, typename DA, typename DB>
Var binary(const Var& a, const Var& b, const char* name, Fwd fwd, DA da, DB db) {
    auto plan = plan_broadcast(a.shape(), b.shape(), name);
    Tensor out(plan->out);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = fwd(av[pick(plan->a_same, plan->a_map, i)], bv[pick(plan->b_same, plan->b_map, i)]);
    }
    return make_result(std::move(out), {a, b}, [plan, da, db](Node& self) {
        const Tensor& av = self.inputs[0]->value;
        const Tensor& bv = self.inputs[1]->value;
        const Tensor& g = self.grad;
        if (needs(self, 0)) {
            Tensor ga(av.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t ia = pick(plan->a_same, plan->a_map, i);
                const std::size_t ib = pick(plan->b_same, plan->b_map, i);
                ga[ia] += g[i] * da(av[ia], bv[ib]);
            }
            self.inputs[0]->accumulate(ga);
        }
        if (needs(self, 1)) {
            Tensor gb(bv.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t ia = pick(plan->a_same, plan->a_map, i);
                const std::size_t ib = pick(plan->b_same, plan->b_map, i);
                gb[ib] += g[i] * db(av[ia], bv[ib]);
            }
            self.inputs[1]->accumulate(gb);
        }
    });
}

// Element-wise op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
    Tensor out(x.shape());
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    return make_result(std::move(out), {x}, [deriv](Node& self) {
        const Tensor& xv = self.inputs[0]->value;
        Tensor gx(xv.shape());
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = self.grad[i] * deriv(xv[i], self.value[i]);
        self.inputs[0]->accumulate(gx);
    });
}

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, kh, kw, hout, wout, cin_g, cout_g, k, p;
    ConvSpec spec;
};

ConvGeometry conv_geometry(const Shape& x, const Shape& wt, ConvSpec spec) {
    ConvGeometry g{};
    g.spec = spec;
    g.n = x[0];
    g.cin = x[1];
    g.h = x[2];
    g.w = x[3];
    g.cout = wt[0];
    g.kh = wt[2];
    g.kw = wt[3];
    if (spec.groups == 0 || spec.stride == 0 || g.cin % spec.groups != 0 || g.cout % spec.groups != 0 ||
        wt[1] * spec.groups != g.cin) {
        throw ContractViolation("conv2d: weight " + to_string(wt) + " incompatible with input " + to_string(x) +
                                " and groups " + std::to_string(spec.groups));
    }
    if (g.h + 2 * spec.padding < g.kh || g.w + 2 * spec.padding < g.kw) {
        throw ContractViolation("conv2d: kernel larger than padded input " + to_string(x));
    }
    g.hout = (g.h + 2 * spec.padding - g.kh) / spec.stride + 1;
    g.wout = (g.w + 2 * spec.padding - g.kw) / spec.stride + 1;
    g.cin_g = g.cin / spec.groups;
    g.cout_g = g.cout / spec.groups;
    g.k = g.cin_g * g.kh * g.kw;
    g.p = g.hout * g.wout;
    return g;
}

bool is_pointwise(const ConvGeometry& g) {
    return g.kh == 1 && g.kw == 1 && g.spec.stride == 1 && g.spec.padding == 0;
}

// Unfolds the input channels of group `grp` of sample `n` into a (k, p) matrix.
void im2col(const ConvGeometry& g, const double* x, std::size_t n, std::size_t grp, double* col) {
    const std::size_t pad = g.spec.padding;
    const std::size_t stride = g.spec.stride;
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.cin_g; ++c) {
        const double* plane = x + ((n * g.cin) + grp * g.cin_g + c) * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
                double* dst = col + row * g.p;
                for (std::size_t oy = 0; oy < g.hout; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t ox = 0; ox < g.wout; ++ox) {
                        const std::ptrdiff_t jx = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        const bool inside = iy >= 0 && jx >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                            jx < static_cast<std::ptrdiff_t>(g.w);
                        dst[oy * g.wout + ox] = inside ? plane[iy * static_cast<std::ptrdiff_t>(g.w) + jx] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const ConvGeometry& g, const double* col, std::size_t n, std::size_t grp, double* dx) {
    const std::size_t pad = g.spec.padding;
    const std::size_t stride = g.spec.stride;
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.cin_g; ++c) {
        double* plane = dx + ((n * g.cin) + grp * g.cin_g + c) * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
                const double* src = col + row * g.p;
                for (std::size_t oy = 0; oy < g.hout; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    for (std::size_t ox = 0; ox < g.wout; ++ox) {
                        const std::ptrdiff_t jx = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (jx < 0 || jx >= static_cast<std::ptrdiff_t>(g.w)) continue;
                        plane[iy * static_cast<std::ptrdiff_t>(g.w) + jx] += src[oy * g.wout + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

// ---- Node / Var ----------------------------------------------------------

void Node::accumulate(const Tensor& g) {
    if (grad.empty()) {
        grad = g;
    } else {
        grad += g;
    }
}

void Node::accumulate(std::size_t i, double g) {
    if (grad.empty()) grad = Tensor(value.shape());
    grad[i] += g;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
}

Tensor Var::grad() const { return node_->has_grad() ? node_->grad : Tensor(node_->value.shape()); }

void Var::backward() const {
    if (node_->value.size() != 1) {
        throw ContractViolation("backward() without a seed requires a scalar root, got " +
                                to_string(node_->value.shape()));
    }
    backward(Tensor(node_->value.shape(), 1.0));
}

void Var::backward(const Tensor& seed) const {
    if (seed.shape() != node_->value.shape()) {
        throw ContractViolation("backward seed shape mismatch");
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; recurrent graphs get deep.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->accumulate(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->has_grad()) node->backward(*node);
    }
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    const bool record = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                      [](const Var& v) { return v.requires_grad(); });
    if (!record) return Var(std::move(value), false);
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
    return Var::from_node(std::move(node));
}

// ---- convolution / linear ------------------------------------------------

Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, ConvSpec spec) {
    require_rank(x, 4, "conv2d input");
    require_rank(weight, 4, "conv2d weight");
    const ConvGeometry g = conv_geometry(x.shape(), weight.shape(), spec);
    if (bias && bias->shape() != Shape{g.cout}) {
        throw ContractViolation("conv2d: bias shape " + to_string(bias->shape()));
    }

    Tensor out({g.n, g.cout, g.hout, g.wout});
    const double* xd = x.value().data();
    const double* wd = weight.value().data();
    std::vector<double> col(is_pointwise(g) ? 0 : g.k * g.p);
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t grp = 0; grp < spec.groups; ++grp) {
            const double* colp;
            if (is_pointwise(g)) {
                colp = xd + (n * g.cin + grp * g.cin_g) * g.p;
            } else {
                im2col(g, xd, n, grp, col.data());
                colp = col.data();
            }
            ConstMapMat cm(colp, ix(g.k), ix(g.p));
            ConstMapMat wm(wd + grp * g.cout_g * g.k, ix(g.cout_g), ix(g.k));
            MapMat om(out.data() + (n * g.cout + grp * g.cout_g) * g.p, ix(g.cout_g), ix(g.p));
            om.noalias() = wm * cm;
        }
        if (bias) {
            for (std::size_t c = 0; c < g.cout; ++c) {
                double* plane = out.data() + (n * g.cout + c) * g.p;
                const double b = bias->value()[c];
                for (std::size_t i = 0; i < g.p; ++i) plane[i] += b;
            }
        }
    }

    std::vector<Var> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    return make_result(std::move(out), std::move(inputs), [g](Node& self) {
        const Tensor& xv = self.inputs[0]->value;
        const Tensor& wv = self.inputs[1]->value;
        const Tensor& go = self.grad;
        const bool want_x = needs(self, 0);
        const bool want_w = needs(self, 1);
        const bool want_b = self.inputs.size() > 2 && needs(self, 2);
        Tensor gx = want_x ? Tensor(xv.shape()) : Tensor();
        Tensor gw = want_w ? Tensor(wv.shape()) : Tensor();
        Tensor gb = want_b ? Tensor({g.cout}) : Tensor();
        std::vector<double> col(g.k * g.p);
        std::vector<double> dcol(g.k * g.p);
        for (std::size_t n = 0; n < g.n; ++n) {
            for (std::size_t grp = 0; grp < g.spec.groups; ++grp) {
                ConstMapMat gom(go.data() + (n * g.cout + grp * g.cout_g) * g.p, ix(g.cout_g), ix(g.p));
                if (want_w) {
                    const double* colp;
                    if (is_pointwise(g)) {
                        colp = xv.data() + (n * g.cin + grp * g.cin_g) * g.p;
                    } else {
                        im2col(g, xv.data(), n, grp, col.data());
                        colp = col.data();
                    }
                    ConstMapMat cm(colp, ix(g.k), ix(g.p));
                    MapMat gwm(gw.data() + grp * g.cout_g * g.k, ix(g.cout_g), ix(g.k));
                    gwm.noalias() += gom * cm.transpose();
                }
                if (want_x) {
                    ConstMapMat wm(wv.data() + grp * g.cout_g * g.k, ix(g.cout_g), ix(g.k));
                    if (is_pointwise(g)) {
                        MapMat gxm(gx.data() + (n * g.cin + grp * g.cin_g) * g.p, ix(g.k), ix(g.p));
                        gxm.noalias() += wm.transpose() * gom;
                    } else {
                        MapMat dcm(dcol.data(), ix(g.k), ix(g.p));
                        dcm.noalias() = wm.transpose() * gom;
                        col2im(g, dcol.data(), n, grp, gx.data());
                    }
                }
            }
            if (want_b) {
                for (std::size_t c = 0; c < g.cout; ++c) {
                    const double* plane = go.data() + (n * g.cout + c) * g.p;
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.p; ++i) s += plane[i];
                    gb[c] += s;
                }
            }
        }
        if (want_x) self.inputs[0]->accumulate(gx);
        if (want_w) self.inputs[1]->accumulate(gw);
        if (want_b) self.inputs[2]->accumulate(gb);
    });
}

Var linear(const Var& x, const Var& weight, const std::optional<Var>& bias) {
    require_rank(x, 2, "linear input");
    require_rank(weight, 2, "linear weight");
    const std::size_t n = x.shape()[0];
    const std::size_t in = x.shape()[1];
    const std::size_t out_w = weight.shape()[0];
    if (weight.shape()[1] != in) {
        throw ContractViolation("linear: input width " + std::to_string(in) + " does not match weight " +
                                to_string(weight.shape()));
    }
    if (bias && bias->shape() != Shape{out_w}) {
        throw ContractViolation("linear: bias shape " + to_string(bias->shape()));
    }
    Tensor out({n, out_w});
    ConstMapMat xm(x.value().data(), ix(n), ix(in));
    ConstMapMat wm(weight.value().data(), ix(out_w), ix(in));
    MapMat om(out.data(), ix(n), ix(out_w));
    om.noalias() = xm * wm.transpose();
    if (bias) {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out_w; ++c) out.at(r, c) += bias->value()[c];
    }
    std::vector<Var> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    return make_result(std::move(out), std::move(inputs), [n, in, out_w](Node& self) {
        ConstMapMat gm(self.grad.data(), ix(n), ix(out_w));
        if (needs(self, 0)) {
            Tensor gx({n, in});
            ConstMapMat wm(self.inputs[1]->value.data(), ix(out_w), ix(in));
            MapMat(gx.data(), ix(n), ix(in)).noalias() = gm * wm;
            self.inputs[0]->accumulate(gx);
        }
        if (needs(self, 1)) {
            Tensor gw({out_w, in});
            ConstMapMat xm(self.inputs[0]->value.data(), ix(n), ix(in));
            MapMat(gw.data(), ix(out_w), ix(in)).noalias() = gm.transpose() * xm;
            self.inputs[1]->accumulate(gw);
        }
        if (self.inputs.size() > 2 && needs(self, 2)) {
            Tensor gb({out_w});
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < out_w; ++c) gb[c] += self.grad.at(r, c);
            self.inputs[2]->accumulate(gb);
        }
    });
}

// ---- element-wise --------------------------------------------------------

Var add(const Var& a, const Var& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var mul(const Var& a, const Var& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var maximum(const Var& a, const Var& b) {
    return binary(
        a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y) { return x >= y ? 1.0 : 0.0; }, [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Var scale(const Var& x, double factor) {
    return unary(
        x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var sigmoid(const Var& x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
    return unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& x) {
    return unary(
        x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var hard_swish(const Var& x) {
    return unary(
        x, [](double v) { return v * std::clamp(v + 3.0, 0.0, 6.0) / 6.0; },
        [](double v, double) {
            if (v <= -3.0) return 0.0;
            if (v >= 3.0) return 1.0;
            return (2.0 * v + 3.0) / 6.0;
        });
}

Var prelu(const Var& x, const Var& alpha) {
    const Shape& s = x.shape();
    if (s.size() < 2 || alpha.shape() != Shape{s[1]}) {
        throw ContractViolation("prelu: alpha " + to_string(alpha.shape()) + " vs input " + to_string(s));
    }
    const std::size_t channels = s[1];
    const std::size_t inner = element_count(Shape(s.begin() + 2, s.end()));
    Tensor out(s);
    const Tensor& xv = x.value();
    const Tensor& av = alpha.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        out[i] = v > 0 ? v : av[(i / inner) % channels] * v;
    }
    return make_result(std::move(out), {x, alpha}, [channels, inner](Node& self) {
        const Tensor& xv = self.inputs[0]->value;
        const Tensor& av = self.inputs[1]->value;
        const Tensor& g = self.grad;
        if (needs(self, 0)) {
            Tensor gx(xv.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] = xv[i] > 0 ? g[i] : g[i] * av[(i / inner) % channels];
            }
            self.inputs[0]->accumulate(gx);
        }
        if (needs(self, 1)) {
            Tensor ga(av.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xv[i] <= 0) ga[(i / inner) % channels] += g[i] * xv[i];
            }
            self.inputs[1]->accumulate(ga);
        }
    });
}

// ---- reductions / reshaping ----------------------------------------------

Var mean_axis(const Var& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw ContractViolation("mean_axis: axis out of range");
    const std::size_t outer = element_count(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
    const std::size_t extent = s[axis];
    const std::size_t inner = element_count(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
    Shape out_shape = s;
    out_shape[axis] = 1;
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e)
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * extent + e) * inner + i];
    const double inv = 1.0 / static_cast<double>(extent);
    for (auto& v : out.values()) v *= inv;
    return make_result(std::move(out), {x}, [outer, extent, inner, inv](Node& self) {
        Tensor gx(self.inputs[0]->value.shape());
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t e = 0; e < extent; ++e)
                for (std::size_t i = 0; i < inner; ++i) gx[(o * extent + e) * inner + i] = self.grad[o * inner + i] * inv;
        self.inputs[0]->accumulate(gx);
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return make_result(std::move(out), {x}, [](Node& self) {
        self.inputs[0]->accumulate(self.grad.reshaped(self.inputs[0]->value.shape()));
    });
}

Var sum_all(const Var& x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return make_result(Tensor::scalar(s), {x}, [](Node& self) {
        self.inputs[0]->accumulate(Tensor(self.inputs[0]->value.shape(), self.grad[0]));
    });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
    require_rank(x, 2, "slice_cols");
    const std::size_t rows = x.shape()[0];
    const std::size_t cols = x.shape()[1];
    if (begin > end || end > cols) throw ContractViolation("slice_cols: range out of bounds");
    const std::size_t width = end - begin;
    Tensor out({rows, width});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c) out.at(r, c) = x.value().at(r, begin + c);
    return make_result(std::move(out), {x}, [rows, cols, begin, width](Node& self) {
        Tensor gx({rows, cols});
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < width; ++c) gx.at(r, begin + c) = self.grad.at(r, c);
        self.inputs[0]->accumulate(gx);
    });
}

Var select_rows(const Var& x, const std::vector<std::size_t>& rows) {
    require_rank(x, 2, "select_rows");
    const std::size_t total = x.shape()[0];
    const std::size_t cols = x.shape()[1];
    Tensor out({rows.size(), cols});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= total) throw ContractViolation("select_rows: row index out of range");
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = x.value().at(rows[r], c);
    }
    return make_result(std::move(out), {x}, [rows, total, cols](Node& self) {
        Tensor gx({total, cols});
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < cols; ++c) gx.at(rows[r], c) += self.grad.at(r, c);
        self.inputs[0]->accumulate(gx);
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
    const std::size_t cols = parts.front().shape().at(1);
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_rows");
        if (p.shape()[1] != cols) throw ContractViolation("concat_rows: column mismatch");
        total += p.shape()[0];
    }
    Tensor out({total, cols});
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset * cols);
        offset += p.shape()[0];
    }
    return make_result(std::move(out), parts, [cols](Node& self) {
        std::size_t offset = 0;
        for (auto& in : self.inputs) {
            const std::size_t rows = in->value.shape()[0];
            if (in->requires_grad) in->accumulate(self.grad.rows(offset, offset + rows));
            offset += rows;
        }
        (void)cols;
    });
}

Var time_step(const Var& x, std::size_t t) {
    require_rank(x, 3, "time_step");
    const std::size_t b = x.shape()[0];
    const std::size_t steps = x.shape()[1];
    const std::size_t d = x.shape()[2];
    if (t >= steps) throw ContractViolation("time_step: t out of range");
    Tensor out({b, d});
    for (std::size_t i = 0; i < b; ++i)
        std::copy_n(x.value().data() + (i * steps + t) * d, d, out.data() + i * d);
    return make_result(std::move(out), {x}, [b, steps, d, t](Node& self) {
        Tensor gx({b, steps, d});
        for (std::size_t i = 0; i < b; ++i)
            std::copy_n(self.grad.data() + i * d, d, gx.data() + (i * steps + t) * d);
        self.inputs[0]->accumulate(gx);
    });
}

Var external(double value, std::vector<Var> inputs, std::vector<Tensor> grads) {
    if (inputs.size() != grads.size()) throw ContractViolation("external: inputs/grads size mismatch");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].shape() != grads[i].shape()) throw ContractViolation("external: gradient shape mismatch");
    }
    auto shared = std::make_shared<std::vector<Tensor>>(std::move(grads));
    return make_result(Tensor::scalar(value), std::move(inputs), [shared](Node& self) {
        const double upstream = self.grad[0];
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            if (!needs(self, i)) continue;
            Tensor g = (*shared)[i];
            for (auto& v : g.values()) v *= upstream;
            self.inputs[i]->accumulate(g);
        }
    });
}

}  // namespace affectkit::ag
