#include "hutd/grad.hpp"

#include "hutd/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace hutd::ad {

struct Node {
    Tensor value;
    Tensor grad;
    bool grad_slot = false;
    bool populated = false;
    bool stop = false;
    bool leaf = true;
    bool requires_grad = false;
    const char* op = "constant";
    std::vector<Var> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;
};

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b)
{
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                                shape_string(b));
}

Var make_node(const char* op, Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> bw)
{
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    n->leaf = false;
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward = std::move(bw);
    return Var(std::move(n));
}

Tensor& grad_of(const Var& v)
{
    Node* n = v.node();
    if (!n->grad_slot) {
        n->grad = Tensor(n->value.shape());
        n->grad_slot = true;
    }
    return n->grad;
}

bool live(const Var& v) { return v.requires_grad(); }

// Row geometry of a rank-1 or rank-2 tensor for row-wise operations.
struct Rows {
    std::size_t n;
    std::size_t d;
};

Rows row_geometry(const char* op, const Tensor& t)
{
    if (t.rank() == 1) return {1, t.dim(0)};
    if (t.rank() == 2) return {t.dim(0), t.dim(1)};
    throw std::invalid_argument(std::string(op) + ": rank-1 or rank-2 operand required, got " +
                                shape_string(t.shape()));
}

Shape reduced_shape(const Tensor& t) { return t.rank() == 1 ? Shape{} : Shape{t.dim(0)}; }

enum class Broadcast { Same, Scalar, Row };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b)
{
    if (a.shape() == b.shape()) return Broadcast::Same;
    if (b.rank() == 0 && b.numel() == 1) return Broadcast::Scalar;
    if (a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1)) return Broadcast::Row;
    shape_error(op, a.shape(), b.shape());
}

template <class Fn>
Tensor map(const Tensor& a, Fn fn)
{
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = fn(a[i]);
    return out;
}

// Reduces an output-shaped gradient onto a broadcast right operand.
void accumulate_broadcast(Tensor& target, const Tensor& g, Broadcast kind, double sign)
{
    switch (kind) {
    case Broadcast::Same:
        for (std::size_t i = 0; i < g.numel(); ++i) target[i] += sign * g[i];
        break;
    case Broadcast::Scalar: {
        double s = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) s += g[i];
        target[0] += sign * s;
        break;
    }
    case Broadcast::Row: {
        const std::size_t n = g.dim(0), d = g.dim(1);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) target[j] += sign * g[r * d + j];
        break;
    }
    }
}

Var add_sub(const char* op, const Var& a, const Var& b, double sign)
{
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Broadcast kind = broadcast_kind(op, av, bv);
    Tensor out = av;
    switch (kind) {
    case Broadcast::Same:
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += sign * bv[i];
        break;
    case Broadcast::Scalar:
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += sign * bv[0];
        break;
    case Broadcast::Row: {
        const std::size_t d = av.dim(1);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += sign * bv[i % d];
        break;
    }
    }
    return make_node(op, std::move(out), {a, b}, [a, b, kind, sign](Node& self) {
        if (live(a)) {
            Tensor& ga = grad_of(a);
            for (std::size_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
        }
        if (live(b)) accumulate_broadcast(grad_of(b), self.grad, kind, sign);
    });
}

} // namespace

// ---- Var accessors ---------------------------------------------------------

const Tensor& Var::value() const
{
    if (!node_) throw std::logic_error("Var: undefined node");
    return node_->value;
}

double Var::item() const
{
    const Tensor& v = value();
    if (v.numel() != 1) throw std::invalid_argument("Var::item: node has " + std::to_string(v.numel()) + " elements");
    return v[0];
}

bool Var::has_grad() const { return node_ && node_->grad_slot; }

const Tensor& Var::grad() const
{
    if (!has_grad()) throw std::logic_error("Var::grad: node has no gradient slot");
    return node_->grad;
}

bool Var::grad_populated() const { return node_ && node_->populated; }
bool Var::stopped() const { return node_ && node_->stop; }
bool Var::requires_grad() const { return node_ && node_->requires_grad; }
bool Var::is_leaf() const { return node_ && node_->leaf; }
std::string_view Var::op() const { return node_ ? node_->op : "undefined"; }

const std::vector<Var>& Var::parents() const
{
    if (!node_) throw std::logic_error("Var: undefined node");
    return node_->parents;
}

Tensor& Var::mutable_value()
{
    if (!node_) throw std::logic_error("Var: undefined node");
    return node_->value;
}

void Var::zero_grad()
{
    if (!node_ || !node_->grad_slot) return;
    for (auto& g : node_->grad.storage()) g = 0.0;
    node_->populated = false;
}

// ---- leaves ------------------------------------------------------------------

Var constant(std::vector<double> values, Shape shape)
{
    return constant(Tensor(std::move(shape), std::move(values)));
}

Var constant(Tensor value)
{
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var parameter(Tensor value)
{
    auto n = std::make_shared<Node>();
    n->grad = Tensor(value.shape());
    n->value = std::move(value);
    n->grad_slot = true;
    n->requires_grad = true;
    n->op = "parameter";
    return Var(std::move(n));
}

// ---- elementwise ---------------------------------------------------------------

Var add(const Var& a, const Var& b) { return add_sub("add", a, b, 1.0); }
Var sub(const Var& a, const Var& b) { return add_sub("sub", a, b, -1.0); }

Var mul(const Var& a, const Var& b)
{
    if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    return make_node("mul", std::move(out), {a, b}, [a, b](Node& self) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        if (live(a)) {
            Tensor& ga = grad_of(a);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i] * bv[i];
        }
        if (live(b)) {
            Tensor& gb = grad_of(b);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += self.grad[i] * av[i];
        }
    });
}

Var scale(const Var& a, double factor)
{
    Tensor out = map(a.value(), [factor](double v) { return v * factor; });
    return make_node("scale", std::move(out), {a}, [a, factor](Node& self) {
        Tensor& ga = grad_of(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += factor * self.grad[i];
    });
}

Var relu(const Var& a)
{
    Tensor out = map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
    return make_node("relu", std::move(out), {a}, [a](Node& self) {
        const Tensor& av = a.value();
        Tensor& ga = grad_of(a);
        for (std::size_t i = 0; i < ga.numel(); ++i)
            if (av[i] > 0.0) ga[i] += self.grad[i];
    });
}

Var tanh(const Var& a)
{
    Tensor out = map(a.value(), [](double v) { return std::tanh(v); });
    return make_node("tanh", std::move(out), {a}, [a](Node& self) {
        Tensor& ga = grad_of(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) {
            const double t = self.value[i];
            ga[i] += self.grad[i] * (1.0 - t * t);
        }
    });
}

Var exp(const Var& a)
{
    Tensor out = map(a.value(), [](double v) { return std::exp(v); });
    return make_node("exp", std::move(out), {a}, [a](Node& self) {
        Tensor& ga = grad_of(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i] * self.value[i];
    });
}

Var log(const Var& a)
{
    for (double v : a.value().values())
        if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
    Tensor out = map(a.value(), [](double v) { return std::log(v); });
    return make_node("log", std::move(out), {a}, [a](Node& self) {
        const Tensor& av = a.value();
        Tensor& ga = grad_of(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i] / av[i];
    });
}

// ---- linear algebra --------------------------------------------------------------

Var matmul(const Var& a, const Var& b)
{
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (bv.rank() != 2 || (av.rank() != 1 && av.rank() != 2)) shape_error("matmul", av.shape(), bv.shape());
    const std::size_t n = av.rank() == 2 ? av.dim(0) : 1;
    const std::size_t k = av.rank() == 2 ? av.dim(1) : av.dim(0);
    const std::size_t m = bv.dim(1);
    if (bv.dim(0) != k) shape_error("matmul", av.shape(), bv.shape());

    Tensor out(av.rank() == 2 ? Shape{n, m} : Shape{m});
    kernels::gemm_nn(av.values(), bv.values(), out.values(), n, k, m);
    return make_node("matmul", std::move(out), {a, b}, [a, b, n, k, m](Node& self) {
        if (live(a)) {
            Tensor tmp(a.shape());
            kernels::gemm_nt(self.grad.values(), b.value().values(), tmp.values(), n, m, k);
            Tensor& ga = grad_of(a);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += tmp[i];
        }
        if (live(b)) {
            Tensor tmp(b.shape());
            kernels::gemm_tn(a.value().values(), self.grad.values(), tmp.values(), n, k, m);
            Tensor& gb = grad_of(b);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += tmp[i];
        }
    });
}

Var transpose(const Var& a)
{
    const Tensor& av = a.value();
    if (av.rank() != 2) throw std::invalid_argument("transpose: rank-2 operand required");
    const std::size_t n = av.dim(0), m = av.dim(1);
    Tensor out({m, n});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) out[c * n + r] = av[r * m + c];
    return make_node("transpose", std::move(out), {a}, [a, n, m](Node& self) {
        Tensor& ga = grad_of(a);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) ga[r * m + c] += self.grad[c * n + r];
    });
}

Var take_rows(const Var& a, std::vector<std::size_t> indices)
{
    Tensor out = hutd::take_rows(a.value(), indices);
    return make_node("take_rows", std::move(out), {a}, [a, idx = std::move(indices)](Node& self) {
        Tensor& ga = grad_of(a);
        const std::size_t d = ga.cols();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) ga[idx[i] * d + j] += self.grad[i * d + j];
    });
}

// ---- reductions --------------------------------------------------------------------

Var sum(const Var& a)
{
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return make_node("sum", Tensor::scalar(s), {a}, [a](Node& self) {
        Tensor& ga = grad_of(a);
        for (auto& g : ga.storage()) g += self.grad[0];
    });
}

Var mean(const Var& a)
{
    const std::size_t n = a.numel();
    if (n == 0) throw std::invalid_argument("mean: empty operand");
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const double inv = 1.0 / static_cast<double>(n);
    return make_node("mean", Tensor::scalar(s * inv), {a}, [a, inv](Node& self) {
        Tensor& ga = grad_of(a);
        for (auto& g : ga.storage()) g += self.grad[0] * inv;
    });
}

Var row_sum(const Var& a)
{
    const auto [n, d] = row_geometry("row_sum", a.value());
    const Tensor& av = a.value();
    Tensor out(reduced_shape(av));
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += av[r * d + j];
        out[r] = s;
    }
    return make_node("row_sum", std::move(out), {a}, [a, n, d](Node& self) {
        Tensor& ga = grad_of(a);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += self.grad[r];
    });
}

Var l2_norm(const Var& a)
{
    const auto [n, d] = row_geometry("l2_norm", a.value());
    const Tensor& av = a.value();
    Tensor out(reduced_shape(av));
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += av[r * d + j] * av[r * d + j];
        out[r] = std::sqrt(s);
    }
    return make_node("l2_norm", std::move(out), {a}, [a, n, d](Node& self) {
        const Tensor& av = a.value();
        Tensor& ga = grad_of(a);
        for (std::size_t r = 0; r < n; ++r) {
            const double norm = self.value[r];
            if (norm == 0.0) continue;
            const double f = self.grad[r] / norm;
            for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += f * av[r * d + j];
        }
    });
}

Var normalize(const Var& a)
{
    const auto [n, d] = row_geometry("normalize", a.value());
    const Tensor& av = a.value();
    Tensor out(av.shape());
    std::vector<double> norms(n);
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += av[r * d + j] * av[r * d + j];
        norms[r] = std::sqrt(s);
        if (norms[r] == 0.0) throw std::domain_error("normalize: zero-norm row " + std::to_string(r));
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = av[r * d + j] / norms[r];
    }
    return make_node("normalize", std::move(out), {a}, [a, n, d, norms = std::move(norms)](Node& self) {
        // d(x/|x|) = (g - u (u.g)) / |x|
        Tensor& ga = grad_of(a);
        for (std::size_t r = 0; r < n; ++r) {
            double ug = 0.0;
            for (std::size_t j = 0; j < d; ++j) ug += self.value[r * d + j] * self.grad[r * d + j];
            for (std::size_t j = 0; j < d; ++j)
                ga[r * d + j] += (self.grad[r * d + j] - self.value[r * d + j] * ug) / norms[r];
        }
    });
}

Var dot(const Var& a, const Var& b)
{
    if (a.shape() != b.shape()) shape_error("dot", a.shape(), b.shape());
    const auto [n, d] = row_geometry("dot", a.value());
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(reduced_shape(av));
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += av[r * d + j] * bv[r * d + j];
        out[r] = s;
    }
    return make_node("dot", std::move(out), {a, b}, [a, b, n, d](Node& self) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        if (live(a)) {
            Tensor& ga = grad_of(a);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += self.grad[r] * bv[r * d + j];
        }
        if (live(b)) {
            Tensor& gb = grad_of(b);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) gb[r * d + j] += self.grad[r] * av[r * d + j];
        }
    });
}

Var softmax(const Var& a)
{
    const auto [n, d] = row_geometry("softmax", a.value());
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t r = 0; r < n; ++r) {
        double mx = av[r * d];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, av[r * d + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += (out[r * d + j] = std::exp(av[r * d + j] - mx));
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= z;
    }
    return make_node("softmax", std::move(out), {a}, [a, n, d](Node& self) {
        Tensor& ga = grad_of(a);
        for (std::size_t r = 0; r < n; ++r) {
            double sg = 0.0;
            for (std::size_t j = 0; j < d; ++j) sg += self.value[r * d + j] * self.grad[r * d + j];
            for (std::size_t j = 0; j < d; ++j)
                ga[r * d + j] += self.value[r * d + j] * (self.grad[r * d + j] - sg);
        }
    });
}

Var log_softmax(const Var& a)
{
    const auto [n, d] = row_geometry("log_softmax", a.value());
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t r = 0; r < n; ++r) {
        double mx = av[r * d];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, av[r * d + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += std::exp(av[r * d + j] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = av[r * d + j] - lz;
    }
    return make_node("log_softmax", std::move(out), {a}, [a, n, d](Node& self) {
        Tensor& ga = grad_of(a);
        for (std::size_t r = 0; r < n; ++r) {
            double gs = 0.0;
            for (std::size_t j = 0; j < d; ++j) gs += self.grad[r * d + j];
            for (std::size_t j = 0; j < d; ++j)
                ga[r * d + j] += self.grad[r * d + j] - std::exp(self.value[r * d + j]) * gs;
        }
    });
}

Var stop_gradient(const Var& a)
{
    auto n = std::make_shared<Node>();
    n->value = a.value();
    n->op = "stop_gradient";
    n->leaf = false;
    n->stop = true;
    n->parents = {a};
    return Var(std::move(n));
}

// ---- backward ------------------------------------------------------------------------

void backward(const Var& loss)
{
    if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    if (!loss.requires_grad()) return;

    // Post-order DFS restricted to live nodes; stopped nodes never require grad,
    // so their subtrees are not visited.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].node();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    for (Node* n : order) {
        if (n->leaf) continue;
        n->grad = Tensor(n->value.shape());
        n->grad_slot = true;
    }
    loss.node()->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->leaf) {
            n->populated = true;
            continue;
        }
        if (n->backward) n->backward(*n);
    }
}

} // namespace hutd::ad
