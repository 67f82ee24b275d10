#include "walklab/ndiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace walklab::ndiff {

Array::Array(std::vector<std::size_t> s, std::vector<real> d)
    : shape(std::move(s)), data(std::move(d)) {
    std::size_t n = 1;
    for (std::size_t dim : shape) n *= dim;
    if (n != data.size()) {
        throw ShapeError("array data length " + std::to_string(data.size()) +
                         " does not match shape product " + std::to_string(n));
    }
}

Array Array::zeros(std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t dim : shape) n *= dim;
    return Array(std::move(shape), std::vector<real>(n, real(0)));
}

Array Array::vec(std::vector<real> d) {
    std::size_t n = d.size();
    return Array({n}, std::move(d));
}

std::string Array::shape_str() const {
    std::string out = "{";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "}";
}

bool Array::finite() const {
    for (real v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v, const char* who) const {
    if (!v.valid() || v.i >= static_cast<int>(nodes_.size())) {
        throw ContractError(std::string(who) + ": invalid var handle");
    }
}

const Tape::Node& Tape::at(Var v) const { return nodes_[static_cast<std::size_t>(v.i)]; }

const Array& Tape::value(Var v) const {
    check(v, "value");
    return at(v).value;
}

const Array& Tape::grad(Var v) const {
    check(v, "grad");
    const Node& n = at(v);
    if (n.grad.data.empty()) throw ContractError("grad read before backward");
    return n.grad;
}

Var Tape::leaf(Array value) {
    return Var{push(Node{Op::Leaf, {}, std::move(value), {}, {}, 0, 0})};
}

Var Tape::affine(Var w, Var x, Var b) {
    check(w, "affine");
    check(x, "affine");
    const Array& wa = at(w).value;
    const Array& xa = at(x).value;
    if (wa.shape.size() != 2 || xa.shape.size() != 1 || wa.cols() != xa.size()) {
        throw ShapeError("affine: weight " + wa.shape_str() + " incompatible with input " +
                         xa.shape_str());
    }
    std::size_t m = wa.rows(), k = wa.cols();
    Array out = Array::zeros({m});
    for (std::size_t r = 0; r < m; ++r) {
        real acc = 0;
        const real* wr = wa.data.data() + r * k;
        for (std::size_t c = 0; c < k; ++c) acc += wr[c] * xa.data[c];
        out.data[r] = acc;
    }
    std::vector<int> parents{w.i, x.i};
    if (b.valid()) {
        check(b, "affine");
        const Array& ba = at(b).value;
        if (ba.shape.size() != 1 || ba.size() != m) {
            throw ShapeError("affine: bias " + ba.shape_str() + " incompatible with weight " +
                             wa.shape_str());
        }
        for (std::size_t r = 0; r < m; ++r) out.data[r] += ba.data[r];
        parents.push_back(b.i);
    }
    return Var{push(Node{Op::Affine, std::move(parents), std::move(out), {}, {}, 0, 0})};
}

Var Tape::add(Var a, Var b) {
    check(a, "add");
    check(b, "add");
    const Array& av = at(a).value;
    const Array& bv = at(b).value;
    if (!av.same_shape(bv)) {
        throw ShapeError("add: shape " + av.shape_str() + " vs " + bv.shape_str());
    }
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return Var{push(Node{Op::Add, {a.i, b.i}, std::move(out), {}, {}, 0, 0})};
}

Var Tape::mul(Var a, Var b) {
    check(a, "mul");
    check(b, "mul");
    const Array& av = at(a).value;
    const Array& bv = at(b).value;
    if (!av.same_shape(bv)) {
        throw ShapeError("mul: shape " + av.shape_str() + " vs " + bv.shape_str());
    }
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    return Var{push(Node{Op::Mul, {a.i, b.i}, std::move(out), {}, {}, 0, 0})};
}

Var Tape::scale(Var a, real c) {
    check(a, "scale");
    Array out = at(a).value;
    for (real& v : out.data) v *= c;
    return Var{push(Node{Op::Scale, {a.i}, std::move(out), {}, {c}, 0, 0})};
}

Var Tape::sigmoid(Var a) {
    check(a, "sigmoid");
    Array out = at(a).value;
    for (real& v : out.data) v = real(1) / (real(1) + std::exp(-v));
    return Var{push(Node{Op::Sigmoid, {a.i}, std::move(out), {}, {}, 0, 0})};
}

Var Tape::tanh(Var a) {
    check(a, "tanh");
    Array out = at(a).value;
    for (real& v : out.data) v = std::tanh(v);
    return Var{push(Node{Op::Tanh, {a.i}, std::move(out), {}, {}, 0, 0})};
}

Var Tape::softmax(Var a) {
    check(a, "softmax");
    const Array& av = at(a).value;
    if (av.shape.size() != 1 || av.size() == 0) {
        throw ShapeError("softmax: needs a non-empty vector, got " + av.shape_str());
    }
    Array out = av;
    real mx = *std::max_element(out.data.begin(), out.data.end());
    real sum = 0;
    for (real& v : out.data) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (real& v : out.data) v /= sum;
    return Var{push(Node{Op::Softmax, {a.i}, std::move(out), {}, {}, 0, 0})};
}

Var Tape::concat(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat: no parts");
    std::vector<int> parents;
    std::size_t total = 0;
    for (Var p : parts) {
        check(p, "concat");
        const Array& v = at(p).value;
        if (v.shape.size() != 1) throw ShapeError("concat: vector parts only, got " + v.shape_str());
        total += v.size();
        parents.push_back(p.i);
    }
    Array out = Array::zeros({total});
    std::size_t off = 0;
    for (Var p : parts) {
        const Array& v = at(p).value;
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += v.size();
    }
    return Var{push(Node{Op::Concat, std::move(parents), std::move(out), {}, {}, 0, 0})};
}

Var Tape::concat(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return concat(std::span<const Var>(v));
}

Var Tape::slice(Var a, std::size_t offset, std::size_t len) {
    check(a, "slice");
    const Array& av = at(a).value;
    if (av.shape.size() != 1 || offset + len > av.size()) {
        throw ShapeError("slice [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                         ") out of range for " + av.shape_str());
    }
    Array out({len}, std::vector<real>(av.data.begin() + static_cast<std::ptrdiff_t>(offset),
                                       av.data.begin() + static_cast<std::ptrdiff_t>(offset + len)));
    return Var{push(Node{Op::Slice, {a.i}, std::move(out), {}, {}, offset, len})};
}

Var Tape::col(Var m, std::size_t j) {
    check(m, "col");
    const Array& mv = at(m).value;
    if (mv.shape.size() != 2 || j >= mv.cols()) {
        throw ShapeError("col " + std::to_string(j) + " out of range for " + mv.shape_str());
    }
    std::size_t rows = mv.rows(), cols = mv.cols();
    Array out = Array::zeros({rows});
    for (std::size_t r = 0; r < rows; ++r) out.data[r] = mv.data[r * cols + j];
    return Var{push(Node{Op::Col, {m.i}, std::move(out), {}, {}, j, 0})};
}

Var Tape::weighted_sum(Var weights, std::span<const Var> vectors) {
    check(weights, "weighted_sum");
    const Array& wv = at(weights).value;
    if (wv.shape.size() != 1 || wv.size() != vectors.size()) {
        throw ShapeError("weighted_sum: " + std::to_string(vectors.size()) +
                         " vectors but weights " + wv.shape_str());
    }
    if (vectors.empty()) throw ContractError("weighted_sum: no vectors");
    std::vector<int> parents{weights.i};
    const Array& first = at(vectors[0]).value;
    Array out = Array::zeros(first.shape);
    for (std::size_t j = 0; j < vectors.size(); ++j) {
        check(vectors[j], "weighted_sum");
        const Array& v = at(vectors[j]).value;
        if (!v.same_shape(first)) {
            throw ShapeError("weighted_sum: vector " + std::to_string(j) + " shape " +
                             v.shape_str() + " vs " + first.shape_str());
        }
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += wv.data[j] * v.data[i];
        parents.push_back(vectors[j].i);
    }
    return Var{push(Node{Op::WeightedSum, std::move(parents), std::move(out), {}, {}, 0, 0})};
}

Var Tape::dropout(Var a, double rate, bool train, Rng& rng) {
    check(a, "dropout");
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0,1)");
    if (!train || rate == 0.0) {
        // Identity; no stream consumption so rate 0 matches eval exactly.
        Array out = at(a).value;
        std::vector<real> mask(out.size(), real(1));
        return Var{push(Node{Op::Dropout, {a.i}, std::move(out), {}, std::move(mask), 0, 0})};
    }
    stochastic_ = true;
    const Array& av = at(a).value;
    Array out = av;
    std::vector<real> mask(out.size());
    const real keep_scale = real(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool keep = !rng.bernoulli(rate);
        mask[i] = keep ? keep_scale : real(0);
        out.data[i] *= mask[i];
    }
    return Var{push(Node{Op::Dropout, {a.i}, std::move(out), {}, std::move(mask), 0, 0})};
}

Var Tape::pick(Var vec, std::size_t index) {
    check(vec, "pick");
    const Array& v = at(vec).value;
    if (v.shape.size() != 1 || index >= v.size()) {
        throw ShapeError("pick: index " + std::to_string(index) + " out of range for " +
                         v.shape_str());
    }
    Array out = Array::scalar(v.data[index]);
    return Var{push(Node{Op::Pick, {vec.i}, std::move(out), {}, {}, index, 0})};
}

Var Tape::clamped_log(Var scalar, real eps) {
    check(scalar, "clamped_log");
    const Array& v = at(scalar).value;
    if (v.size() != 1) throw ContractError("clamped_log: scalar input required");
    real x = v.data[0];
    Array out = Array::scalar(std::log(std::max(x, eps)));
    return Var{push(Node{Op::ClampedLog, {scalar.i}, std::move(out), {}, {eps}, 0, 0})};
}

Var Tape::dot(Var a, Var b) {
    check(a, "dot");
    check(b, "dot");
    const Array& av = at(a).value;
    const Array& bv = at(b).value;
    if (!av.same_shape(bv) || av.shape.size() != 1) {
        throw ShapeError("dot: shape " + av.shape_str() + " vs " + bv.shape_str());
    }
    real acc = 0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av.data[i] * bv.data[i];
    return Var{push(Node{Op::Dot, {a.i, b.i}, Array::scalar(acc), {}, {}, 0, 0})};
}

Var Tape::stack(std::span<const Var> scalars) {
    if (scalars.empty()) throw ContractError("stack: no inputs");
    std::vector<int> parents;
    Array out = Array::zeros({scalars.size()});
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        check(scalars[i], "stack");
        const Array& v = at(scalars[i]).value;
        if (v.size() != 1) throw ShapeError("stack: scalar inputs required");
        out.data[i] = v.data[0];
        parents.push_back(scalars[i].i);
    }
    return Var{push(Node{Op::Stack, std::move(parents), std::move(out), {}, {}, 0, 0})};
}

Var Tape::sum(std::span<const Var> scalars) {
    if (scalars.empty()) throw ContractError("sum: no inputs");
    std::vector<int> parents;
    real acc = 0;
    for (Var s : scalars) {
        check(s, "sum");
        const Array& v = at(s).value;
        if (v.size() != 1) throw ShapeError("sum: scalar inputs required");
        acc += v.data[0];
        parents.push_back(s.i);
    }
    return Var{push(Node{Op::Sum, std::move(parents), Array::scalar(acc), {}, {}, 0, 0})};
}

void Tape::backward(Var root) {
    check(root, "backward");
    if (at(root).value.size() != 1) {
        throw ContractError("backward: root must be scalar, got " + at(root).value.shape_str());
    }
    for (Node& n : nodes_) {
        n.grad = Array::zeros(n.value.shape);
    }
    nodes_[static_cast<std::size_t>(root.i)].grad.data[0] = real(1);

    for (int idx = root.i; idx >= 0; --idx) {
        Node& n = nodes_[static_cast<std::size_t>(idx)];
        const Array& g = n.grad;
        bool all_zero = true;
        for (real v : g.data) {
            if (v != real(0)) { all_zero = false; break; }
        }
        if (all_zero) continue;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Affine: {
                Node& w = nodes_[static_cast<std::size_t>(n.parents[0])];
                Node& x = nodes_[static_cast<std::size_t>(n.parents[1])];
                std::size_t m = w.value.rows(), k = w.value.cols();
                for (std::size_t r = 0; r < m; ++r) {
                    real gr = g.data[r];
                    if (gr == real(0)) continue;
                    real* wgr = w.grad.data.data() + r * k;
                    const real* wr = w.value.data.data() + r * k;
                    for (std::size_t c = 0; c < k; ++c) {
                        wgr[c] += gr * x.value.data[c];
                        x.grad.data[c] += gr * wr[c];
                    }
                }
                if (n.parents.size() == 3) {
                    Node& b = nodes_[static_cast<std::size_t>(n.parents[2])];
                    for (std::size_t r = 0; r < m; ++r) b.grad.data[r] += g.data[r];
                }
                break;
            }
            case Op::Add: {
                for (int p : n.parents) {
                    Node& pn = nodes_[static_cast<std::size_t>(p)];
                    for (std::size_t i = 0; i < g.size(); ++i) pn.grad.data[i] += g.data[i];
                }
                break;
            }
            case Op::Mul: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                Node& b = nodes_[static_cast<std::size_t>(n.parents[1])];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    a.grad.data[i] += g.data[i] * b.value.data[i];
                    b.grad.data[i] += g.data[i] * a.value.data[i];
                }
                break;
            }
            case Op::Scale: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                for (std::size_t i = 0; i < g.size(); ++i) a.grad.data[i] += g.data[i] * n.aux[0];
                break;
            }
            case Op::Sigmoid: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    real y = n.value.data[i];
                    a.grad.data[i] += g.data[i] * y * (real(1) - y);
                }
                break;
            }
            case Op::Tanh: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    real y = n.value.data[i];
                    a.grad.data[i] += g.data[i] * (real(1) - y * y);
                }
                break;
            }
            case Op::Softmax: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                real gy = 0;
                for (std::size_t i = 0; i < g.size(); ++i) gy += g.data[i] * n.value.data[i];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    a.grad.data[i] += n.value.data[i] * (g.data[i] - gy);
                }
                break;
            }
            case Op::Concat: {
                std::size_t off = 0;
                for (int p : n.parents) {
                    Node& pn = nodes_[static_cast<std::size_t>(p)];
                    for (std::size_t i = 0; i < pn.value.size(); ++i) {
                        pn.grad.data[i] += g.data[off + i];
                    }
                    off += pn.value.size();
                }
                break;
            }
            case Op::Slice: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                for (std::size_t i = 0; i < n.b; ++i) a.grad.data[n.a + i] += g.data[i];
                break;
            }
            case Op::Col: {
                Node& m = nodes_[static_cast<std::size_t>(n.parents[0])];
                std::size_t cols = m.value.cols();
                for (std::size_t r = 0; r < g.size(); ++r) m.grad.data[r * cols + n.a] += g.data[r];
                break;
            }
            case Op::WeightedSum: {
                Node& w = nodes_[static_cast<std::size_t>(n.parents[0])];
                for (std::size_t j = 1; j < n.parents.size(); ++j) {
                    Node& v = nodes_[static_cast<std::size_t>(n.parents[j])];
                    real wj = w.value.data[j - 1];
                    real acc = 0;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        acc += g.data[i] * v.value.data[i];
                        v.grad.data[i] += g.data[i] * wj;
                    }
                    w.grad.data[j - 1] += acc;
                }
                break;
            }
            case Op::Dropout: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                for (std::size_t i = 0; i < g.size(); ++i) a.grad.data[i] += g.data[i] * n.aux[i];
                break;
            }
            case Op::Pick: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                a.grad.data[n.a] += g.data[0];
                break;
            }
            case Op::ClampedLog: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                real x = a.value.data[0];
                if (x > n.aux[0]) a.grad.data[0] += g.data[0] / x;
                break;
            }
            case Op::Dot: {
                Node& a = nodes_[static_cast<std::size_t>(n.parents[0])];
                Node& b = nodes_[static_cast<std::size_t>(n.parents[1])];
                for (std::size_t i = 0; i < a.value.size(); ++i) {
                    a.grad.data[i] += g.data[0] * b.value.data[i];
                    b.grad.data[i] += g.data[0] * a.value.data[i];
                }
                break;
            }
            case Op::Stack: {
                for (std::size_t j = 0; j < n.parents.size(); ++j) {
                    Node& p = nodes_[static_cast<std::size_t>(n.parents[j])];
                    p.grad.data[0] += g.data[j];
                }
                break;
            }
            case Op::Sum: {
                for (int pi : n.parents) {
                    Node& p = nodes_[static_cast<std::size_t>(pi)];
                    p.grad.data[0] += g.data[0];
                }
                break;
            }
        }
    }
}

AdamState::AdamState(const std::vector<NamedParam>& params, AdamConfig config)
    : config_(config) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const NamedParam& p : params) {
        m_.push_back(Array::zeros(p.array->shape));
        v_.push_back(Array::zeros(p.array->shape));
    }
}

void AdamState::step(const std::vector<NamedParam>& params, const std::vector<Array>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ShapeError("adam: parameter group count mismatch");
    }
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& p = *params[i].array;
        const Array& g = grads[i];
        if (!p.same_shape(g)) {
            throw ShapeError("adam: grad shape " + g.shape_str() + " vs param '" +
                             params[i].name + "' " + p.shape_str());
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            double gj = static_cast<double>(g.data[j]);
            double mj = b1 * static_cast<double>(m_[i].data[j]) + (1.0 - b1) * gj;
            double vj = b2 * static_cast<double>(v_[i].data[j]) + (1.0 - b2) * gj * gj;
            m_[i].data[j] = static_cast<real>(mj);
            v_[i].data[j] = static_cast<real>(vj);
            double update = config_.step_size * (mj / bias1) / (std::sqrt(vj / bias2) + config_.eps);
            p.data[j] = static_cast<real>(static_cast<double>(p.data[j]) - update);
        }
    }
}

void sgd_step(const std::vector<NamedParam>& params, const std::vector<Array>& grads,
              double step_size) {
    if (params.size() != grads.size()) throw ShapeError("sgd: parameter group count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& p = *params[i].array;
        const Array& g = grads[i];
        if (!p.same_shape(g)) throw ShapeError("sgd: grad shape mismatch");
        for (std::size_t j = 0; j < p.size(); ++j) {
            p.data[j] = static_cast<real>(static_cast<double>(p.data[j]) -
                                          step_size * static_cast<double>(g.data[j]));
        }
    }
}

double global_grad_norm(const std::vector<Array>& grads) {
    double acc = 0;
    for (const Array& g : grads) {
        for (real v : g.data) acc += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(acc);
}

void clip_grads(std::vector<Array>& grads, double max_norm) {
    double norm = global_grad_norm(grads);
    if (norm <= max_norm || norm == 0.0) return;
    real s = static_cast<real>(max_norm / norm);
    for (Array& g : grads) {
        for (real& v : g.data) v *= s;
    }
}

Array init_uniform(std::vector<std::size_t> shape, Rng& rng, double scale) {
    Array out = Array::zeros(std::move(shape));
    for (real& v : out.data) v = static_cast<real>(rng.uniform(-scale, scale));
    return out;
}

GradCheckReport grad_check(const LossBuilder& build, const std::vector<NamedParam>& params,
                           const GradCheckOptions& opt) {
    // Analytic pass.
    std::vector<Array> analytic;
    {
        Tape tape;
        TapedLoss tl = build(tape);
        if (tape.stochastic()) {
            throw ContractError("grad_check: loss builder uses active dropout");
        }
        if (tl.params.size() != params.size()) {
            throw ContractError("grad_check: param leaf count mismatch");
        }
        tape.backward(tl.loss);
        for (Var p : tl.params) analytic.push_back(tape.grad(p));
    }

    auto loss_value = [&]() {
        Tape tape;
        TapedLoss tl = build(tape);
        return static_cast<double>(tape.value(tl.loss).data[0]);
    };

    GradCheckReport report;
    Rng rng(opt.sample_seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Array& arr = *params[pi].array;
        std::vector<std::size_t> coords;
        if (opt.sample_per_param == 0 || opt.sample_per_param >= arr.size()) {
            coords.resize(arr.size());
            std::iota(coords.begin(), coords.end(), std::size_t{0});
        } else {
            for (std::size_t s = 0; s < opt.sample_per_param; ++s) coords.push_back(rng.index(arr.size()));
        }
        for (std::size_t c : coords) {
            const real saved = arr.data[c];
            arr.data[c] = static_cast<real>(static_cast<double>(saved) + opt.eps);
            double up = loss_value();
            arr.data[c] = static_cast<real>(static_cast<double>(saved) - opt.eps);
            double down = loss_value();
            arr.data[c] = saved;
            double numeric = (up - down) / (2.0 * opt.eps);
            double a = static_cast<double>(analytic[pi].data[c]);
            // Mixed comparison: central differences cannot resolve finer than
            // ~|loss|*2^-52/eps, so coordinates with near-zero gradients are
            // judged on absolute agreement via the denominator floor.
            double denom = std::max(std::abs(a) + std::abs(numeric), 1e-4);
            double rel = std::abs(a - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = params[pi].name;
                report.worst_coord = c;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

namespace {

constexpr char kArchiveMagic[8] = {'W', 'L', 'K', 'N', 'D', 'A', 'R', '1'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ParseError(std::string("archive truncated reading ") + what);
    return v;
}

}  // namespace

void save_archive(const std::string& path, std::uint64_t config_fingerprint,
                  const std::string& config_json, const std::vector<ArchiveEntry>& entries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write archive: " + path);
    out.write(kArchiveMagic, sizeof kArchiveMagic);
    put<std::uint32_t>(out, 1);  // format version
    put<std::uint64_t>(out, config_fingerprint);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(config_json.size()));
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const ArchiveEntry& e : entries) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.array.shape.size()));
        for (std::size_t d : e.array.shape) put<std::uint64_t>(out, d);
        for (real v : e.array.data) put<double>(out, static_cast<double>(v));
    }
    if (!out) throw UsageError("short write on archive: " + path);
}

LoadedArchive load_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open archive: " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kArchiveMagic, sizeof magic) != 0) {
        throw ParseError("not a parameter archive: " + path);
    }
    auto version = get<std::uint32_t>(in, "version");
    if (version != 1) throw ParseError("unsupported archive version " + std::to_string(version));
    LoadedArchive la;
    la.config_fingerprint = get<std::uint64_t>(in, "fingerprint");
    auto json_len = get<std::uint32_t>(in, "config length");
    la.config_json.resize(json_len);
    in.read(la.config_json.data(), json_len);
    if (!in) throw ParseError("archive truncated reading config");
    auto n_entries = get<std::uint32_t>(in, "entry count");
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        auto name_len = get<std::uint32_t>(in, "entry name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw ParseError("archive truncated reading entry name");
        auto rank = get<std::uint32_t>(in, "rank");
        std::vector<std::size_t> shape;
        std::size_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            auto dim = get<std::uint64_t>(in, "dimension");
            shape.push_back(static_cast<std::size_t>(dim));
            total *= static_cast<std::size_t>(dim);
        }
        std::vector<real> data(total);
        for (std::size_t j = 0; j < total; ++j) {
            data[j] = static_cast<real>(get<double>(in, "entry data"));
        }
        la.entries.emplace(std::move(name), Array(std::move(shape), std::move(data)));
    }
    return la;
}

}  // namespace walklab::ndiff
