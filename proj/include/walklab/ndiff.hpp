#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "walklab/common.hpp"

namespace walklab::ndiff {

#ifdef WALKLAB_REAL32
using real = float;
#else
using real = double;
#endif

// Dense row-major array, rank 0..2 in practice.
struct Array {
    std::vector<std::size_t> shape;
    std::vector<real> data;

    Array() = default;
    Array(std::vector<std::size_t> s, std::vector<real> d);

    static Array zeros(std::vector<std::size_t> shape);
    static Array scalar(real v) { return Array({1}, {v}); }
    static Array vec(std::vector<real> d);

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    real& at(std::size_t i) { return data[i]; }
    real at(std::size_t i) const { return data[i]; }
    real& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    real at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Array& o) const { return shape == o.shape; }
    std::string shape_str() const;
    bool finite() const;
};

// Handle into a Tape's node list.
struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Append-only computation record; construction order is a topological order,
// so backward is a single reverse sweep.
class Tape {
public:
    Var leaf(Array value);
    Var leaf(const std::vector<real>& v) { return leaf(Array::vec(v)); }

    // y = W x + b. W is (m,k), x is (k), b is (m). Pass Var{} for no bias.
    Var affine(Var w, Var x, Var b);
    Var matvec(Var w, Var x) { return affine(w, x, Var{}); }
    Var add(Var a, Var b);
    Var add(Var a, Var b, Var c) { return add(add(a, b), c); }
    Var mul(Var a, Var b);
    Var scale(Var a, real c);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var softmax(Var a);
    Var concat(std::span<const Var> parts);
    Var concat(std::initializer_list<Var> parts);
    Var slice(Var a, std::size_t offset, std::size_t len);
    // Column j of a matrix (an affine with a one-hot input, minus the cost).
    Var col(Var m, std::size_t j);
    // z = sum_j weights[j] * vectors[j]; weights is a vector Var of length n.
    Var weighted_sum(Var weights, std::span<const Var> vectors);
    Var dropout(Var a, double rate, bool train, Rng& rng);
    Var pick(Var vec, std::size_t index);
    Var clamped_log(Var scalar, real eps);
    Var dot(Var a, Var b);
    Var stack(std::span<const Var> scalars);
    Var sum(std::span<const Var> scalars);
    Var neg(Var a) { return scale(a, real(-1)); }

    // Accumulates adjoints for every node; root must be scalar.
    void backward(Var root);

    const Array& value(Var v) const;
    const Array& grad(Var v) const;

    std::size_t node_count() const { return nodes_.size(); }
    // True once any dropout op with rate > 0 ran in train mode.
    bool stochastic() const { return stochastic_; }

private:
    enum class Op : std::uint8_t {
        Leaf, Affine, Add, Mul, Scale, Sigmoid, Tanh, Softmax, Concat, Slice,
        Col, WeightedSum, Dropout, Pick, ClampedLog, Dot, Stack, Sum
    };
    struct Node {
        Op op;
        std::vector<int> parents;
        Array value;
        Array grad;
        std::vector<real> aux;  // dropout mask, scale factor, clamp eps
        std::size_t a = 0, b = 0;  // slice offset/len, pick index
    };
    std::vector<Node> nodes_;
    bool stochastic_ = false;

    int push(Node n);
    const Node& at(Var v) const;
    void check(Var v, const char* who) const;
};

struct AdamConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct NamedParam {
    std::string name;
    Array* array = nullptr;
};

class AdamState {
public:
    AdamState() = default;
    AdamState(const std::vector<NamedParam>& params, AdamConfig config);

    // In-place update; grads aligned with the params the state was built for.
    void step(const std::vector<NamedParam>& params, const std::vector<Array>& grads);

    std::uint64_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::vector<Array> m_, v_;
    std::uint64_t t_ = 0;
};

// Plain SGD, used to cross-check that gradients train without Adam.
void sgd_step(const std::vector<NamedParam>& params, const std::vector<Array>& grads,
              double step_size);

double global_grad_norm(const std::vector<Array>& grads);
void clip_grads(std::vector<Array>& grads, double max_norm);

// Uniform init in [-scale, scale] from the given stream.
Array init_uniform(std::vector<std::size_t> shape, Rng& rng, double scale = 0.08);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_coord = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t coords_checked = 0;
};

struct GradCheckOptions {
    double eps = 1e-5;
    // 0 = every coordinate; otherwise per-parameter sample size.
    std::size_t sample_per_param = 0;
    std::uint64_t sample_seed = 17;
};

// build must construct the loss graph on the given tape and return the loss
// Var plus param leaves aligned with `params`. The function is re-invoked for
// each finite-difference evaluation, so it must be deterministic; active
// dropout is rejected with a contract error.
struct TapedLoss {
    Var loss;
    std::vector<Var> params;
};
using LossBuilder = std::function<TapedLoss(Tape&)>;

GradCheckReport grad_check(const LossBuilder& build, const std::vector<NamedParam>& params,
                           const GradCheckOptions& opt = {});

// Checkpoint archive: versioned header, named float64 little-endian entries,
// config fingerprint plus an embedded JSON block.
struct ArchiveEntry {
    std::string name;
    Array array;
};

void save_archive(const std::string& path, std::uint64_t config_fingerprint,
                  const std::string& config_json, const std::vector<ArchiveEntry>& entries);

struct LoadedArchive {
    std::uint64_t config_fingerprint = 0;
    std::string config_json;
    std::map<std::string, Array> entries;
};

LoadedArchive load_archive(const std::string& path);

}  // namespace walklab::ndiff
