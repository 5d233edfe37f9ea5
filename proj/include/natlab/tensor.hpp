#ifndef NATLAB_TENSOR_HPP
#define NATLAB_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace natlab {

// ---------------------------------------------------------------------------
// Deterministic, stream-splittable randomness.
//
// Engine: std::mt19937_64, whose output sequence is fully pinned by the C++
// standard. Seeding mixes (seed, stream) through SplitMix64, so distinct
// stream ids give independent sequences from one experiment seed.
// Doubles are built as (u64 >> 11) * 2^-53, normals via the Marsaglia polar
// method. Note sqrt is correctly rounded per IEEE-754; log comes from libm.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

struct RandomSource {
    uint64_t seed   = 0;
    uint64_t stream = 0;

    RandomSource() : RandomSource(0, 0) {}
    RandomSource(uint64_t seed_, uint64_t stream_ = 0)
        : seed(seed_), stream(stream_), engine_(splitmix64(splitmix64(seed_) ^ splitmix64(stream_ * 0x9e3779b97f4a7c15ull + 1))) {}

    // Independent child stream; does not advance this source.
    RandomSource split(uint64_t substream) const {
        return RandomSource(seed, splitmix64(stream) ^ substream);
    }

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi], rejection-sampled (unbiased)
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = uint64_t(hi - lo) + 1;
        uint64_t min   = (-range) % range;
        uint64_t u;
        do {
            u = next_u64();
        } while (u < min);
        return lo + int64_t(u % range);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double x, y, s;
        do {
            x = 2.0 * uniform() - 1.0;
            y = 2.0 * uniform() - 1.0;
            s = x * x + y * y;
        } while (s >= 1.0 || s == 0.0);
        double m    = std::sqrt(-2.0 * std::log(s) / s);
        spare_      = y * m;
        have_spare_ = true;
        return x * m;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_    = 0.0;
};

// ---------------------------------------------------------------------------
// Tensor: dense row-major f64 array with optional reverse-mode gradients.
//
// A Tensor is a shared handle to a node. Ops build a tape dynamically when
// any input requires grad; backward() releases it after one reverse pass.
// Committed tensors never hold NaN/Inf: every op validates its output.
// A tape belongs to one thread; grad-free tensors are immutable and may be
// shared across threads.
// ---------------------------------------------------------------------------

struct TensorNode;
using TensorNodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated on demand, same length as data
    bool requires_grad = false;
    const char* op     = "leaf";
    std::vector<TensorNodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += "x";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorNodePtr n) : n_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), 0.0, requires_grad);
    }

    static Tensor filled(std::vector<int> shape, double value, bool requires_grad = false) {
        size_t n = checked_numel(shape);
        auto node = std::make_shared<TensorNode>();
        node->shape         = std::move(shape);
        node->data.assign(n, value);
        node->requires_grad = requires_grad;
        return Tensor(node);
    }

    static Tensor from(std::vector<int> shape, std::vector<double> data, bool requires_grad = false) {
        size_t n = checked_numel(shape);
        if (n != data.size())
            throw std::invalid_argument("tensor: shape " + shape_str(shape) + " needs " + std::to_string(n) +
                                        " values, got " + std::to_string(data.size()));
        for (double v : data)
            if (!std::isfinite(v)) throw std::invalid_argument("tensor: non-finite value in constructor");
        auto node = std::make_shared<TensorNode>();
        node->shape         = std::move(shape);
        node->data          = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(node);
    }

    static Tensor randn(std::vector<int> shape, RandomSource& rng, double stddev = 1.0, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (double& v : t.node()->data) v = rng.normal(0.0, stddev);
        return t;
    }

    bool defined() const { return n_ != nullptr; }
    const std::vector<int>& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[size_t(i)]; }
    int rank() const { return int(n_->shape.size()); }
    size_t numel() const { return n_->data.size(); }
    std::vector<double>& data() { return n_->data; }
    const std::vector<double>& data() const { return n_->data; }
    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool b) { n_->requires_grad = b; }
    const std::vector<double>& grad() const { return n_->grad; }
    TensorNodePtr node() const { return n_; }

    double at(int i) const { return n_->data[size_t(i)]; }
    double at(int i, int j) const { return n_->data[size_t(i) * size_t(n_->shape[1]) + size_t(j)]; }
    double& at(int i) { return n_->data[size_t(i)]; }
    double& at(int i, int j) { return n_->data[size_t(i) * size_t(n_->shape[1]) + size_t(j)]; }

    double scalar() const {
        if (numel() != 1) throw std::invalid_argument("tensor: scalar() on " + shape_str(n_->shape));
        return n_->data[0];
    }

    void zero_grad() { n_->grad.assign(n_->data.size(), 0.0); }

    // Deep copy of the values only; the copy is a fresh leaf.
    Tensor clone(bool requires_grad = false) const {
        auto node = std::make_shared<TensorNode>();
        node->shape         = n_->shape;
        node->data          = n_->data;
        node->requires_grad = requires_grad;
        return Tensor(node);
    }

    // Reverse pass from a scalar output. Each reachable node is visited
    // exactly once, in reverse topological order.
    void backward() const {
        if (numel() != 1) throw std::invalid_argument("backward: output must be scalar, got " + shape_str(n_->shape));
        std::vector<TensorNode*> order;
        std::unordered_set<TensorNode*> seen;
        std::vector<std::pair<TensorNode*, size_t>> stack;
        stack.push_back({n_.get(), 0});
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                TensorNode* p = node->parents[idx++].get();
                if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        n_->ensure_grad();
        n_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }

private:
    static size_t checked_numel(const std::vector<int>& shape) {
        if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
        size_t n = 1;
        for (int e : shape) {
            if (e <= 0) throw std::invalid_argument("tensor: non-positive extent in " + shape_str(shape));
            n *= size_t(e);
        }
        return n;
    }

    TensorNodePtr n_;
};

namespace detail {

inline void check_finite(const TensorNode& n) {
    for (double v : n.data)
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("non-finite value produced by op '") + n.op + "'");
}

inline Tensor make_op(std::vector<int> shape, std::vector<double> data, const char* op,
                      std::vector<Tensor> inputs, std::function<void(TensorNode&)> backward_fn) {
    auto node   = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data  = std::move(data);
    node->op    = op;
    check_finite(*node);
    bool needs = false;
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const Tensor& t : inputs) node->parents.push_back(t.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(node);
}

inline void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// --------------------------- elementwise ops ------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return detail::make_op(a.shape(), std::move(out), "add", {a, b}, [](TensorNode& self) {
        for (int k = 0; k < 2; ++k) {
            auto& p = self.parents[size_t(k)];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return detail::make_op(a.shape(), std::move(out), "sub", {a, b}, [](TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return detail::make_op(a.shape(), std::move(out), "mul", {a, b}, [](TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->data[i];
        }
    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "div");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
    return detail::make_op(a.shape(), std::move(out), "div", {a, b}, [](TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] / pb->data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pb->grad[i] -= self.grad[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    return detail::make_op(a.shape(), std::move(out), "scale", {a}, [c](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * c;
    });
}

inline Tensor add_const(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    return detail::make_op(a.shape(), std::move(out), "add_const", {a}, [](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    });
}

inline Tensor recip(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / a.data()[i];
    return detail::make_op(a.shape(), std::move(out), "recip", {a}, [](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double inv = self.data[i];
            p->grad[i] -= self.grad[i] * inv * inv;
        }
    });
}

inline Tensor sqrt_elem(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        if (a.data()[i] <= 0.0) throw std::invalid_argument("sqrt_elem: non-positive input");
        out[i] = std::sqrt(a.data()[i]);
    }
    return detail::make_op(a.shape(), std::move(out), "sqrt", {a}, [](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * 0.5 / self.data[i];
    });
}

inline Tensor silu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-a.data()[i]));
        out[i]   = a.data()[i] * s;
    }
    return detail::make_op(a.shape(), std::move(out), "silu", {a}, [](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double x = p->data[i];
            double s = 1.0 / (1.0 + std::exp(-x));
            p->grad[i] += self.grad[i] * (s + x * s * (1.0 - s));
        }
    });
}

// ----------------------------- reductions ---------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return detail::make_op({1}, {s}, "sum", {a}, [](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += self.grad[0];
    });
}

inline Tensor row_sum(const Tensor& a) {
    detail::require_rank2(a, "row_sum");
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(size_t(m), 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[size_t(i)] += a.at(i, j);
    return detail::make_op({m, 1}, std::move(out), "row_sum", {a}, [n](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        int m2 = self.shape[0];
        for (int i = 0; i < m2; ++i)
            for (int j = 0; j < n; ++j) p->grad[size_t(i) * size_t(n) + size_t(j)] += self.grad[size_t(i)];
    });
}

// ------------------------------ linear algebra ----------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(size_t(m) * size_t(n), 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (int i = 0; i < m; ++i) {
        double* po = out.data() + size_t(i) * size_t(n);
        for (int p = 0; p < k; ++p) {
            double aik        = pa[size_t(i) * size_t(k) + size_t(p)];
            const double* prow = pb + size_t(p) * size_t(n);
            for (int j = 0; j < n; ++j) po[j] += aik * prow[j];
        }
    }
    return detail::make_op({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            // dA = dC * B^T
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double acc        = 0.0;
                    const double* gr  = g + size_t(i) * size_t(n);
                    const double* brow = pb->data.data() + size_t(p) * size_t(n);
                    for (int j = 0; j < n; ++j) acc += gr[j] * brow[j];
                    pa->grad[size_t(i) * size_t(k) + size_t(p)] += acc;
                }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            // dB = A^T * dC
            for (int i = 0; i < m; ++i) {
                const double* arow = pa->data.data() + size_t(i) * size_t(k);
                const double* gr   = g + size_t(i) * size_t(n);
                for (int p = 0; p < k; ++p) {
                    double aik = arow[p];
                    double* br = pb->grad.data() + size_t(p) * size_t(n);
                    for (int j = 0; j < n; ++j) br[j] += aik * gr[j];
                }
            }
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank2(a, "transpose");
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(size_t(m) * size_t(n));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[size_t(j) * size_t(m) + size_t(i)] = a.at(i, j);
    return detail::make_op({n, m}, std::move(out), "transpose", {a}, [m, n](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                p->grad[size_t(i) * size_t(n) + size_t(j)] += self.grad[size_t(j) * size_t(m) + size_t(i)];
    });
}

// Row-stable softmax: each output row is softmax(row / scale).
inline Tensor softmax_rows(const Tensor& x, double scale_div) {
    detail::require_rank2(x, "softmax_rows");
    if (x.dim(1) < 1) throw std::invalid_argument("softmax_rows: empty rows");
    if (!(scale_div > 0.0)) throw std::invalid_argument("softmax_rows: scale must be positive");
    int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(size_t(m) * size_t(n));
    for (int i = 0; i < m; ++i) {
        const double* row = x.data().data() + size_t(i) * size_t(n);
        double mx = row[0] / scale_div;
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j] / scale_div);
        double denom = 0.0;
        double* orow = out.data() + size_t(i) * size_t(n);
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] / scale_div - mx);
            denom += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= denom;
    }
    return detail::make_op({m, n}, std::move(out), "softmax_rows", {x}, [m, n, scale_div](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int i = 0; i < m; ++i) {
            const double* y = self.data.data() + size_t(i) * size_t(n);
            const double* g = self.grad.data() + size_t(i) * size_t(n);
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g[j] * y[j];
            double* pg = p->grad.data() + size_t(i) * size_t(n);
            for (int j = 0; j < n; ++j) pg[j] += (g[j] - dot) * y[j] / scale_div;
        }
    });
}

// ------------------------- selection / assembly ---------------------------

inline Tensor select_row(const Tensor& a, int i) {
    detail::require_rank2(a, "select_row");
    if (i < 0 || i >= a.dim(0)) throw std::invalid_argument("select_row: index " + std::to_string(i) + " out of range");
    int n = a.dim(1);
    std::vector<double> out(a.data().begin() + size_t(i) * size_t(n), a.data().begin() + size_t(i + 1) * size_t(n));
    return detail::make_op({1, n}, std::move(out), "select_row", {a}, [i, n](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int j = 0; j < n; ++j) p->grad[size_t(i) * size_t(n) + size_t(j)] += self.grad[size_t(j)];
    });
}

inline Tensor select_col(const Tensor& a, int j) {
    detail::require_rank2(a, "select_col");
    if (j < 0 || j >= a.dim(1)) throw std::invalid_argument("select_col: index " + std::to_string(j) + " out of range");
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(size_t(m), 0.0);
    for (int i = 0; i < m; ++i) out[size_t(i)] = a.at(i, j);
    return detail::make_op({m, 1}, std::move(out), "select_col", {a}, [j, n](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        int m2 = self.shape[0];
        for (int i = 0; i < m2; ++i) p->grad[size_t(i) * size_t(n) + size_t(j)] += self.grad[size_t(i)];
    });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
    int n = parts[0].dim(1);
    int m = 0;
    for (const Tensor& t : parts) {
        detail::require_rank2(t, "concat_rows");
        if (t.dim(1) != n) throw std::invalid_argument("concat_rows: column mismatch");
        m += t.dim(0);
    }
    std::vector<double> out;
    out.reserve(size_t(m) * size_t(n));
    for (const Tensor& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
    return detail::make_op({m, n}, std::move(out), "concat_rows", parts, [n](TensorNode& self) {
        size_t off = 0;
        for (auto& p : self.parents) {
            size_t len = p->data.size();
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < len; ++i) p->grad[i] += self.grad[off + i];
            }
            off += len;
        }
    });
}

inline Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    detail::require_rank2(table, "gather_rows");
    if (ids.empty()) throw std::invalid_argument("gather_rows: empty id list");
    int n = table.dim(1);
    std::vector<double> out;
    out.reserve(ids.size() * size_t(n));
    for (int id : ids) {
        if (id < 0 || id >= table.dim(0)) throw std::invalid_argument("gather_rows: id " + std::to_string(id) + " out of range");
        out.insert(out.end(), table.data().begin() + size_t(id) * size_t(n), table.data().begin() + size_t(id + 1) * size_t(n));
    }
    return detail::make_op({int(ids.size()), n}, std::move(out), "gather_rows", {table}, [ids, n](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t r = 0; r < ids.size(); ++r)
            for (int j = 0; j < n; ++j)
                p->grad[size_t(ids[r]) * size_t(n) + size_t(j)] += self.grad[r * size_t(n) + size_t(j)];
    });
}

// y[i,:] = v for every i
inline Tensor row_broadcast(const Tensor& v, int rows) {
    detail::require_rank2(v, "row_broadcast");
    if (v.dim(0) != 1) throw std::invalid_argument("row_broadcast: expected 1xN input");
    int n = v.dim(1);
    std::vector<double> out;
    out.reserve(size_t(rows) * size_t(n));
    for (int i = 0; i < rows; ++i) out.insert(out.end(), v.data().begin(), v.data().end());
    return detail::make_op({rows, n}, std::move(out), "row_broadcast", {v}, [rows, n](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < n; ++j) p->grad[size_t(j)] += self.grad[size_t(i) * size_t(n) + size_t(j)];
    });
}

// y[i,j] = x[i,j] + r[0,j]
inline Tensor add_rowvec(const Tensor& x, const Tensor& r) {
    detail::require_rank2(x, "add_rowvec");
    detail::require_rank2(r, "add_rowvec");
    if (r.dim(0) != 1 || r.dim(1) != x.dim(1)) throw std::invalid_argument("add_rowvec: shape mismatch");
    int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(x.data());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[size_t(i) * size_t(n) + size_t(j)] += r.at(0, j);
    return detail::make_op({m, n}, std::move(out), "add_rowvec", {x, r}, [m, n](TensorNode& self) {
        auto& px = self.parents[0];
        auto& pr = self.parents[1];
        if (px->requires_grad) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
        }
        if (pr->requires_grad) {
            pr->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pr->grad[size_t(j)] += self.grad[size_t(i) * size_t(n) + size_t(j)];
        }
    });
}

// y[i,j] = x[i,j] * c[i,0]
inline Tensor mul_colvec(const Tensor& x, const Tensor& c) {
    detail::require_rank2(x, "mul_colvec");
    detail::require_rank2(c, "mul_colvec");
    if (c.dim(0) != x.dim(0) || c.dim(1) != 1) throw std::invalid_argument("mul_colvec: shape mismatch");
    int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(x.data());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[size_t(i) * size_t(n) + size_t(j)] *= c.at(i, 0);
    return detail::make_op({m, n}, std::move(out), "mul_colvec", {x, c}, [m, n](TensorNode& self) {
        auto& px = self.parents[0];
        auto& pc = self.parents[1];
        if (px->requires_grad) {
            px->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    px->grad[size_t(i) * size_t(n) + size_t(j)] += self.grad[size_t(i) * size_t(n) + size_t(j)] * pc->data[size_t(i)];
        }
        if (pc->requires_grad) {
            pc->ensure_grad();
            for (int i = 0; i < m; ++i) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j)
                    acc += self.grad[size_t(i) * size_t(n) + size_t(j)] * px->data[size_t(i) * size_t(n) + size_t(j)];
                pc->grad[size_t(i)] += acc;
            }
        }
    });
}

// y = x * s, s a 1-element tensor
inline Tensor mul_scalar_t(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) throw std::invalid_argument("mul_scalar_t: scalar tensor expected");
    double sv = s.data()[0];
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * sv;
    return detail::make_op(x.shape(), std::move(out), "mul_scalar_t", {x, s}, [](TensorNode& self) {
        auto& px = self.parents[0];
        auto& ps = self.parents[1];
        if (px->requires_grad) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i] * ps->data[0];
        }
        if (ps->requires_grad) {
            ps->ensure_grad();
            double acc = 0.0;
            for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->data[i];
            ps->grad[0] += acc;
        }
    });
}

// Bijective index remap: y[i] = x[map[i]]. Used for patchify/unpatchify.
inline Tensor permute_elems(const Tensor& x, const std::vector<size_t>& map, std::vector<int> out_shape) {
    std::vector<double> out(map.size());
    for (size_t i = 0; i < map.size(); ++i) out[i] = x.data()[map[i]];
    return detail::make_op(std::move(out_shape), std::move(out), "permute", {x}, [map](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < map.size(); ++i) p->grad[map[i]] += self.grad[i];
    });
}

inline Tensor reshape(const Tensor& x, std::vector<int> shape) {
    size_t n = 1;
    for (int e : shape) n *= size_t(std::max(e, 0));
    if (shape.empty() || n != x.numel()) throw std::invalid_argument("reshape: element count mismatch");
    return detail::make_op(std::move(shape), x.data(), "reshape", {x}, [](TensorNode& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    });
}

// ----------------------------- norm helpers -------------------------------

// Euclidean norm of any tensor, as a plain number.
inline double l2_norm(const Tensor& v) {
    double s = 0.0;
    for (double x : v.data()) s += x * x;
    return std::sqrt(s);
}

// Euclidean norm as a scalar tensor (differentiable).
inline Tensor l2_norm_t(const Tensor& v) {
    Tensor sq = mul(v, v);
    return sqrt_elem(sum(sq));
}

// Per-row Euclidean norms of an m x n tensor, as m x 1 (differentiable).
inline Tensor row_l2_norms(const Tensor& x) {
    return sqrt_elem(row_sum(mul(x, x)));
}

// Rescale v to the target norm, direction preserved.
inline Tensor scale_to_norm(const Tensor& v, double target) {
    double norm = l2_norm(v);
    if (norm <= 0.0)
        throw std::invalid_argument("scale_to_norm: zero vector has no direction (target " + std::to_string(target) + ")");
    return scale(v, target / norm);
}

// ----------------------------- composite losses ---------------------------

inline Tensor mse(const Tensor& a, const Tensor& b) {
    Tensor d = sub(a, b);
    return scale(sum(mul(d, d)), 1.0 / double(a.numel()));
}

// Gain-free RMS normalization over rows.
inline Tensor rmsnorm_rows(const Tensor& x, double eps = 1e-6) {
    int n     = x.dim(1);
    Tensor ms = scale(row_sum(mul(x, x)), 1.0 / double(n));
    return mul_colvec(x, recip(sqrt_elem(add_const(ms, eps))));
}

// ------------------------------ grad check --------------------------------

// Max relative error between reverse-mode and central-difference gradients
// of a scalar-valued f at x. f must be pure and deterministic.
template <class F>
double grad_check(F&& f, const Tensor& x, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps outside [1e-7, 1e-3]");
    Tensor xg = x.clone(true);
    Tensor y  = f(xg);
    if (y.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    if (!std::isfinite(y.scalar())) throw std::invalid_argument("grad_check: non-finite f(x)");
    y.backward();
    std::vector<double> analytic = xg.grad();
    if (analytic.empty()) analytic.assign(x.numel(), 0.0);  // x unused by f

    Tensor xp = x.clone(false);
    double max_err = 0.0;
    for (size_t i = 0; i < xp.numel(); ++i) {
        double orig  = xp.data()[i];
        xp.data()[i] = orig + eps;
        double fp    = f(xp).scalar();
        xp.data()[i] = orig - eps;
        double fm    = f(xp).scalar();
        xp.data()[i] = orig;
        double numeric = (fp - fm) / (2.0 * eps);
        double err     = std::abs(analytic[i] - numeric) / std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        max_err        = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace natlab

#endif  // NATLAB_TENSOR_HPP
