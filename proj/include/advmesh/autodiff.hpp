#pragma once

#include <cmath>
#include <vector>

namespace advmesh {

// Minimal reverse-mode tape for scalar expressions. Used to backpropagate
// through the trained detector's box-fit head, whose composition (soft
// memberships, complex orientation moments, soft extremes, blends) is too
// entangled to hand-differentiate safely. Nodes hold at most two parents
// with precomputed local partials.
class Tape {
 public:
    struct Node {
        int a = -1, b = -1;
        double wa = 0.0, wb = 0.0;
    };

    int input(double) {
        nodes_.push_back({});
        return static_cast<int>(nodes_.size()) - 1;
    }
    int unary(int a, double wa) {
        nodes_.push_back({a, -1, wa, 0.0});
        return static_cast<int>(nodes_.size()) - 1;
    }
    int binary(int a, int b, double wa, double wb) {
        nodes_.push_back({a, b, wa, wb});
        return static_cast<int>(nodes_.size()) - 1;
    }
    size_t size() const { return nodes_.size(); }

    // Adjoints of every node for d(node `of`)/d(everything).
    std::vector<double> gradient(int of) const {
        std::vector<double> adj(nodes_.size(), 0.0);
        adj[of] = 1.0;
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            const double g = adj[i];
            if (g == 0.0) continue;
            const Node& n = nodes_[i];
            if (n.a >= 0) adj[n.a] += g * n.wa;
            if (n.b >= 0) adj[n.b] += g * n.wb;
        }
        return adj;
    }

 private:
    std::vector<Node> nodes_;
};

// Dual value: tape index plus primal. Constants carry idx = -1.
struct Ad {
    Tape* tape = nullptr;
    int idx = -1;
    double val = 0.0;
};

inline Ad ad_input(Tape& tape, double v) { return {&tape, tape.input(v), v}; }
inline Ad ad_const(double v) { return {nullptr, -1, v}; }

inline Ad operator+(const Ad& x, const Ad& y) {
    Tape* t = x.tape ? x.tape : y.tape;
    if (!t) return ad_const(x.val + y.val);
    if (x.idx < 0) return {t, t->unary(y.idx, 1.0), x.val + y.val};
    if (y.idx < 0) return {t, t->unary(x.idx, 1.0), x.val + y.val};
    return {t, t->binary(x.idx, y.idx, 1.0, 1.0), x.val + y.val};
}
inline Ad operator-(const Ad& x, const Ad& y) {
    Tape* t = x.tape ? x.tape : y.tape;
    if (!t) return ad_const(x.val - y.val);
    if (x.idx < 0) return {t, t->unary(y.idx, -1.0), x.val - y.val};
    if (y.idx < 0) return {t, t->unary(x.idx, 1.0), x.val - y.val};
    return {t, t->binary(x.idx, y.idx, 1.0, -1.0), x.val - y.val};
}
inline Ad operator-(const Ad& x) { return ad_const(0.0) - x; }
inline Ad operator*(const Ad& x, const Ad& y) {
    Tape* t = x.tape ? x.tape : y.tape;
    if (!t) return ad_const(x.val * y.val);
    if (x.idx < 0) return {t, t->unary(y.idx, x.val), x.val * y.val};
    if (y.idx < 0) return {t, t->unary(x.idx, y.val), x.val * y.val};
    return {t, t->binary(x.idx, y.idx, y.val, x.val), x.val * y.val};
}
inline Ad operator/(const Ad& x, const Ad& y) {
    Tape* t = x.tape ? x.tape : y.tape;
    const double inv = 1.0 / y.val;
    if (!t) return ad_const(x.val * inv);
    if (x.idx < 0) return {t, t->unary(y.idx, -x.val * inv * inv), x.val * inv};
    if (y.idx < 0) return {t, t->unary(x.idx, inv), x.val * inv};
    return {t, t->binary(x.idx, y.idx, inv, -x.val * inv * inv), x.val * inv};
}
inline Ad operator+(const Ad& x, double c) { return x + ad_const(c); }
inline Ad operator+(double c, const Ad& x) { return ad_const(c) + x; }
inline Ad operator-(const Ad& x, double c) { return x - ad_const(c); }
inline Ad operator-(double c, const Ad& x) { return ad_const(c) - x; }
inline Ad operator*(const Ad& x, double c) { return x * ad_const(c); }
inline Ad operator*(double c, const Ad& x) { return ad_const(c) * x; }
inline Ad operator/(const Ad& x, double c) { return x / ad_const(c); }
inline Ad operator/(double c, const Ad& x) { return ad_const(c) / x; }

inline Ad ad_apply(const Ad& x, double v, double dv) {
    if (!x.tape || x.idx < 0) return ad_const(v);
    return {x.tape, x.tape->unary(x.idx, dv), v};
}

inline Ad exp(const Ad& x) { const double e = std::exp(x.val); return ad_apply(x, e, e); }
inline Ad log(const Ad& x) { return ad_apply(x, std::log(x.val), 1.0 / x.val); }
inline Ad sqrt(const Ad& x) {
    const double s = std::sqrt(x.val);
    return ad_apply(x, s, 0.5 / s);
}
inline Ad sin(const Ad& x) { return ad_apply(x, std::sin(x.val), std::cos(x.val)); }
inline Ad cos(const Ad& x) { return ad_apply(x, std::cos(x.val), -std::sin(x.val)); }
inline Ad tanh(const Ad& x) {
    const double th = std::tanh(x.val);
    return ad_apply(x, th, 1.0 - th * th);
}
inline Ad abs(const Ad& x) {
    return ad_apply(x, std::abs(x.val), x.val > 0.0 ? 1.0 : (x.val < 0.0 ? -1.0 : 0.0));
}
inline Ad logistic(const Ad& x) {
    const double s = 1.0 / (1.0 + std::exp(-x.val));
    return ad_apply(x, s, s * (1.0 - s));
}
inline Ad atan2(const Ad& y, const Ad& x) {
    const double v = std::atan2(y.val, x.val);
    const double inv = 1.0 / (x.val * x.val + y.val * y.val);
    Tape* t = y.tape ? y.tape : x.tape;
    if (!t) return ad_const(v);
    if (y.idx < 0) return {t, t->unary(x.idx, -y.val * inv), v};
    if (x.idx < 0) return {t, t->unary(y.idx, x.val * inv), v};
    return {t, t->binary(y.idx, x.idx, x.val * inv, -y.val * inv), v};
}

// Plain-double mirror so the fit math can be written once and instantiated
// for both the forward pass and the tape.
struct AdOpsDouble {
    using Scalar = double;
    static double input(double v) { return v; }
    static double constant(double v) { return v; }
    static double value(double v) { return v; }
};

struct AdOpsTape {
    using Scalar = Ad;
    Tape* tape;
    Ad input(double v) const { return ad_input(*tape, v); }
    static Ad constant(double v) { return ad_const(v); }
    static double value(const Ad& v) { return v.val; }
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace advmesh
