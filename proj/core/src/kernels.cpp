#include "memf/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace memf::kern {

namespace {
void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}
} // namespace

Tensor affine_vec(const Tensor& W, const Tensor& b, const Tensor& x) {
    require(W.rank() == 2 && x.rank() == 1 && b.rank() == 1, "affine: bad ranks");
    require(W.cols() == x.numel() && W.rows() == b.numel(),
            "affine: W " + W.shape_str() + " incompatible with x " + x.shape_str());
    const std::size_t m = W.rows(), k = W.cols();
    Tensor y({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = b[i];
        const double* wrow = W.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) acc += wrow[j] * x[j];
        y[i] = acc;
    }
    return y;
}

Tensor affine_rows(const Tensor& X, const Tensor& W, const Tensor& b) {
    require(X.rank() == 2 && W.rank() == 2 && b.rank() == 1, "affine_rows: bad ranks");
    require(X.cols() == W.cols() && W.rows() == b.numel(),
            "affine_rows: X " + X.shape_str() + " incompatible with W " + W.shape_str());
    const std::size_t T = X.rows(), k = X.cols(), m = W.rows();
    Tensor Y({T, m});
    for (std::size_t t = 0; t < T; ++t) {
        const double* xr = X.data() + t * k;
        double* yr = Y.data() + t * m;
        for (std::size_t i = 0; i < m; ++i) {
            double acc = b[i];
            const double* wrow = W.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) acc += wrow[j] * xr[j];
            yr[i] = acc;
        }
    }
    return Y;
}

Tensor matmul(const Tensor& A, const Tensor& B) {
    require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
            "matmul: " + A.shape_str() + " * " + B.shape_str());
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor C({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = C.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A.data()[i * k + p];
            const double* brow = B.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
    return C;
}

Tensor matmul_nt(const Tensor& A, const Tensor& B) {
    require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(),
            "matmul_nt: " + A.shape_str() + " * " + B.shape_str() + "^T");
    const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    Tensor C({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = A.data() + i * k;
        double* crow = C.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = B.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
    return C;
}

Tensor matmul_tn(const Tensor& A, const Tensor& B) {
    require(A.rank() == 2 && B.rank() == 2 && A.rows() == B.rows(),
            "matmul_tn: " + A.shape_str() + "^T * " + B.shape_str());
    const std::size_t k = A.rows(), m = A.cols(), n = B.cols();
    Tensor C({m, n});
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = A.data() + p * m;
        const double* brow = B.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = C.data() + i * n;
            const double a = arow[i];
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
    return C;
}

void add_inplace(Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor c = a;
    add_inplace(c, b);
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "sub: shape mismatch");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) c[i] -= b[i];
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "mul: shape mismatch");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) c[i] *= b[i];
    return c;
}

Tensor scale(const Tensor& a, double c) {
    Tensor y = a;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= c;
    return y;
}

Tensor tanh(const Tensor& a) {
    Tensor y = a;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::tanh(y[i]);
    return y;
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
} // namespace

Tensor gelu(const Tensor& a) {
    Tensor y = a;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double x = y[i];
        y[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return y;
}

double gelu_deriv(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

namespace {
void softmax_span(const double* in, double* out, std::size_t n, double tau) {
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp((in[i] - mx) / tau);
        z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
}
} // namespace

Tensor softmax(const Tensor& a, double tau) {
    require(tau > 0.0, "softmax: temperature must be positive");
    Tensor y(a.shape());
    if (a.rank() <= 1) {
        softmax_span(a.data(), y.data(), a.numel(), tau);
    } else {
        require(a.rank() == 2, "softmax: rank > 2 unsupported");
        for (std::size_t t = 0; t < a.rows(); ++t)
            softmax_span(a.data() + t * a.cols(), y.data() + t * a.cols(), a.cols(), tau);
    }
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t d = gain.numel();
    require(bias.numel() == d, "layer_norm: gain/bias mismatch");
    const std::size_t T = x.rank() == 2 ? x.rows() : 1;
    require(x.numel() == T * d, "layer_norm: feature width mismatch");
    Tensor y(x.shape());
    for (std::size_t t = 0; t < T; ++t) {
        const double* xr = x.data() + t * d;
        double* yr = y.data() + t * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i) yr[i] = gain[i] * (xr[i] - mu) * inv + bias[i];
    }
    return y;
}

Tensor weighted_rowsum(const Tensor& X, const Tensor& w) {
    require(X.rank() == 2 && w.numel() == X.rows(), "weighted_rowsum: shape mismatch");
    Tensor y({X.cols()});
    for (std::size_t t = 0; t < X.rows(); ++t) {
        const double* xr = X.data() + t * X.cols();
        for (std::size_t i = 0; i < X.cols(); ++i) y[i] += w[t] * xr[i];
    }
    return y;
}

double sse(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "sse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double l2_dist(const Tensor& a, const Tensor& b) { return std::sqrt(sse(a, b)); }

Tensor standardize(const Tensor& x, double sigma_floor) {
    const std::size_t n = x.numel();
    require(n > 0, "standardize: empty tensor");
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= static_cast<double>(n);
    const double sd = std::max(std::sqrt(var), sigma_floor);
    Tensor y = x;
    for (std::size_t i = 0; i < n; ++i) y[i] = (y[i] - mu) / sd;
    return y;
}

} // namespace memf::kern
