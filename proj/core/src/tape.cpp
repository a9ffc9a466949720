#include "memf/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "memf/kernels.hpp"

namespace memf {

// ---- ParamStore -------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (pos_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    pos_[name] = items_.size();
    items_.emplace_back(name, std::move(init));
    return items_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = pos_.find(name);
    if (it == pos_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return items_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = pos_.find(name);
    if (it == pos_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return items_[it->second].second;
}

bool ParamStore::contains(const std::string& name) const { return pos_.count(name) > 0; }

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [name, t] : items_) {
        h = fnv1a(name.data(), name.size(), h);
        for (std::size_t d : t.shape()) h = fnv1a(&d, sizeof(d), h);
        h = fnv1a(t.data(), t.numel() * sizeof(double), h);
    }
    return h;
}

// ---- GradStore --------------------------------------------------------------

void GradStore::accumulate(const std::string& name, const Tensor& g) {
    auto it = pos_.find(name);
    if (it == pos_.end()) {
        pos_[name] = items_.size();
        items_.emplace_back(name, g);
    } else {
        kern::add_inplace(items_[it->second].second, g);
    }
}

Tensor* GradStore::find(const std::string& name) {
    auto it = pos_.find(name);
    return it == pos_.end() ? nullptr : &items_[it->second].second;
}

const Tensor* GradStore::find(const std::string& name) const {
    auto it = pos_.find(name);
    return it == pos_.end() ? nullptr : &items_[it->second].second;
}

void GradStore::clear() {
    items_.clear();
    pos_.clear();
}

void GradStore::scale_all(double s) {
    for (auto& [name, g] : items_)
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= s;
}

// ---- Tape -------------------------------------------------------------------

Tape::Var Tape::push(Tensor value, bool needs, std::string op,
                     std::function<void(Tape&, const Node&)> back) {
    Node n;
    n.grad = Tensor::zeros(value.shape());
    n.value = std::move(value);
    n.requires_grad = needs;
    n.op = std::move(op);
    if (needs) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw std::out_of_range("Tape: invalid node handle");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw std::out_of_range("Tape: invalid node handle");
    return nodes_[static_cast<std::size_t>(v.id)];
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
    if (!node(a).value.same_shape(node(b).value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    node(a).value.shape_str() + " vs " + node(b).value.shape_str());
}

Tape::Var Tape::leaf(Tensor value, bool trainable) {
    return push(std::move(value), trainable, "leaf", {});
}

Tape::Var Tape::param(const std::string& name, const Tensor& value) {
    Var v = push(value, true, "param:" + name, {});
    bound_params_.emplace_back(name, v.id);
    return v;
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
const Tensor& Tape::grad(Var v) const { return node(v).grad; }

Tape::Var Tape::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor y = kern::add(node(a).value, node(b).value);
    int ia = a.id, ib = b.id;
    return push(std::move(y), needs_grad(a) || needs_grad(b), "add",
                [ia, ib](Tape& t, const Node& self) {
                    kern::add_inplace(t.grad_ref(ia), self.grad);
                    kern::add_inplace(t.grad_ref(ib), self.grad);
                });
}

Tape::Var Tape::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor y = kern::sub(node(a).value, node(b).value);
    int ia = a.id, ib = b.id;
    return push(std::move(y), needs_grad(a) || needs_grad(b), "sub",
                [ia, ib](Tape& t, const Node& self) {
                    Tensor& ga = t.grad_ref(ia);
                    Tensor& gb = t.grad_ref(ib);
                    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
                        ga[i] += self.grad[i];
                        gb[i] -= self.grad[i];
                    }
                });
}

Tape::Var Tape::mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor y = kern::mul(node(a).value, node(b).value);
    int ia = a.id, ib = b.id;
    return push(std::move(y), needs_grad(a) || needs_grad(b), "mul",
                [ia, ib](Tape& t, const Node& self) {
                    const Tensor& va = t.nodes_[ia].value;
                    const Tensor& vb = t.nodes_[ib].value;
                    Tensor& ga = t.grad_ref(ia);
                    Tensor& gb = t.grad_ref(ib);
                    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
                        ga[i] += self.grad[i] * vb[i];
                        gb[i] += self.grad[i] * va[i];
                    }
                });
}

Tape::Var Tape::scale(Var a, double c) {
    Tensor y = kern::scale(node(a).value, c);
    int ia = a.id;
    return push(std::move(y), needs_grad(a), "scale",
                [ia, c](Tape& t, const Node& self) {
                    Tensor& ga = t.grad_ref(ia);
                    for (std::size_t i = 0; i < self.grad.numel(); ++i) ga[i] += c * self.grad[i];
                });
}

Tape::Var Tape::tanh_(Var a) {
    Tensor y = kern::tanh(node(a).value);
    int ia = a.id;
    Tensor yv = y;  // captured for the derivative
    return push(std::move(y), needs_grad(a), "tanh",
                [ia, yv](Tape& t, const Node& self) {
                    Tensor& ga = t.grad_ref(ia);
                    for (std::size_t i = 0; i < self.grad.numel(); ++i)
                        ga[i] += self.grad[i] * (1.0 - yv[i] * yv[i]);
                });
}

Tape::Var Tape::gelu(Var a) {
    Tensor y = kern::gelu(node(a).value);
    int ia = a.id;
    return push(std::move(y), needs_grad(a), "gelu",
                [ia](Tape& t, const Node& self) {
                    const Tensor& x = t.nodes_[ia].value;
                    Tensor& ga = t.grad_ref(ia);
                    for (std::size_t i = 0; i < self.grad.numel(); ++i)
                        ga[i] += self.grad[i] * kern::gelu_deriv(x[i]);
                });
}

Tape::Var Tape::dropout(Var a, double p, Rng& rng, bool train_mode) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
    if (!train_mode || p == 0.0) return a;  // identity at eval time
    const Tensor& x = node(a).value;
    // Inverted dropout: surviving entries scaled by 1/(1-p).
    Tensor mask(x.shape());
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < mask.numel(); ++i)
        mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    Tensor y = kern::mul(x, mask);
    int ia = a.id;
    return push(std::move(y), needs_grad(a), "dropout",
                [ia, mask](Tape& t, const Node& self) {
                    Tensor& ga = t.grad_ref(ia);
                    for (std::size_t i = 0; i < self.grad.numel(); ++i)
                        ga[i] += self.grad[i] * mask[i];
                });
}

Tape::Var Tape::affine(Var W, Var b, Var x) {
    const Tensor& vW = node(W).value;
    const Tensor& vb = node(b).value;
    const Tensor& vx = node(x).value;
    Tensor y = vx.rank() == 1 ? kern::affine_vec(vW, vb, vx) : kern::affine_rows(vx, vW, vb);
    int iw = W.id, ib = b.id, ix = x.id;
    bool rank1 = vx.rank() == 1;
    return push(std::move(y), needs_grad(W) || needs_grad(b) || needs_grad(x), "affine",
                [iw, ib, ix, rank1](Tape& t, const Node& self) {
                    const Tensor& vW = t.nodes_[iw].value;
                    const Tensor& vx = t.nodes_[ix].value;
                    Tensor& gW = t.grad_ref(iw);
                    Tensor& gb = t.grad_ref(ib);
                    Tensor& gx = t.grad_ref(ix);
                    const std::size_t m = vW.rows(), k = vW.cols();
                    if (rank1) {
                        for (std::size_t i = 0; i < m; ++i) {
                            const double g = self.grad[i];
                            gb[i] += g;
                            for (std::size_t j = 0; j < k; ++j) {
                                gW.data()[i * k + j] += g * vx[j];
                                gx[j] += g * vW.data()[i * k + j];
                            }
                        }
                    } else {
                        const std::size_t T = vx.rows();
                        for (std::size_t r = 0; r < T; ++r) {
                            const double* grow = self.grad.data() + r * m;
                            const double* xrow = vx.data() + r * k;
                            double* gxrow = gx.data() + r * k;
                            for (std::size_t i = 0; i < m; ++i) {
                                const double g = grow[i];
                                gb[i] += g;
                                const double* wrow = vW.data() + i * k;
                                double* gwrow = gW.data() + i * k;
                                for (std::size_t j = 0; j < k; ++j) {
                                    gwrow[j] += g * xrow[j];
                                    gxrow[j] += g * wrow[j];
                                }
                            }
                        }
                    }
                });
}

Tape::Var Tape::matmul(Var A, Var B) {
    Tensor y = kern::matmul(node(A).value, node(B).value);
    int ia = A.id, ib = B.id;
    return push(std::move(y), needs_grad(A) || needs_grad(B), "matmul",
                [ia, ib](Tape& t, const Node& self) {
                    // dA = G * B^T, dB = A^T * G
                    kern::add_inplace(t.grad_ref(ia), kern::matmul_nt(self.grad, t.nodes_[ib].value));
                    kern::add_inplace(t.grad_ref(ib), kern::matmul_tn(t.nodes_[ia].value, self.grad));
                });
}

Tape::Var Tape::matmul_nt(Var A, Var B) {
    Tensor y = kern::matmul_nt(node(A).value, node(B).value);
    int ia = A.id, ib = B.id;
    return push(std::move(y), needs_grad(A) || needs_grad(B), "matmul_nt",
                [ia, ib](Tape& t, const Node& self) {
                    // C = A * B^T: dA = G * B, dB = G^T * A
                    kern::add_inplace(t.grad_ref(ia), kern::matmul(self.grad, t.nodes_[ib].value));
                    kern::add_inplace(t.grad_ref(ib), kern::matmul_tn(self.grad, t.nodes_[ia].value));
                });
}

Tape::Var Tape::weighted_rowsum(Var X, Var w) {
    Tensor y = kern::weighted_rowsum(node(X).value, node(w).value);
    int ix = X.id, iw = w.id;
    return push(std::move(y), needs_grad(X) || needs_grad(w), "weighted_rowsum",
                [ix, iw](Tape& t, const Node& self) {
                    const Tensor& vX = t.nodes_[ix].value;
                    const Tensor& vw = t.nodes_[iw].value;
                    Tensor& gX = t.grad_ref(ix);
                    Tensor& gw = t.grad_ref(iw);
                    const std::size_t T = vX.rows(), d = vX.cols();
                    for (std::size_t r = 0; r < T; ++r) {
                        const double* xrow = vX.data() + r * d;
                        double* gxrow = gX.data() + r * d;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < d; ++i) {
                            gxrow[i] += vw[r] * self.grad[i];
                            acc += xrow[i] * self.grad[i];
                        }
                        gw[r] += acc;
                    }
                });
}

Tape::Var Tape::sum(Var a) {
    double acc = 0.0;
    const Tensor& v = node(a).value;
    for (std::size_t i = 0; i < v.numel(); ++i) acc += v[i];
    int ia = a.id;
    return push(Tensor::scalar(acc), needs_grad(a), "sum",
                [ia](Tape& t, const Node& self) {
                    Tensor& ga = t.grad_ref(ia);
                    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[0];
                });
}

Tape::Var Tape::sse(Var a, Var b) {
    check_same_shape(a, b, "sse");
    double acc = kern::sse(node(a).value, node(b).value);
    int ia = a.id, ib = b.id;
    return push(Tensor::scalar(acc), needs_grad(a) || needs_grad(b), "sse",
                [ia, ib](Tape& t, const Node& self) {
                    const Tensor& va = t.nodes_[ia].value;
                    const Tensor& vb = t.nodes_[ib].value;
                    Tensor& ga = t.grad_ref(ia);
                    Tensor& gb = t.grad_ref(ib);
                    const double g = self.grad[0];
                    for (std::size_t i = 0; i < va.numel(); ++i) {
                        const double d = 2.0 * (va[i] - vb[i]) * g;
                        ga[i] += d;
                        gb[i] -= d;
                    }
                });
}

Tape::Var Tape::row(Var X, std::size_t i) {
    const Tensor& v = node(X).value;
    if (v.rank() != 2 || i >= v.rows()) throw std::invalid_argument("row: bad index");
    const std::size_t d = v.cols();
    Tensor y({d});
    for (std::size_t j = 0; j < d; ++j) y[j] = v.data()[i * d + j];
    int ix = X.id;
    return push(std::move(y), needs_grad(X), "row",
                [ix, i, d](Tape& t, const Node& self) {
                    double* gx = t.grad_ref(ix).data() + i * d;
                    for (std::size_t j = 0; j < d; ++j) gx[j] += self.grad[j];
                });
}

Tape::Var Tape::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
    const std::size_t d = node(rows[0]).value.numel();
    const std::size_t T = rows.size();
    Tensor y({T, d});
    bool req = false;
    std::vector<int> ids(T);
    for (std::size_t r = 0; r < T; ++r) {
        const Tensor& v = node(rows[r]).value;
        if (v.numel() != d) throw std::invalid_argument("stack_rows: inconsistent widths");
        for (std::size_t j = 0; j < d; ++j) y.data()[r * d + j] = v[j];
        req = req || needs_grad(rows[r]);
        ids[r] = rows[r].id;
    }
    return push(std::move(y), req, "stack_rows",
                [ids, d](Tape& t, const Node& self) {
                    for (std::size_t r = 0; r < ids.size(); ++r) {
                        Tensor& g = t.grad_ref(ids[r]);
                        const double* grow = self.grad.data() + r * d;
                        for (std::size_t j = 0; j < d; ++j) g[j] += grow[j];
                    }
                });
}

Tape::Var Tape::concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input");
    std::size_t total = 0;
    bool req = false;
    for (Var p : parts) {
        total += node(p).value.numel();
        req = req || needs_grad(p);
    }
    Tensor y({total});
    std::vector<int> ids;
    std::vector<std::size_t> lens;
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        for (std::size_t i = 0; i < v.numel(); ++i) y[off + i] = v[i];
        ids.push_back(p.id);
        lens.push_back(v.numel());
        off += v.numel();
    }
    return push(std::move(y), req, "concat",
                [ids, lens](Tape& t, const Node& self) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                        Tensor& g = t.grad_ref(ids[k]);
                        for (std::size_t i = 0; i < lens[k]; ++i) g[i] += self.grad[off + i];
                        off += lens[k];
                    }
                });
}

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    const std::size_t T = node(parts[0]).value.rows();
    std::size_t total = 0;
    bool req = false;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        if (v.rank() != 2 || v.rows() != T) throw std::invalid_argument("concat_cols: row mismatch");
        total += v.cols();
        req = req || needs_grad(p);
    }
    Tensor y({T, total});
    std::vector<int> ids;
    std::vector<std::size_t> widths;
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        for (std::size_t r = 0; r < T; ++r)
            for (std::size_t j = 0; j < v.cols(); ++j)
                y.data()[r * total + off + j] = v.data()[r * v.cols() + j];
        ids.push_back(p.id);
        widths.push_back(v.cols());
        off += v.cols();
    }
    return push(std::move(y), req, "concat_cols",
                [ids, widths, T, total](Tape& t, const Node& self) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                        Tensor& g = t.grad_ref(ids[k]);
                        for (std::size_t r = 0; r < T; ++r)
                            for (std::size_t j = 0; j < widths[k]; ++j)
                                g.data()[r * widths[k] + j] += self.grad.data()[r * total + off + j];
                        off += widths[k];
                    }
                });
}

Tape::Var Tape::softmax(Var a, double tau) {
    Tensor y = kern::softmax(node(a).value, tau);
    int ia = a.id;
    Tensor yv = y;
    return push(std::move(y), needs_grad(a), "softmax",
                [ia, yv, tau](Tape& t, const Node& self) {
                    Tensor& ga = t.grad_ref(ia);
                    const std::size_t n = yv.rank() <= 1 ? yv.numel() : yv.cols();
                    const std::size_t T = yv.numel() / n;
                    for (std::size_t r = 0; r < T; ++r) {
                        const double* yr = yv.data() + r * n;
                        const double* gr = self.grad.data() + r * n;
                        double dot = 0.0;
                        for (std::size_t i = 0; i < n; ++i) dot += gr[i] * yr[i];
                        double* gar = ga.data() + r * n;
                        for (std::size_t i = 0; i < n; ++i)
                            gar[i] += yr[i] * (gr[i] - dot) / tau;
                    }
                });
}

Tape::Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    Tensor y = kern::layer_norm(node(x).value, node(gain).value, node(bias).value, eps);
    int ix = x.id, ig = gain.id, ib = bias.id;
    return push(std::move(y), needs_grad(x) || needs_grad(gain) || needs_grad(bias), "layer_norm",
                [ix, ig, ib, eps](Tape& t, const Node& self) {
                    const Tensor& vx = t.nodes_[ix].value;
                    const Tensor& vg = t.nodes_[ig].value;
                    Tensor& gx = t.grad_ref(ix);
                    Tensor& gg = t.grad_ref(ig);
                    Tensor& gb = t.grad_ref(ib);
                    const std::size_t d = vg.numel();
                    const std::size_t T = vx.numel() / d;
                    for (std::size_t r = 0; r < T; ++r) {
                        const double* xr = vx.data() + r * d;
                        const double* gr = self.grad.data() + r * d;
                        double mu = 0.0;
                        for (std::size_t i = 0; i < d; ++i) mu += xr[i];
                        mu /= static_cast<double>(d);
                        double var = 0.0;
                        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
                        var /= static_cast<double>(d);
                        const double inv = 1.0 / std::sqrt(var + eps);
                        // dL/dxhat, plus the two reduction terms of the LN backward
                        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                        for (std::size_t i = 0; i < d; ++i) {
                            const double xhat = (xr[i] - mu) * inv;
                            const double dxhat = gr[i] * vg[i];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                            gg[i] += gr[i] * xhat;
                            gb[i] += gr[i];
                        }
                        double* gxr = gx.data() + r * d;
                        const double dn = static_cast<double>(d);
                        for (std::size_t i = 0; i < d; ++i) {
                            const double xhat = (xr[i] - mu) * inv;
                            const double dxhat = gr[i] * vg[i];
                            gxr[i] += inv * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
                        }
                    }
                });
}

void Tape::backward(Var output) {
    const Tensor& v = node(output).value;
    if (v.numel() != 1)
        throw std::invalid_argument("backward: scalar output required, got " + v.shape_str());
    backward(output, Tensor::scalar(1.0));
}

void Tape::backward(Var output, const Tensor& output_grad) {
    Node& out = node(output);
    if (!output_grad.same_shape(out.value))
        throw std::invalid_argument("backward: output gradient shape mismatch");
    kern::add_inplace(out.grad, output_grad);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.back) n.back(*this, n);
    }
    backward_ran_ = true;
}

void Tape::collect_param_grads(GradStore& grads) const {
    if (!backward_ran_) throw std::logic_error("collect_param_grads: backward has not run");
    for (const auto& [name, id] : bound_params_)
        grads.accumulate(name, nodes_[static_cast<std::size_t>(id)].grad);
}

} // namespace memf
