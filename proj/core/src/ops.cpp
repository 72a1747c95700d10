#include "dome/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dome {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

void expect_matrix(const Tensor& t, const char* what) {
    if (t.ndim() != 2)
        throw ShapeError(std::string(what) + ": expected a 2-D tensor");
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shapes differ");
}

/// Accepts a length-n vector shaped [n], [1 x n], or [n x 1].
void expect_vector_len(const Tensor& t, std::size_t n, const char* what) {
    const bool ok =
        (t.ndim() == 1 && t.size() == n) ||
        (t.ndim() == 2 && (t.rows() == 1 || t.cols() == 1) && t.size() == n);
    if (!ok)
        throw ShapeError(std::string(what) + ": expected a length-" +
                         std::to_string(n) + " vector");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    expect_matrix(a, "matmul");
    expect_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: inner dimensions " + std::to_string(k) +
                         " and " + std::to_string(b.rows()) + " disagree");
    std::vector<double> out(m * n, 0.0);
    const std::vector<double>& av = a.data();
    const std::vector<double>& bv = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
            const double x = av[i * k + t];
            if (x == 0.0) continue;
            const double* brow = bv.data() + t * n;
            double* crow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += x * brow[j];
        }
    NodePtr an = a.node_ptr(), bn = b.node_ptr();
    return make_result(
        {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = self.grad[i * n + j];
                        if (g == 0.0) continue;
                        for (std::size_t t = 0; t < k; ++t)
                            an->grad[i * k + t] += g * bn->value[t * n + j];
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t t = 0; t < k; ++t) {
                        const double x = an->value[i * k + t];
                        if (x == 0.0) continue;
                        const double* grow = self.grad.data() + i * n;
                        double* brow = bn->grad.data() + t * n;
                        for (std::size_t j = 0; j < n; ++j) brow[j] += x * grow[j];
                    }
            }
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    expect_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    NodePtr an = a.node_ptr(), bn = b.node_ptr();
    return make_result(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    expect_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    NodePtr an = a.node_ptr(), bn = b.node_ptr();
    return make_result(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    expect_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    NodePtr an = a.node_ptr(), bn = b.node_ptr();
    return make_result(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.data()[i];
    NodePtr an = a.node_ptr();
    return make_result(a.shape(), std::move(out), {a}, [an, c](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += c * self.grad[i];
    });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    expect_matrix(a, "add_rowvec");
    const std::size_t r = a.rows(), c = a.cols();
    expect_vector_len(v, c, "add_rowvec");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] = a.data()[i * c + j] + v.data()[j];
    NodePtr an = a.node_ptr(), vn = v.node_ptr();
    return make_result({r, c}, std::move(out), {a, v}, [an, vn, r, c](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i];
        }
        if (vn->requires_grad) {
            vn->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    vn->grad[j] += self.grad[i * c + j];
        }
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double x : a.data()) total += x;
    NodePtr an = a.node_ptr();
    return make_result({1}, {total}, {a}, [an](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0];
        for (double& gi : an->grad) gi += g;
    });
}

Tensor mean_rows(const Tensor& a) {
    expect_matrix(a, "mean_rows");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += a.data()[i * c + j];
    for (double& x : out) x /= static_cast<double>(r);
    NodePtr an = a.node_ptr();
    return make_result({1, c}, std::move(out), {a}, [an, r, c](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double inv = 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                an->grad[i * c + j] += self.grad[j] * inv;
    });
}

namespace {

/// Slice geometry for axis-wise reductions over 1-D/2-D tensors.
struct SliceView {
    std::size_t count;   // number of slices
    std::size_t len;     // elements per slice
    std::size_t start_stride;
    std::size_t step;
};

SliceView slice_view(const Tensor& x, std::size_t axis, const char* what) {
    if (x.ndim() == 1) {
        if (axis != 0)
            throw ShapeError(std::string(what) + ": axis out of range for 1-D tensor");
        return {1, x.size(), 0, 1};
    }
    if (x.ndim() == 2) {
        const std::size_t r = x.rows(), c = x.cols();
        if (axis == 1) return {r, c, c, 1};  // one slice per row
        if (axis == 0) return {c, r, 1, c};  // one slice per column
        throw ShapeError(std::string(what) + ": axis out of range for 2-D tensor");
    }
    throw ShapeError(std::string(what) + ": only 1-D and 2-D tensors supported");
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
    const SliceView view = slice_view(x, axis, "softmax");
    std::vector<double> out(x.size(), 0.0);
    const std::vector<double>& xv = x.data();
    for (std::size_t s = 0; s < view.count; ++s) {
        const std::size_t base = s * view.start_stride;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < view.len; ++i)
            mx = std::max(mx, xv[base + i * view.step]);
        if (mx <= kMaskedScore)
            throw DegenerateRow("softmax: slice " + std::to_string(s) +
                                " is entirely masked");
        double denom = 0.0;
        for (std::size_t i = 0; i < view.len; ++i) {
            const std::size_t idx = base + i * view.step;
            const double v = xv[idx];
            const double e = (v <= kMaskedScore) ? 0.0 : std::exp(v - mx);
            out[idx] = e;
            denom += e;
        }
        for (std::size_t i = 0; i < view.len; ++i) out[base + i * view.step] /= denom;
    }
    NodePtr xn = x.node_ptr();
    return make_result(x.shape(), std::move(out), {x}, [xn, view](TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t s = 0; s < view.count; ++s) {
            const std::size_t base = s * view.start_stride;
            double dot = 0.0;
            for (std::size_t i = 0; i < view.len; ++i) {
                const std::size_t idx = base + i * view.step;
                dot += self.grad[idx] * self.value[idx];
            }
            for (std::size_t i = 0; i < view.len; ++i) {
                const std::size_t idx = base + i * view.step;
                xn->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    expect_matrix(x, "layer_norm");
    const std::size_t r = x.rows(), c = x.cols();
    expect_vector_len(gain, c, "layer_norm gain");
    expect_vector_len(bias, c, "layer_norm bias");
    std::vector<double> xhat(r * c);
    std::vector<double> inv(r);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = x.data().data() + i * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        inv[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (row[j] - mu) * inv[i];
            xhat[i * c + j] = h;
            out[i * c + j] = gain.data()[j] * h + bias.data()[j];
        }
    }
    NodePtr xn = x.node_ptr(), gn = gain.node_ptr(), bn = bias.node_ptr();
    return make_result(
        {r, c}, std::move(out), {x, gain, bias},
        [xn, gn, bn, r, c, xhat = std::move(xhat),
         inv = std::move(inv)](TensorNode& self) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    double mean_g = 0.0, mean_gx = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double g = self.grad[i * c + j] * gn->value[j];
                        mean_g += g;
                        mean_gx += g * xhat[i * c + j];
                    }
                    mean_g /= static_cast<double>(c);
                    mean_gx /= static_cast<double>(c);
                    for (std::size_t j = 0; j < c; ++j) {
                        const double g = self.grad[i * c + j] * gn->value[j];
                        xn->grad[i * c + j] +=
                            (g - mean_g - xhat[i * c + j] * mean_gx) * inv[i];
                    }
                }
            }
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        gn->grad[j] += self.grad[i * c + j] * xhat[i * c + j];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        bn->grad[j] += self.grad[i * c + j];
            }
        });
}

Tensor segment_max_pool(const Tensor& x, const Segments& segments) {
    expect_matrix(x, "segment_max_pool");
    const std::size_t t = x.rows(), c = x.cols();
    if (segments.empty())
        throw ShapeError("segment_max_pool: no segments");
    std::size_t expect_begin = 0;
    for (const Segment& s : segments) {
        if (s.begin != expect_begin || s.end <= s.begin)
            throw ShapeError("segment_max_pool: segments must partition rows "
                             "with no empty segment");
        expect_begin = s.end;
    }
    if (expect_begin != t)
        throw ShapeError("segment_max_pool: segments do not cover all rows");

    const std::size_t l = segments.size();
    std::vector<double> out(l * c);
    std::vector<std::size_t> argmax(l * c);
    for (std::size_t s = 0; s < l; ++s)
        for (std::size_t j = 0; j < c; ++j) {
            std::size_t best = segments[s].begin;
            double bv = x.data()[best * c + j];
            for (std::size_t i = segments[s].begin + 1; i < segments[s].end; ++i) {
                const double v = x.data()[i * c + j];
                if (v > bv) {
                    bv = v;
                    best = i;
                }
            }
            out[s * c + j] = bv;
            argmax[s * c + j] = best;
        }
    NodePtr xn = x.node_ptr();
    return make_result({l, c}, std::move(out), {x},
                       [xn, l, c, argmax = std::move(argmax)](TensorNode& self) {
                           if (!xn->requires_grad) return;
                           xn->ensure_grad();
                           for (std::size_t s = 0; s < l; ++s)
                               for (std::size_t j = 0; j < c; ++j)
                                   xn->grad[argmax[s * c + j] * c + j] +=
                                       self.grad[s * c + j];
                       });
}

Tensor sinusoidal_pe(std::size_t length, std::size_t d) {
    if (d % 2 != 0)
        throw ConfigError("sinusoidal_pe: dimension must be even");
    std::vector<double> out(length * d);
    for (std::size_t pos = 0; pos < length; ++pos)
        for (std::size_t i = 0; i < d / 2; ++i) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, (2.0 * static_cast<double>(i)) /
                                      static_cast<double>(d));
            out[pos * d + 2 * i] = std::sin(angle);
            out[pos * d + 2 * i + 1] = std::cos(angle);
        }
    return Tensor::from({length, d}, std::move(out));
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: probability must be in [0, 1)");
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> factor(x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        factor[i] = (rng.uniform() < p) ? 0.0 : keep_scale;
        out[i] = x.data()[i] * factor[i];
    }
    NodePtr xn = x.node_ptr();
    return make_result(x.shape(), std::move(out), {x},
                       [xn, factor = std::move(factor)](TensorNode& self) {
                           if (!xn->requires_grad) return;
                           xn->ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                               xn->grad[i] += self.grad[i] * factor[i];
                       });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    NodePtr xn = x.node_ptr();
    return make_result(x.shape(), std::move(out), {x}, [xn](TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (xn->value[i] > 0.0) xn->grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.data()[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                          : std::exp(v) / (1.0 + std::exp(v));
    }
    NodePtr xn = x.node_ptr();
    return make_result(x.shape(), std::move(out), {x}, [xn](TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.value[i];
            xn->grad[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor transpose(const Tensor& a) {
    expect_matrix(a, "transpose");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    NodePtr an = a.node_ptr();
    return make_result({c, r}, std::move(out), {a}, [an, r, c](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                an->grad[i * c + j] += self.grad[j * r + i];
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    expect_matrix(a, "concat_cols");
    expect_matrix(b, "concat_cols");
    if (a.rows() != b.rows())
        throw ShapeError("concat_cols: row counts differ");
    const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> out(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(a.data().data() + i * ca, ca, out.data() + i * (ca + cb));
        std::copy_n(b.data().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
    NodePtr an = a.node_ptr(), bn = b.node_ptr();
    return make_result(
        {r, ca + cb}, std::move(out), {a, b}, [an, bn, r, ca, cb](TensorNode& self) {
            const std::size_t c = ca + cb;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < ca; ++j)
                        an->grad[i * ca + j] += self.grad[i * c + j];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < cb; ++j)
                        bn->grad[i * cb + j] += self.grad[i * c + ca + j];
            }
        });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const std::size_t c = parts[0].ndim() == 2 ? parts[0].cols() : 0;
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        expect_matrix(p, "concat_rows");
        if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
        total += p.rows();
    }
    std::vector<double> out;
    out.reserve(total * c);
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        nodes.push_back(p.node_ptr());
        offsets.push_back(off);
        off += p.size();
    }
    return make_result({total, c}, std::move(out), parts,
                       [nodes = std::move(nodes),
                        offsets = std::move(offsets)](TensorNode& self) {
                           for (std::size_t k = 0; k < nodes.size(); ++k) {
                               if (!nodes[k]->requires_grad) continue;
                               nodes[k]->ensure_grad();
                               for (std::size_t i = 0; i < nodes[k]->size(); ++i)
                                   nodes[k]->grad[i] += self.grad[offsets[k] + i];
                           }
                       });
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    expect_matrix(a, "slice_rows");
    if (r0 >= r1 || r1 > a.rows())
        throw ShapeError("slice_rows: invalid range");
    const std::size_t c = a.cols();
    std::vector<double> out(a.data().begin() + r0 * c, a.data().begin() + r1 * c);
    NodePtr an = a.node_ptr();
    return make_result({r1 - r0, c}, std::move(out), {a},
                       [an, r0, c](TensorNode& self) {
                           if (!an->requires_grad) return;
                           an->ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[r0 * c + i] += self.grad[i];
                       });
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    expect_matrix(a, "slice_cols");
    if (c0 >= c1 || c1 > a.cols())
        throw ShapeError("slice_cols: invalid range");
    const std::size_t r = a.rows(), c = a.cols(), w = c1 - c0;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(a.data().data() + i * c + c0, w, out.data() + i * w);
    NodePtr an = a.node_ptr();
    return make_result({r, w}, std::move(out), {a},
                       [an, r, c, c0, w](TensorNode& self) {
                           if (!an->requires_grad) return;
                           an->ensure_grad();
                           for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < w; ++j)
                                   an->grad[i * c + c0 + j] += self.grad[i * w + j];
                       });
}

Tensor repeat_row(const Tensor& v, std::size_t rows) {
    const std::size_t c = v.size();
    expect_vector_len(v, c, "repeat_row");
    if (rows == 0) throw ShapeError("repeat_row: row count must be positive");
    std::vector<double> out(rows * c);
    for (std::size_t i = 0; i < rows; ++i)
        std::copy_n(v.data().data(), c, out.data() + i * c);
    NodePtr vn = v.node_ptr();
    return make_result({rows, c}, std::move(out), {v},
                       [vn, rows, c](TensorNode& self) {
                           if (!vn->requires_grad) return;
                           vn->ensure_grad();
                           for (std::size_t i = 0; i < rows; ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                   vn->grad[j] += self.grad[i * c + j];
                       });
}

Tensor row_scale(const Tensor& a, const Tensor& s) {
    expect_matrix(a, "row_scale");
    const std::size_t r = a.rows(), c = a.cols();
    expect_vector_len(s, r, "row_scale");
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] = a.data()[i * c + j] * s.data()[i];
    NodePtr an = a.node_ptr(), sn = s.node_ptr();
    return make_result({r, c}, std::move(out), {a, s}, [an, sn, r, c](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    an->grad[i * c + j] += self.grad[i * c + j] * sn->value[i];
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j)
                    acc += self.grad[i * c + j] * an->value[i * c + j];
                sn->grad[i] += acc;
            }
        }
    });
}

Tensor masked_fill(const Tensor& a, const std::vector<unsigned char>& mask,
                   double fill) {
    if (mask.size() != a.size())
        throw ShapeError("masked_fill: mask length must equal tensor size");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = mask[i] ? fill : a.data()[i];
    NodePtr an = a.node_ptr();
    return make_result(a.shape(), std::move(out), {a},
                       [an, mask](TensorNode& self) {
                           if (!an->requires_grad) return;
                           an->ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                               if (!mask[i]) an->grad[i] += self.grad[i];
                       });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    expect_matrix(table, "embedding_lookup");
    const std::size_t v = table.rows(), d = table.cols();
    if (ids.empty()) throw ShapeError("embedding_lookup: empty id sequence");
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            throw ShapeError("embedding_lookup: id " + std::to_string(id) +
                             " out of range for table with " + std::to_string(v) +
                             " rows");
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d,
                    out.data() + i * d);
    NodePtr tn = table.node_ptr();
    return make_result({ids.size(), d}, std::move(out), {table},
                       [tn, d, ids](TensorNode& self) {
                           if (!tn->requires_grad) return;
                           tn->ensure_grad();
                           for (std::size_t i = 0; i < ids.size(); ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                   tn->grad[static_cast<std::size_t>(ids[i]) * d + j] +=
                                       self.grad[i * d + j];
                       });
}

RowwiseCrossEntropy cross_entropy_rowwise(const Tensor& logits,
                                          const std::vector<int>& targets,
                                          const std::vector<unsigned char>& row_mask) {
    expect_matrix(logits, "cross_entropy_rowwise");
    const std::size_t n = logits.rows(), v = logits.cols();
    if (targets.size() != n)
        throw ShapeError("cross_entropy_rowwise: one target per row required");
    if (!row_mask.empty() && row_mask.size() != n)
        throw ShapeError("cross_entropy_rowwise: row mask length mismatch");

    std::vector<double> probs(n * v, 0.0);
    double total = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!row_mask.empty() && row_mask[i]) continue;
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= v)
            throw ShapeError("cross_entropy_rowwise: target out of range");
        const double* row = logits.data().data() + i * v;
        double mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            const double e = std::exp(row[j] - mx);
            probs[i * v + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= denom;
        total += mx + std::log(denom) - row[static_cast<std::size_t>(t)];
        ++kept;
    }

    NodePtr ln = logits.node_ptr();
    Tensor loss = make_result(
        {1}, {total}, {logits},
        [ln, n, v, targets, row_mask, probs = std::move(probs)](TensorNode& self) {
            if (!ln->requires_grad) return;
            ln->ensure_grad();
            const double g = self.grad[0];
            for (std::size_t i = 0; i < n; ++i) {
                if (!row_mask.empty() && row_mask[i]) continue;
                for (std::size_t j = 0; j < v; ++j) {
                    double p = probs[i * v + j];
                    if (j == static_cast<std::size_t>(targets[i])) p -= 1.0;
                    ln->grad[i * v + j] += g * p;
                }
            }
        });
    return {loss, kept};
}

}  // namespace dome
