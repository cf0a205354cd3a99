#include "pseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace pseg::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4)
    throw ShapeError(std::string(what) + ": expected N x C x H x W, got " +
                     shape_str(t.shape()));
}

bool wants_grad(const TensorImplPtr& p) { return p && p->requires_grad; }

struct ConvGeom {
  std::int64_t n, cin, h, w, cout, k, ho, wo;
  int stride, pad;
  std::int64_t kdim() const { return cin * k * k; }
  std::int64_t pixels() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// col is (cin*k*k) x (ho*wo), row-major.
void im2col(const float* img, const ConvGeom& g, float* col) {
  for (std::int64_t c = 0; c < g.cin; ++c)
    for (std::int64_t ky = 0; ky < g.k; ++ky)
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        float* row = col + ((c * g.k + ky) * g.k + kx) * g.pixels();
        const float* plane = img + c * g.h * g.w;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          float* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0f);
            continue;
          }
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : 0.0f;
          }
        }
      }
}

void col2im_add(const float* col, const ConvGeom& g, float* img) {
  for (std::int64_t c = 0; c < g.cin; ++c)
    for (std::int64_t ky = 0; ky < g.k; ++ky)
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const float* row = col + ((c * g.k + ky) * g.k + kx) * g.pixels();
        float* plane = img + c * g.h * g.w;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight,
              const std::optional<Tensor>& bias, int stride, int padding) {
  require_rank4(input, "conv2d input");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3))
    throw ShapeError("conv2d: weight must be C_out x C_in x k x k, got " +
                     shape_str(weight.shape()));
  if (weight.dim(1) != input.dim(1))
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) +
                     " does not match input " + shape_str(input.shape()));
  if (stride < 1 || padding < 0 || weight.dim(2) < 1)
    throw ShapeError("conv2d: need k >= 1, stride >= 1, padding >= 0");
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(0)))
    throw ShapeError("conv2d: bias " + shape_str(bias->shape()) +
                     " does not match weight " + shape_str(weight.shape()));

  ConvGeom g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k)
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) +
                     " larger than padded input " + shape_str(input.shape()));
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;

  std::vector<float> out(static_cast<std::size_t>(g.n * g.cout * g.pixels()));
  std::vector<float> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.kdim() * g.pixels()));
  ConstMapMat wmat(weight.data().data(), g.cout, g.kdim());
  for (std::int64_t n = 0; n < g.n; ++n) {
    const float* img = input.data().data() + n * g.cin * g.h * g.w;
    const float* colp = img;
    if (!g.pointwise()) {
      im2col(img, g, col.data());
      colp = col.data();
    }
    MapMat o(out.data() + n * g.cout * g.pixels(), g.cout, g.pixels());
    o.noalias() = wmat * ConstMapMat(colp, g.kdim(), g.pixels());
    if (bias)
      for (std::int64_t c = 0; c < g.cout; ++c) o.row(c).array() += bias->data()[c];
  }

  std::vector<TensorImplPtr> inputs{input.impl(), weight.impl(),
                                    bias ? bias->impl() : nullptr};
  return make_result(
      {g.n, g.cout, g.ho, g.wo}, std::move(out), std::move(inputs),
      [g](TensorImpl& self) {
        auto& x = *self.parents[0];
        auto& w = *self.parents[1];
        const auto& b = self.parents[2];
        std::vector<float> col(static_cast<std::size_t>(g.kdim() * g.pixels()));
        std::vector<float> dcol(g.pointwise() ? 0 : col.size());
        ConstMapMat wmat(w.data.data(), g.cout, g.kdim());
        for (std::int64_t n = 0; n < g.n; ++n) {
          ConstMapMat dout(self.grad.data() + n * g.cout * g.pixels(), g.cout, g.pixels());
          const float* img = x.data.data() + n * g.cin * g.h * g.w;
          if (w.requires_grad) {
            const float* colp = img;
            if (!g.pointwise()) {
              im2col(img, g, col.data());
              colp = col.data();
            }
            MapMat dw(w.ensure_grad().data(), g.cout, g.kdim());
            dw.noalias() += dout * ConstMapMat(colp, g.kdim(), g.pixels()).transpose();
          }
          if (wants_grad(b)) {
            auto& db = b->ensure_grad();
            for (std::int64_t c = 0; c < g.cout; ++c) db[c] += dout.row(c).sum();
          }
          if (x.requires_grad) {
            float* dimg = x.ensure_grad().data() + n * g.cin * g.h * g.w;
            if (g.pointwise()) {
              MapMat(dimg, g.kdim(), g.pixels()).noalias() += wmat.transpose() * dout;
            } else {
              MapMat(dcol.data(), g.kdim(), g.pixels()).noalias() = wmat.transpose() * dout;
              col2im_add(dcol.data(), g, dimg);
            }
          }
        }
      });
}

Tensor max_pool2(const Tensor& input) {
  require_rank4(input, "max_pool2");
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw ShapeError("max_pool2: spatial dims must be even, got " + shape_str(input.shape()));
  const auto ho = h / 2, wo = w / 2;
  std::vector<float> out(static_cast<std::size_t>(n * c * ho * wo));
  std::vector<std::int64_t> argmax(out.size());
  const float* x = input.data().data();
  std::size_t o = 0;
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const float* p = x + plane * h * w;
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox, ++o) {
        std::int64_t best = (2 * oy) * w + 2 * ox;
        const std::int64_t cand[3] = {best + 1, best + w, best + w + 1};
        for (auto idx : cand)
          if (p[idx] > p[best]) best = idx;
        out[o] = p[best];
        argmax[o] = plane * h * w + best;
      }
  }
  return make_result({n, c, ho, wo}, std::move(out), {input.impl()},
                     [argmax = std::move(argmax)](TensorImpl& self) {
                       auto& dx = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < argmax.size(); ++i)
                         dx[argmax[i]] += self.grad[i];
                     });
}

Tensor upsample2_nearest(const Tensor& input) {
  require_rank4(input, "upsample2_nearest");
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ho = 2 * h, wo = 2 * w;
  std::vector<float> out(static_cast<std::size_t>(n * c * ho * wo));
  const float* x = input.data().data();
  for (std::int64_t plane = 0; plane < n * c; ++plane)
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox)
        out[(plane * ho + oy) * wo + ox] = x[(plane * h + oy / 2) * w + ox / 2];
  return make_result({n, c, ho, wo}, std::move(out), {input.impl()},
                     [n, c, h, w](TensorImpl& self) {
                       auto& dx = self.parents[0]->ensure_grad();
                       const auto ho = 2 * h, wo = 2 * w;
                       for (std::int64_t plane = 0; plane < n * c; ++plane)
                         for (std::int64_t oy = 0; oy < ho; ++oy)
                           for (std::int64_t ox = 0; ox < wo; ++ox)
                             dx[(plane * h + oy / 2) * w + ox / 2] +=
                                 self.grad[(plane * ho + oy) * wo + ox];
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " disagree on N, H or W");
  const auto n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<float> out(static_cast<std::size_t>(n * (ca + cb) * hw));
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.data().data() + i * cb * hw, cb * hw,
                out.data() + (i * (ca + cb) + ca) * hw);
  }
  return make_result({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out),
                     {a.impl(), b.impl()}, [n, ca, cb, hw](TensorImpl& self) {
                       for (int side = 0; side < 2; ++side) {
                         auto& p = self.parents[side];
                         if (!p->requires_grad) continue;
                         auto& d = p->ensure_grad();
                         const auto cs = side == 0 ? ca : cb;
                         const auto off = side == 0 ? 0 : ca;
                         for (std::int64_t i = 0; i < n; ++i) {
                           const float* src = self.grad.data() + (i * (ca + cb) + off) * hw;
                           float* dst = d.data() + i * cs * hw;
                           for (std::int64_t j = 0; j < cs * hw; ++j) dst[j] += src[j];
                         }
                       }
                     });
}

Tensor slice_channels(const Tensor& input, std::int64_t begin, std::int64_t end) {
  require_rank4(input, "slice_channels");
  const auto n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (begin < 0 || end < begin || end > c)
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + shape_str(input.shape()));
  const auto cs = end - begin;
  std::vector<float> out(static_cast<std::size_t>(n * cs * hw));
  for (std::int64_t i = 0; i < n; ++i)
    std::copy_n(input.data().data() + (i * c + begin) * hw, cs * hw, out.data() + i * cs * hw);
  return make_result({n, cs, input.dim(2), input.dim(3)}, std::move(out), {input.impl()},
                     [n, c, hw, begin, cs](TensorImpl& self) {
                       auto& d = self.parents[0]->ensure_grad();
                       for (std::int64_t i = 0; i < n; ++i)
                         for (std::int64_t j = 0; j < cs * hw; ++j)
                           d[(i * c + begin) * hw + j] += self.grad[i * cs * hw + j];
                     });
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, Mode mode, float momentum, float eps) {
  require_rank4(input, "batch_norm");
  const auto n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != c || beta.numel() != c || stats.mean.numel() != c ||
      stats.var.numel() != c)
    throw ShapeError("batch_norm: per-channel parameters do not match " +
                     shape_str(input.shape()));
  if (!(eps > 0.0f)) throw std::invalid_argument("batch_norm: eps must be positive");

  const float* x = input.data().data();
  const std::int64_t count = n * hw;
  std::vector<float> mu(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  if (mode == Mode::train) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const float* p = x + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) s += p[j];
      }
      const double m = s / static_cast<double>(count);
      double sq = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const float* p = x + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) sq += (p[j] - m) * (p[j] - m);
      }
      const double var = sq / static_cast<double>(count);
      mu[ch] = static_cast<float>(m);
      inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + eps));
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      auto rm = stats.mean.data();
      auto rv = stats.var.data();
      rm[ch] = (1.0f - momentum) * rm[ch] + momentum * static_cast<float>(m);
      rv[ch] = (1.0f - momentum) * rv[ch] + momentum * static_cast<float>(unbiased);
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mu[ch] = stats.mean.data()[ch];
      inv_std[ch] = 1.0f / std::sqrt(stats.var.data()[ch] + eps);
    }
  }

  std::vector<float> xhat(input.data().size());
  std::vector<float> out(xhat.size());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto base = (i * c + ch) * hw;
      const float g = gamma.data()[ch], b = beta.data()[ch];
      for (std::int64_t j = 0; j < hw; ++j) {
        xhat[base + j] = (x[base + j] - mu[ch]) * inv_std[ch];
        out[base + j] = xhat[base + j] * g + b;
      }
    }

  return make_result(
      input.shape(), std::move(out), {input.impl(), gamma.impl(), beta.impl()},
      [n, c, hw, mode, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& self) {
        auto& xin = *self.parents[0];
        auto& g = *self.parents[1];
        auto& b = *self.parents[2];
        const auto& dy = self.grad;
        std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0);
        std::vector<double> sum_dy_xhat(static_cast<std::size_t>(c), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const auto base = (i * c + ch) * hw;
            for (std::int64_t j = 0; j < hw; ++j) {
              sum_dy[ch] += dy[base + j];
              sum_dy_xhat[ch] += dy[base + j] * xhat[base + j];
            }
          }
        if (g.requires_grad) {
          auto& dg = g.ensure_grad();
          for (std::int64_t ch = 0; ch < c; ++ch) dg[ch] += static_cast<float>(sum_dy_xhat[ch]);
        }
        if (b.requires_grad) {
          auto& db = b.ensure_grad();
          for (std::int64_t ch = 0; ch < c; ++ch) db[ch] += static_cast<float>(sum_dy[ch]);
        }
        if (!xin.requires_grad) return;
        auto& dx = xin.ensure_grad();
        const double m = static_cast<double>(n * hw);
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const auto base = (i * c + ch) * hw;
            const double scale = g.data[ch] * inv_std[ch];
            if (mode == Mode::eval) {
              for (std::int64_t j = 0; j < hw; ++j)
                dx[base + j] += static_cast<float>(scale * dy[base + j]);
              continue;
            }
            const double mdy = sum_dy[ch] / m, mdyx = sum_dy_xhat[ch] / m;
            for (std::int64_t j = 0; j < hw; ++j)
              dx[base + j] +=
                  static_cast<float>(scale * (dy[base + j] - mdy - xhat[base + j] * mdyx));
          }
      });
}

Tensor relu(const Tensor& input) {
  std::vector<float> out(input.data().begin(), input.data().end());
  for (auto& v : out) v = v > 0.0f ? v : 0.0f;
  return make_result(input.shape(), std::move(out), {input.impl()},
                     [](TensorImpl& self) {
                       auto& p = *self.parents[0];
                       auto& d = p.ensure_grad();
                       for (std::size_t i = 0; i < d.size(); ++i)
                         if (p.data[i] > 0.0f) d[i] += self.grad[i];
                     });
}

Tensor sigmoid(const Tensor& input) {
  std::vector<float> out(input.data().begin(), input.data().end());
  for (auto& v : out) {
    // Clamp keeps the result strictly inside (0,1) in f32.
    const float s = 1.0f / (1.0f + std::exp(-v));
    v = std::clamp(s, 1e-7f, 1.0f - 6e-8f);
  }
  return make_result(input.shape(), std::move(out), {input.impl()}, [](TensorImpl& self) {
    auto& d = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const float s = self.data[i];
      d[i] += self.grad[i] * s * (1.0f - s);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<float> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  return make_result(a.shape(), std::move(out), {a.impl(), b.impl()}, [](TensorImpl& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& d = p->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<float> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  return make_result(a.shape(), std::move(out), {a.impl(), b.impl()}, [](TensorImpl& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& d = pa.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& d = pb.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor sum(const Tensor& input) {
  double s = 0.0;
  for (float v : input.data()) s += v;
  return make_result({1}, {static_cast<float>(s)}, {input.impl()}, [](TensorImpl& self) {
    auto& d = self.parents[0]->ensure_grad();
    for (auto& v : d) v += self.grad[0];
  });
}

Tensor mean(const Tensor& input) {
  double s = 0.0;
  for (float v : input.data()) s += v;
  const double n = static_cast<double>(std::max<std::int64_t>(input.numel(), 1));
  return make_result({1}, {static_cast<float>(s / n)}, {input.impl()},
                     [n](TensorImpl& self) {
                       auto& d = self.parents[0]->ensure_grad();
                       const float g = static_cast<float>(self.grad[0] / n);
                       for (auto& v : d) v += g;
                     });
}

}  // namespace pseg::nn
