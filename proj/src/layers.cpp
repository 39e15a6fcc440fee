#include "holivid/layers.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "holivid/error.hpp"

namespace holivid {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvDims {
  int64_t c, t, h, w;    // input (single sample)
  int kt, kh, kw, st, sh, sw, pt, ph, pw;
  int64_t to, ho, wo;

  static ConvDims make(const ConvSpec& s, const std::vector<int64_t>& in_shape) {
    ConvDims d;
    d.c = in_shape[1];
    d.t = in_shape[2];
    d.h = in_shape[3];
    d.w = in_shape[4];
    d.kt = s.kt; d.kh = s.kh; d.kw = s.kw;
    d.st = s.st; d.sh = s.sh; d.sw = s.sw;
    d.pt = s.pt; d.ph = s.ph; d.pw = s.pw;
    d.to = (d.t + 2 * d.pt - d.kt) / d.st + 1;
    d.ho = (d.h + 2 * d.ph - d.kh) / d.sh + 1;
    d.wo = (d.w + 2 * d.pw - d.kw) / d.sw + 1;
    if (d.to < 1 || d.ho < 1 || d.wo < 1)
      throw ValidationError("conv: input too small for kernel/stride");
    return d;
  }
  int64_t rows() const { return c * kt * kh * kw; }
  int64_t cols() const { return to * ho * wo; }
  bool pointwise() const {
    return kt == 1 && kh == 1 && kw == 1 && st == 1 && sh == 1 && sw == 1 && pt == 0 && ph == 0 && pw == 0;
  }
};

void im2col(const double* x, const ConvDims& d, double* col) {
  const int64_t n = d.cols();
  for (int64_t c = 0; c < d.c; ++c) {
    const double* xc = x + c * d.t * d.h * d.w;
    for (int dt = 0; dt < d.kt; ++dt) {
      for (int dh = 0; dh < d.kh; ++dh) {
        for (int dw = 0; dw < d.kw; ++dw) {
          double* row = col + (((c * d.kt + dt) * d.kh + dh) * d.kw + dw) * n;
          for (int64_t to = 0; to < d.to; ++to) {
            int64_t t = to * d.st - d.pt + dt;
            if (t < 0 || t >= d.t) {
              std::memset(row + to * d.ho * d.wo, 0, sizeof(double) * static_cast<size_t>(d.ho * d.wo));
              continue;
            }
            const double* xt = xc + t * d.h * d.w;
            for (int64_t ho = 0; ho < d.ho; ++ho) {
              int64_t h = ho * d.sh - d.ph + dh;
              double* out = row + (to * d.ho + ho) * d.wo;
              if (h < 0 || h >= d.h) {
                std::memset(out, 0, sizeof(double) * static_cast<size_t>(d.wo));
                continue;
              }
              const double* xh = xt + h * d.w;
              for (int64_t wo = 0; wo < d.wo; ++wo) {
                int64_t w = wo * d.sw - d.pw + dw;
                out[wo] = (w < 0 || w >= d.w) ? 0.0 : xh[w];
              }
            }
          }
        }
      }
    }
  }
}

void col2im_acc(const double* col, const ConvDims& d, double* gx) {
  const int64_t n = d.cols();
  for (int64_t c = 0; c < d.c; ++c) {
    double* xc = gx + c * d.t * d.h * d.w;
    for (int dt = 0; dt < d.kt; ++dt) {
      for (int dh = 0; dh < d.kh; ++dh) {
        for (int dw = 0; dw < d.kw; ++dw) {
          const double* row = col + (((c * d.kt + dt) * d.kh + dh) * d.kw + dw) * n;
          for (int64_t to = 0; to < d.to; ++to) {
            int64_t t = to * d.st - d.pt + dt;
            if (t < 0 || t >= d.t) continue;
            double* xt = xc + t * d.h * d.w;
            for (int64_t ho = 0; ho < d.ho; ++ho) {
              int64_t h = ho * d.sh - d.ph + dh;
              if (h < 0 || h >= d.h) continue;
              const double* in = row + (to * d.ho + ho) * d.wo;
              double* xh = xt + h * d.w;
              for (int64_t wo = 0; wo < d.wo; ++wo) {
                int64_t w = wo * d.sw - d.pw + dw;
                if (w >= 0 && w < d.w) xh[w] += in[wo];
              }
            }
          }
        }
      }
    }
  }
}

int64_t gcd64(int64_t a, int64_t b) { return std::gcd(a, b); }

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k, bool acc) {
  CMapMat A(a, m, k), B(b, k, n);
  MapMat C(c, m, n);
  if (acc) C.noalias() += A * B;
  else C.noalias() = A * B;
}

void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k, bool acc) {
  CMapMat A(a, m, k), B(b, n, k);
  MapMat C(c, m, n);
  if (acc) C.noalias() += A * B.transpose();
  else C.noalias() = A * B.transpose();
}

void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k, bool acc) {
  CMapMat A(a, k, m), B(b, k, n);
  MapMat C(c, m, n);
  if (acc) C.noalias() += A.transpose() * B;
  else C.noalias() = A.transpose() * B;
}

// ---------------------------------------------------------------------------
// Conv3d
// ---------------------------------------------------------------------------

Conv3d::Conv3d(const ConvSpec& s) : spec(s) {
  if (s.in_ch < 1 || s.out_ch < 1) throw ValidationError("conv: bad channel counts");
  weight.init_shape({s.out_ch, s.in_ch, s.kt, s.kh, s.kw});
  if (s.bias) bias.init_shape({s.out_ch});
}

void Conv3d::init(uint64_t seed) {
  Rng rng(seed);
  double fan_in = static_cast<double>(spec.in_ch) * spec.kt * spec.kh * spec.kw;
  double std = std::sqrt(2.0 / fan_in);
  double* w = weight.value.data();
  for (int64_t i = 0; i < weight.value.size(); ++i) w[i] = std * rng.gaussian();
  if (spec.bias) bias.value.fill(0.0);
}

std::vector<int64_t> Conv3d::out_shape(const std::vector<int64_t>& in_shape) const {
  ConvDims d = ConvDims::make(spec, in_shape);
  return {in_shape[0], spec.out_ch, d.to, d.ho, d.wo};
}

Tensor Conv3d::forward(const Tensor& x) {
  if (x.rank() != 5) throw ValidationError("conv: input must be rank-5");
  if (x.dim(1) != spec.in_ch)
    throw ValidationError("conv: channel mismatch (got " + std::to_string(x.dim(1)) + ", expected " +
                          std::to_string(spec.in_ch) + ")");
  ConvDims d = ConvDims::make(spec, x.shape());
  const int64_t b_count = x.dim(0), m = spec.out_ch, k = d.rows(), n = d.cols();
  Tensor y({b_count, m, d.to, d.ho, d.wo});
  const int64_t x_stride = d.c * d.t * d.h * d.w, y_stride = m * n;
  std::vector<double> col;
  if (!d.pointwise()) col.resize(static_cast<size_t>(k * n));
  for (int64_t b = 0; b < b_count; ++b) {
    const double* xb = x.data() + b * x_stride;
    double* yb = y.data() + b * y_stride;
    const double* colp = xb;
    if (!d.pointwise()) {
      im2col(xb, d, col.data());
      colp = col.data();
    }
    gemm_nn(weight.value.data(), colp, yb, m, n, k, false);
    if (spec.bias) {
      const double* bv = bias.value.data();
      for (int64_t oc = 0; oc < m; ++oc) {
        double* row = yb + oc * n;
        for (int64_t i = 0; i < n; ++i) row[i] += bv[oc];
      }
    }
  }
  x_ = x;
  return y;
}

Tensor Conv3d::backward(const Tensor& gy) {
  ConvDims d = ConvDims::make(spec, x_.shape());
  const int64_t b_count = x_.dim(0), m = spec.out_ch, k = d.rows(), n = d.cols();
  if (gy.dim(0) != b_count || gy.dim(1) != m)
    throw ValidationError("conv backward: gradient shape mismatch");
  Tensor gx(x_.shape());
  const int64_t y_stride = m * n;
  std::vector<double> col, gcol;
  if (!d.pointwise()) {
    col.resize(static_cast<size_t>(k * n));
    gcol.resize(static_cast<size_t>(k * n));
  }
  for (int64_t b = 0; b < b_count; ++b) {
    const double* xb = x_.data() + b * (d.c * d.t * d.h * d.w);
    const double* gyb = gy.data() + b * y_stride;
    double* gxb = gx.data() + b * (d.c * d.t * d.h * d.w);
    const double* colp = xb;
    if (!d.pointwise()) {
      im2col(xb, d, col.data());
      colp = col.data();
    }
    // dW += gy . col^T
    gemm_nt(gyb, colp, weight.grad.data(), m, k, n, true);
    if (spec.bias) {
      double* gb = bias.grad.data();
      for (int64_t oc = 0; oc < m; ++oc) {
        const double* row = gyb + oc * n;
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) s += row[i];
        gb[oc] += s;
      }
    }
    if (d.pointwise()) {
      gemm_tn(weight.value.data(), gyb, gxb, k, n, m, false);
    } else {
      gemm_tn(weight.value.data(), gyb, gcol.data(), k, n, m, false);
      col2im_acc(gcol.data(), d, gxb);
    }
  }
  return gx;
}

void Conv3d::collect(const std::string& prefix, ParamRefs& out) {
  weight.name = prefix + ".weight";
  out.push_back(&weight);
  if (spec.bias) {
    bias.name = prefix + ".bias";
    out.push_back(&bias);
  }
}

// ---------------------------------------------------------------------------
// GroupNorm
// ---------------------------------------------------------------------------

namespace {
constexpr double kNormEps = 1e-5;
}

GroupNorm::GroupNorm(int64_t ch, bool pf) : channels(ch), per_frame(pf) {
  groups = static_cast<int>(gcd64(8, ch));
  gamma.init_shape({ch});
  beta.init_shape({ch});
  init();
}

void GroupNorm::init() {
  gamma.value.fill(1.0);
  beta.value.fill(0.0);
  gamma.grad.fill(0.0);
  beta.grad.fill(0.0);
}

Tensor GroupNorm::forward(const Tensor& x) {
  if (x.rank() != 5) throw ValidationError("norm: input must be rank-5");
  if (x.dim(1) != channels) throw ValidationError("norm: channel mismatch");
  const int64_t b_count = x.dim(0), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  const int64_t cg = channels / groups;
  const int64_t spatial = h * w;
  const int64_t t_units = per_frame ? t : 1;
  const int64_t t_span = per_frame ? 1 : t;
  const int64_t unit_elems = cg * t_span * spatial;

  Tensor y(x.shape());
  xhat_ = Tensor(x.shape());
  invstd_.assign(static_cast<size_t>(b_count * t_units * groups), 0.0);

  const double* xd = x.data();
  double* yd = y.data();
  double* xh = xhat_.data();
  const double* gv = gamma.value.data();
  const double* bv = beta.value.data();

  for (int64_t b = 0; b < b_count; ++b) {
    for (int64_t tu = 0; tu < t_units; ++tu) {
      for (int g = 0; g < groups; ++g) {
        double sum = 0.0, sq = 0.0;
        for (int64_t ci = 0; ci < cg; ++ci) {
          int64_t c = g * cg + ci;
          for (int64_t ts = 0; ts < t_span; ++ts) {
            int64_t tt = per_frame ? tu : ts;
            const double* px = xd + (((b * channels + c) * t) + tt) * spatial;
            for (int64_t s = 0; s < spatial; ++s) {
              sum += px[s];
              sq += px[s] * px[s];
            }
          }
        }
        double mean = sum / static_cast<double>(unit_elems);
        double var = sq / static_cast<double>(unit_elems) - mean * mean;
        double inv = 1.0 / std::sqrt(std::max(var, 0.0) + kNormEps);
        invstd_[static_cast<size_t>((b * t_units + tu) * groups + g)] = inv;
        for (int64_t ci = 0; ci < cg; ++ci) {
          int64_t c = g * cg + ci;
          double gam = gv[c], bet = bv[c];
          for (int64_t ts = 0; ts < t_span; ++ts) {
            int64_t tt = per_frame ? tu : ts;
            int64_t off = (((b * channels + c) * t) + tt) * spatial;
            for (int64_t s = 0; s < spatial; ++s) {
              double xn = (xd[off + s] - mean) * inv;
              xh[off + s] = xn;
              yd[off + s] = gam * xn + bet;
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor GroupNorm::backward(const Tensor& gy) {
  if (!gy.same_shape(xhat_)) throw ValidationError("norm backward: shape mismatch");
  const int64_t b_count = gy.dim(0), t = gy.dim(2), h = gy.dim(3), w = gy.dim(4);
  const int64_t cg = channels / groups;
  const int64_t spatial = h * w;
  const int64_t t_units = per_frame ? t : 1;
  const int64_t t_span = per_frame ? 1 : t;
  const double m = static_cast<double>(cg * t_span * spatial);

  Tensor gx(gy.shape());
  const double* gyd = gy.data();
  const double* xh = xhat_.data();
  double* gxd = gx.data();
  const double* gv = gamma.value.data();
  double* ggam = gamma.grad.data();
  double* gbet = beta.grad.data();

  for (int64_t b = 0; b < b_count; ++b) {
    for (int64_t tu = 0; tu < t_units; ++tu) {
      for (int g = 0; g < groups; ++g) {
        double inv = invstd_[static_cast<size_t>((b * t_units + tu) * groups + g)];
        double s1 = 0.0, s2 = 0.0;  // sums of gy*gamma and gy*gamma*xhat
        for (int64_t ci = 0; ci < cg; ++ci) {
          int64_t c = g * cg + ci;
          double gam = gv[c];
          for (int64_t ts = 0; ts < t_span; ++ts) {
            int64_t tt = per_frame ? tu : ts;
            int64_t off = (((b * channels + c) * t) + tt) * spatial;
            for (int64_t s = 0; s < spatial; ++s) {
              double gg = gyd[off + s] * gam;
              s1 += gg;
              s2 += gg * xh[off + s];
            }
          }
        }
        for (int64_t ci = 0; ci < cg; ++ci) {
          int64_t c = g * cg + ci;
          double gam = gv[c];
          double dg = 0.0, db = 0.0;
          for (int64_t ts = 0; ts < t_span; ++ts) {
            int64_t tt = per_frame ? tu : ts;
            int64_t off = (((b * channels + c) * t) + tt) * spatial;
            for (int64_t s = 0; s < spatial; ++s) {
              double gyv = gyd[off + s];
              double xnv = xh[off + s];
              dg += gyv * xnv;
              db += gyv;
              gxd[off + s] = inv * (gyv * gam - s1 / m - xnv * (s2 / m));
            }
          }
          ggam[c] += dg;
          gbet[c] += db;
        }
      }
    }
  }
  return gx;
}

void GroupNorm::collect(const std::string& prefix, ParamRefs& out) {
  gamma.name = prefix + ".gamma";
  beta.name = prefix + ".beta";
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ---------------------------------------------------------------------------
// ReLU / pooling / linear
// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x) {
  Tensor y = x;
  mask_.assign(static_cast<size_t>(x.size()), 0);
  double* d = y.data();
  for (int64_t i = 0; i < y.size(); ++i) {
    if (d[i] > 0.0) {
      mask_[static_cast<size_t>(i)] = 1;
    } else {
      d[i] = 0.0;
    }
  }
  return y;
}

Tensor ReLU::backward(const Tensor& gy) {
  if (static_cast<size_t>(gy.size()) != mask_.size()) throw ValidationError("relu backward: shape mismatch");
  Tensor gx = gy;
  double* d = gx.data();
  for (int64_t i = 0; i < gx.size(); ++i) {
    if (!mask_[static_cast<size_t>(i)]) d[i] = 0.0;
  }
  return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
  if (x.rank() != 5) throw ValidationError("pool: input must be rank-5");
  in_shape_ = x.shape();
  const int64_t b = x.dim(0), c = x.dim(1), n = x.dim(2) * x.dim(3) * x.dim(4);
  Tensor y({b, c});
  const double* xd = x.data();
  double* yd = y.data();
  for (int64_t i = 0; i < b * c; ++i) {
    double s = 0.0;
    const double* p = xd + i * n;
    for (int64_t j = 0; j < n; ++j) s += p[j];
    yd[i] = s / static_cast<double>(n);
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy) {
  const int64_t b = in_shape_[0], c = in_shape_[1];
  const int64_t n = in_shape_[2] * in_shape_[3] * in_shape_[4];
  if (gy.dim(0) != b || gy.dim(1) != c) throw ValidationError("pool backward: shape mismatch");
  Tensor gx(in_shape_);
  const double* gyd = gy.data();
  double* gxd = gx.data();
  for (int64_t i = 0; i < b * c; ++i) {
    double v = gyd[i] / static_cast<double>(n);
    double* p = gxd + i * n;
    for (int64_t j = 0; j < n; ++j) p[j] = v;
  }
  return gx;
}

Linear::Linear(int64_t in_dim, int64_t out_dim) : in(in_dim), out(out_dim) {
  weight.init_shape({out, in});
  bias.init_shape({out});
}

void Linear::init(uint64_t seed) {
  Rng rng(seed);
  double std = 1.0 / std::sqrt(static_cast<double>(in));
  double* w = weight.value.data();
  for (int64_t i = 0; i < weight.value.size(); ++i) w[i] = std * rng.gaussian();
  bias.value.fill(0.0);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != in) throw ValidationError("linear: input shape mismatch");
  const int64_t b = x.dim(0);
  Tensor y({b, out});
  if (out > 0) {
    gemm_nt(x.data(), weight.value.data(), y.data(), b, out, in, false);
    const double* bv = bias.value.data();
    double* yd = y.data();
    for (int64_t i = 0; i < b; ++i) {
      for (int64_t j = 0; j < out; ++j) yd[i * out + j] += bv[j];
    }
  }
  x_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& gy) {
  const int64_t b = x_.dim(0);
  if (gy.dim(0) != b || gy.dim(1) != out) throw ValidationError("linear backward: shape mismatch");
  Tensor gx({b, in});
  if (out == 0) return gx;
  gemm_tn(gy.data(), x_.data(), weight.grad.data(), out, in, b, true);
  double* gb = bias.grad.data();
  const double* gyd = gy.data();
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t j = 0; j < out; ++j) gb[j] += gyd[i * out + j];
  }
  gemm_nn(gy.data(), weight.value.data(), gx.data(), b, in, out, false);
  return gx;
}

void Linear::collect(const std::string& prefix, ParamRefs& out_refs) {
  weight.name = prefix + ".weight";
  bias.name = prefix + ".bias";
  out_refs.push_back(&weight);
  out_refs.push_back(&bias);
}

// ---------------------------------------------------------------------------
// Residual blocks / stages
// ---------------------------------------------------------------------------

namespace {

ConvSpec block_conv(int64_t in_ch, int64_t out_ch, bool temporal, int k, int stride) {
  ConvSpec s;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.bias = false;  // every block conv is followed by a norm
  if (k == 1) {
    s.kt = s.kh = s.kw = 1;
  } else {
    s.kt = temporal ? 3 : 1;
    s.kh = s.kw = 3;
    s.pt = temporal ? 1 : 0;
    s.ph = s.pw = 1;
  }
  s.st = 1;
  s.sh = s.sw = stride;
  return s;
}

}  // namespace

ResidualBlock::ResidualBlock(Kind k, int64_t in_ch, int64_t mid_ch, int64_t out_ch, int stride,
                             bool temporal_)
    : kind(k), temporal(temporal_) {
  bool per_frame = !temporal;
  if (kind == Kind::Basic) {
    conv1 = Conv3d(block_conv(in_ch, out_ch, temporal, 3, stride));
    norm1 = GroupNorm(out_ch, per_frame);
    conv2 = Conv3d(block_conv(out_ch, out_ch, temporal, 3, 1));
    norm2 = GroupNorm(out_ch, per_frame);
  } else {
    conv1 = Conv3d(block_conv(in_ch, mid_ch, temporal, 1, 1));
    norm1 = GroupNorm(mid_ch, per_frame);
    conv2 = Conv3d(block_conv(mid_ch, mid_ch, temporal, 3, stride));
    norm2 = GroupNorm(mid_ch, per_frame);
    conv3 = Conv3d(block_conv(mid_ch, out_ch, temporal, 1, 1));
    norm3 = GroupNorm(out_ch, per_frame);
  }
  if (stride != 1 || in_ch != out_ch) {
    down_conv = Conv3d(block_conv(in_ch, out_ch, temporal, 1, stride));
    down_norm = GroupNorm(out_ch, per_frame);
  }
}

void ResidualBlock::init(uint64_t seed_base, const std::string& path) {
  conv1.init(derive_seed(seed_base, path + ".conv1"));
  conv2.init(derive_seed(seed_base, path + ".conv2"));
  if (kind == Kind::Bottleneck) conv3.init(derive_seed(seed_base, path + ".conv3"));
  if (down_conv) down_conv->init(derive_seed(seed_base, path + ".down.conv"));
  norm1.init();
  norm2.init();
  if (kind == Kind::Bottleneck) norm3.init();
  if (down_norm) down_norm->init();
}

Tensor ResidualBlock::forward(const Tensor& x) {
  x_ = x;
  Tensor h = relu1_.forward(norm1.forward(conv1.forward(x)));
  if (kind == Kind::Basic) {
    h = norm2.forward(conv2.forward(h));
  } else {
    h = relu2_.forward(norm2.forward(conv2.forward(h)));
    h = norm3.forward(conv3.forward(h));
  }
  Tensor s = down_conv ? down_norm->forward(down_conv->forward(x)) : x;
  add_inplace(h, s);
  return relu_out_.forward(h);
}

Tensor ResidualBlock::backward(const Tensor& gy) {
  Tensor g = relu_out_.backward(gy);
  Tensor gmain;
  if (kind == Kind::Basic) {
    gmain = conv1.backward(norm1.backward(relu1_.backward(conv2.backward(norm2.backward(g)))));
  } else {
    Tensor g3 = conv3.backward(norm3.backward(g));
    Tensor g2 = conv2.backward(norm2.backward(relu2_.backward(g3)));
    gmain = conv1.backward(norm1.backward(relu1_.backward(g2)));
  }
  Tensor gskip = down_conv ? down_conv->backward(down_norm->backward(g)) : g;
  add_inplace(gmain, gskip);
  return gmain;
}

void ResidualBlock::collect(const std::string& prefix, ParamRefs& out) {
  conv1.collect(prefix + ".conv1", out);
  norm1.collect(prefix + ".norm1", out);
  conv2.collect(prefix + ".conv2", out);
  norm2.collect(prefix + ".norm2", out);
  if (kind == Kind::Bottleneck) {
    conv3.collect(prefix + ".conv3", out);
    norm3.collect(prefix + ".norm3", out);
  }
  if (down_conv) {
    down_conv->collect(prefix + ".down.conv", out);
    down_norm->collect(prefix + ".down.norm", out);
  }
}

Stage::Stage(ResidualBlock::Kind kind, int n_blocks, int64_t in_ch, int64_t mid_ch, int64_t out_ch,
             int stride, bool temporal) {
  for (int i = 0; i < n_blocks; ++i) {
    blocks.emplace_back(kind, i == 0 ? in_ch : out_ch, mid_ch, out_ch, i == 0 ? stride : 1, temporal);
  }
}

Tensor Stage::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& b : blocks) h = b.forward(h);
  return h;
}

Tensor Stage::backward(const Tensor& gy) {
  Tensor g = gy;
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
  return g;
}

void Stage::collect(const std::string& prefix, ParamRefs& out) {
  for (size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".block" + std::to_string(i), out);
}

void Stage::init(uint64_t seed_base, const std::string& path) {
  for (size_t i = 0; i < blocks.size(); ++i) blocks[i].init(seed_base, path + ".block" + std::to_string(i));
}

// ---------------------------------------------------------------------------
// Temporal pooling + MergeReduce
// ---------------------------------------------------------------------------

Tensor pool_time(const Tensor& x, int64_t t_out) {
  const int64_t b = x.dim(0), c = x.dim(1), t_in = x.dim(2), h = x.dim(3), w = x.dim(4);
  if (t_out == t_in) return x;
  if (t_out > t_in) throw ValidationError("pool_time: cannot upsample");
  Tensor y({b, c, t_out, h, w});
  const int64_t spatial = h * w;
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const double* xp = x.data() + bc * t_in * spatial;
    double* yp = y.data() + bc * t_out * spatial;
    for (int64_t to = 0; to < t_out; ++to) {
      int64_t lo = to * t_in / t_out, hi = (to + 1) * t_in / t_out;
      double invn = 1.0 / static_cast<double>(hi - lo);
      double* out = yp + to * spatial;
      for (int64_t s = 0; s < spatial; ++s) out[s] = 0.0;
      for (int64_t ti = lo; ti < hi; ++ti) {
        const double* in = xp + ti * spatial;
        for (int64_t s = 0; s < spatial; ++s) out[s] += in[s] * invn;
      }
    }
  }
  return y;
}

Tensor unpool_time_grad(const Tensor& gy, int64_t t_in) {
  const int64_t b = gy.dim(0), c = gy.dim(1), t_out = gy.dim(2), h = gy.dim(3), w = gy.dim(4);
  if (t_out == t_in) return gy;
  Tensor gx({b, c, t_in, h, w});
  const int64_t spatial = h * w;
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const double* gp = gy.data() + bc * t_out * spatial;
    double* xp = gx.data() + bc * t_in * spatial;
    for (int64_t to = 0; to < t_out; ++to) {
      int64_t lo = to * t_in / t_out, hi = (to + 1) * t_in / t_out;
      double invn = 1.0 / static_cast<double>(hi - lo);
      const double* in = gp + to * spatial;
      for (int64_t ti = lo; ti < hi; ++ti) {
        double* out = xp + ti * spatial;
        for (int64_t s = 0; s < spatial; ++s) out[s] += in[s] * invn;
      }
    }
  }
  return gx;
}

MergeReduce::MergeReduce(int64_t ch, bool nr) : channels(ch), norm_relu(nr) {
  ConvSpec s;
  s.in_ch = 2 * ch;
  s.out_ch = ch;
  s.bias = true;
  reduce = Conv3d(s);
  if (norm_relu) norm = GroupNorm(ch, false);
}

void MergeReduce::init(uint64_t seed) {
  reduce.init(seed);
  if (norm_relu) norm.init();
}

Tensor MergeReduce::forward(const Tensor& a, const Tensor& b) {
  if (a.rank() != 5 || b.rank() != 5) throw ValidationError("merge_reduce: inputs must be rank-5");
  if (a.dim(1) != channels || b.dim(1) != channels)
    throw ValidationError("merge_reduce: channel mismatch (expected " + std::to_string(channels) + ")");
  if (a.dim(0) != b.dim(0) || a.dim(3) != b.dim(3) || a.dim(4) != b.dim(4))
    throw ValidationError("merge_reduce: spatial shape mismatch");
  ta_ = a.dim(2);
  tb_ = b.dim(2);
  t_out_ = std::min(ta_, tb_);
  Tensor ap = pool_time(a, t_out_);
  Tensor bp = pool_time(b, t_out_);

  const int64_t n = a.dim(0), spatial = t_out_ * a.dim(3) * a.dim(4);
  Tensor cat({n, 2 * channels, t_out_, a.dim(3), a.dim(4)});
  const int64_t block = channels * spatial;
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(cat.data() + i * 2 * block, ap.data() + i * block, sizeof(double) * static_cast<size_t>(block));
    std::memcpy(cat.data() + i * 2 * block + block, bp.data() + i * block,
                sizeof(double) * static_cast<size_t>(block));
  }
  Tensor y = reduce.forward(cat);
  if (norm_relu) y = relu_.forward(norm.forward(y));
  return y;
}

std::pair<Tensor, Tensor> MergeReduce::backward(const Tensor& gy) {
  Tensor g = gy;
  if (norm_relu) g = norm.backward(relu_.backward(g));
  Tensor gcat = reduce.backward(g);
  const int64_t n = gcat.dim(0), spatial = t_out_ * gcat.dim(3) * gcat.dim(4);
  const int64_t block = channels * spatial;
  Tensor ga({n, channels, t_out_, gcat.dim(3), gcat.dim(4)});
  Tensor gb(ga.shape());
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(ga.data() + i * block, gcat.data() + i * 2 * block, sizeof(double) * static_cast<size_t>(block));
    std::memcpy(gb.data() + i * block, gcat.data() + i * 2 * block + block,
                sizeof(double) * static_cast<size_t>(block));
  }
  return {unpool_time_grad(ga, ta_), unpool_time_grad(gb, tb_)};
}

void MergeReduce::collect(const std::string& prefix, ParamRefs& out) {
  reduce.collect(prefix + ".conv", out);
  if (norm_relu) norm.collect(prefix + ".norm", out);
}

}  // namespace holivid
