#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "holivid/rng.hpp"
#include "holivid/tensor.hpp"

namespace holivid {

// A learnable tensor with its gradient accumulator.  `name` is assigned when
// the owning network collects its parameters (module path, e.g.
// "stage2.3d.block0.conv1.weight").
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  void init_shape(std::vector<int64_t> shape) {
    value = Tensor(shape);
    grad = Tensor(shape);
  }
  bool empty() const { return value.size() == 0; }
};

using ParamRefs = std::vector<Param*>;

// ---------------------------------------------------------------------------
// 3D convolution (covers per-frame 2D convolution as the kt=1 special case).
// Input (B, Cin, T, H, W) -> output (B, Cout, To, Ho, Wo).
// ---------------------------------------------------------------------------
struct ConvSpec {
  int64_t in_ch = 0, out_ch = 0;
  int kt = 1, kh = 1, kw = 1;
  int st = 1, sh = 1, sw = 1;
  int pt = 0, ph = 0, pw = 0;
  bool bias = true;
};

class Conv3d {
public:
  Conv3d() = default;
  explicit Conv3d(const ConvSpec& spec);
  void init(uint64_t seed);  // He fan-in normal weights, zero bias

  Tensor forward(const Tensor& x);
  // Accumulates weight/bias grads, returns grad w.r.t. the cached input.
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, ParamRefs& out);
  std::vector<int64_t> out_shape(const std::vector<int64_t>& in_shape) const;

  ConvSpec spec;
  Param weight;  // (out_ch, in_ch, kt, kh, kw)
  Param bias;    // (out_ch) when spec.bias

private:
  Tensor x_;
};

// ---------------------------------------------------------------------------
// Group normalization; groups = gcd(8, C).  With per_frame set, statistics
// are computed per (sample, frame, group) so frames stay independent (used in
// the 2D branch); otherwise per (sample, group) over (C/g, T, H, W).
// ---------------------------------------------------------------------------
class GroupNorm {
public:
  GroupNorm() = default;
  GroupNorm(int64_t channels, bool per_frame);
  void init();

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, ParamRefs& out);

  int64_t channels = 0;
  int groups = 1;
  bool per_frame = false;
  Param gamma, beta;  // (C)

private:
  Tensor xhat_;
  std::vector<double> invstd_;
};

class ReLU {
public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

private:
  std::vector<uint8_t> mask_;
};

// Mean over (T, H, W): (B, C, T, H, W) -> (B, C).
class GlobalAvgPool {
public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

private:
  std::vector<int64_t> in_shape_;
};

class Linear {
public:
  Linear() = default;
  Linear(int64_t in, int64_t out);
  void init(uint64_t seed);  // N(0, 1/sqrt(in)) weights, zero bias

  Tensor forward(const Tensor& x);   // (B, in) -> (B, out)
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, ParamRefs& out);

  int64_t in = 0, out = 0;
  Param weight;  // (out, in)
  Param bias;    // (out)

private:
  Tensor x_;
};

// ---------------------------------------------------------------------------
// Residual blocks.  `temporal` selects 3x3x3 kernels (3D branch) vs 1x3x3
// (per-frame 2D branch); stride is spatial only.  Basic = two 3x3 convs;
// Bottleneck = 1x1 -> 3x3 -> 1x1 with out_ch = 4 * mid_ch.
// ---------------------------------------------------------------------------
class ResidualBlock {
public:
  enum class Kind { Basic, Bottleneck };
  ResidualBlock(Kind kind, int64_t in_ch, int64_t mid_ch, int64_t out_ch, int stride, bool temporal);
  void init(uint64_t seed_base, const std::string& path);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, ParamRefs& out);

  Kind kind;
  bool temporal;
  Conv3d conv1, conv2, conv3;        // conv3 used by bottleneck only
  GroupNorm norm1, norm2, norm3;
  std::optional<Conv3d> down_conv;   // projection shortcut when shape changes
  std::optional<GroupNorm> down_norm;

private:
  ReLU relu1_, relu2_, relu_out_;
  Tensor x_;  // for the identity shortcut
};

// A branch stage: a sequence of residual blocks, the first carrying the
// stride / channel change.
class Stage {
public:
  Stage() = default;
  Stage(ResidualBlock::Kind kind, int n_blocks, int64_t in_ch, int64_t mid_ch, int64_t out_ch,
        int stride, bool temporal);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, ParamRefs& out);
  void init(uint64_t seed_base, const std::string& path);

  std::vector<ResidualBlock> blocks;
};

// ---------------------------------------------------------------------------
// Merge-and-reduction: concatenate two C-channel maps (2C), reduce back to C
// with a 1x1x1 convolution, then (optionally) normalize and rectify.  If the
// temporal lengths differ the longer input is average-pooled to the shorter.
// ---------------------------------------------------------------------------
class MergeReduce {
public:
  MergeReduce() = default;
  MergeReduce(int64_t channels, bool norm_relu);
  void init(uint64_t seed);

  Tensor forward(const Tensor& a, const Tensor& b);
  std::pair<Tensor, Tensor> backward(const Tensor& gy);
  void collect(const std::string& prefix, ParamRefs& out);

  int64_t channels = 0;
  bool norm_relu = true;
  Conv3d reduce;  // 2C -> C, 1x1x1
  GroupNorm norm;

private:
  ReLU relu_;
  int64_t ta_ = 0, tb_ = 0, t_out_ = 0;
};

// Shared GEMM helpers (row-major).  acc: accumulate into C instead of
// overwriting.
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k, bool acc);
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k, bool acc);
void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k, bool acc);

// Average-pool / un-pool over the T axis to an arbitrary target length
// (bin-based, used by MergeReduce).
Tensor pool_time(const Tensor& x, int64_t t_out);
Tensor unpool_time_grad(const Tensor& gy, int64_t t_in);

}  // namespace holivid
