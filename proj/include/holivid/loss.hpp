#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "holivid/taxonomy.hpp"
#include "holivid/tensor.hpp"

namespace holivid {

// Numerically stable softplus; exact for |z| up to at least 1e4.
double softplus(double z);
double sigmoid(double z);

struct BceResult {
  double value = 0.0;
  Tensor dlogits;     // same shape as logits; zero where masked out
  int64_t count = 0;  // masked-in positions
};

// Mean over masked-in positions of softplus(z) - y*z.  Returns 0 (and zero
// gradient) when the mask is empty.
BceResult bce_loss(const Tensor& logits, const Tensor& targets, const Tensor& mask);

struct MultiTaskResult {
  double value = 0.0;
  Tensor dlogits;  // (B, L) on the concatenated logits
  std::array<double, kNumCategories> per_head{};
  std::array<double, kNumCategories> weights{};
};

// Weighted mean over heads of the per-head BCE (each head averaged over its
// own masked-in positions).  Heads of inactive categories get weight 0.
MultiTaskResult multi_task_loss(const Tensor& logits, const Tensor& targets, const Tensor& mask,
                                const std::array<std::vector<int>, kNumCategories>& category_ids,
                                const std::array<double, kNumCategories>& weights);

// A (B, L) mask with zeros in the columns of inactive categories.
Tensor category_mask(const Tensor& base_mask,
                     const std::array<std::vector<int>, kNumCategories>& category_ids,
                     const std::array<bool, kNumCategories>& active);

}  // namespace holivid
