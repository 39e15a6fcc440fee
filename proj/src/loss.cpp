#include "holivid/loss.hpp"

#include <cmath>

#include "holivid/error.hpp"

namespace holivid {

double softplus(double z) {
  // softplus(z) = max(z, 0) + log1p(exp(-|z|))
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

BceResult bce_loss(const Tensor& logits, const Tensor& targets, const Tensor& mask) {
  if (!logits.same_shape(targets) || !logits.same_shape(mask))
    throw ValidationError("bce_loss: shape mismatch");
  BceResult res;
  res.dlogits = Tensor(logits.shape());
  const double* z = logits.data();
  const double* y = targets.data();
  const double* m = mask.data();
  double* g = res.dlogits.data();
  double sum = 0.0;
  int64_t count = 0;
  const int64_t n = logits.size();
  for (int64_t i = 0; i < n; ++i) {
    if (m[i] == 0.0) continue;
    sum += softplus(z[i]) - y[i] * z[i];
    ++count;
  }
  res.count = count;
  if (count == 0) return res;
  res.value = sum / static_cast<double>(count);
  double inv = 1.0 / static_cast<double>(count);
  for (int64_t i = 0; i < n; ++i) {
    if (m[i] == 0.0) continue;
    g[i] = (sigmoid(z[i]) - y[i]) * inv;
  }
  return res;
}

MultiTaskResult multi_task_loss(const Tensor& logits, const Tensor& targets, const Tensor& mask,
                                const std::array<std::vector<int>, kNumCategories>& category_ids,
                                const std::array<double, kNumCategories>& weights) {
  if (!logits.same_shape(targets) || !logits.same_shape(mask))
    throw ValidationError("multi_task_loss: shape mismatch");
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw ValidationError("multi_task_loss: weights must be finite and >= 0");
  }
  const int64_t b = logits.dim(0), l = logits.dim(1);
  MultiTaskResult res;
  res.weights = weights;
  res.dlogits = Tensor(logits.shape());
  const double* z = logits.data();
  const double* y = targets.data();
  const double* m = mask.data();
  double* g = res.dlogits.data();

  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;
  if (weight_sum <= 0.0) return res;

  for (int c = 0; c < kNumCategories; ++c) {
    const auto& ids = category_ids[static_cast<size_t>(c)];
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < b; ++i) {
      for (int id : ids) {
        int64_t off = i * l + id;
        if (m[off] == 0.0) continue;
        sum += softplus(z[off]) - y[off] * z[off];
        ++count;
      }
    }
    double head = count > 0 ? sum / static_cast<double>(count) : 0.0;
    res.per_head[static_cast<size_t>(c)] = head;
    double w = weights[static_cast<size_t>(c)];
    res.value += w * head;
    if (w > 0.0 && count > 0) {
      double scale = w / (weight_sum * static_cast<double>(count));
      for (int64_t i = 0; i < b; ++i) {
        for (int id : ids) {
          int64_t off = i * l + id;
          if (m[off] == 0.0) continue;
          g[off] = (sigmoid(z[off]) - y[off]) * scale;
        }
      }
    }
  }
  res.value /= weight_sum;
  return res;
}

Tensor category_mask(const Tensor& base_mask,
                     const std::array<std::vector<int>, kNumCategories>& category_ids,
                     const std::array<bool, kNumCategories>& active) {
  Tensor out = base_mask;
  const int64_t b = base_mask.dim(0), l = base_mask.dim(1);
  for (int c = 0; c < kNumCategories; ++c) {
    if (active[static_cast<size_t>(c)]) continue;
    for (int id : category_ids[static_cast<size_t>(c)]) {
      for (int64_t i = 0; i < b; ++i) out[i * l + id] = 0.0;
    }
  }
  return out;
}

}  // namespace holivid
