#pragma once

#include <cstdint>
#include <vector>

#include "holivid/tensor.hpp"

namespace holivid {

struct KMeansResult {
  Tensor centroids;              // (k, D)
  std::vector<int> assignments;  // (N,)
  double inertia = 0.0;
  int iterations = 0;
  bool converged = false;
  // inertia after each Lloyd assignment step, one trace per restart
  // (traces[best_restart] belongs to the returned solution)
  std::vector<std::vector<double>> traces;
  int best_restart = 0;
};

struct KMeansOptions {
  int n_init = 10;
  int max_iter = 300;
  double tol = 1e-4;  // max centroid shift (L2) below which a run stops
};

// Lloyd iterations from explicit initial centroids; empty clusters are
// re-seeded at the point farthest from its assigned centroid.
KMeansResult lloyd(const Tensor& features, const Tensor& initial_centroids,
                   const KMeansOptions& opts);

// k-means++ seeding, n_init restarts, lowest inertia wins (ties: first).
KMeansResult kmeans(const Tensor& features, int k, uint64_t seed,
                    const KMeansOptions& opts = KMeansOptions());

}  // namespace holivid
