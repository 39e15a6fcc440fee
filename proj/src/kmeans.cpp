#include "holivid/kmeans.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "holivid/error.hpp"
#include "holivid/rng.hpp"

namespace holivid {

namespace {

double sq_dist(const double* a, const double* b, int64_t d) {
  double s = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

// Nearest centroid (ties -> lowest index); also returns the distance.
int assign_one(const double* x, const Tensor& centroids, double* dist_out) {
  const int64_t k = centroids.dim(0), d = centroids.dim(1);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int64_t c = 0; c < k; ++c) {
    double dd = sq_dist(x, centroids.data() + c * d, d);
    if (dd < best_d) {
      best_d = dd;
      best = static_cast<int>(c);
    }
  }
  *dist_out = best_d;
  return best;
}

}  // namespace

KMeansResult lloyd(const Tensor& features, const Tensor& initial_centroids, const KMeansOptions& opts) {
  const int64_t n = features.dim(0), d = features.dim(1);
  const int64_t k = initial_centroids.dim(0);
  if (initial_centroids.dim(1) != d) throw ValidationError("kmeans: centroid dimension mismatch");
  if (k < 1 || k > n) throw ValidationError("kmeans: need 1 <= k <= N");

  KMeansResult res;
  res.centroids = initial_centroids;
  res.assignments.assign(static_cast<size_t>(n), 0);
  res.traces.resize(1);
  std::vector<double> dists(static_cast<size_t>(n));
  std::vector<int64_t> counts(static_cast<size_t>(k));

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    // assignment step
    double inertia = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      res.assignments[static_cast<size_t>(i)] =
          assign_one(features.data() + i * d, res.centroids, &dists[static_cast<size_t>(i)]);
      inertia += dists[static_cast<size_t>(i)];
    }

    // empty-cluster repair: move each empty centroid onto the point
    // currently farthest from its own centroid, then reassign
    for (int64_t c = 0; c < k; ++c) {
      bool empty = true;
      for (int64_t i = 0; i < n && empty; ++i) {
        if (res.assignments[static_cast<size_t>(i)] == c) empty = false;
      }
      if (!empty) continue;
      int64_t far = 0;
      for (int64_t i = 1; i < n; ++i) {
        if (dists[static_cast<size_t>(i)] > dists[static_cast<size_t>(far)]) far = i;
      }
      std::memcpy(res.centroids.data() + c * d, features.data() + far * d,
                  sizeof(double) * static_cast<size_t>(d));
      inertia = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        res.assignments[static_cast<size_t>(i)] =
            assign_one(features.data() + i * d, res.centroids, &dists[static_cast<size_t>(i)]);
        inertia += dists[static_cast<size_t>(i)];
      }
    }

    res.inertia = inertia;
    res.traces[0].push_back(inertia);
    res.iterations = iter + 1;

    // update step
    Tensor next({k, d});
    std::fill(counts.begin(), counts.end(), 0);
    for (int64_t i = 0; i < n; ++i) {
      int c = res.assignments[static_cast<size_t>(i)];
      counts[static_cast<size_t>(c)]++;
      const double* x = features.data() + i * d;
      double* ctr = next.data() + static_cast<int64_t>(c) * d;
      for (int64_t j = 0; j < d; ++j) ctr[j] += x[j];
    }
    double shift = 0.0;
    for (int64_t c = 0; c < k; ++c) {
      double* ctr = next.data() + c * d;
      // counts cannot be zero here: repair above guarantees occupancy
      for (int64_t j = 0; j < d; ++j) ctr[j] /= static_cast<double>(counts[static_cast<size_t>(c)]);
      shift = std::max(shift, std::sqrt(sq_dist(ctr, res.centroids.data() + c * d, d)));
    }
    res.centroids = std::move(next);
    if (shift < opts.tol) {
      res.converged = true;
      break;
    }
  }

  // final assignment under the returned centroids so that the reported
  // inertia is exactly recomputable from (centroids, assignments)
  double final_inertia = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    res.assignments[static_cast<size_t>(i)] =
        assign_one(features.data() + i * d, res.centroids, &dists[static_cast<size_t>(i)]);
    final_inertia += dists[static_cast<size_t>(i)];
  }
  res.inertia = final_inertia;
  res.traces[0].push_back(final_inertia);
  return res;
}

KMeansResult kmeans(const Tensor& features, int k, uint64_t seed, const KMeansOptions& opts) {
  if (features.rank() != 2) throw ValidationError("kmeans: features must be rank-2 (N, D)");
  const int64_t n = features.dim(0), d = features.dim(1);
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (k > n) throw ValidationError("kmeans: k exceeds the number of points");
  if (opts.n_init < 1) throw ValidationError("kmeans: n_init must be >= 1");
  if (opts.max_iter < 1) throw ValidationError("kmeans: max_iter must be >= 1");
  if (!all_finite(features)) throw ValidationError("kmeans: non-finite feature entries");

  KMeansResult best;
  std::vector<std::vector<double>> traces;
  for (int run = 0; run < opts.n_init; ++run) {
    Rng rng(derive_seed(seed, "kmeans-init", static_cast<uint64_t>(run)));
    // k-means++ seeding
    Tensor centroids({k, d});
    std::vector<double> d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    int64_t first = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(n)));
    std::memcpy(centroids.data(), features.data() + first * d, sizeof(double) * static_cast<size_t>(d));
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      const double* prev = centroids.data() + static_cast<int64_t>(c - 1) * d;
      for (int64_t i = 0; i < n; ++i) {
        double dd = sq_dist(features.data() + i * d, prev, d);
        if (dd < d2[static_cast<size_t>(i)]) d2[static_cast<size_t>(i)] = dd;
        total += d2[static_cast<size_t>(i)];
      }
      int64_t chosen;
      if (total <= 0.0) {
        chosen = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(n)));
      } else {
        double r = rng.uniform() * total;
        double acc = 0.0;
        chosen = n - 1;
        for (int64_t i = 0; i < n; ++i) {
          acc += d2[static_cast<size_t>(i)];
          if (acc >= r) {
            chosen = i;
            break;
          }
        }
      }
      std::memcpy(centroids.data() + static_cast<int64_t>(c) * d, features.data() + chosen * d,
                  sizeof(double) * static_cast<size_t>(d));
    }

    KMeansResult res = lloyd(features, centroids, opts);
    traces.push_back(res.traces[0]);
    if (run == 0 || res.inertia < best.inertia) {
      res.best_restart = run;
      auto keep = std::move(res);
      best = std::move(keep);
    }
  }
  best.traces = std::move(traces);
  return best;
}

}  // namespace holivid
