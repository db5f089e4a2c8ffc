#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace coupled_is {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds from a master seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31U);
}

/// Seed of stream `index` under `master`. Depends only on the pair, never on scheduling.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  return mix_seed(mix_seed(master) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

/// n x d matrix of iid standard normals, filled row by row.
inline Eigen::MatrixXd standard_normal_rows(Rng& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = normal(rng);
  }
  return z;
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the sign of
/// diag(R) folded into Q.
inline Eigen::MatrixXd haar_orthogonal(Rng& rng, Eigen::Index d) {
  const Eigen::MatrixXd g = standard_normal_rows(rng, d, d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

}  // namespace coupled_is
