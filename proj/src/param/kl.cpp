#include "ensmooth/kl.hpp"

#include <lapacke.h>

#include <cmath>
#include <vector>

#include "ensmooth/error.hpp"
#include "ensmooth/io.hpp"

namespace ensmooth::param {

void CovarianceSpec::validate() const {
  if (!(variance > 0.0)) throw InvalidInput("covariance variance must be positive");
  if (!(corr_x > 0.0) || !(corr_y > 0.0))
    throw InvalidInput("correlation lengths must be positive");
  if (!std::isfinite(mean)) throw InvalidInput("field mean must be finite");
}

double CovarianceSpec::operator()(double x1, double y1, double x2,
                                  double y2) const noexcept {
  return variance * std::exp(-std::abs(x1 - x2) / corr_x - std::abs(y1 - y2) / corr_y);
}

ScalarField KLBasis::eigenfield(int n) const {
  return ScalarField(grid, eigenfields.col(n));
}

Eigen::MatrixXd KLBasis::gram() const {
  Eigen::VectorXd w(grid.size());
  for (int k = 0; k < grid.size(); ++k) w[k] = grid.cell_area(k);
  return eigenfields.transpose() * w.asDiagonal() * eigenfields;
}

Eigen::MatrixXd KLBasis::modes() const {
  return eigenfields * eigenvalues.cwiseSqrt().asDiagonal();
}

KLBasis build_kl_basis(const CovarianceSpec& spec, const Grid2D& grid, int n_kl) {
  spec.validate();
  const int n = grid.size();
  if (n_kl < 1 || n_kl > n)
    throw InvalidInput("number of KL terms must lie in [1, node count]");

  // Separable kernel: exp(-|dx|/lx) * exp(-|dy|/ly).
  Eigen::MatrixXd ex(grid.nx(), grid.nx()), ey(grid.ny(), grid.ny());
  for (int a = 0; a < grid.nx(); ++a)
    for (int b = 0; b < grid.nx(); ++b)
      ex(a, b) = std::exp(-std::abs(grid.x(a) - grid.x(b)) / spec.corr_x);
  for (int a = 0; a < grid.ny(); ++a)
    for (int b = 0; b < grid.ny(); ++b)
      ey(a, b) = std::exp(-std::abs(grid.y(a) - grid.y(b)) / spec.corr_y);

  Eigen::VectorXd sqrt_w(n);
  for (int k = 0; k < n; ++k) sqrt_w[k] = std::sqrt(grid.cell_area(k));

  // Symmetrized weighted operator W^1/2 C W^1/2 (upper triangle suffices).
  Eigen::MatrixXd c(n, n);
  for (int q = 0; q < n; ++q) {
    const int iq = grid.col(q), jq = grid.row(q);
    for (int p = 0; p <= q; ++p)
      c(p, q) = spec.variance * ex(grid.col(p), iq) * ey(grid.row(p), jq) *
                sqrt_w[p] * sqrt_w[q];
  }

  std::vector<double> w(n);
  Eigen::MatrixXd z(n, n_kl);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(
      LAPACK_COL_MAJOR, 'V', n_kl == n ? 'A' : 'I', 'U', n, c.data(), n, 0.0,
      0.0, n - n_kl + 1, n, 0.0, &found, w.data(), z.data(), n, support.data());
  if (info != 0 || found != n_kl)
    throw NumericError("KL eigendecomposition failed (info " + std::to_string(info) + ")");

  KLBasis basis{grid, Eigen::VectorXd(n_kl), Eigen::MatrixXd(n, n_kl), spec.mean, 0.0};
  double captured = 0.0;
  for (int k = 0; k < n_kl; ++k) {
    const int src = n_kl - 1 - k;  // LAPACK returns ascending order
    basis.eigenvalues[k] = std::max(0.0, w[src]);
    basis.eigenfields.col(k) = z.col(src).cwiseQuotient(sqrt_w);
    captured += basis.eigenvalues[k];
  }
  // The total variance of the weighted operator is variance * domain area.
  basis.captured_fraction = captured / (spec.variance * grid.lx() * grid.ly());
  return basis;
}

ScalarField kl_realize(const KLBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& xi) {
  if (xi.size() != basis.terms())
    throw InvalidInput("KL coefficient vector length does not match the basis");
  Eigen::VectorXd v =
      basis.eigenfields * basis.eigenvalues.cwiseSqrt().cwiseProduct(xi);
  v.array() += basis.mean;
  return ScalarField(basis.grid, std::move(v));
}

void save_kl_basis(const KLBasis& basis, const std::filesystem::path& base) {
  nlohmann::json extra;
  extra["grid"] = {{"nx", basis.grid.nx()}, {"ny", basis.grid.ny()},
                   {"lx", basis.grid.lx()}, {"ly", basis.grid.ly()}};
  extra["eigenvalues"] = std::vector<double>(
      basis.eigenvalues.data(), basis.eigenvalues.data() + basis.eigenvalues.size());
  extra["mean"] = basis.mean;
  extra["captured_fraction"] = basis.captured_fraction;
  io::save_matrix(basis.eigenfields, base, extra);
}

KLBasis load_kl_basis(const std::filesystem::path& base) {
  nlohmann::json m;
  Eigen::MatrixXd fields = io::load_matrix(base, &m);
  try {
    const auto& g = m.at("grid");
    Grid2D grid(g.at("nx").get<int>(), g.at("ny").get<int>(), g.at("lx").get<double>(),
                g.at("ly").get<double>());
    const auto tau = m.at("eigenvalues").get<std::vector<double>>();
    if (fields.rows() != grid.size() ||
        fields.cols() != static_cast<Eigen::Index>(tau.size()))
      throw DimensionMismatch("KL basis dims disagree with its manifest");
    KLBasis b{grid,
              Eigen::Map<const Eigen::VectorXd>(tau.data(), static_cast<Eigen::Index>(tau.size())),
              std::move(fields), m.at("mean").get<double>(),
              m.at("captured_fraction").get<double>()};
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedManifest(std::string("bad KL basis manifest: ") + e.what());
  }
}

}  // namespace ensmooth::param
