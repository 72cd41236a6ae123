#include "ccpaloc/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ccpaloc {

EstimationResult estimate(const MeasurementModel& model, const Eigen::VectorXd& z) {
  if (z.size() != model.m()) fail(ErrorCode::ShapeMismatch, "measurement length != m");
  // Solve min || W^(1/2) (z - H theta) || by QR of the weighted system.
  const Eigen::VectorXd w_sqrt = model.weights.cwiseSqrt();
  const Eigen::MatrixXd hw = w_sqrt.asDiagonal() * model.H;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(hw);
  if (qr.rank() < model.n())
    fail(ErrorCode::RankDeficient, "measurement matrix rank " + std::to_string(qr.rank()) +
                                       " < " + std::to_string(model.n()));
  EstimationResult result;
  result.theta_hat = qr.solve(w_sqrt.asDiagonal() * z);
  result.residual = z - model.H * result.theta_hat;
  result.residual_norm = result.residual.norm();
  return result;
}

BddConfig calibrate_threshold(const GridCase& grid, const MeasurementModel& model, double alpha,
                              int n_samples, Rng& rng, double load_lo, double load_hi) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidConfig, "alpha must be in (0,1)");
  if (n_samples < 1000) fail(ErrorCode::InvalidConfig, "calibration needs at least 1000 samples");

  std::vector<double> norms;
  norms.reserve(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    const InjectionVector inj = sample_injections(grid, load_lo, load_hi, rng);
    const StateVector state = solve_dc(grid, inj);
    const Eigen::VectorXd z = measure(model, state, /*noisy=*/true, &rng);
    norms.push_back(estimate(model, z).residual_norm);
  }
  std::sort(norms.begin(), norms.end());
  // Empirical (1 - alpha) quantile by order statistic.
  int idx = static_cast<int>(std::ceil((1.0 - alpha) * n_samples)) - 1;
  idx = std::clamp(idx, 0, n_samples - 1);
  return BddConfig{norms[static_cast<std::size_t>(idx)], alpha, "empirical"};
}

bool detect(const EstimationResult& result, const BddConfig& cfg) {
  return result.residual_norm >= cfg.tau;
}

}  // namespace ccpaloc
