#pragma once

#include <Eigen/Dense>
#include <string>

#include "ccpaloc/case_model.hpp"
#include "ccpaloc/powerflow.hpp"
#include "ccpaloc/rng.hpp"

namespace ccpaloc {

struct EstimationResult {
  Eigen::VectorXd theta_hat;  // length n
  Eigen::VectorXd residual;   // r = z - H theta_hat, length m
  double residual_norm = 0.0; // ||r||_2
};

/// Weighted least squares state estimate.
EstimationResult estimate(const MeasurementModel& model, const Eigen::VectorXd& z);

struct BddConfig {
  double tau = 0.0;     // alarm when residual_norm >= tau
  double alpha = 0.05;  // target false-positive rate
  std::string calibration = "empirical";
};

/// Empirical threshold: the (1 - alpha) quantile of residual norms over
/// n_samples clean, noisy measurements at randomized load levels.
BddConfig calibrate_threshold(const GridCase& grid, const MeasurementModel& model, double alpha,
                              int n_samples, Rng& rng, double load_lo = 0.8, double load_hi = 1.2);

bool detect(const EstimationResult& result, const BddConfig& cfg);

}  // namespace ccpaloc
