#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scmarket/dynamics.hpp"
#include "scmarket/model.hpp"

namespace scmarket {

/// Raised by solve_lyapunov when the system matrix is not Hurwitz.
struct not_hurwitz_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The market dynamics in matrix form: d(x1)/dt = a1 * x1 + a2 * x2 +
/// constant, with x1 ordered per `ordering` and x2 the capacity multipliers.
struct LinearizedSystem {
  Eigen::MatrixXd a1;
  Eigen::MatrixXd a2;        // empty when capacity dynamics are off
  Eigen::VectorXd constant;  // rhs at the zero state
  std::vector<std::string> ordering;
};

/// Exact Jacobian of the gradient-play rhs over the ordered state, with
/// perturbation factors applied the same way the dynamics apply them.
LinearizedSystem assemble_linearization(const MarketScenario& scenario,
                                        const std::optional<PerturbationSpec>& perturbation = {},
                                        bool capacity_dynamics = false);

/// All eigenvalues with algebraic multiplicity.
std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& m);

/// (is_hurwitz, max real part); Hurwitz means every eigenvalue has strictly
/// negative real part.
std::pair<bool, double> hurwitz_check(const LinearizedSystem& sys);
std::pair<bool, double> hurwitz_check(const Eigen::MatrixXd& a);

/// Solves a^T p + p a = -q for symmetric positive definite p via the
/// vectorized (Kronecker) linear system; intended for desk-scale dimensions.
/// Throws not_hurwitz_error when a is not Hurwitz.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q);

/// V(y1, y2) = y1' p1 y1 + y2' p2 y2. An empty y2 contributes nothing.
double lyapunov_value(const Eigen::VectorXd& y1, const Eigen::VectorXd& y2,
                      const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2);

/// Region-of-attraction radius d = 2 lmin(p2) psi_min lmin(q) / beta^2.
/// beta = 0 (no capacity coupling) yields +infinity: the Hurwitz linear
/// system is attracted from everywhere.
double attraction_radius(const Eigen::MatrixXd& p2, double psi_min, const Eigen::MatrixXd& q,
                         double beta_bound);

/// Expansion of the per-SC capacity vector in an orthonormal eigenbasis of
/// p2. Eigenvectors are sign-normalized so coefficients are nonnegative.
struct PsiExpansion {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd basis;  // columns are the (possibly flipped) eigenvectors
  double psi_min = 0.0;
};
PsiExpansion psi_coefficients(const Eigen::VectorXd& vm_max, const Eigen::MatrixXd& p2);

/// Spectral norm of p1 * a2 + c' * p2 where c is the capacity-constraint
/// coefficient matrix (ones over each SC's supply components, derived from
/// a2's sparsity). Returns 0 when capacity dynamics are off (empty a2).
double beta_coupling_bound(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& a2,
                           const Eigen::MatrixXd& p2);

/// d_delta = d - d_delta_sc + d_delta_c with each contribution
/// 4 lmin(p2) psi_min ||p1|| pi / beta^2. With no capacity coupling
/// (beta = 0) both contributions vanish and d is returned unchanged.
double perturbed_radius(double d, const PerturbationSpec& bounds, const Eigen::MatrixXd& p1,
                        const Eigen::MatrixXd& p2, double psi_min, double beta_bound);

/// Robustness condition: pi_sc - pi_c < lmin(q) / (2 ||p1||).
bool perturbation_condition(const PerturbationSpec& bounds, const Eigen::MatrixXd& p1,
                            const Eigen::MatrixXd& q);

struct StabilityReport {
  std::vector<std::complex<double>> eigenvalues;
  double max_real_part = 0.0;
  bool is_hurwitz = false;
  /// The fields below are defined only when is_hurwitz (has_lyapunov).
  bool has_lyapunov = false;
  Eigen::MatrixXd p1, p2, q;
  double beta_bound = 0.0;
  double psi_min = 0.0;
  double d = 0.0;
  double d_delta = 0.0;
  double lambda_min_q = 0.0;
  double lambda_min_p2 = 0.0;
  bool perturbation_condition_ok = false;
};

/// Full pipeline: linearize, Hurwitz check, then (when stable) Lyapunov
/// solve with q (default identity), psi expansion of the capacity vector
/// with p2 (default identity), coupling bound, and the attraction radii.
StabilityReport analyze(const MarketScenario& scenario,
                        const std::optional<PerturbationSpec>& perturbation = {},
                        const std::optional<Eigen::VectorXd>& p2_diagonal = {},
                        const std::optional<Eigen::MatrixXd>& q = {},
                        bool capacity_dynamics = false);

/// Checks that V is non-increasing along the trajectory relative to the
/// equilibrium, up to 1e-6 * V(0) (plus a rounding allowance). Returns
/// (ok, max observed increase between consecutive samples).
std::pair<bool, double> verify_lyapunov_decrease(const TrajectoryRecord& trajectory,
                                                 const MarketState& equilibrium,
                                                 const Eigen::MatrixXd& p1,
                                                 const Eigen::MatrixXd& p2,
                                                 const MarketScenario& scenario);

}  // namespace scmarket
