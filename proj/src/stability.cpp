#include "scmarket/stability.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

namespace scmarket {

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

double min_eigenvalue_sym(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return m.jacobiSvd().singularValues()(0);
}

}  // namespace

LinearizedSystem assemble_linearization(const MarketScenario& scenario,
                                        const std::optional<PerturbationSpec>& perturbation,
                                        bool capacity_dynamics) {
  if (perturbation) validate_perturbation(scenario, *perturbation);
  const StateLayout layout(scenario);
  const Eigen::Index n = static_cast<Eigen::Index>(layout.size());
  LinearizedSystem sys;
  sys.ordering = layout.labels();
  sys.a1 = Eigen::MatrixXd::Zero(n, n);

  for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
    const auto& sc = scenario.scs[i];
    const double g = perturbation ? perturbation->factor_for(sc.id) : 1.0;
    const auto chans = sc.enabled_channels();
    const Eigen::Index p = static_cast<Eigen::Index>(layout.price_index(i));
    for (std::size_t k = 0; k < chans.size(); ++k) {
      const Eigen::Index s = static_cast<Eigen::Index>(layout.supply_index(i, k));
      sys.a1(s, s) = -g * chans[k]->coeffs.beta / chans[k]->tau;
      sys.a1(s, p) = 1.0 / chans[k]->tau;
      sys.a1(p, s) = -g / sc.tau_rho;
    }
  }
  for (std::size_t j = 0; j < scenario.customers.size(); ++j) {
    const auto& c = scenario.customers[j];
    const std::size_t i = scenario.sc_index(c.sc_id);
    const Eigen::Index d = static_cast<Eigen::Index>(layout.demand_index(j));
    const Eigen::Index p = static_cast<Eigen::Index>(layout.price_index(i));
    sys.a1(d, d) = c.coeffs_ag.beta / c.tau_ag;
    sys.a1(d, p) = -1.0 / c.tau_ag;
    sys.a1(p, d) = c.demand_factor() / scenario.scs[i].tau_rho;
  }

  if (capacity_dynamics) {
    sys.a2 = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(scenario.scs.size()));
    for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
      const auto chans = scenario.scs[i].enabled_channels();
      for (std::size_t k = 0; k < chans.size(); ++k)
        sys.a2(static_cast<Eigen::Index>(layout.supply_index(i, k)),
               static_cast<Eigen::Index>(i)) = -1.0 / chans[k]->tau;
    }
  }

  DynamicState zero;
  zero.market = Eigen::VectorXd::Zero(n);
  sys.constant = rhs(zero, scenario, perturbation).market;
  return sys;
}

std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("eigenvalues: matrix must be square");
  if (!m.allFinite()) throw std::invalid_argument("eigenvalues: matrix must be finite");
  if (m.rows() == 0) return {};
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, /*computeEigenvectors=*/false);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
  return out;
}

std::pair<bool, double> hurwitz_check(const Eigen::MatrixXd& a) {
  const auto ev = eigenvalues(a);
  double max_re = -std::numeric_limits<double>::infinity();
  for (const auto& v : ev) max_re = std::max(max_re, v.real());
  return {max_re < 0.0, max_re};
}

std::pair<bool, double> hurwitz_check(const LinearizedSystem& sys) {
  return hurwitz_check(sys.a1);
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  if (a.rows() != a.cols() || q.rows() != q.cols() || a.rows() != q.rows())
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  auto [hurwitz, max_re] = hurwitz_check(a);
  if (!hurwitz)
    throw not_hurwitz_error("solve_lyapunov: matrix is not Hurwitz (max real part " +
                            std::to_string(max_re) + ")");
  const Eigen::Index n = a.rows();
  // vec(a' p + p a) = (I (x) a' + a' (x) I) vec(p)
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd at = a.transpose();
  Eigen::MatrixXd system = kron(id, at) + kron(at, id);
  Eigen::VectorXd qv(n * n);
  for (Eigen::Index j = 0; j < n; ++j) qv.segment(j * n, n) = q.col(j);
  Eigen::VectorXd pv = system.partialPivLu().solve(-qv);
  Eigen::MatrixXd p(n, n);
  for (Eigen::Index j = 0; j < n; ++j) p.col(j) = pv.segment(j * n, n);
  p = 0.5 * (p + p.transpose().eval());
  const double resid = (at * p + p * a + q).cwiseAbs().maxCoeff();
  if (!(resid <= 1e-8))
    throw std::runtime_error("solve_lyapunov: residual " + std::to_string(resid) +
                             " exceeds 1e-8");
  return p;
}

double lyapunov_value(const Eigen::VectorXd& y1, const Eigen::VectorXd& y2,
                      const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2) {
  double v = y1.dot(p1 * y1);
  if (y2.size() > 0) v += y2.dot(p2 * y2);
  return v;
}

double attraction_radius(const Eigen::MatrixXd& p2, double psi_min, const Eigen::MatrixXd& q,
                         double beta_bound) {
  if (beta_bound == 0.0) return std::numeric_limits<double>::infinity();
  return 2.0 * min_eigenvalue_sym(p2) * psi_min * min_eigenvalue_sym(q) /
         (beta_bound * beta_bound);
}

PsiExpansion psi_coefficients(const Eigen::VectorXd& vm_max, const Eigen::MatrixXd& p2) {
  if (p2.rows() != p2.cols() || p2.rows() != vm_max.size())
    throw std::invalid_argument("psi_coefficients: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p2);
  PsiExpansion out;
  out.basis = es.eigenvectors();
  out.coefficients.resize(vm_max.size());
  for (Eigen::Index i = 0; i < vm_max.size(); ++i) {
    double c = out.basis.col(i).dot(vm_max);
    if (c < 0) {  // flip so the coefficient of the capacity vector is nonnegative
      out.basis.col(i) = -out.basis.col(i);
      c = -c;
    }
    out.coefficients[i] = c;
  }
  out.psi_min = vm_max.size() > 0 ? out.coefficients.minCoeff() : 0.0;
  return out;
}

double beta_coupling_bound(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& a2,
                           const Eigen::MatrixXd& p2) {
  if (a2.size() == 0) return 0.0;
  // c has a 1 wherever a multiplier couples into a state component.
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a2.cols(), a2.rows());
  for (Eigen::Index i = 0; i < a2.rows(); ++i)
    for (Eigen::Index j = 0; j < a2.cols(); ++j)
      if (a2(i, j) != 0.0) c(j, i) = 1.0;
  return spectral_norm(p1 * a2 + c.transpose() * p2);
}

double perturbed_radius(double d, const PerturbationSpec& bounds, const Eigen::MatrixXd& p1,
                        const Eigen::MatrixXd& p2, double psi_min, double beta_bound) {
  if (beta_bound == 0.0) return d;
  const double common =
      4.0 * min_eigenvalue_sym(p2) * psi_min * spectral_norm(p1) / (beta_bound * beta_bound);
  return d - common * bounds.pi_sc + common * bounds.pi_c;
}

bool perturbation_condition(const PerturbationSpec& bounds, const Eigen::MatrixXd& p1,
                            const Eigen::MatrixXd& q) {
  return bounds.pi_sc - bounds.pi_c < min_eigenvalue_sym(q) / (2.0 * spectral_norm(p1));
}

StabilityReport analyze(const MarketScenario& scenario,
                        const std::optional<PerturbationSpec>& perturbation,
                        const std::optional<Eigen::VectorXd>& p2_diagonal,
                        const std::optional<Eigen::MatrixXd>& q,
                        bool capacity_dynamics) {
  const auto sys = assemble_linearization(scenario, perturbation, capacity_dynamics);
  StabilityReport rep;
  rep.eigenvalues = eigenvalues(sys.a1);
  std::tie(rep.is_hurwitz, rep.max_real_part) = hurwitz_check(sys.a1);
  if (!rep.is_hurwitz) return rep;

  const Eigen::Index n = sys.a1.rows();
  const Eigen::Index nsc = static_cast<Eigen::Index>(scenario.scs.size());
  rep.q = q ? *q : Eigen::MatrixXd::Identity(n, n);
  rep.p1 = solve_lyapunov(sys.a1, rep.q);
  rep.p2 = p2_diagonal ? Eigen::MatrixXd(p2_diagonal->asDiagonal())
                       : Eigen::MatrixXd::Identity(nsc, nsc);

  Eigen::VectorXd vm_max(nsc);
  for (Eigen::Index i = 0; i < nsc; ++i) {
    double cap = 0.0;
    for (const auto* ch : scenario.scs[static_cast<std::size_t>(i)].enabled_channels())
      cap += ch->vm_max;
    vm_max[i] = cap;
  }
  const auto psi = psi_coefficients(vm_max, rep.p2);
  rep.psi_min = psi.psi_min;
  rep.beta_bound = beta_coupling_bound(rep.p1, sys.a2, rep.p2);
  rep.lambda_min_q = min_eigenvalue_sym(rep.q);
  rep.lambda_min_p2 = min_eigenvalue_sym(rep.p2);
  rep.d = attraction_radius(rep.p2, rep.psi_min, rep.q, rep.beta_bound);
  const PerturbationSpec bounds = perturbation ? *perturbation : PerturbationSpec{};
  rep.d_delta = perturbed_radius(rep.d, bounds, rep.p1, rep.p2, rep.psi_min, rep.beta_bound);
  rep.perturbation_condition_ok = perturbation_condition(bounds, rep.p1, rep.q);
  rep.has_lyapunov = true;
  return rep;
}

std::pair<bool, double> verify_lyapunov_decrease(const TrajectoryRecord& trajectory,
                                                 const MarketState& equilibrium,
                                                 const Eigen::MatrixXd& p1,
                                                 const Eigen::MatrixXd& p2,
                                                 const MarketScenario& scenario) {
  const StateLayout layout(scenario);
  const Eigen::VectorXd xeq = layout.pack(equilibrium);
  if (trajectory.states.empty()) return {true, 0.0};

  double v_prev = 0.0, v0 = 0.0, v_max = 0.0, worst = 0.0;
  for (std::size_t k = 0; k < trajectory.states.size(); ++k) {
    const auto& s = trajectory.states[k];
    const double v = lyapunov_value(s.market - xeq, s.multipliers, p1, p2);
    if (k == 0) {
      v0 = v;
    } else {
      worst = std::max(worst, v - v_prev);
    }
    v_max = std::max(v_max, v);
    v_prev = v;
  }
  // 1e-12 * v_max absorbs pure floating-point noise when the trajectory sits
  // at the equilibrium and V(0) is essentially zero.
  const bool ok = worst <= 1e-6 * v0 + 1e-12 * v_max;
  return {ok, worst};
}

}  // namespace scmarket
