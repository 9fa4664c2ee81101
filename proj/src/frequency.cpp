#include "oss/frequency.hpp"

#include <Eigen/Eigenvalues>

namespace oss {

FrequencyModel make_frequency_model(double beta, int m, std::vector<WeightedEdge> edges,
                                    std::vector<ConvexFunction> costs,
                                    double filter_time_constant) {
  if (!(beta > 0)) throw InvalidInputError("frequency model: beta must be positive");
  if (m < 2) throw InvalidInputError("frequency model: need at least two buses");
  if (static_cast<int>(costs.size()) != m) {
    throw InvalidInputError("frequency model: need one cost per bus");
  }
  for (const auto& c : costs) {
    if (c.dim() != 1) throw InvalidInputError("frequency model: costs must be scalar");
  }
  if (!(filter_time_constant > 0)) {
    throw InvalidInputError("frequency model: filter time constant must be positive");
  }

  Matrix L = Matrix::Zero(m, m);
  for (const auto& e : edges) {
    if (e.a < 0 || e.b < 0 || e.a >= m || e.b >= m || e.a == e.b || !(e.weight > 0)) {
      throw InvalidInputError("frequency model: bad edge");
    }
    L(e.a, e.b) -= e.weight;
    L(e.b, e.a) -= e.weight;
    L(e.a, e.a) += e.weight;
    L(e.b, e.b) += e.weight;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(L, Eigen::EigenvaluesOnly);
  if (es.eigenvalues()[1] <= 1e-9) {
    throw InvalidInputError("frequency model: graph is not connected");
  }

  FrequencyModel model;
  model.beta = beta;
  model.m = m;
  model.costs = std::move(costs);
  model.edges = std::move(edges);
  model.laplacian = L;
  model.L11 = L.topLeftCorner(m - 1, m - 1);
  model.filter_time_constant = filter_time_constant;
  return model;
}

std::vector<WeightedEdge> ring_edges(int m, double weight) {
  std::vector<WeightedEdge> edges;
  for (int i = 0; i < m; ++i) edges.push_back({i, (i + 1) % m, weight});
  return edges;
}

ConvexFunction quadratic_bus_cost(double a) {
  return ConvexFunction::quadratic(Matrix::Constant(1, 1, a), Vector::Zero(1));
}

Plant realize_frequency_plant(const FrequencyModel& model) {
  const int m = model.m;
  const double tf = model.filter_time_constant;
  const Matrix ones = Matrix::Ones(m, m);
  const Matrix A = -Matrix::Identity(m, m) / tf;
  const Matrix B = ones / tf;
  const Matrix Bw = -Matrix::Ones(m, 1) / tf;
  const Matrix C = Matrix::Identity(m, m) / model.beta;
  return make_plant(A, B, Bw, C, Matrix::Zero(m, m), Matrix::Zero(m, 1));
}

FrequencyParts build_frequency_problem(const FrequencyModel& model) {
  const int m = model.m;
  FrequencyParts parts;
  parts.plant = realize_frequency_plant(model);
  parts.gains = dc_gains(parts.plant);

  ConvexFunction f0 = ConvexFunction::direct_sum(model.costs);
  ConvexFunction g0 = ConvexFunction::zero(m);
  Matrix Hz = Matrix::Zero(1, m);
  Hz(0, m - 1) = model.beta;
  parts.problem = make_oss_problem(std::move(f0), std::move(g0), Hz, Matrix::Zero(1, m),
                                   Matrix::Zero(1, 1));

  const Matrix Tz = Matrix::Zero(m, m - 1);
  const Matrix Tu = model.laplacian.topRows(m - 1).transpose();
  parts.subspace = make_subspace_with_basis(parts.gains, parts.problem, Tz, Tu);
  return parts;
}

TwoLoopController distributed_controller(const FrequencyModel& model, double tau1,
                                         double tau2) {
  const int m = model.m;
  TwoLoopController c;
  c.K2 = Matrix::Zero(m, 1);
  c.K2(m - 1, 0) = 1.0;
  c.Pi_c = Matrix::Identity(m, m);
  c.Pi_c.row(m - 1) -= Matrix::Ones(1, m);
  c.K1 = Matrix::Zero(m, m - 1);
  c.K1.topRows(m - 1) = Matrix::Identity(m - 1, m - 1);
  Matrix P = model.L11.llt().solve(Matrix::Identity(m - 1, m - 1));
  c.P = 0.5 * (P + P.transpose());
  c.tau1 = tau1;
  c.tau2 = tau2;

  const Matrix target = model.laplacian.topRows(m - 1).transpose() * c.P;
  const double residual = (c.Pi_c * c.K1 - target).cwiseAbs().maxCoeff();
  if (residual > 1e-8) {
    throw InternalConsistencyError("distributed controller gains violate Pi_c K1 = Tu P");
  }
  return c;
}

double marginal_cost_spread(const FrequencyModel& model, const Vector& u) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < model.m; ++i) {
    const double g = gradient(model.costs[i], u.segment(i, 1))[0];
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  return hi - lo;
}

double power_balance_error(const FrequencyModel&, const Vector& u, double w) {
  return u.sum() - w;
}

}  // namespace oss
