#pragma once

#include "oss/simulate.hpp"

namespace oss {

struct WeightedEdge {
  int a = 0, b = 0;
  double weight = 1.0;
};

/// Aggregate frequency-response model over m buses: the steady-state map is
///   dω = (1/beta) 1 1' du - (1/beta) 1 w
/// with per-bus generation costs J_i and a connected weighted graph whose
/// Laplacian drives the distributed controller.
struct FrequencyModel {
  double beta = 1.0;
  int m = 0;
  std::vector<ConvexFunction> costs;  // scalar each
  std::vector<WeightedEdge> edges;
  Matrix laplacian;  // m x m
  Matrix L11;        // leading (m-1) x (m-1) block
  /// Time constant of the first-order dynamic realization.
  double filter_time_constant = 0.1;
};

FrequencyModel make_frequency_model(double beta, int m, std::vector<WeightedEdge> edges,
                                    std::vector<ConvexFunction> costs,
                                    double filter_time_constant = 0.1);

std::vector<WeightedEdge> ring_edges(int m, double weight = 1.0);

/// Quadratic cost 1/2 a u^2, optionally with a barrier box.
ConvexFunction quadratic_bus_cost(double a);

/// First-order Hurwitz realization whose DC gains match the steady-state
/// map exactly:  x' = (-x + 1 1' u - 1 w)/Tf,  z = x / beta.
Plant realize_frequency_plant(const FrequencyModel& model);

/// Problem + subspace for  min sum J_i(du_i)  s.t.  0 = beta dω_m,
/// with the Laplacian basis Tz = 0, Tu = [L11'; L12'].
struct FrequencyParts {
  Plant plant;
  DcGains gains;
  OssProblem problem;
  FeasibleSubspace subspace;
};

FrequencyParts build_frequency_problem(const FrequencyModel& model);

/// Distributed two-loop design with the closed-form gains
///   K2 = e_m,  Pi_c = I - e_m 1',  P = L11^-1,  K1 = [I; 0]:
/// bus m integrates the frequency deviation while buses 1..m-1 average
/// their marginal costs over the graph.
TwoLoopController distributed_controller(const FrequencyModel& model, double tau1,
                                         double tau2);

/// max_i grad J_i(u_i) - min_i grad J_i(u_i); zero at the economic optimum.
double marginal_cost_spread(const FrequencyModel& model, const Vector& u);

/// sum_i u_i - w; zero in steady state when frequency deviation is zero.
double power_balance_error(const FrequencyModel& model, const Vector& u, double w);

}  // namespace oss
