#include "meso/quadrature.hpp"

#include "meso/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>

namespace meso {

namespace {

/// P_order(x) and its derivative by the three-term recurrence.
std::pair<Real, Real> legendre(int order, Real x) {
  Real p0 = 1;
  Real p1 = x;
  for (int k = 2; k <= order; ++k) {
    const Real p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, order * (x * p1 - p0) / (x * x - 1)};
}

}  // namespace

GaussRule gauss_legendre(int order) {
  if (order < 1) throw DomainError("Gauss–Legendre order must be positive");
  GaussRule rule{RVec(order), RVec(order)};
  if (order == 1) {
    rule.nodes(0) = 0;
    rule.weights(0) = 2;
    return rule;
  }
  for (int i = 0; i < (order + 1) / 2; ++i) {
    Real x = std::cos(kPi * (i + 0.75) / (order + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(order, x);
      const Real dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const Real dp = legendre(order, x).second;
    const Real w = 2 / ((1 - x * x) * dp * dp);
    rule.nodes(i) = -x;
    rule.nodes(order - 1 - i) = x;
    rule.weights(i) = w;
    rule.weights(order - 1 - i) = w;
  }
  if (order % 2 == 1) rule.nodes(order / 2) = 0;
  return rule;
}

namespace {

constexpr std::array<Real, 8> kXgk = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                      0.207784955007898467600689403773245, 0.0};
constexpr std::array<Real, 8> kWgk = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<Real, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                     0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Piece {
  Real a;
  Real b;
  Real value;
  Real error;
  bool operator<(const Piece& o) const { return error < o.error; }
};

/// The 15 Kronrod nodes of [a, b], center last.
void kronrod_nodes(Real a, Real b, Real* out) {
  const Real c = 0.5 * (a + b);
  const Real h = 0.5 * (b - a);
  for (int j = 0; j < 7; ++j) {
    out[2 * j] = c - h * kXgk[j];
    out[2 * j + 1] = c + h * kXgk[j];
  }
  out[14] = c;
}

Piece kronrod_piece(Real a, Real b, const Real* fx) {
  const Real h = 0.5 * (b - a);
  Real k = fx[14] * kWgk[7];
  Real g = fx[14] * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const Real s = fx[2 * j] + fx[2 * j + 1];
    k += kWgk[j] * s;
    if (j % 2 == 1) g += kWg[j / 2] * s;
  }
  return {a, b, k * h, std::abs((k - g) * h)};
}

/// Evaluates the panels [a_i, b_i] with a single batch call.
std::vector<Piece> kronrod_batch(const BatchIntegrand& f, const std::vector<std::pair<Real, Real>>& panels) {
  RVec nodes(static_cast<Eigen::Index>(15 * panels.size()));
  for (std::size_t i = 0; i < panels.size(); ++i)
    kronrod_nodes(panels[i].first, panels[i].second, nodes.data() + 15 * i);
  const RVec values = f(nodes);
  if (values.size() != nodes.size()) throw DomainError("batch integrand returned the wrong number of values");
  std::vector<Piece> out;
  out.reserve(panels.size());
  for (std::size_t i = 0; i < panels.size(); ++i)
    out.push_back(kronrod_piece(panels[i].first, panels[i].second, values.data() + 15 * i));
  return out;
}

}  // namespace

QuadratureResult integrate_adaptive_batch(const BatchIntegrand& f, Real a, Real b, const AdaptiveOptions& options,
                                          const std::vector<Real>& breakpoints) {
  QuadratureResult out;
  if (!(b > a)) {
    out.converged = true;
    return out;
  }
  std::vector<Real> cuts{a};
  for (Real p : breakpoints)
    if (p > a && p < b) cuts.push_back(p);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::pair<Real, Real>> initial;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) initial.emplace_back(cuts[i], cuts[i + 1]);
  std::priority_queue<Piece> heap;
  Real value = 0;
  Real error = 0;
  for (const Piece& p : kronrod_batch(f, initial)) {
    value += p.value;
    error += p.error;
    heap.push(p);
  }
  out.evaluations += static_cast<int>(15 * initial.size());
  int intervals = static_cast<int>(heap.size());
  while (error > std::max(options.abs_tol, options.rel_tol * std::abs(value)) && intervals < options.max_intervals) {
    const Piece worst = heap.top();
    const Real mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;
    heap.pop();
    const auto halves = kronrod_batch(f, {{worst.a, mid}, {mid, worst.b}});
    out.evaluations += 30;
    value += halves[0].value + halves[1].value - worst.value;
    error += halves[0].error + halves[1].error - worst.error;
    heap.push(halves[0]);
    heap.push(halves[1]);
    ++intervals;
  }
  // Re-sum to remove the drift of the running totals.
  value = 0;
  error = 0;
  while (!heap.empty()) {
    value += heap.top().value;
    error += heap.top().error;
    heap.pop();
  }
  out.value = value;
  out.error = error;
  out.converged = error <= std::max(options.abs_tol, options.rel_tol * std::abs(value));
  return out;
}

QuadratureResult integrate_adaptive(const std::function<Real(Real)>& f, Real a, Real b,
                                    const AdaptiveOptions& options, const std::vector<Real>& breakpoints) {
  const BatchIntegrand batch = [&f](const RVec& x) {
    RVec y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y(i) = f(x(i));
    return y;
  };
  return integrate_adaptive_batch(batch, a, b, options, breakpoints);
}

}  // namespace meso
