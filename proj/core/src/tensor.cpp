#include "mmm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "mmm/errors.hpp"

namespace mmm {

namespace {

std::uint64_t checked_cells(std::span<const int> dims, std::uint64_t cap, const char* what) {
  std::uint64_t cells = 1;
  for (int d : dims) {
    if (d < 1) throw ValidationError(std::string(what) + ": dimensions must be positive");
    if (cells > cap / std::uint64_t(d)) {
      throw ValidationError(std::string(what) + ": tensor exceeds the dense cell cap");
    }
    cells *= std::uint64_t(d);
  }
  return cells;
}

// Decodes every linear index into digits once; row-major, first mode slowest.
std::vector<std::vector<int>> digit_table(std::span<const int> dims, std::uint64_t cells) {
  std::vector<std::vector<int>> digits(cells, std::vector<int>(dims.size(), 0));
  for (std::uint64_t idx = 1; idx < cells; ++idx) {
    digits[idx] = digits[idx - 1];
    for (int j = int(dims.size()) - 1; j >= 0; --j) {
      if (++digits[idx][std::size_t(j)] < dims[std::size_t(j)]) break;
      digits[idx][std::size_t(j)] = 0;
    }
  }
  return digits;
}

// Euclidean projection onto the standard simplex.
void project_to_simplex(Eigen::VectorXd& v) {
  const int n = int(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0.0;
  double tau = 0.0;
  int rho = 0;
  for (int k = 0; k < n; ++k) {
    cumulative += u[std::size_t(k)];
    const double candidate = (cumulative - 1.0) / (k + 1);
    if (u[std::size_t(k)] - candidate > 0.0) {
      rho = k + 1;
      tau = candidate;
    }
  }
  (void)rho;
  for (int k = 0; k < n; ++k) v[k] = std::max(v[k] - tau, 0.0);
}

// Minimizes sum_k a_k t_k^2 - 2 b_k t_k over the simplex (diagonal QP);
// solved by bisection on the KKT multiplier.
Eigen::VectorXd diagonal_simplex_qp(Eigen::VectorXd a, const Eigen::VectorXd& b) {
  const int n = int(b.size());
  for (int k = 0; k < n; ++k) a[k] = std::max(a[k], 1e-12);
  auto mass = [&](double tau) {
    double total = 0.0;
    for (int k = 0; k < n; ++k) total += std::max(0.0, (b[k] - tau) / a[k]);
    return total;
  };
  double lo = b.minCoeff() - a.maxCoeff();
  double hi = b.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) > 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Eigen::VectorXd out(n);
  const double tau = 0.5 * (lo + hi);
  for (int k = 0; k < n; ++k) out[k] = std::max(0.0, (b[k] - tau) / a[k]);
  const double total = out.sum();
  if (total > 0.0) out /= total;
  return out;
}

}  // namespace

std::uint64_t CoreTensor::cells() const {
  std::uint64_t c = 1;
  for (int j = 0; j < order; ++j) c *= std::uint64_t(num_profiles);
  return c;
}

void CoreTensor::validate() const {
  if (num_profiles < 1 || order < 1) {
    throw ValidationError("core tensor needs H >= 1 and p >= 1");
  }
  std::vector<int> dims(std::size_t(order), num_profiles);
  const std::uint64_t c = checked_cells(dims, kMaxTensorCells, "core tensor");
  if (std::uint64_t(weights.size()) != c) {
    throw ValidationError("core tensor weight count does not match H^p");
  }
  if ((weights.array() < 0.0).any()) {
    throw ValidationError("core tensor weights must be non-negative");
  }
  if (std::fabs(weights.sum() - 1.0) > 1e-10) {
    throw ValidationError("core tensor weights must sum to 1");
  }
}

std::uint64_t ProbabilityTensor::cells() const {
  std::uint64_t c = 1;
  for (int d : dims) c *= std::uint64_t(d);
  return c;
}

void ProbabilityTensor::validate() const {
  const std::uint64_t c = checked_cells(dims, kMaxTensorCells, "probability tensor");
  if (std::uint64_t(values.size()) != c) {
    throw ValidationError("probability tensor value count does not match dims");
  }
  if ((values.array() < 0.0).any()) {
    throw ValidationError("probability tensor values must be non-negative");
  }
  if (std::fabs(values.sum() - 1.0) > 1e-10) {
    throw ValidationError("probability tensor must sum to 1");
  }
}

std::uint64_t count_distinct_symmetric(int H, int p) {
  if (H < 1 || p < 1) throw ValidationError("counts require H >= 1 and p >= 1");
  // C(H+p-1, p) with exact integer intermediate steps.
  unsigned __int128 result = 1;
  for (int i = 1; i <= p; ++i) {
    result = result * (unsigned __int128)(H - 1 + i) / (unsigned __int128)i;
  }
  if (result > (unsigned __int128)UINT64_MAX) {
    throw NumericError("distinct-element count overflows 64 bits");
  }
  return std::uint64_t(result);
}

std::uint64_t count_distinct_group_symmetric(int H, std::span<const int> group_sizes) {
  if (group_sizes.empty()) throw ValidationError("at least one group required");
  unsigned __int128 result = 1;
  for (int pg : group_sizes) {
    result *= (unsigned __int128)count_distinct_symmetric(H, pg);
    if (result > (unsigned __int128)UINT64_MAX) {
      throw NumericError("distinct-element count overflows 64 bits");
    }
  }
  return std::uint64_t(result);
}

SymmetryClasses enumerate_classes(int H, const std::vector<int>& var_groups) {
  const int p = int(var_groups.size());
  if (H < 1 || p < 1) throw ValidationError("class enumeration requires H >= 1 and p >= 1");
  std::vector<int> dims(std::size_t(p), H);
  const std::uint64_t cells = checked_cells(dims, kMaxTensorCells, "class enumeration");
  const auto digits = digit_table(dims, cells);

  std::map<int, std::vector<int>> members;
  for (int j = 0; j < p; ++j) members[var_groups[std::size_t(j)]].push_back(j);

  SymmetryClasses classes;
  classes.num_profiles = H;
  classes.order = p;
  classes.class_of_cell.resize(cells);
  std::map<std::vector<int>, int> id_of_key;
  for (std::uint64_t idx = 0; idx < cells; ++idx) {
    std::vector<int> key;
    key.reserve(std::size_t(p));
    for (const auto& [g, vars] : members) {
      std::vector<int> sub;
      sub.reserve(vars.size());
      for (int j : vars) sub.push_back(digits[idx][std::size_t(j)]);
      std::sort(sub.begin(), sub.end());
      key.insert(key.end(), sub.begin(), sub.end());
    }
    auto [it, inserted] = id_of_key.try_emplace(key, int(classes.multiplicity.size()));
    if (inserted) classes.multiplicity.push_back(0);
    classes.class_of_cell[idx] = it->second;
    ++classes.multiplicity[std::size_t(it->second)];
  }
  return classes;
}

CoreTensor core_tensor_from_scores(const Eigen::MatrixXd& samples, int H,
                                   const std::vector<int>& var_groups) {
  if (samples.rows() == 0) throw ValidationError("score sample set is empty");
  const int p = int(var_groups.size());
  int num_groups = 0;
  for (int g : var_groups) {
    if (g < 0) throw ValidationError("group labels must be non-negative");
    num_groups = std::max(num_groups, g + 1);
  }
  if (samples.cols() != Eigen::Index(num_groups) * H) {
    throw ValidationError("score samples must have G*H columns");
  }
  for (Eigen::Index s = 0; s < samples.rows(); ++s) {
    for (int g = 0; g < num_groups; ++g) {
      const double total = samples.row(s).segment(Eigen::Index(g) * H, H).sum();
      if (std::fabs(total - 1.0) > 1e-6 ||
          (samples.row(s).segment(Eigen::Index(g) * H, H).array() < -1e-12).any()) {
        throw ValidationError("score samples must lie on the product simplex");
      }
    }
  }

  const SymmetryClasses classes = enumerate_classes(H, var_groups);
  std::vector<int> dims(std::size_t(p), H);
  const std::uint64_t cells = checked_cells(dims, kMaxTensorCells, "core tensor");
  const auto digits = digit_table(dims, cells);

  // One representative per class; members of a class share the same sample
  // product, so any representative is exact.
  std::vector<std::uint64_t> representative(std::size_t(classes.count()), 0);
  std::vector<bool> seen(std::size_t(classes.count()), false);
  for (std::uint64_t idx = 0; idx < cells; ++idx) {
    const int c = classes.class_of_cell[idx];
    if (!seen[std::size_t(c)]) {
      seen[std::size_t(c)] = true;
      representative[std::size_t(c)] = idx;
    }
  }

  std::vector<double> class_value(std::size_t(classes.count()), 0.0);
  for (int c = 0; c < classes.count(); ++c) {
    const auto& h = digits[representative[std::size_t(c)]];
    double acc = 0.0;
    for (Eigen::Index s = 0; s < samples.rows(); ++s) {
      double prod = 1.0;
      for (int j = 0; j < p; ++j) {
        prod *= samples(s, Eigen::Index(var_groups[std::size_t(j)]) * H + h[std::size_t(j)]);
      }
      acc += prod;
    }
    class_value[std::size_t(c)] = acc / double(samples.rows());
  }

  CoreTensor core;
  core.num_profiles = H;
  core.order = p;
  core.weights.resize(Eigen::Index(cells));
  for (std::uint64_t idx = 0; idx < cells; ++idx) {
    core.weights[Eigen::Index(idx)] = class_value[std::size_t(classes.class_of_cell[idx])];
  }
  const double total = core.weights.sum();
  if (!(total > 0.0)) throw NumericError("core tensor mass vanished");
  core.weights /= total;
  return core;
}

ProbabilityTensor joint_pmf(const CoreTensor& core, const KernelSet& kernels) {
  core.validate();
  kernels.validate();
  if (core.order != kernels.num_variables()) {
    throw ValidationError("core order must equal the number of variables");
  }
  if (core.num_profiles != kernels.num_profiles()) {
    throw ValidationError("core profile count must match the kernels");
  }
  ProbabilityTensor out;
  for (const auto& t : kernels.theta) out.dims.push_back(int(t.cols()));
  const std::uint64_t cells = checked_cells(out.dims, kMaxTensorCells, "joint pmf");
  const auto cell_digits = digit_table(out.dims, cells);

  const int p = core.order;
  std::vector<int> core_dims(std::size_t(p), core.num_profiles);
  const std::uint64_t hcells = core.cells();
  const auto h_digits = digit_table(core_dims, hcells);

  out.values = Eigen::VectorXd::Zero(Eigen::Index(cells));
  for (std::uint64_t hidx = 0; hidx < hcells; ++hidx) {
    const double w = core.weights[Eigen::Index(hidx)];
    if (w == 0.0) continue;
    const auto& h = h_digits[hidx];
    for (std::uint64_t x = 0; x < cells; ++x) {
      double prod = w;
      for (int j = 0; j < p; ++j) {
        prod *= kernels.theta[std::size_t(j)](h[std::size_t(j)],
                                              cell_digits[x][std::size_t(j)]);
      }
      out.values[Eigen::Index(x)] += prod;
    }
  }
  const double total = out.values.sum();
  if (!(total > 0.0)) throw NumericError("joint pmf mass vanished");
  out.values /= total;
  return out;
}

double frobenius_distance(const ProbabilityTensor& a, const ProbabilityTensor& b) {
  if (a.dims != b.dims) throw ValidationError("tensor dimensions differ");
  return (a.values - b.values).norm();
}

namespace {

// Alternating-minimization state shared by the fit starts.
struct FitWorkspace {
  int H = 0;
  int p = 0;
  std::vector<int> dims;
  std::uint64_t cells = 0;
  std::uint64_t hcells = 0;
  std::vector<std::vector<int>> cell_digits;
  std::vector<std::vector<int>> h_digits;
  SymmetryClasses classes;
  // Representatives grouped per class for the design matrix.
  std::vector<std::vector<std::uint64_t>> class_members;
};

struct FitState {
  Eigen::VectorXd u;            // class masses on the standard simplex
  std::vector<Eigen::MatrixXd> theta;
  Eigen::VectorXd pmf;          // cached model pmf
  double distance = 0.0;
};

Eigen::VectorXd expand_core_weights(const FitWorkspace& ws, const Eigen::VectorXd& u) {
  Eigen::VectorXd w(Eigen::Index(ws.hcells));
  for (std::uint64_t idx = 0; idx < ws.hcells; ++idx) {
    const int c = ws.classes.class_of_cell[idx];
    w[Eigen::Index(idx)] = u[c] / double(ws.classes.multiplicity[std::size_t(c)]);
  }
  return w;
}

void recompute_pmf(const FitWorkspace& ws, FitState& state, const Eigen::VectorXd& target) {
  const Eigen::VectorXd w = expand_core_weights(ws, state.u);
  state.pmf = Eigen::VectorXd::Zero(Eigen::Index(ws.cells));
  for (std::uint64_t hidx = 0; hidx < ws.hcells; ++hidx) {
    const double wv = w[Eigen::Index(hidx)];
    if (wv == 0.0) continue;
    for (std::uint64_t x = 0; x < ws.cells; ++x) {
      double prod = wv;
      for (int j = 0; j < ws.p; ++j) {
        prod *= state.theta[std::size_t(j)](ws.h_digits[hidx][std::size_t(j)],
                                            ws.cell_digits[x][std::size_t(j)]);
      }
      state.pmf[Eigen::Index(x)] += prod;
    }
  }
  state.distance = (state.pmf - target).norm();
}

// Exact equality-constrained step for the class masses: projected gradient on
// min ||M u - target||^2 over the simplex.
void core_step(const FitWorkspace& ws, FitState& state, const Eigen::VectorXd& target) {
  const int nc = ws.classes.count();
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(Eigen::Index(ws.cells), nc);
  for (std::uint64_t hidx = 0; hidx < ws.hcells; ++hidx) {
    const int c = ws.classes.class_of_cell[hidx];
    const double scale = 1.0 / double(ws.classes.multiplicity[std::size_t(c)]);
    for (std::uint64_t x = 0; x < ws.cells; ++x) {
      double prod = scale;
      for (int j = 0; j < ws.p; ++j) {
        prod *= state.theta[std::size_t(j)](ws.h_digits[hidx][std::size_t(j)],
                                            ws.cell_digits[x][std::size_t(j)]);
      }
      design(Eigen::Index(x), c) += prod;
    }
  }
  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * target;

  // Power iteration for a tight Lipschitz constant.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(nc) / std::sqrt(double(nc));
  double lipschitz = 1.0;
  for (int it = 0; it < 40; ++it) {
    v = gram * v;
    const double norm = v.norm();
    if (norm <= 0.0) break;
    lipschitz = norm;
    v /= norm;
  }
  const double step = 1.0 / std::max(lipschitz, 1e-12);
  for (int it = 0; it < 120; ++it) {
    Eigen::VectorXd next = state.u - step * (gram * state.u - rhs);
    project_to_simplex(next);
    if ((next - state.u).lpNorm<Eigen::Infinity>() < 1e-15) {
      state.u = next;
      break;
    }
    state.u = next;
  }
}

// Exact block minimization over one kernel row theta^{(j)}_h (disjoint x_j
// supports make the Hessian diagonal).
void kernel_step(const FitWorkspace& ws, FitState& state, const Eigen::VectorXd& target, int j,
                 int h) {
  const Eigen::VectorXd w = expand_core_weights(ws, state.u);
  Eigen::VectorXd slope = Eigen::VectorXd::Zero(Eigen::Index(ws.cells));
  for (std::uint64_t hidx = 0; hidx < ws.hcells; ++hidx) {
    if (ws.h_digits[hidx][std::size_t(j)] != h) continue;
    const double wv = w[Eigen::Index(hidx)];
    if (wv == 0.0) continue;
    for (std::uint64_t x = 0; x < ws.cells; ++x) {
      double prod = wv;
      for (int jj = 0; jj < ws.p; ++jj) {
        if (jj == j) continue;
        prod *= state.theta[std::size_t(jj)](ws.h_digits[hidx][std::size_t(jj)],
                                             ws.cell_digits[x][std::size_t(jj)]);
      }
      slope[Eigen::Index(x)] += prod;
    }
  }
  const int d = ws.dims[std::size_t(j)];
  Eigen::VectorXd quad = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(d);
  for (std::uint64_t x = 0; x < ws.cells; ++x) {
    const int k = ws.cell_digits[x][std::size_t(j)];
    const double base =
        state.pmf[Eigen::Index(x)] -
        state.theta[std::size_t(j)](h, k) * slope[Eigen::Index(x)];
    quad[k] += slope[Eigen::Index(x)] * slope[Eigen::Index(x)];
    lin[k] += slope[Eigen::Index(x)] * (target[Eigen::Index(x)] - base);
  }
  const Eigen::VectorXd updated = diagonal_simplex_qp(quad, lin);
  // Refresh the cached pmf with the new row.
  for (std::uint64_t x = 0; x < ws.cells; ++x) {
    const int k = ws.cell_digits[x][std::size_t(j)];
    state.pmf[Eigen::Index(x)] +=
        (updated[k] - state.theta[std::size_t(j)](h, k)) * slope[Eigen::Index(x)];
  }
  state.theta[std::size_t(j)].row(h) = updated.transpose();
}

}  // namespace

FitResult best_constrained_fit(const ProbabilityTensor& target, int H,
                               CoreConstraint constraint,
                               const std::vector<int>& var_groups,
                               const FitOptions& options) {
  target.validate();
  if (target.cells() > kMaxFitCells) {
    throw ValidationError("constrained fit is restricted to tiny tensors");
  }
  const int p = int(target.dims.size());
  if (H < 1) throw ValidationError("fit requires H >= 1");

  std::vector<int> labels;
  if (constraint == CoreConstraint::kSymmetric) {
    labels.assign(std::size_t(p), 0);
  } else {
    if (int(var_groups.size()) != p) {
      throw ValidationError("group labels must cover every variable");
    }
    labels = var_groups;
  }

  FitWorkspace ws;
  ws.H = H;
  ws.p = p;
  ws.dims = target.dims;
  ws.cells = target.cells();
  ws.cell_digits = digit_table(target.dims, ws.cells);
  std::vector<int> core_dims(std::size_t(p), H);
  ws.hcells = checked_cells(core_dims, kMaxTensorCells, "fit core");
  ws.h_digits = digit_table(core_dims, ws.hcells);
  ws.classes = enumerate_classes(H, labels);

  const int nc = ws.classes.count();
  FitState best;
  best.distance = std::numeric_limits<double>::infinity();
  bool best_exhausted = false;

  const int total_starts = std::max(options.starts, int(options.warm_starts.size()));
  for (int start = 0; start < total_starts; ++start) {
    FitState state;
    state.theta.assign(std::size_t(p), Eigen::MatrixXd());
    if (start < int(options.warm_starts.size())) {
      const FitSolution& warm = options.warm_starts[std::size_t(start)];
      if (warm.core.order != p || warm.core.num_profiles != H) {
        throw ValidationError("warm start does not match the fit dimensions");
      }
      // Project the warm core onto the constraint class by orbit averaging.
      Eigen::VectorXd sums = Eigen::VectorXd::Zero(nc);
      for (std::uint64_t idx = 0; idx < ws.hcells; ++idx) {
        sums[ws.classes.class_of_cell[idx]] += warm.core.weights[Eigen::Index(idx)];
      }
      state.u = sums;
      project_to_simplex(state.u);
      for (int j = 0; j < p; ++j) state.theta[std::size_t(j)] = warm.kernels.theta[std::size_t(j)];
    } else {
      RngStream rng(options.seed, 0x7E4450F17ull, std::uint64_t(start));
      state.u.resize(nc);
      Eigen::VectorXd ones = Eigen::VectorXd::Ones(nc);
      state.u = rng.dirichlet(ones);
      for (int j = 0; j < p; ++j) {
        Eigen::MatrixXd t(H, ws.dims[std::size_t(j)]);
        Eigen::VectorXd alpha = Eigen::VectorXd::Ones(ws.dims[std::size_t(j)]);
        for (int h = 0; h < H; ++h) t.row(h) = rng.dirichlet(alpha).transpose();
        state.theta[std::size_t(j)] = t;
      }
    }

    recompute_pmf(ws, state, target.values);
    bool converged = false;
    for (int sweep = 0; sweep < options.sweeps_per_start; ++sweep) {
      const double before = state.distance;
      core_step(ws, state, target.values);
      recompute_pmf(ws, state, target.values);
      for (int j = 0; j < p; ++j) {
        for (int h = 0; h < H; ++h) kernel_step(ws, state, target.values, j, h);
      }
      recompute_pmf(ws, state, target.values);
      if (before - state.distance < 1e-14) {
        converged = true;
        break;
      }
    }
    if (state.distance < best.distance) {
      best = state;
      best_exhausted = !converged;
    }
  }

  FitResult result;
  result.core.num_profiles = H;
  result.core.order = p;
  result.core.weights = expand_core_weights(ws, best.u);
  result.kernels.theta = best.theta;
  result.distance = best.distance;
  result.budget_exhausted = best_exhausted;
  return result;
}

}  // namespace mmm
