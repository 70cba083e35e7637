#include <cmath>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "mfvpinn/assembly.hpp"
#include "mfvpinn/driver.hpp"
#include "mfvpinn/estimator.hpp"
#include "mfvpinn/problems.hpp"

namespace {

using namespace mfvpinn;

bool report(const char* name, bool ok) {
  std::printf("%-34s %s\n", name, ok ? "pass" : "FAIL");
  return ok;
}

// Composite-rule exactness for all monomials of total degree <= q against
// closed-form rectangle integrals.
bool check_quadrature() {
  bool ok = true;
  for (int q = 2; q <= 5; ++q) {
    const ReferenceRules rules = reference_rules(q);
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
      Patch patch = trial == 0 ? Patch::square(0, {0.5, 0.5}, 1.0, 0)
                               : Patch::square(0,
                                               {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)},
                                               rng.uniform(0.1, 0.5), 0);
      const QuadratureRule rule = map_rule(rules.composite, patch);
      for (int a = 0; a + 0 <= q; ++a) {
        for (int b = 0; a + b <= q; ++b) {
          double num = 0.0;
          for (std::size_t l = 0; l < rule.size(); ++l)
            num += rule.weights[l] * std::pow(rule.nodes[l].x, a) * std::pow(rule.nodes[l].y, b);
          auto mono = [](double lo, double hi, int k) {
            return (std::pow(hi, k + 1) - std::pow(lo, k + 1)) / (k + 1);
          };
          const double exact = mono(patch.lo().x, patch.hi().x, a) *
                               mono(patch.lo().y, patch.hi().y, b);
          if (std::abs(num - exact) > 1e-12) ok = false;
        }
      }
    }
  }
  return ok;
}

bool check_gradients() {
  const NetworkParams params = init_params({2, 8, 8, 1}, 11);
  Rng rng(5);
  bool ok = true;
  // Spatial gradient against central differences.
  for (int trial = 0; trial < 20; ++trial) {
    const Vec2 x{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    double u;
    Vec2 g;
    forward_batch(params, std::span<const Vec2>(&x, 1), std::span<double>(&u, 1),
                  std::span<Vec2>(&g, 1));
    const double h = 1e-5;
    auto val = [&](Vec2 p) {
      double v;
      Vec2 gv;
      forward_batch(params, std::span<const Vec2>(&p, 1), std::span<double>(&v, 1),
                    std::span<Vec2>(&gv, 1));
      return v;
    };
    const double fdx = (val({x.x + h, x.y}) - val({x.x - h, x.y})) / (2 * h);
    const double fdy = (val({x.x, x.y + h}) - val({x.x, x.y - h})) / (2 * h);
    if (std::abs(fdx - g.x) > 1e-6 * std::max(1.0, std::abs(fdx))) ok = false;
    if (std::abs(fdy - g.y) > 1e-6 * std::max(1.0, std::abs(fdy))) ok = false;
  }
  // Parameter gradient of the training loss against central differences.
  ProblemSpec problem = poisson_singular();
  auto [p0, p1] = initial_covers();
  TensorSet tensors = build_tensors(p1, problem, 3);
  const LiftCache lift = cache_lift(problem.lift, tensors.nodes);
  LossOracle oracle(&tensors, &lift, {2, 8, 8, 1}, 1e-5);
  std::vector<double> theta = params.theta;
  std::vector<double> grad(theta.size());
  oracle.value_and_gradient(theta, grad);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t k = static_cast<std::size_t>(rng.uniform(0.0, 1.0) *
                                                   static_cast<double>(theta.size()));
    const double h = 1e-5;
    std::vector<double> tp = theta;
    tp[k] += h;
    const double fp = oracle.value(tp);
    tp[k] -= 2 * h;
    const double fm = oracle.value(tp);
    const double fd = (fp - fm) / (2 * h);
    if (std::abs(fd - grad[k]) > 1e-5 * std::max(1.0, std::abs(fd))) ok = false;
  }
  return ok;
}

// With the exact linear solution plugged in and f = 0 every estimator
// component must vanish.
bool check_estimator_vanishing() {
  ProblemSpec problem = poisson_singular();
  problem.f = [](Vec2) { return 0.0; };
  FieldEvalFn linear = [](std::span<const Vec2> pts, std::span<double> u, std::span<Vec2> g) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      u[i] = 0.3 * pts[i].x - 0.7 * pts[i].y + 0.1;
      g[i] = {0.3, -0.7};
    }
  };
  const Patch patch = Patch::square(0, {0.4, 0.6}, 0.5, 0);
  const PatchEstimatorContext ctx = build_estimator_context(patch, problem, 3);
  std::vector<Vec2> q_nodes;
  for (const auto& t : ctx.tris) q_nodes.insert(q_nodes.end(), t.q_nodes.begin(), t.q_nodes.end());
  std::vector<double> uq(q_nodes.size()), uf(ctx.fine_all.size());
  std::vector<Vec2> gq(q_nodes.size()), gf(ctx.fine_all.size());
  linear(q_nodes, uq, gq);
  linear(ctx.fine_all, uf, gf);
  const EstimatorBreakdown bd = patch_indicator(ctx, uq, gq, uf, gf, 0.0, 1.0);
  bool ok = bd.eta < 1e-12;
  for (double v : bd.eta_coef) ok = ok && v < 1e-12;
  for (double v : bd.eta_rhs) ok = ok && v < 1e-12;
  return ok && bd.eta_res < 1e-12;
}

bool check_marking() {
  Rng rng(3);
  bool ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform(0.0, 40.0));
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      scores[static_cast<std::size_t>(i)] = rng.uniform();
      ids[static_cast<std::size_t>(i)] = i;
    }
    const Marking m = select_tau(scores, ids, 0.75, 0.3);
    // Brute-force prefix scan.
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    double total = 0.0;
    for (double s : scores) total += s;
    int tt = n;
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      acc += scores[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
      if (acc / total >= 0.75) {
        tt = k + 1;
        break;
      }
    }
    const int tau = std::min(static_cast<int>(std::ceil(0.3 * n)), tt);
    if (m.tau_tilde != tt || m.tau != tau) ok = false;
  }
  return ok;
}

int run_check() {
  bool ok = true;
  ok &= report("quadrature exactness", check_quadrature());
  ok &= report("gradient fidelity", check_gradients());
  ok &= report("estimator vanishing", check_estimator_vanishing());
  ok &= report("marking oracle", check_marking());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive meshfree variational PINN solver for 2D elliptic problems"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run the adaptive training loop");
  std::string config_path;
  run_cmd->add_option("config", config_path, "JSON run configuration")->required();
  int strategy = -1, cm = -1;
  long long seed = -1;
  std::string problem, out_dir;
  run_cmd->add_option("--strategy", strategy, "Refinement strategy 1-4");
  run_cmd->add_option("--cm", cm, "Children per marked patch (4 or 9)");
  run_cmd->add_option("--seed", seed, "Random seed");
  run_cmd->add_option("--problem", problem, "poisson_singular | poisson_holes");
  run_cmd->add_option("--out", out_dir, "Output directory");

  auto* check_cmd = app.add_subcommand("check", "Run the built-in property checks");

  CLI11_PARSE(app, argc, argv);

  if (check_cmd->parsed()) return run_check();

  try {
    mfvpinn::RunConfig cfg = mfvpinn::load_config(config_path);
    if (strategy > 0) cfg.strategy = strategy;
    if (cm > 0) cfg.c_m = cm;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!problem.empty()) cfg.problem = problem;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    const mfvpinn::RunSummary s = mfvpinn::run(cfg);
    std::printf("generations: %zu\n", s.n_test_functions.size());
    for (std::size_t i = 0; i < s.n_test_functions.size(); ++i)
      std::printf("  gen %zu: n_test_functions=%d rel_h1_error=%.6e ES=%.6e\n", i,
                  s.n_test_functions[i], s.errors[i], s.es[i]);
    if (s.n_test_functions.size() >= 2)
      std::printf("convergence rate (log err vs log n): %.4f\n", s.rate);
    std::printf("artifacts written to %s\n", cfg.out_dir.c_str());
    return s.aborted ? 2 : 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
