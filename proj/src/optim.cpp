#include "mfvpinn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfvpinn {

void adam_step(std::span<double> theta, std::span<const double> grad, AdamState& state,
               double lr) {
  if (theta.size() != grad.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.size() != theta.size()) state.reset(theta.size());
  for (double g : grad)
    if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double adam_lr(int epoch, int total, double lr0, double lr1) {
  if (total <= 1) return lr0;
  const double frac = static_cast<double>(epoch) / static_cast<double>(total - 1);
  return lr0 * std::pow(lr1 / lr0, frac);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double nrm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Two-loop recursion: d = -H g with the usual gamma = s.y / y.y scaling of
// the initial Hessian approximation.
void two_loop_direction(const LbfgsHistory& h, std::span<const double> grad,
                        std::vector<double>& d) {
  d.assign(grad.begin(), grad.end());
  const std::size_t m = h.s.size();
  std::vector<double> alpha(m);
  for (std::size_t k = m; k-- > 0;) {
    alpha[k] = h.rho[k] * dot(h.s[k], d);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= alpha[k] * h.y[k][i];
  }
  if (m > 0) {
    const double gamma = dot(h.s.back(), h.y.back()) / dot(h.y.back(), h.y.back());
    for (double& v : d) v *= gamma;
  }
  for (std::size_t k = 0; k < m; ++k) {
    const double beta = h.rho[k] * dot(h.y[k], d);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += (alpha[k] - beta) * h.s[k][i];
  }
  for (double& v : d) v = -v;
}

struct LinePoint {
  double alpha;
  double f;
  double df;  // directional derivative
};

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;
constexpr int kMaxLineEvals = 25;

}  // namespace

LbfgsStepResult lbfgs_step(std::vector<double>& theta, double& fx, std::vector<double>& grad,
                           const LossGradOracle& oracle, LbfgsHistory& history,
                           long& eval_count) {
  LbfgsStepResult result;
  const std::size_t n = theta.size();

  double xscale = 1.0;
  for (double v : theta) xscale = std::max(xscale, std::abs(v));
  if (nrm2(grad) <= 1e-14 * xscale) {
    result.status = LbfgsStatus::Converged;
    result.loss = fx;
    return result;
  }

  std::vector<double> d;
  two_loop_direction(history, grad, d);
  double dg0 = dot(d, grad);
  if (!(dg0 < 0.0)) {
    // Not a descent direction (stale curvature); restart from steepest descent.
    history.clear();
    for (std::size_t i = 0; i < n; ++i) d[i] = -grad[i];
    dg0 = dot(d, grad);
    if (!(dg0 < 0.0)) {
      result.status = LbfgsStatus::LineSearchFailed;
      result.loss = fx;
      return result;
    }
  }

  const double f0 = fx;
  std::vector<double> x0 = theta;
  std::vector<double> g_try(n);
  std::vector<double> g_best(n);

  // Best simple-decrease point seen, kept as a fallback acceptance when the
  // strong Wolfe pair cannot be bracketed within the evaluation budget.
  double f_dec = f0;
  double alpha_dec = 0.0;
  std::vector<double> g_dec;
  bool any_nonfinite = false;

  auto eval_at = [&](double alpha) -> LinePoint {
    for (std::size_t i = 0; i < n; ++i) theta[i] = x0[i] + alpha * d[i];
    const double f = oracle(theta, g_try);
    ++eval_count;
    ++result.evals;
    if (!std::isfinite(f))
      any_nonfinite = true;
    else if (f < f_dec) {
      f_dec = f;
      alpha_dec = alpha;
      g_dec = g_try;
    }
    return {alpha, f, dot(g_try, d)};
  };

  // Strong Wolfe line search: expanding bracket followed by a safeguarded
  // interpolating zoom.
  bool found = false;
  LinePoint best{0.0, f0, dg0};

  LinePoint prev{0.0, f0, dg0};
  double alpha = 1.0;
  double alpha_lo = 0.0, alpha_hi = 0.0;
  LinePoint lo = prev, hi = prev;
  bool bracketed = false;

  const double alpha_max = 1e4;
  for (int it = 0; it < kMaxLineEvals && !found; ++it) {
    LinePoint cur = eval_at(alpha);
    if (!std::isfinite(cur.f)) {
      // Step overshot into a non-finite region; shrink hard.
      alpha *= 0.25;
      continue;
    }
    if (cur.f > f0 + kC1 * alpha * dg0 || (it > 0 && cur.f >= prev.f)) {
      alpha_lo = prev.alpha;
      lo = prev;
      alpha_hi = cur.alpha;
      hi = cur;
      bracketed = true;
      break;
    }
    if (std::abs(cur.df) <= -kC2 * dg0) {
      best = cur;
      g_best = g_try;
      found = true;
      break;
    }
    if (cur.df >= 0.0) {
      alpha_lo = cur.alpha;
      lo = cur;
      alpha_hi = prev.alpha;
      hi = prev;
      bracketed = true;
      break;
    }
    prev = cur;
    alpha = std::min(2.0 * alpha, alpha_max);
  }

  if (!found && bracketed) {
    while (result.evals < kMaxLineEvals) {
      // Quadratic interpolation through (lo.f, lo.df, hi.f), safeguarded
      // into the middle 80% of the interval so the bracket keeps shrinking
      // geometrically; bisection when the model has no interior minimum.
      double mid = 0.5 * (alpha_lo + alpha_hi);
      {
        const double da = alpha_hi - alpha_lo;
        const double denom = 2.0 * (hi.f - lo.f - lo.df * da);
        const double a = std::min(alpha_lo, alpha_hi);
        const double b = std::max(alpha_lo, alpha_hi);
        const double guard = 0.1 * (b - a);
        if (std::isfinite(denom) && denom != 0.0) {
          const double cand = alpha_lo - lo.df * da * da / denom;
          if (std::isfinite(cand)) mid = std::min(std::max(cand, a + guard), b - guard);
        }
      }
      LinePoint cur = eval_at(mid);
      if (!std::isfinite(cur.f) || cur.f > f0 + kC1 * mid * dg0 || cur.f >= lo.f) {
        alpha_hi = mid;
        hi = cur;
      } else {
        if (std::abs(cur.df) <= -kC2 * dg0) {
          best = cur;
          g_best = g_try;
          found = true;
          break;
        }
        if (cur.df * (alpha_hi - alpha_lo) >= 0.0) {
          alpha_hi = alpha_lo;
          hi = lo;
        }
        alpha_lo = mid;
        lo = cur;
      }
      if (std::abs(alpha_hi - alpha_lo) < 1e-16 * std::max(1.0, std::abs(alpha_lo))) break;
    }
  }

  if (!found && alpha_dec > 0.0) {
    // Wolfe pair not bracketed in budget; take the best decrease point.
    for (std::size_t i = 0; i < n; ++i) theta[i] = x0[i] + alpha_dec * d[i];
    best = {alpha_dec, f_dec, 0.0};
    g_best = g_dec;
    found = true;
  }
  if (!found) {
    theta = x0;
    fx = f0;
    if (!any_nonfinite) {
      // Every probe was finite yet nothing decreased: the function is
      // numerically flat along this ray.
      result.status = LbfgsStatus::Converged;
      result.loss = f0;
      return result;
    }
    result.status = LbfgsStatus::LineSearchFailed;
    result.loss = f0;
    return result;
  }

  // Accepted point: update curvature history.
  std::vector<double> s(n), yv(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = theta[i] - x0[i];
    yv[i] = g_best[i] - grad[i];
  }
  const double sy = dot(s, yv);
  if (sy > 1e-12 * nrm2(s) * nrm2(yv)) {
    history.s.push_back(std::move(s));
    history.y.push_back(std::move(yv));
    history.rho.push_back(1.0 / sy);
    while (static_cast<int>(history.s.size()) > history.memory) {
      history.s.pop_front();
      history.y.pop_front();
      history.rho.pop_front();
    }
  }
  fx = best.f;
  grad = g_best;
  result.loss = best.f;
  return result;
}

GenerationResult train_generation(int generation, std::vector<double>& theta,
                                  const TrainSchedule& schedule, const LossGradOracle& oracle,
                                  const MetricHook& indicator_hook, const MetricHook& h1_hook,
                                  EarlyStopState& stop_state) {
  GenerationResult result;
  const std::size_t n = theta.size();
  std::vector<double> grad(n);

  stop_state.best_es = std::numeric_limits<double>::infinity();
  stop_state.best_params.clear();
  stop_state.checks_since_best = 0;
  stop_state.has_best = false;

  const int n_negl = schedule.n_negl(generation);
  int epoch = 0;
  bool stop = false;

  auto checkpoint = [&](double loss) {
    EpochRecord rec;
    rec.generation = generation;
    rec.epoch = epoch;
    rec.nn_eval_count = stop_state.nn_eval_count;
    rec.loss = loss;
    const bool check = (epoch + 1) % schedule.n_check == 0;
    if (check && indicator_hook) {
      const double es = indicator_hook(theta);
      rec.es = es;
      if (h1_hook) rec.h1 = h1_hook(theta);
      if (epoch + 1 > n_negl) {
        if (es < stop_state.best_es) {
          stop_state.best_es = es;
          stop_state.best_params = theta;
          stop_state.has_best = true;
          stop_state.checks_since_best = 0;
        } else {
          ++stop_state.checks_since_best;
          if (stop_state.checks_since_best >= schedule.patience) stop = true;
        }
      }
    }
    result.history.push_back(rec);
  };

  double fx = 0.0;

  if (generation == 0 && schedule.adam_epochs > 0) {
    AdamState adam;
    adam.reset(n);
    try {
      for (int e = 0; e < schedule.adam_epochs && !stop; ++e, ++epoch) {
        fx = oracle(theta, grad);
        ++stop_state.nn_eval_count;
        adam_step(theta, grad, adam, adam_lr(e, schedule.adam_epochs, schedule.adam_lr0,
                                             schedule.adam_lr1));
        checkpoint(fx);
      }
    } catch (const std::runtime_error& e) {
      result.aborted = true;
      result.note = e.what();
    }
  }

  if (!stop && !result.aborted) {
    LbfgsHistory history;
    history.memory = schedule.lbfgs_memory;
    fx = oracle(theta, grad);
    ++stop_state.nn_eval_count;
    int fallbacks = 0;
    std::vector<double> g_try(n);
    for (int e = 0; e < schedule.lbfgs_max_epochs && !stop; ++e, ++epoch) {
      LbfgsStepResult step = lbfgs_step(theta, fx, grad, oracle, history, stop_state.nn_eval_count);
      if (step.status == LbfgsStatus::Converged) {
        checkpoint(fx);
        break;
      }
      if (step.status == LbfgsStatus::LineSearchFailed) {
        ++fallbacks;
        if (fallbacks > 1) {
          result.aborted = true;
          result.note = "line search failed twice; generation aborted";
          break;
        }
        // Steepest-descent backtracking fallback.
        history.clear();
        const double f0 = fx;
        std::vector<double> x0 = theta;
        double alpha = 1.0;
        bool ok = false;
        for (int bt = 0; bt < 30; ++bt) {
          for (std::size_t i = 0; i < n; ++i) theta[i] = x0[i] - alpha * grad[i];
          const double f = oracle(theta, g_try);
          ++stop_state.nn_eval_count;
          if (std::isfinite(f) && f < f0) {
            fx = f;
            grad = g_try;
            ok = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!ok) {
          theta = x0;
          result.aborted = true;
          result.note = "steepest-descent fallback failed; generation aborted";
          break;
        }
      }
      checkpoint(fx);
    }
  }

  if (stop_state.has_best) theta = stop_state.best_params;
  result.final_loss = fx;
  return result;
}

}  // namespace mfvpinn
