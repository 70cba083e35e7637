#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mfvpinn {

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }
};

/// Standard bias-corrected ADAM update. Throws on a non-finite gradient.
void adam_step(std::span<double> theta, std::span<const double> grad, AdamState& state,
               double lr);

/// Exponentially decaying learning rate running from lr0 at epoch 0 to lr1
/// at epoch total-1; strictly decreasing in between.
double adam_lr(int epoch, int total, double lr0, double lr1);

/// Loss/gradient oracle: fills grad and returns the loss.
using LossGradOracle = std::function<double(std::span<const double>, std::span<double>)>;

struct LbfgsHistory {
  int memory = 20;
  std::deque<std::vector<double>> s, y;
  std::deque<double> rho;

  void clear() {
    s.clear();
    y.clear();
    rho.clear();
  }
};

enum class LbfgsStatus { Ok, Converged, LineSearchFailed };

struct LbfgsStepResult {
  LbfgsStatus status = LbfgsStatus::Ok;
  double loss = 0.0;
  int evals = 0;  // oracle calls this step
};

/// One L-BFGS iteration: two-loop recursion direction, strong-Wolfe line
/// search (c1 = 1e-4, c2 = 0.9, at most 25 oracle evaluations), curvature
/// pairs with s.y <= 1e-12 |s||y| skipped. `fx` and `grad` must hold the
/// loss and gradient at theta on entry and are updated to the new point.
/// With an empty history the direction reduces to steepest descent.
LbfgsStepResult lbfgs_step(std::vector<double>& theta, double& fx, std::vector<double>& grad,
                           const LossGradOracle& oracle, LbfgsHistory& history,
                           long& eval_count);

struct TrainSchedule {
  int adam_epochs = 1000;  // generation 0 only
  double adam_lr0 = 1e-2;
  double adam_lr1 = 1e-4;
  int lbfgs_memory = 20;
  int lbfgs_max_epochs = 2000;
  int n_check = 10;
  int patience = 10;
  int negl_base = 100;  // N_negl(m) = negl_base * (m + 1)

  int n_negl(int generation) const { return negl_base * (generation + 1); }
};

struct EarlyStopState {
  double best_es = std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  int checks_since_best = 0;
  long nn_eval_count = 0;
  bool has_best = false;
};

struct EpochRecord {
  int generation = 0;
  int epoch = 0;
  long nn_eval_count = 0;
  double loss = 0.0;
  double es = std::numeric_limits<double>::quiet_NaN();
  double h1 = std::numeric_limits<double>::quiet_NaN();
};

struct GenerationResult {
  std::vector<EpochRecord> history;
  double final_loss = 0.0;
  bool aborted = false;
  std::string note;
};

/// Scalar metric evaluated at the current parameters (the global indicator,
/// or the true error when tracked).
using MetricHook = std::function<double(std::span<const double>)>;

/// Trains one adaptive generation: ADAM then L-BFGS for generation 0,
/// L-BFGS only afterwards. Every n_check epochs the indicator hook is
/// evaluated; after the first n_negl(m) epochs the best value and its
/// parameters are tracked, and training stops once `patience` consecutive
/// checks bring no improvement. On exit (stop, cap, or abort) the best
/// parameters seen are restored into theta. The h1 hook, when provided, is
/// evaluated at the same checkpoints purely for the history record.
GenerationResult train_generation(int generation, std::vector<double>& theta,
                                  const TrainSchedule& schedule, const LossGradOracle& oracle,
                                  const MetricHook& indicator_hook, const MetricHook& h1_hook,
                                  EarlyStopState& stop_state);

}  // namespace mfvpinn
