#include "mfvpinn/driver.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mfvpinn/assembly.hpp"
#include "mfvpinn/estimator.hpp"
#include "mfvpinn/io.hpp"
#include "mfvpinn/problems.hpp"

namespace mfvpinn {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_config: cannot open " + path);
  json j = json::parse(f);
  RunConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("problem", c.problem);
  get("strategy", c.strategy);
  get("cm", c.c_m);
  get("max_generations", c.max_generations);
  get("seed", c.seed);
  get("layer_dims", c.layer_dims);
  get("q", c.q);
  get("c_h", c.c_h);
  get("lambda_reg", c.lambda_reg);
  get("adam_epochs", c.schedule.adam_epochs);
  get("adam_lr0", c.schedule.adam_lr0);
  get("adam_lr1", c.schedule.adam_lr1);
  get("lbfgs_memory", c.schedule.lbfgs_memory);
  get("lbfgs_max_epochs", c.schedule.lbfgs_max_epochs);
  get("n_check", c.schedule.n_check);
  get("patience", c.schedule.patience);
  get("negl_base", c.schedule.negl_base);
  get("a_ratio", c.refine.a_ratio);
  get("energy_fraction", c.refine.energy_fraction);
  get("cap_fraction", c.refine.cap_fraction);
  get("level_window", c.refine.level_window);
  get("strategy4_gamma_scaled", c.refine.strategy4_gamma_scaled);
  get("seeded_start", c.seeded_start);
  get("track_h1", c.track_h1);
  get("h1_ref_level", c.h1_ref_level);
  get("h1_track_level", c.h1_track_level);
  get("check_covers", c.check_covers);
  get("cover_check_grid", c.cover_check_grid);
  get("verbose", c.verbose);
  get("out", c.out_dir);
  return c;
}

double fit_rate(std::span<const int> n, std::span<const double> err) {
  if (n.size() != err.size() || n.size() < 2)
    throw std::invalid_argument("fit_rate: need at least two samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double x = std::log(static_cast<double>(n[i]));
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

namespace {

std::string join_ids(const std::vector<int>& ids) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) os << ';';
    os << ids[i];
  }
  return os.str();
}

void write_snapshot(const std::string& path, const Cover& cover,
                    const std::vector<EstimatorBreakdown>& breakdowns) {
  json arr = json::array();
  for (std::size_t i = 0; i < cover.patches.size(); ++i) {
    const Patch& p = cover.patches[i];
    json item;
    item["id"] = p.id;
    item["center"] = {p.center.x, p.center.y};
    item["half_widths"] = {p.half_widths.x, p.half_widths.y};
    item["level"] = p.level;
    item["gamma"] = p.gamma;
    item["eta_gamma"] = breakdowns[i].eta_gamma;
    arr.push_back(item);
  }
  std::ofstream f(path);
  f << arr.dump(1) << "\n";
}

}  // namespace

RunSummary run(const RunConfig& config) {
  if (config.strategy < 1 || config.strategy > 4)
    throw std::invalid_argument("run: strategy must be in 1..4");
  if (config.c_m != 4 && config.c_m != 9)
    throw std::invalid_argument("run: cm must be 4 or 9");
  if (config.max_generations < 1)
    throw std::invalid_argument("run: max_generations must be positive");

  ProblemSpec problem;
  if (config.problem == "poisson_singular")
    problem = poisson_singular();
  else if (config.problem == "poisson_holes")
    problem = poisson_holes();
  else
    throw std::invalid_argument("run: unknown problem '" + config.problem + "'");

  const int h1_level = config.h1_ref_level > 0 ? config.h1_ref_level
                       : (config.problem == "poisson_holes" ? 221 : 128);
  const bool seeded =
      config.seeded_start >= 0 ? config.seeded_start != 0 : config.strategy == 1;

  RefinementConfig refine_cfg = config.refine;
  refine_cfg.strategy = config.strategy;
  refine_cfg.c_m = config.c_m;

  fs::create_directories(config.out_dir);
  std::ofstream decay_csv(config.out_dir + "/error_decay.csv");
  decay_csv << "generation,n_test_functions,rel_h1_error\n";
  std::ofstream hist_csv(config.out_dir + "/training_history.csv");
  hist_csv << "generation,epoch,nn_eval_count,loss,es,h1_error\n";
  std::ofstream es_csv(config.out_dir + "/es_history.csv");
  es_csv << "generation,check_index,nn_eval_count,es\n";
  std::ofstream refine_csv(config.out_dir + "/refinement_log.csv");
  refine_csv << "generation,strategy,cover_size_before,cover_size_after,"
             << "marked_ids,spawned_ids,removed_ids\n";

  Rng rng(config.seed);
  NetworkParams params = init_params(config.layer_dims, config.seed);
  std::vector<double> theta = params.theta;

  auto [p0_raw, p1_raw] = initial_covers();
  Cover cover = cut_cover(p0_raw, problem.domain);
  p1_raw.next_id = std::max(p1_raw.next_id, cover.next_id);
  Cover seeded_cover = cut_cover(p1_raw, problem.domain);

  RunSummary summary;
  TensorSet tensors;
  EstimatorSet est;
  EarlyStopState stop_state;
  NetworkParams eval_params = params;

  for (int m = 0; m < config.max_generations; ++m) {
    try {
      cover.generation = m;
      update_tensors(tensors, cover, problem, config.q);
      update_estimator_set(est, cover, problem, config.q);
      const LiftCache lift_q = cache_lift(problem.lift, tensors.nodes);
      const LiftCache lift_f = cache_lift(problem.lift, est.fine_nodes);

      LossOracle oracle(&tensors, &lift_q, config.layer_dims, config.lambda_reg);
      LossGradOracle loss_grad = [&](std::span<const double> th, std::span<double> g) {
        return oracle.value_and_gradient(th, g);
      };

      std::vector<int> ids(cover.patches.size());
      for (std::size_t i = 0; i < cover.patches.size(); ++i) ids[i] = cover.patches[i].id;

      MetricHook es_hook = [&](std::span<const double> th) {
        eval_params.theta.assign(th.begin(), th.end());
        const auto breakdowns = compute_indicators(tensors, est, lift_q, lift_f, eval_params,
                                                   config.c_h);
        return global_indicator(breakdowns, ids);
      };
      MetricHook h1_hook;
      if (config.track_h1 && problem.exact) {
        h1_hook = [&](std::span<const double> th) {
          eval_params.theta.assign(th.begin(), th.end());
          return relative_h1_error(lifted_network_field(eval_params, problem.lift), problem,
                                   config.h1_track_level);
        };
      }

      GenerationResult gen = train_generation(m, theta, config.schedule, loss_grad, es_hook,
                                              h1_hook, stop_state);
      if (gen.aborted) summary.aborted = true;

      int check_index = 0;
      for (const EpochRecord& rec : gen.history) {
        hist_csv << rec.generation << ',' << rec.epoch << ',' << rec.nn_eval_count << ','
                 << format_double(rec.loss) << ',';
        if (!std::isnan(rec.es)) hist_csv << format_double(rec.es);
        hist_csv << ',';
        if (!std::isnan(rec.h1)) hist_csv << format_double(rec.h1);
        hist_csv << '\n';
        if (!std::isnan(rec.es))
          es_csv << rec.generation << ',' << check_index++ << ',' << rec.nn_eval_count << ','
                 << format_double(rec.es) << '\n';
        summary.history.push_back(rec);
      }

      // Final state of the generation at the restored parameters.
      params.theta = theta;
      const auto breakdowns =
          compute_indicators(tensors, est, lift_q, lift_f, params, config.c_h);
      const double es_final = global_indicator(breakdowns, ids);
      double h1_final = std::numeric_limits<double>::quiet_NaN();
      if (problem.exact)
        h1_final = relative_h1_error(lifted_network_field(params, problem.lift), problem, h1_level);

      summary.n_test_functions.push_back(static_cast<int>(cover.size()));
      summary.errors.push_back(h1_final);
      summary.es.push_back(es_final);
      decay_csv << m << ',' << cover.size() << ',' << format_double(h1_final) << '\n';
      decay_csv.flush();
      hist_csv.flush();
      es_csv.flush();
      write_snapshot(config.out_dir + "/patches_gen_" + std::to_string(m) + ".json", cover,
                     breakdowns);
      if (config.verbose)
        std::printf("[gen %d] n_test_functions=%zu epochs=%zu rel_h1=%.4e ES=%.4e%s\n", m,
                    cover.size(), gen.history.size(), h1_final, es_final,
                    gen.aborted ? " (aborted)" : "");

      if (gen.aborted) break;

      if (m + 1 < config.max_generations) {
        const std::size_t before = cover.size();
        if (m == 0 && seeded) {
          refine_csv << m << ",seeded," << before << ',' << seeded_cover.size() << ",,,\n";
          cover = seeded_cover;
        } else {
          std::vector<double> scores(cover.patches.size());
          if (config.strategy == 4) {
            oracle.value(theta);  // residuals at the restored parameters
            const auto& res = oracle.last().residuals;
            for (std::size_t i = 0; i < scores.size(); ++i) {
              const double r2 = res[i] * res[i];
              scores[i] = refine_cfg.strategy4_gamma_scaled
                              ? cover.patches[i].gamma * r2
                              : r2;
            }
          } else {
            for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = breakdowns[i].eta_gamma;
          }
          RefineResult rr = refine(cover, scores, problem.domain, refine_cfg, rng);
          refine_csv << m << ',' << config.strategy << ',' << before << ',' << rr.cover.size()
                     << ",\"" << join_ids(rr.marked_ids) << "\",\"" << join_ids(rr.spawned_ids)
                     << "\",\"" << join_ids(rr.removed_ids) << "\"\n";
          cover = rr.cover;
        }
        if (config.check_covers &&
            !cover_check(cover, problem.domain, config.cover_check_grid))
          summary.covers_ok = false;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("generation " + std::to_string(m) + ": " + e.what());
    }
  }

  save_checkpoint(config.out_dir + "/checkpoint.bin", params);

  if (summary.errors.size() >= 2 && problem.exact)
    summary.rate = fit_rate(summary.n_test_functions, summary.errors);

  json sj;
  sj["problem"] = config.problem;
  sj["strategy"] = config.strategy;
  sj["cm"] = config.c_m;
  sj["seed"] = config.seed;
  sj["generations"] = summary.n_test_functions.size();
  sj["n_test_functions"] = summary.n_test_functions;
  sj["errors"] = summary.errors;
  sj["es"] = summary.es;
  sj["rate"] = summary.rate;
  sj["covers_ok"] = summary.covers_ok;
  sj["aborted"] = summary.aborted;
  std::ofstream sf(config.out_dir + "/summary.json");
  sf << sj.dump(1) << "\n";

  return summary;
}

}  // namespace mfvpinn
