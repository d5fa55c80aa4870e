#include "stpn/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "stpn/random.hpp"

namespace stpn {

std::vector<DiffusionTerm> model_supports(const ModelConfig& config, const MultiGraph& graph) {
  if (graph.relations.size() != config.relations) {
    throw std::invalid_argument("graph has " + std::to_string(graph.relations.size()) +
                                " relations, model config expects " +
                                std::to_string(config.relations));
  }
  return diffusion_supports(graph, config.order, config.include_identity);
}

ModelInput NormalizedWindow::input() const {
  return {&x, sample.covariates, sample.pos_in, sample.pos_out};
}

NormalizedWindow normalize_window(Sample sample, const ZScore& zscore) {
  NormalizedWindow w;
  w.x = zscore.normalize(sample.input, sample.input_mask);
  w.y = zscore.normalize(sample.target, sample.target_mask);
  w.sample = std::move(sample);
  return w;
}

double validation_rmse(const ModelConfig& config, const ad::ParamStore& params,
                       std::span<const DiffusionTerm> supports, const ZScore& zscore,
                       const WindowedDataset& windows) {
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto w = normalize_window(windows.sample(i), zscore);
    const Tensor3 pred = zscore.denormalize(predict(config, params, supports, w.input()));
    const auto pv = pred.values();
    const auto tv = w.sample.target.values();
    for (std::size_t k = 0; k < pv.size(); ++k)
      if (w.sample.target_mask.flat(k)) {
        sse += (pv[k] - tv[k]) * (pv[k] - tv[k]);
        ++count;
      }
  }
  return count ? std::sqrt(sse / static_cast<double>(count)) : std::numeric_limits<double>::quiet_NaN();
}

namespace {

nlohmann::json epoch_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"val_rmse", std::isfinite(e.val_rmse) ? nlohmann::json(e.val_rmse) : nlohmann::json(nullptr)},
          {"steps", e.steps},
          {"seconds", e.seconds}};
}

}  // namespace

TrainResult train(const ModelConfig& config, const Dataset& ds, const MultiGraph& graph,
                  const TrainOptions& opt) {
  config.validate();
  if (opt.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (ds.weather.categories.size() > config.weather_categories) {
    throw std::invalid_argument("train: dataset has " + std::to_string(ds.weather.categories.size()) +
                                " weather categories, model config allows " +
                                std::to_string(config.weather_categories));
  }
  const auto supports = model_supports(config, graph);
  const WindowOptions wopt{config.h, config.p, opt.stride};
  const auto train_w = ds.train_windows(wopt);
  const auto val_w = ds.val_windows(wopt);
  if (train_w.empty()) throw std::invalid_argument("train: the training segment yields no windows");

  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  ad::ParamStore params = init_params(config, opt.seed);
  ad::Adam adam(opt.adam);
  Rng rng(opt.seed ^ 0x5851f42d4c957f2dULL);

  TrainResult result;
  ad::ParamStore best = params;
  double best_val = val_w.empty() ? std::numeric_limits<double>::infinity()
                                  : validation_rmse(config, params, supports, ds.zscore, val_w);
  std::size_t best_epoch = 0, steps = 0;

  std::vector<std::size_t> order(train_w.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= opt.epochs && !result.aborted; ++epoch) {
    if (opt.time_budget_seconds > 0 && elapsed() >= opt.time_budget_seconds) break;
    if (opt.max_steps && steps >= opt.max_steps) break;
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += opt.batch_size) {
      if (opt.max_steps && steps >= opt.max_steps) break;
      const std::size_t e = std::min(order.size(), b + opt.batch_size);
      std::vector<NormalizedWindow> batch;
      batch.reserve(e - b);
      for (std::size_t i = b; i < e; ++i) batch.push_back(normalize_window(train_w.sample(order[i]), ds.zscore));

      ad::Tape tape;
      std::vector<ad::LossTerm> terms;
      for (const auto& w : batch) {
        auto fr = forward(tape, config, params, supports, w.input());
        terms.push_back({fr.output, &w.y, &w.sample.target_mask});
      }
      const auto loss = ad::masked_rmse(terms);
      if (loss.empty) continue;
      const double value = loss.loss.scalar();
      if (!std::isfinite(value)) {
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(steps + 1);
        break;
      }
      ad::assign_grads(params, tape.backward(loss.loss));
      try {
        adam.step(params);
      } catch (const ad::NonFiniteError& err) {
        result.aborted = true;
        result.abort_reason = err.what();
        break;
      }
      ++steps;
      loss_sum += value;
      ++batches;
      if (opt.on_step) opt.on_step(steps, params);
    }
    if (result.aborted) break;

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    log.steps = steps;
    log.val_rmse = val_w.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : validation_rmse(config, params, supports, ds.zscore, val_w);
    log.seconds = elapsed();
    result.history.push_back(log);
    const double score = val_w.empty() ? log.train_loss : log.val_rmse;
    if (std::isfinite(score) && (score < best_val || !std::isfinite(best_val))) {
      best_val = score;
      best = params;
      best_epoch = epoch;
    }
    if (opt.on_epoch) opt.on_epoch(epoch_json(log));
  }

  Checkpoint& ck = result.checkpoint;
  ck.config = config;
  ck.zscore = ds.zscore;
  ck.params = std::move(best);
  ck.optimizer = OptimizerState{adam.options(), adam.steps(), adam.moments()};
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : result.history) {
    auto j = epoch_json(e);
    j.erase("seconds");  // keeps checkpoints byte-stable across runs
    hist.push_back(std::move(j));
  }
  ck.training = {{"seed", opt.seed},
                 {"epochs_requested", opt.epochs},
                 {"epochs_run", result.history.size()},
                 {"steps", steps},
                 {"batch_size", opt.batch_size},
                 {"stride", opt.stride},
                 {"best_epoch", best_epoch},
                 {"best_val_rmse", std::isfinite(best_val) ? nlohmann::json(best_val) : nlohmann::json(nullptr)},
                 {"aborted", result.aborted},
                 {"history", hist}};
  if (result.aborted) ck.training["abort_reason"] = result.abort_reason;
  return result;
}

}  // namespace stpn
