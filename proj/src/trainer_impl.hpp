#pragma once

// Template bodies for the training loops; trainer.cpp instantiates them for
// float and double.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdiff/trainer.hpp"

namespace gdiff {

namespace trainer_detail {

// Stream ids forked off the run seed. Keeping them fixed makes every run a
// pure function of (config, data).
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kStepStreamBase = 16;

// Epoch-shuffled index stream over [0, n): every index appears once per
// epoch, reshuffling between epochs.
class EpochSampler {
 public:
  EpochSampler(int n, Rng rng) : rng_(rng), order_(std::size_t(n), 0) {
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }
  int next() {
    if (pos_ == order_.size()) {
      reshuffle();
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    for (int i = int(order_.size()) - 1; i > 0; --i)
      std::swap(order_[std::size_t(i)], order_[std::size_t(rng_.uniform_int(0, i))]);
  }
  Rng rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

template <typename T>
std::vector<GraphStateT<T>> encode_all(const std::vector<DiscreteGraph>& graphs,
                                       const DenoiserConfig& dcfg,
                                       const ScaleSpec& sc) {
  std::vector<GraphStateT<T>> states;
  states.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    try {
      states.push_back(encode<T>(graphs[i], sc, dcfg.n_max, dcfg.feat_dim));
    } catch (const std::exception& e) {
      throw std::invalid_argument("train: graph " + std::to_string(i) + ": " + e.what());
    }
  }
  return states;
}

template <typename T>
void accumulate_grads(TapeT<T>& tape, const ParamSetT<T>& params, double weight,
                      std::vector<std::vector<T>>& grads) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::vector<T>* g = tape.grad(params.tensor(p));
    if (!g) continue;
    std::vector<T>& acc = grads[p];
    for (std::size_t i = 0; i < g->size(); ++i) acc[i] += T(weight * double((*g)[i]));
  }
}

template <typename T>
void zero_grads(const ParamSetT<T>& params, std::vector<std::vector<T>>& grads) {
  grads.resize(params.size());
  for (std::size_t p = 0; p < params.size(); ++p)
    grads[p].assign(std::size_t(params.tensor(p).size()), T(0));
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("train: cannot create output directory '" + dir +
                             "': " + ec.message());
}

// Everything both training loops share: optimizer state, EMA, logging,
// checkpoints. `Model` only needs .params.
template <typename T, typename Model, typename StepFn>
TrainReport run_loop(Model& model, const TrainConfig& cfg, const std::string& out_dir,
                     const nlohmann::json& base_meta, StepFn&& step_fn) {
  ensure_dir(out_dir);
  ParamSetT<T> ema = model.params.clone();
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  std::vector<AdamStateT<T>> opt(model.params.size());
  std::vector<std::vector<T>> grads;

  std::ofstream tsv(out_dir + "/loss.tsv");
  if (!tsv) throw std::runtime_error("train: cannot write '" + out_dir + "/loss.tsv'");
  tsv << "step\tloss\twall_seconds\n";

  auto save = [&](std::int64_t step, double last_loss) {
    Checkpoint ck;
    ck.meta = base_meta;
    ck.meta["step"] = step;
    ck.meta["last_loss"] = last_loss;
    add_param_group(ck, "param", model.params);
    add_param_group(ck, "ema", ema);
    ParamSetT<T> am, av;
    for (std::size_t p = 0; p < model.params.size(); ++p) {
      const TensorT<T>& t = model.params.tensor(p);
      std::vector<T> m = opt[p].m.empty() ? std::vector<T>(std::size_t(t.size()), T(0))
                                          : opt[p].m;
      std::vector<T> v = opt[p].v.empty() ? std::vector<T>(std::size_t(t.size()), T(0))
                                          : opt[p].v;
      am.add(model.params.name(p), TensorT<T>::from(t.shape(), std::move(m)));
      av.add(model.params.name(p), TensorT<T>::from(t.shape(), std::move(v)));
    }
    add_param_group(ck, "adam_m", am);
    add_param_group(ck, "adam_v", av);
    std::string path = out_dir + "/step_" + std::to_string(step) + ".ckpt";
    save_checkpoint(path, ck);
    return path;
  };

  TrainReport rep;
  rep.final_checkpoint = save(0, 0.0);
  auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    double loss;
    try {
      loss = step_fn(step, grads);
      if (!std::isfinite(loss)) throw std::runtime_error("non-finite loss");
    } catch (const std::exception& e) {
      throw std::runtime_error("train: step " + std::to_string(step) + ": " + e.what());
    }
    for (std::size_t p = 0; p < model.params.size(); ++p) {
      opt[p].step = step;
      adam_update(model.params.tensor(p), grads[p], opt[p], acfg, model.params.name(p));
    }
    ema_update(model.params, ema, cfg.ema_decay);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    tsv << step << '\t' << loss << '\t' << wall << '\n';
    tsv.flush();
    if (step == 1) rep.first_loss = loss;
    rep.final_loss = loss;
    rep.steps = step;
    if (step % cfg.checkpoint_every == 0 || step == cfg.total_steps)
      rep.final_checkpoint = save(step, loss);
  }
  return rep;
}

}  // namespace trainer_detail

template <typename T>
NoiseDraw<T> draw_noise(const GraphStateT<T>& st, double t_floor, Rng& rng) {
  NoiseDraw<T> d;
  d.t = 1.0 - rng.uniform() * (1.0 - t_floor);  // (t_floor, 1]
  d.eps = noise_like(st, rng);
  return d;
}

template <typename T>
TensorT<T> graph_denoise_loss(const DenoiserT<T>& m, const NoiseSchedule& sched,
                              const GraphStateT<T>& clean, const NoiseDraw<T>& d,
                              const ScaleSpec& sc) {
  return denoise_loss_with(
      [&](const GraphStateT<T>& st, const DiscreteGraph& cond, double t) {
        return predict_noise(m, st, cond, t);
      },
      sched, clean, d, sc);
}

template <typename T>
TensorT<T> graph_property_loss(const PropertyNetT<T>& m, const NoiseSchedule& sched,
                               const GraphStateT<T>& clean, double label,
                               const NoiseDraw<T>& d) {
  GraphStateT<T> noisy;
  noisy.n = clean.n;
  noisy.X = perturb(sched, clean.X, d.t, d.eps.X);
  noisy.A = perturb(sched, clean.A, d.t, d.eps.A);
  PropertyOutT<T> out = predict_property(m, noisy, d.t);
  TensorT<T> target = TensorT<T>::from({1}, {T(label)});
  return sum_all(square(sub(out.value, target)));
}

template <typename T>
double batch_loss_grads(const DenoiserT<T>& m, const NoiseSchedule& sched,
                        const std::vector<GraphStateT<T>>& data,
                        const std::vector<int>& batch, double t_floor,
                        const ScaleSpec& sc, Rng& rng,
                        std::vector<std::vector<T>>& grads) {
  if (batch.empty()) throw std::invalid_argument("batch_loss_grads: empty batch");
  trainer_detail::zero_grads(m.params, grads);
  const double w = 1.0 / double(batch.size());
  double total = 0.0;
  for (int idx : batch) {
    const GraphStateT<T>& clean = data.at(std::size_t(idx));
    NoiseDraw<T> d = draw_noise(clean, t_floor, rng);
    TapeT<T> tape;
    TapeScopeT<T> scope(tape);
    TensorT<T> loss = graph_denoise_loss(m, sched, clean, d, sc);
    double lv = double(loss.item());
    if (!std::isfinite(lv))
      throw std::runtime_error("batch_loss_grads: non-finite graph loss");
    tape.backward(loss);
    trainer_detail::accumulate_grads(tape, m.params, w, grads);
    total += lv * w;
  }
  return total;
}

template <typename T>
double batch_property_loss_grads(const PropertyNetT<T>& m, const NoiseSchedule& sched,
                                 const std::vector<GraphStateT<T>>& data,
                                 const std::vector<double>& labels,
                                 const std::vector<int>& batch, double t_floor,
                                 Rng& rng, std::vector<std::vector<T>>& grads) {
  if (batch.empty()) throw std::invalid_argument("batch_property_loss_grads: empty batch");
  trainer_detail::zero_grads(m.params, grads);
  const double w = 1.0 / double(batch.size());
  double total = 0.0;
  for (int idx : batch) {
    const GraphStateT<T>& clean = data.at(std::size_t(idx));
    NoiseDraw<T> d = draw_noise(clean, t_floor, rng);
    TapeT<T> tape;
    TapeScopeT<T> scope(tape);
    TensorT<T> loss =
        graph_property_loss(m, sched, clean, labels.at(std::size_t(idx)), d);
    double lv = double(loss.item());
    if (!std::isfinite(lv))
      throw std::runtime_error("batch_property_loss_grads: non-finite graph loss");
    tape.backward(loss);
    trainer_detail::accumulate_grads(tape, m.params, w, grads);
    total += lv * w;
  }
  return total;
}

template <typename T>
void ema_update(const ParamSetT<T>& params, ParamSetT<T>& ema, double decay) {
  if (params.size() != ema.size())
    throw std::invalid_argument("ema_update: parameter count mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    const TensorT<T>& src = params.tensor(p);
    TensorT<T>& dst = ema.tensor(p);
    if (src.shape() != dst.shape())
      throw std::invalid_argument("ema_update: shape mismatch for '" +
                                  params.name(p) + "'");
    const T* s = src.data();
    T* d = dst.mutable_data();
    for (std::int64_t i = 0; i < src.size(); ++i)
      d[i] = T(decay * double(d[i]) + (1.0 - decay) * double(s[i]));
  }
}

template <typename T>
TrainReport train_denoiser(const DenoiserConfig& dcfg, const TrainConfig& cfg,
                           const NoiseSchedule& sched,
                           const std::vector<DiscreteGraph>& graphs,
                           const std::string& out_dir, const ScaleSpec& sc,
                           const nlohmann::json& extra_meta) {
  dcfg.validate();
  cfg.validate();
  if (graphs.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<GraphStateT<T>> data = trainer_detail::encode_all<T>(graphs, dcfg, sc);
  NodeCountHist hist;
  for (const DiscreteGraph& g : graphs) hist.add(g.n);

  Rng root(cfg.seed);
  Rng init_rng = root.fork(trainer_detail::kInitStream);
  DenoiserT<T> model = make_denoiser<T>(dcfg, init_rng);
  trainer_detail::EpochSampler sampler(int(data.size()),
                                       root.fork(trainer_detail::kShuffleStream));

  nlohmann::json meta;
  meta["kind"] = "denoiser";
  meta["seed"] = cfg.seed;
  meta["precision"] = cfg.precision;
  meta["denoiser"] = denoiser_config_json(dcfg);
  meta["schedule"] = schedule_json(sched);
  meta["scale"] = scale_spec_json(sc);
  meta["node_hist"] = node_hist_json(hist);
  meta["train"] = {{"batch_size", cfg.batch_size},   {"total_steps", cfg.total_steps},
                   {"lr", cfg.lr},                   {"ema_decay", cfg.ema_decay},
                   {"t_floor", cfg.t_floor},         {"checkpoint_every", cfg.checkpoint_every}};
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();

  return trainer_detail::run_loop<T>(
      model, cfg, out_dir, meta,
      [&](std::int64_t step, std::vector<std::vector<T>>& grads) {
        std::vector<int> batch(std::size_t(cfg.batch_size), 0);
        for (int& b : batch) b = sampler.next();
        Rng step_rng = root.fork(trainer_detail::kStepStreamBase + std::uint64_t(step));
        return batch_loss_grads(model, sched, data, batch, cfg.t_floor, sc, step_rng,
                                grads);
      });
}

template <typename T>
TrainReport train_property(const DenoiserConfig& dcfg, const TrainConfig& cfg,
                           const NoiseSchedule& sched,
                           const std::vector<DiscreteGraph>& graphs,
                           const std::vector<double>& labels,
                           const std::string& out_dir, const ScaleSpec& sc,
                           const nlohmann::json& extra_meta) {
  dcfg.validate();
  cfg.validate();
  if (graphs.empty()) throw std::invalid_argument("train: empty dataset");
  if (labels.size() != graphs.size())
    throw std::invalid_argument("train_property: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(graphs.size()) +
                                " graphs");
  std::vector<GraphStateT<T>> data = trainer_detail::encode_all<T>(graphs, dcfg, sc);
  NodeCountHist hist;
  for (const DiscreteGraph& g : graphs) hist.add(g.n);

  Rng root(cfg.seed);
  Rng init_rng = root.fork(trainer_detail::kInitStream);
  PropertyNetT<T> model = make_property_net<T>(dcfg, init_rng);
  trainer_detail::EpochSampler sampler(int(data.size()),
                                       root.fork(trainer_detail::kShuffleStream));

  nlohmann::json meta;
  meta["kind"] = "property";
  meta["seed"] = cfg.seed;
  meta["precision"] = cfg.precision;
  meta["denoiser"] = denoiser_config_json(dcfg);
  meta["schedule"] = schedule_json(sched);
  meta["scale"] = scale_spec_json(sc);
  meta["node_hist"] = node_hist_json(hist);
  meta["train"] = {{"batch_size", cfg.batch_size},   {"total_steps", cfg.total_steps},
                   {"lr", cfg.lr},                   {"ema_decay", cfg.ema_decay},
                   {"t_floor", cfg.t_floor},         {"checkpoint_every", cfg.checkpoint_every}};
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();

  return trainer_detail::run_loop<T>(
      model, cfg, out_dir, meta,
      [&](std::int64_t step, std::vector<std::vector<T>>& grads) {
        std::vector<int> batch(std::size_t(cfg.batch_size), 0);
        for (int& b : batch) b = sampler.next();
        Rng step_rng = root.fork(trainer_detail::kStepStreamBase + std::uint64_t(step));
        return batch_property_loss_grads(model, sched, data, labels, batch,
                                         cfg.t_floor, step_rng, grads);
      });
}

}  // namespace gdiff
