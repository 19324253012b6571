/*
 * Copyright 2026 The specdapt Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Training protocols (source-only, target-only, domain-adapted), fine-tuning
// with layer freezing, paired trials and random hyperparameter search.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "specdapt/autodiff.hpp"
#include "specdapt/core.hpp"
#include "specdapt/metrics.hpp"
#include "specdapt/models.hpp"
#include "specdapt/spectra.hpp"

namespace specdapt::training {

enum class Protocol { kSourceOnly, kTargetOnly, kDomainAdapted };

inline std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::kSourceOnly: return "source_only";
    case Protocol::kTargetOnly: return "target_only";
    case Protocol::kDomainAdapted: return "domain_adapted";
  }
  return "?";
}

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "source_only") return Protocol::kSourceOnly;
  if (s == "target_only") return Protocol::kTargetOnly;
  if (s == "domain_adapted") return Protocol::kDomainAdapted;
  throw ValidationError("unknown protocol '" + s + "'");
}

struct FreezeDirective {
  enum class Mode { kNone, kFirst, kLast, kAll };
  Mode mode = Mode::kNone;
  std::size_t k = 0;

  static FreezeDirective none() { return {}; }
  static FreezeDirective first(std::size_t k) { return {Mode::kFirst, k}; }
  static FreezeDirective last(std::size_t k) { return {Mode::kLast, k}; }
  static FreezeDirective all() { return {Mode::kAll, 0}; }

  bool is_none() const { return mode == Mode::kNone; }
  bool operator==(const FreezeDirective&) const = default;

  // "none", "all", "first:K", "last:K".
  static FreezeDirective parse(const std::string& s) {
    if (s == "none") return none();
    if (s == "all") return all();
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
      const std::string head = s.substr(0, colon);
      std::size_t k = 0;
      try {
        std::size_t used = 0;
        const long long v = std::stoll(s.substr(colon + 1), &used);
        require(used == s.size() - colon - 1 && v >= 1, "");
        k = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw ValidationError("bad freeze directive '" + s + "'");
      }
      if (head == "first") return first(k);
      if (head == "last") return last(k);
    }
    throw ValidationError("bad freeze directive '" + s + "'");
  }

  std::string str() const {
    switch (mode) {
      case Mode::kNone: return "none";
      case Mode::kAll: return "all";
      case Mode::kFirst: return "first:" + std::to_string(k);
      case Mode::kLast: return "last:" + std::to_string(k);
    }
    return "none";
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  double weight_decay = 1e-4;
  std::optional<double> dropout;  // overrides the architecture's rate
  std::size_t max_epochs = 300;
  std::size_t patience = 20;
  FreezeDirective freeze;
  std::uint64_t seed = 0;

  void validate(bool finetuning) const {
    require(std::isfinite(learning_rate) && learning_rate >= 0.0,
            "learning rate must be finite and >= 0");
    require(batch_size >= 1, "batch size must be >= 1");
    require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight decay must be >= 0");
    require(!dropout || (*dropout >= 0.0 && *dropout < 1.0), "dropout must lie in [0, 1)");
    require(max_epochs >= 1, "max_epochs must be >= 1");
    require(finetuning || freeze.is_none(), "freeze directives only apply to fine-tuning");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                      {"weight_decay", c.weight_decay},   {"max_epochs", c.max_epochs},
                      {"patience", c.patience},           {"freeze", c.freeze.str()},
                      {"seed", c.seed}};
  j["dropout"] = c.dropout ? nlohmann::json(*c.dropout) : nlohmann::json(nullptr);
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  try {
    TrainConfig c = base;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    if (j.contains("freeze")) c.freeze = FreezeDirective::parse(j.at("freeze").get<std::string>());
    if (j.contains("dropout")) {
      if (j.at("dropout").is_null())
        c.dropout.reset();
      else
        c.dropout = j.at("dropout").get<double>();
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad train config: ") + e.what());
  }
}

// Adam with decoupled weight decay. Frozen parameters are skipped entirely.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ad::ParamStore& params) {
    auto& all = params.all();
    if (m_.empty()) {
      for (const auto& p : all) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      }
    }
    require(m_.size() == all.size(), "optimizer state does not match the parameters");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto& p = all[i];
      if (!p.trainable) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad.values[k];
        m[k] = b1_ * m[k] + (1.0 - b1_) * g;
        v[k] = b2_ * v[k] + (1.0 - b2_) * g * g;
        const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
        p.value.values[k] -= lr_ * (update + wd_ * p.value.values[k]);
      }
    }
  }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

inline nlohmann::json to_json(const EpochStats& e) {
  return {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}};
}

struct TrainResult {
  models::ModelBundle model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void check_compatible(const models::ModelBundle& m, const spectra::LabeledDataset& ds,
                             const char* what) {
  require(ds.classes.size() == m.spec.n_classes,
          std::string(what) + " class count does not match the model");
  for (const auto& s : ds.spectra)
    require(s.counts.size() == m.spec.n_bins,
            std::string(what) + " spectra do not match the model input width");
}

// Mean soft-label cross entropy in eval mode, with the usual probability floor.
inline double eval_loss(models::ModelBundle& m, const Matrix& x, const Matrix& y) {
  const Matrix probs = models::predict_proba(m, x);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    for (std::size_t j = 0; j < probs[i].size(); ++j)
      if (y[i][j] != 0.0) total -= y[i][j] * std::log(std::max(probs[i][j], metrics::kProbFloor));
  return total / static_cast<double>(probs.size());
}

inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace detail

// Trains `model` in place of a copy and returns the checkpoint with the lowest
// validation loss. Inputs are zscored here.
inline TrainResult train(models::ModelBundle model, const spectra::LabeledDataset& train_set,
                         const spectra::LabeledDataset& val_set, const TrainConfig& cfg,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate(true);
  require(train_set.size() > 0, "empty training set");
  require(val_set.size() > 0, "empty validation set");
  require(train_set.classes == val_set.classes, "training and validation classes differ");
  detail::check_compatible(model, train_set, "training set");
  detail::check_compatible(model, val_set, "validation set");
  if (cfg.dropout) model.spec.dropout = *cfg.dropout;

  const Matrix x_train = metrics::zscore_rows(train_set);
  const Matrix x_val = metrics::zscore_rows(val_set);
  const std::size_t n = train_set.size(), n_bins = model.spec.n_bins, M = model.spec.n_classes;
  const std::size_t batch = std::min(cfg.batch_size, n);

  Rng shuffle_rng = Rng(cfg.seed).substream("shuffle");
  Rng dropout_rng = Rng(cfg.seed).substream("dropout");
  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  ad::ParamStore best = model.params;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    detail::shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t b = std::min(batch, n - start);
      ad::Tensor x({b, n_bins}), y({b, M});
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t r = order[start + i];
        std::copy(x_train[r].begin(), x_train[r].end(), x.values.begin() + i * n_bins);
        std::copy(train_set.labels[r].begin(), train_set.labels[r].end(),
                  y.values.begin() + i * M);
      }
      model.params.zero_grad();
      double loss = 0.0;
      try {
        ad::Graph g;
        ad::Var logits = model.forward(g, g.input(std::move(x)), true, dropout_rng);
        loss = g.backward(g.cross_entropy(logits, y));
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             ", batch starting at row " + std::to_string(start) +
                             " (lr " + std::to_string(cfg.learning_rate) + ")");
      }
      loss_sum += loss * static_cast<double>(b);
      opt.step(model.params);
    }
    EpochStats st{epoch, loss_sum / static_cast<double>(n), 0.0};
    st.val_loss = detail::eval_loss(model, x_val, val_set.labels);
    if (!std::isfinite(st.val_loss))
      throw NonFiniteError("non-finite validation loss at epoch " + std::to_string(epoch));
    res.history.push_back(st);
    if (on_epoch) on_epoch(st);
    if (st.val_loss < res.best_val_loss) {
      res.best_val_loss = st.val_loss;
      res.best_epoch = epoch;
      best = model.params;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }
  model.params = std::move(best);
  model.params.zero_grad();
  res.model = std::move(model);
  return res;
}

// Fresh model from `spec`, initialised from cfg.seed, then trained.
inline TrainResult train_from_scratch(const models::ArchSpec& spec,
                                      const spectra::LabeledDataset& train_set,
                                      const spectra::LabeledDataset& val_set,
                                      const TrainConfig& cfg) {
  require(cfg.freeze.is_none(), "freeze directives only apply to fine-tuning");
  Rng init = Rng(cfg.seed).substream("init");
  return train(models::build(spec, init), train_set, val_set, cfg);
}

// Marks parameters trainable per the directive over the model's ordered layers.
inline void apply_freeze(models::ModelBundle& m, const FreezeDirective& f) {
  const std::size_t L = m.layers.size();
  if (f.mode == FreezeDirective::Mode::kFirst || f.mode == FreezeDirective::Mode::kLast) {
    require(f.k >= 1, "freeze count must be >= 1");
    require(f.k < L, "cannot freeze " + std::to_string(f.k) + " of " + std::to_string(L) +
                         " layers; use 'all' to freeze everything");
  }
  for (std::size_t i = 0; i < L; ++i) {
    bool frozen = false;
    switch (f.mode) {
      case FreezeDirective::Mode::kNone: break;
      case FreezeDirective::Mode::kAll: frozen = true; break;
      case FreezeDirective::Mode::kFirst: frozen = i < f.k; break;
      case FreezeDirective::Mode::kLast: frozen = i >= L - f.k; break;
    }
    m.set_layer_trainable(m.layers[i], !frozen);
  }
}

inline TrainResult finetune(const models::ModelBundle& pretrained,
                            const spectra::LabeledDataset& target_subset,
                            const spectra::LabeledDataset& val_set, const TrainConfig& cfg) {
  models::ModelBundle m = pretrained;
  apply_freeze(m, cfg.freeze);
  return train(std::move(m), target_subset, val_set, cfg);
}

// ---- paired trials --------------------------------------------------------

struct TrialRecord {
  Protocol protocol = Protocol::kSourceOnly;
  std::string arch;
  std::size_t size = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  nlohmann::json metrics = nlohmann::json::object();
  std::string subset_fingerprint;  // empty for source_only
  std::size_t n_test = 0;
  std::string config_hash;
  std::uint64_t master_seed = 0;
};

inline nlohmann::json to_json(const TrialRecord& r) {
  return {{"protocol", to_string(r.protocol)},
          {"arch", r.arch},
          {"size", r.size},
          {"trial", r.trial},
          {"seed", r.seed},
          {"metrics", r.metrics},
          {"subset_fingerprint", r.subset_fingerprint},
          {"n_test", r.n_test},
          {"config_hash", r.config_hash},
          {"master_seed", r.master_seed}};
}

inline TrialRecord trial_record_from_json(const nlohmann::json& j) {
  try {
    TrialRecord r;
    r.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    r.arch = j.at("arch").get<std::string>();
    r.size = j.at("size").get<std::size_t>();
    r.trial = j.at("trial").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.metrics = j.at("metrics");
    r.subset_fingerprint = j.value("subset_fingerprint", std::string());
    r.n_test = j.value("n_test", std::size_t{0});
    r.config_hash = j.at("config_hash").get<std::string>();
    r.master_seed = j.at("master_seed").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("malformed trial record: ") + e.what());
  }
}

struct TrialPlan {
  models::ArchSpec spec;
  TrainConfig source_cfg;
  TrainConfig target_cfg;
  TrainConfig finetune_cfg;
  std::vector<std::size_t> sizes;
  std::size_t n_trials = 10;
  std::uint64_t master_seed = 0;
  std::string config_hash;
  bool full_diagnostics = true;  // false: acc and ape only
  std::size_t threads = 0;       // 0: SPECDAPT_THREADS or hardware concurrency
};

inline std::uint64_t trial_seed(std::uint64_t master, std::size_t trial) {
  return derive_seed(master, {fnv1a64("trial"), trial});
}

// Deterministic subset of `size` rows out of `pool`, fixed by (master, size, trial).
inline std::vector<std::size_t> draw_subset(std::uint64_t master, std::size_t size,
                                            std::size_t trial, std::size_t pool) {
  require(size >= 1 && size <= pool, "subset size " + std::to_string(size) +
                                         " exceeds the target training split of " +
                                         std::to_string(pool));
  Rng rng(derive_seed(master, {fnv1a64("subset"), size, trial}));
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < size; ++i) std::swap(idx[i], idx[i + rng.index(pool - i)]);
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::string subset_fingerprint(const std::vector<std::size_t>& rows) {
  std::uint64_t h = fnv1a64("");
  for (auto r : rows) {
    const auto v = static_cast<std::uint64_t>(r);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
  }
  return hex64(h);
}

inline nlohmann::json evaluate(models::ModelBundle& m, const spectra::LabeledDataset& test,
                               bool full) {
  const Matrix x = metrics::zscore_rows(test);
  const auto p = metrics::PredictionSet::from(models::infer(m, x), test.labels);
  nlohmann::json j;
  if (full && p.one_hot()) {
    j = metrics::to_json(metrics::diagnostics(m, test));
  } else if (p.one_hot()) {
    j["acc"] = metrics::accuracy(p);
  }
  j["ape"] = metrics::ape_score(p.probs, p.labels);
  return j;
}

inline std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested;
  if (n == 0) {
    n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SPECDAPT_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v >= 1) n = std::min(n, static_cast<std::size_t>(v));
    }
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// Runs `jobs` independent tasks across worker threads; the first exception is
// rethrown after all workers stop.
inline void parallel_for(std::size_t jobs, std::size_t workers,
                         const std::function<void(std::size_t)>& fn) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; !failed && (i = next++) < jobs;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// For every trial: pretrain on the source domain, then for every size draw one
// target subset, train target_only on it and fine-tune the pretrained model on
// the same rows. All three are scored on the target test split. Records come
// back ordered by (trial, size, protocol) regardless of thread count.
inline std::vector<TrialRecord> run_paired_trials(
    const spectra::Scenario& sc, const TrialPlan& plan,
    const std::function<void(const std::vector<TrialRecord>&)>& on_trial = {}) {
  require(plan.n_trials >= 1, "n_trials must be >= 1");
  require(!plan.sizes.empty(), "size ladder is empty");
  for (auto s : plan.sizes) draw_subset(plan.master_seed, s, 0, sc.target.train.size());
  plan.spec.validate();

  std::vector<std::vector<TrialRecord>> per_trial(plan.n_trials);
  std::mutex cb_mu;
  const std::string arch = models::to_string(plan.spec.kind);
  const std::size_t n_test = sc.target.test.size();

  auto run_trial = [&](std::size_t t) {
    const std::uint64_t seed = trial_seed(plan.master_seed, t);
    auto record = [&](Protocol p, std::size_t size, nlohmann::json m, std::string fp) {
      TrialRecord r;
      r.protocol = p;
      r.arch = arch;
      r.size = size;
      r.trial = t;
      r.seed = seed;
      r.metrics = std::move(m);
      r.subset_fingerprint = std::move(fp);
      r.n_test = n_test;
      r.config_hash = plan.config_hash;
      r.master_seed = plan.master_seed;
      return r;
    };

    TrainConfig src_cfg = plan.source_cfg;
    src_cfg.seed = derive_seed(seed, "source");
    TrainResult src = train_from_scratch(plan.spec, sc.source.train, sc.source.val, src_cfg);
    const nlohmann::json src_metrics = evaluate(src.model, sc.target.test, plan.full_diagnostics);

    std::vector<TrialRecord> out;
    for (std::size_t size : plan.sizes) {
      const auto rows = draw_subset(plan.master_seed, size, t, sc.target.train.size());
      const std::string fp = subset_fingerprint(rows);
      const spectra::LabeledDataset subset = sc.target.train.subset(rows);

      TrainConfig tgt_cfg = plan.target_cfg;
      tgt_cfg.seed = derive_seed(seed, {fnv1a64("target"), size});
      TrainResult tgt = train_from_scratch(plan.spec, subset, sc.target.val, tgt_cfg);

      TrainConfig ft_cfg = plan.finetune_cfg;
      ft_cfg.seed = derive_seed(seed, {fnv1a64("finetune"), size});
      TrainResult ft = finetune(src.model, subset, sc.target.val, ft_cfg);

      out.push_back(record(Protocol::kSourceOnly, size, src_metrics, ""));
      out.push_back(record(Protocol::kTargetOnly, size,
                           evaluate(tgt.model, sc.target.test, plan.full_diagnostics), fp));
      out.push_back(record(Protocol::kDomainAdapted, size,
                           evaluate(ft.model, sc.target.test, plan.full_diagnostics), fp));
    }
    if (on_trial) {
      std::lock_guard<std::mutex> lock(cb_mu);
      on_trial(out);
    }
    per_trial[t] = std::move(out);
  };

  parallel_for(plan.n_trials, worker_count(plan.threads, plan.n_trials), run_trial);
  std::vector<TrialRecord> all;
  for (auto& v : per_trial)
    for (auto& r : v) all.push_back(std::move(r));
  return all;
}

// ---- random search ----------------------------------------------------------

struct SearchSpace {
  double lr_lo = 1e-6, lr_hi = 1e-3;
  std::vector<std::size_t> batch_sizes{32, 64, 128, 256, 512};
  double wd_lo = 1e-7, wd_hi = 1e-1;
  double dropout_lo = 0.0, dropout_hi = 0.4;
  std::vector<FreezeDirective> freeze_options{FreezeDirective::none()};

  // Source-domain pretraining ranges.
  static SearchSpace source() {
    SearchSpace s;
    s.lr_lo = 1e-5;
    s.lr_hi = 2e-3;
    return s;
  }
  // Target-only training ranges.
  static SearchSpace target() { return {}; }
  // Fine-tuning ranges plus which leading or trailing layers to freeze.
  static SearchSpace finetune(std::size_t layer_count) {
    SearchSpace s;
    for (std::size_t k = 1; k < layer_count && k <= 3; ++k) {
      s.freeze_options.push_back(FreezeDirective::first(k));
      s.freeze_options.push_back(FreezeDirective::last(k));
    }
    return s;
  }

  TrainConfig sample(const TrainConfig& base, Rng& rng) const {
    TrainConfig c = base;
    c.learning_rate = std::exp(rng.uniform(std::log(lr_lo), std::log(lr_hi)));
    c.batch_size = batch_sizes[rng.index(batch_sizes.size())];
    c.weight_decay = std::exp(rng.uniform(std::log(wd_lo), std::log(wd_hi)));
    c.dropout = rng.uniform(dropout_lo, dropout_hi);
    c.freeze = freeze_options[rng.index(freeze_options.size())];
    c.learning_rate = std::clamp(c.learning_rate, lr_lo, lr_hi);
    c.weight_decay = std::clamp(c.weight_decay, wd_lo, wd_hi);
    return c;
  }
};

struct SearchTrial {
  TrainConfig cfg;
  double objective = 0.0;
};

struct SearchResult {
  TrainConfig best;
  std::size_t best_index = 0;
  std::vector<SearchTrial> trials;
};

// Samples `budget` configs and keeps the lowest objective (validation loss).
// Objectives that throw NonFiniteError or return a non-finite value count as
// diverged.
inline SearchResult random_search(const SearchSpace& space, std::size_t budget,
                                  const TrainConfig& base, std::uint64_t seed,
                                  const std::function<double(const TrainConfig&)>& objective) {
  require(budget >= 1, "search budget must be >= 1");
  require(!space.batch_sizes.empty() && !space.freeze_options.empty(),
          "search space has an empty categorical set");
  require(space.lr_lo > 0.0 && space.lr_lo <= space.lr_hi, "bad learning-rate range");
  require(space.wd_lo > 0.0 && space.wd_lo <= space.wd_hi, "bad weight-decay range");
  Rng rng = Rng(seed).substream("search");
  SearchResult res;
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < budget; ++i) {
    SearchTrial t{space.sample(base, rng), std::numeric_limits<double>::infinity()};
    t.cfg.seed = derive_seed(seed, {fnv1a64("search-trial"), i});
    try {
      t.objective = objective(t.cfg);
    } catch (const NonFiniteError&) {
      t.objective = std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(t.objective)) t.objective = std::numeric_limits<double>::infinity();
    if (std::isfinite(t.objective) && t.objective < best) {
      best = t.objective;
      res.best = t.cfg;
      res.best_index = i;
      any = true;
    }
    res.trials.push_back(t);
  }
  if (!any) throw ValidationError("no finite trial");
  return res;
}

}  // namespace specdapt::training
