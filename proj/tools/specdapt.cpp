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

// specdapt command-line tool.
//
//   specdapt synth    --config C --out DIR
//   specdapt search   --config C --arch A --protocol P [--size S]
//   specdapt train    --config C --arch A --protocol P [--size S] --out CKPT
//   specdapt finetune --config C --arch A --pretrained CKPT --size S --out CKPT
//   specdapt trials   --config C [--results R]
//   specdapt report   --results R [--out DIR]
//   specdapt explain  --config C --model M [--model-b M2] --spectrum-index i
//
// Exit codes: 0 ok, 2 validation error, 3 corrupt file, 4 degenerate statistics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "specdapt/config.hpp"
#include "specdapt/core.hpp"
#include "specdapt/explain.hpp"
#include "specdapt/io.hpp"
#include "specdapt/models.hpp"
#include "specdapt/report.hpp"
#include "specdapt/spectra.hpp"
#include "specdapt/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace specdapt;

namespace {

void append_lines(const fs::path& path, const std::vector<json>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for appending");
  for (const auto& l : lines) out << l.dump() << "\n";
}

void stamp(json& j, const config::ExperimentConfig& c) {
  j["config_hash"] = c.config_hash;
  j["master_seed"] = c.master_seed();
}

// Accepts either a bare TrainConfig object or a `search` result ("best").
training::TrainConfig load_train_config(const std::string& path, training::TrainConfig base) {
  if (path.empty()) return base;
  json j = io::read_json(path);
  if (j.contains("best")) j = j.at("best");
  return training::train_config_from_json(j, base);
}

struct Checkpoint {
  models::ModelBundle model;
  std::vector<std::string> classes;
  json meta;
};

fs::path meta_path(const fs::path& ckpt) { return io::sidecar_path(ckpt); }
fs::path history_path(const fs::path& ckpt) { return fs::path(ckpt.string() + ".history.jsonl"); }

void save_checkpoint(const fs::path& path, const training::TrainResult& res,
                     const config::ExperimentConfig& c, const std::string& protocol,
                     std::size_t size, std::size_t trial, const training::TrainConfig& cfg) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_checkpoint(path, res.model.params);
  json meta = {{"format", "SPDW1"},
               {"arch", models::to_json(res.model.spec)},
               {"classes", c.scenario.isotopes},
               {"protocol", protocol},
               {"size", size},
               {"trial", trial},
               {"train_config", training::to_json(cfg)},
               {"best_epoch", res.best_epoch},
               {"best_val_loss", res.best_val_loss}};
  stamp(meta, c);
  io::write_text(meta_path(path), meta.dump(2) + "\n");
  std::ofstream hist(history_path(path), std::ios::trunc | std::ios::binary);
  for (const auto& e : res.history) {
    json line = training::to_json(e);
    stamp(line, c);
    hist << line.dump() << "\n";
  }
}

Checkpoint load_checkpoint(const fs::path& path) {
  Checkpoint ck;
  try {
    ck.meta = io::read_json(meta_path(path));
    ck.classes = ck.meta.at("classes").get<std::vector<std::string>>();
    const models::ArchSpec spec =
        models::arch_from_json(ck.meta.at("arch"), ck.classes.size(), ck.meta.at("arch").at("n_bins"));
    ck.model = models::with_params(spec, io::read_checkpoint(path));
  } catch (const json::exception& e) {
    throw CorruptFileError("checkpoint metadata for '" + path.string() + "' is malformed: " + e.what());
  }
  return ck;
}

void require_same_config(const json& meta, const config::ExperimentConfig& c,
                         const std::string& what) {
  const std::string h = meta.value("config_hash", std::string());
  if (h != c.config_hash)
    throw ValidationError(what + " was produced under config " + h + ", not " + c.config_hash);
}

int cmd_synth(const std::string& cfg_path, const std::string& out_dir) {
  const auto c = config::load_config(cfg_path);
  const auto sc = spectra::build_scenario(c.scenario);
  config::write_scenario(c, sc, out_dir);
  std::cout << "wrote 6 datasets to " << out_dir << " (scenario " << c.scenario_hash << ")\n";
  return 0;
}

training::TrainResult pretrain_for_trial(const config::ExperimentConfig& c,
                                         const models::ArchSpec& spec,
                                         const spectra::Scenario& sc, std::size_t trial,
                                         training::TrainConfig cfg) {
  cfg.seed = derive_seed(training::trial_seed(c.master_seed(), trial), "source");
  return training::train_from_scratch(spec, sc.source.train, sc.source.val, cfg);
}

int cmd_search(const std::string& cfg_path, const std::string& arch, const std::string& proto,
               std::size_t size, std::size_t trial, std::size_t budget_override,
               const std::string& pretrained, const std::string& out) {
  const auto c = config::load_config(cfg_path);
  const auto& spec = config::find_arch(c, arch);
  const auto protocol = training::protocol_from_string(proto);
  const auto sc = config::load_scenario(c);
  const std::size_t budget = budget_override ? budget_override : c.search_budget;
  const std::uint64_t seed =
      derive_seed(c.master_seed(), {fnv1a64("search"), fnv1a64(arch), fnv1a64(proto), size});

  spectra::LabeledDataset subset;
  if (protocol != training::Protocol::kSourceOnly) {
    subset = sc.target.train.subset(
        training::draw_subset(c.master_seed(), size, trial, sc.target.train.size()));
  }
  std::optional<models::ModelBundle> base_model;
  if (protocol == training::Protocol::kDomainAdapted) {
    if (!pretrained.empty()) {
      auto ck = load_checkpoint(pretrained);
      require_same_config(ck.meta, c, "pretrained checkpoint");
      base_model = std::move(ck.model);
    } else {
      base_model = pretrain_for_trial(c, spec, sc, trial, c.source_train).model;
    }
  }

  training::SearchSpace space;
  training::TrainConfig base;
  std::function<double(const training::TrainConfig&)> objective;
  switch (protocol) {
    case training::Protocol::kSourceOnly:
      space = training::SearchSpace::source();
      base = c.source_train;
      objective = [&](const training::TrainConfig& t) {
        return training::train_from_scratch(spec, sc.source.train, sc.source.val, t).best_val_loss;
      };
      break;
    case training::Protocol::kTargetOnly:
      space = training::SearchSpace::target();
      base = c.target_train;
      objective = [&](const training::TrainConfig& t) {
        return training::train_from_scratch(spec, subset, sc.target.val, t).best_val_loss;
      };
      break;
    case training::Protocol::kDomainAdapted:
      space = training::SearchSpace::finetune(base_model->layers.size());
      base = c.finetune_train;
      objective = [&](const training::TrainConfig& t) {
        return training::finetune(*base_model, subset, sc.target.val, t).best_val_loss;
      };
      break;
  }
  std::size_t done = 0;
  auto logged = [&](const training::TrainConfig& t) {
    const double v = objective(t);
    std::cerr << "search " << ++done << "/" << budget << ": val loss " << v << "\n";
    return v;
  };
  const auto res = training::random_search(space, budget, base, seed, logged);
  json j = {{"arch", arch},
            {"protocol", proto},
            {"size", size},
            {"best", training::to_json(res.best)},
            {"best_index", res.best_index},
            {"trials", json::array()}};
  for (const auto& t : res.trials)
    j["trials"].push_back({{"config", training::to_json(t.cfg)},
                           {"objective", std::isfinite(t.objective) ? json(t.objective) : json(nullptr)}});
  stamp(j, c);
  const fs::path dest = out.empty() ? c.output_dir / ("search_" + arch + "_" + proto + "_" +
                                                      std::to_string(size) + ".json")
                                    : fs::path(out);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  io::write_text(dest, j.dump(2) + "\n");
  std::cout << "best trial " << res.best_index << " written to " << dest.string() << "\n";
  return 0;
}

int cmd_train(const std::string& cfg_path, const std::string& arch, const std::string& proto,
              std::size_t size, std::size_t trial, const std::string& train_cfg,
              const std::string& out) {
  const auto c = config::load_config(cfg_path);
  const auto& spec = config::find_arch(c, arch);
  const auto protocol = training::protocol_from_string(proto);
  require(protocol != training::Protocol::kDomainAdapted, "use `finetune` for domain_adapted");
  const auto sc = config::load_scenario(c);
  const std::uint64_t tseed = training::trial_seed(c.master_seed(), trial);
  training::TrainResult res;
  training::TrainConfig cfg;
  if (protocol == training::Protocol::kSourceOnly) {
    cfg = load_train_config(train_cfg, c.source_train);
    cfg.seed = derive_seed(tseed, "source");
    res = training::train_from_scratch(spec, sc.source.train, sc.source.val, cfg);
  } else {
    cfg = load_train_config(train_cfg, c.target_train);
    cfg.seed = derive_seed(tseed, {fnv1a64("target"), size});
    const auto rows = training::draw_subset(c.master_seed(), size, trial, sc.target.train.size());
    res = training::train_from_scratch(spec, sc.target.train.subset(rows), sc.target.val, cfg);
  }
  save_checkpoint(out, res, c, proto, size, trial, cfg);
  std::cout << "best epoch " << res.best_epoch << " (val loss " << res.best_val_loss << ") -> "
            << out << "\n";
  return 0;
}

int cmd_finetune(const std::string& cfg_path, const std::string& arch,
                 const std::string& pretrained, std::size_t size, std::size_t trial,
                 const std::string& train_cfg, const std::string& out) {
  const auto c = config::load_config(cfg_path);
  const auto& spec = config::find_arch(c, arch);
  auto ck = load_checkpoint(pretrained);
  require_same_config(ck.meta, c, "pretrained checkpoint");
  require(ck.model.spec.kind == spec.kind, "pretrained checkpoint is not a " + arch);
  const auto sc = config::load_scenario(c);
  training::TrainConfig cfg = load_train_config(train_cfg, c.finetune_train);
  cfg.seed = derive_seed(training::trial_seed(c.master_seed(), trial), {fnv1a64("finetune"), size});
  const auto rows = training::draw_subset(c.master_seed(), size, trial, sc.target.train.size());
  const auto res = training::finetune(ck.model, sc.target.train.subset(rows), sc.target.val, cfg);
  save_checkpoint(out, res, c, "domain_adapted", size, trial, cfg);
  std::cout << "best epoch " << res.best_epoch << " (val loss " << res.best_val_loss << ") -> "
            << out << "\n";
  return 0;
}

int cmd_trials(const std::string& cfg_path, const std::string& results, std::size_t threads,
               const std::vector<std::string>& only_archs) {
  const auto c = config::load_config(cfg_path);
  const auto sc = config::load_scenario(c);
  const fs::path dest = results.empty() ? c.output_dir / "results.jsonl" : fs::path(results);
  for (const auto& spec : c.architectures) {
    const std::string name = models::to_string(spec.kind);
    if (!only_archs.empty() &&
        std::find(only_archs.begin(), only_archs.end(), name) == only_archs.end())
      continue;
    training::TrialPlan plan;
    plan.spec = spec;
    plan.source_cfg = c.source_train;
    plan.target_cfg = c.target_train;
    plan.finetune_cfg = c.finetune_train;
    plan.sizes = c.size_ladder;
    plan.n_trials = c.n_trials;
    plan.master_seed = c.master_seed();
    plan.config_hash = c.config_hash;
    plan.threads = threads;
    const auto recs = training::run_paired_trials(
        sc, plan, [&](const std::vector<training::TrialRecord>& rs) {
          std::cerr << name << " trial " << rs.front().trial << " done\n";
        });
    std::vector<json> lines;
    for (const auto& r : recs)
      if (std::find(c.protocols.begin(), c.protocols.end(), r.protocol) != c.protocols.end())
        lines.push_back(training::to_json(r));
    append_lines(dest, lines);
    std::cout << name << ": " << lines.size() << " records appended to " << dest.string() << "\n";
  }
  return 0;
}

int cmd_report(const std::string& results, const std::string& metric, double alpha,
               const std::string& out_dir) {
  const auto recs = report::parse_records(io::read_text(results));
  const auto out = report::build(recs, metric, alpha);
  std::cout << out.text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path d(out_dir);
    io::write_text(d / ("summary_" + metric + ".csv"), out.summary_csv);
    io::write_text(d / ("pvalues_" + metric + ".csv"), out.pvalues_csv);
    io::write_text(d / ("curves_" + metric + ".svg"), out.svg);
    io::write_text(d / ("rankings_" + metric + ".json"), out.letters.dump(2) + "\n");
    io::write_text(d / ("report_" + metric + ".txt"), out.text);
  }
  return 0;
}

int cmd_explain(const std::string& cfg_path, const std::string& model_a,
                const std::string& model_b, std::size_t index, const std::string& data,
                std::optional<std::size_t> cls, std::size_t groups, std::size_t coalitions,
                std::uint64_t seed, const std::string& out_prefix) {
  const auto c = config::load_config(cfg_path);
  auto a = load_checkpoint(model_a);
  std::optional<Checkpoint> b;
  if (!model_b.empty()) {
    b = load_checkpoint(model_b);
    if (b->classes != a.classes) throw ValidationError("the two models have different class lists");
  }
  spectra::LabeledDataset ds =
      data.empty() ? (c.data_dir.empty()
                          ? spectra::build_split(c.scenario, spectra::DomainTag::kTarget,
                                                 spectra::SplitTag::kTest, c.scenario.target_sizes.test)
                          : config::load_checked(c, config::dataset_file(c.data_dir,
                                                                         spectra::DomainTag::kTarget,
                                                                         spectra::SplitTag::kTest)))
                   : io::read_dataset(data).data;
  require(index < ds.size(), "spectrum index " + std::to_string(index) + " out of range (" +
                                 std::to_string(ds.size()) + " spectra)");
  if (ds.classes != a.classes) throw ValidationError("dataset classes do not match the model");
  const std::size_t k = cls ? *cls
                            : static_cast<std::size_t>(std::max_element(ds.labels[index].begin(),
                                                                        ds.labels[index].end()) -
                                                       ds.labels[index].begin());
  const spectra::Spectrum baseline = spectra::mean_background(c.scenario, spectra::DomainTag::kTarget);
  const explain::ShapConfig sc{groups, coalitions, seed};
  const auto ea = explain::kernel_shap(a.model, ds.spectra[index], baseline, sc, k);
  std::optional<explain::ShapExplanation> eb;
  if (b) eb = explain::kernel_shap(b->model, ds.spectra[index], baseline, sc, k);
  explain::ReportInput in;
  in.classes = a.classes;
  in.label_a = a.meta.value("protocol", std::string("model A"));
  if (b) in.label_b = b->meta.value("protocol", std::string("model B"));
  auto rep = explain::explain_report(ds.spectra[index], baseline, ea, eb, in);
  rep.json["spectrum_index"] = index;
  stamp(rep.json, c);
  const fs::path prefix = out_prefix.empty() ? c.output_dir / ("explain_" + std::to_string(index))
                                             : fs::path(out_prefix);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  io::write_text(prefix.string() + ".json", rep.json.dump(2) + "\n");
  io::write_text(prefix.string() + ".svg", rep.svg);
  std::cout << "class " << a.classes[k] << ": residual " << ea.residual << "; top groups";
  for (auto g : explain::top_groups(ea, 3))
    std::cout << " [" << ds.spectra[index].grid.lower_edge(ea.groups[g].first) << ", "
              << ds.spectra[index].grid.lower_edge(ea.groups[g].second) << ") keV";
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised domain adaptation for gamma-spectrum isotope identification"};
  app.require_subcommand(1);

  std::string cfg, out, arch, proto, results, pretrained, train_cfg, metric = "acc", model_a,
                                                                     model_b, data;
  std::size_t size = 64, trial = 0, budget = 0, threads = 0, index = 0, groups = 32,
              coalitions = 2048;
  std::uint64_t seed = 0;
  double alpha = 0.01;
  std::optional<std::size_t> cls;
  std::vector<std::string> only_archs;

  auto* synth = app.add_subcommand("synth", "generate the six datasets");
  synth->add_option("--config", cfg)->required();
  synth->add_option("--out", out)->required();

  auto* search = app.add_subcommand("search", "random hyperparameter search");
  search->add_option("--config", cfg)->required();
  search->add_option("--arch", arch)->required();
  search->add_option("--protocol", proto)->required();
  search->add_option("--size", size);
  search->add_option("--trial", trial);
  search->add_option("--budget", budget, "overrides search_budget");
  search->add_option("--pretrained", pretrained);
  search->add_option("--out", out);

  auto* train = app.add_subcommand("train", "train a source_only or target_only model");
  train->add_option("--config", cfg)->required();
  train->add_option("--arch", arch)->required();
  train->add_option("--protocol", proto)->required();
  train->add_option("--size", size);
  train->add_option("--trial", trial);
  train->add_option("--train-config", train_cfg);
  train->add_option("--out", out)->required();

  auto* finetune = app.add_subcommand("finetune", "fine-tune a pretrained model on target data");
  finetune->add_option("--config", cfg)->required();
  finetune->add_option("--arch", arch)->required();
  finetune->add_option("--pretrained", pretrained)->required();
  finetune->add_option("--size", size);
  finetune->add_option("--trial", trial);
  finetune->add_option("--train-config", train_cfg);
  finetune->add_option("--out", out)->required();

  auto* trials = app.add_subcommand("trials", "run paired trials over the size ladder");
  trials->add_option("--config", cfg)->required();
  trials->add_option("--results", results);
  trials->add_option("--threads", threads);
  trials->add_option("--arch", only_archs, "restrict to these architectures");

  auto* rep = app.add_subcommand("report", "summarize trial records");
  rep->add_option("--results", results)->required();
  rep->add_option("--metric", metric);
  rep->add_option("--alpha", alpha);
  rep->add_option("--out", out);

  auto* expl = app.add_subcommand("explain", "KernelSHAP explanation of one spectrum");
  expl->add_option("--config", cfg)->required();
  expl->add_option("--model", model_a)->required();
  expl->add_option("--model-b", model_b);
  expl->add_option("--spectrum-index", index)->required();
  expl->add_option("--data", data, "SPDA1 dataset (default: target test split)");
  expl->add_option("--class", cls);
  expl->add_option("--groups", groups);
  expl->add_option("--coalitions", coalitions);
  expl->add_option("--seed", seed);
  expl->add_option("--out", out, "output prefix for .json and .svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
  }

  try {
    if (*synth) return cmd_synth(cfg, out);
    if (*search) return cmd_search(cfg, arch, proto, size, trial, budget, pretrained, out);
    if (*train) return cmd_train(cfg, arch, proto, size, trial, train_cfg, out);
    if (*finetune) return cmd_finetune(cfg, arch, pretrained, size, trial, train_cfg, out);
    if (*trials) return cmd_trials(cfg, results, threads, only_archs);
    if (*rep) return cmd_report(results, metric, alpha, out);
    if (*expl)
      return cmd_explain(cfg, model_a, model_b, index, data, cls, groups, coalitions, seed, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
