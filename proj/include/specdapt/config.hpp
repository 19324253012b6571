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

// Experiment configuration files. Everything an experiment depends on lives
// in one JSON document; its canonical dump is hashed and the hash is stamped
// on every artifact.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "specdapt/core.hpp"
#include "specdapt/io.hpp"
#include "specdapt/models.hpp"
#include "specdapt/spectra.hpp"
#include "specdapt/training.hpp"

namespace specdapt::config {

struct ExperimentConfig {
  spectra::ScenarioConfig scenario;
  std::vector<models::ArchSpec> architectures;
  std::vector<training::Protocol> protocols;
  std::vector<std::size_t> size_ladder;
  std::size_t n_trials = 10;
  std::size_t search_budget = 25;
  training::TrainConfig source_train;
  training::TrainConfig target_train;
  training::TrainConfig finetune_train;
  std::filesystem::path output_dir = "specdapt_out";
  std::filesystem::path data_dir;  // optional: load datasets written by `synth`
  std::string config_hash;         // hash of the experiment-defining content
  std::string scenario_hash;       // hash of the scenario section and seed

  std::uint64_t master_seed() const { return scenario.master_seed; }
  std::size_t n_classes() const { return scenario.isotopes.size(); }
};

namespace detail {

inline spectra::DetectorModel detector_from_json(const nlohmann::json& j,
                                                 spectra::DetectorModel d = {}) {
  d.fwhm_a = j.value("fwhm_a", d.fwhm_a);
  d.fwhm_b = j.value("fwhm_b", d.fwhm_b);
  d.fwhm_c = j.value("fwhm_c", d.fwhm_c);
  d.gain = j.value("gain", d.gain);
  d.offset = j.value("offset", d.offset);
  d.compton_fraction = j.value("compton_fraction", d.compton_fraction);
  d.low_energy_cutoff = j.value("low_energy_cutoff", d.low_energy_cutoff);
  return d;
}

inline nlohmann::json to_json(const spectra::DetectorModel& d) {
  return {{"fwhm_a", d.fwhm_a},   {"fwhm_b", d.fwhm_b},
          {"fwhm_c", d.fwhm_c},   {"gain", d.gain},
          {"offset", d.offset},   {"compton_fraction", d.compton_fraction},
          {"low_energy_cutoff", d.low_energy_cutoff}};
}

inline spectra::Range range_from_json(const nlohmann::json& j, spectra::Range r) {
  if (j.is_number()) return {j.get<double>(), j.get<double>()};
  const auto v = j.get<std::vector<double>>();
  require(v.size() == 2 && v[0] <= v[1], "ranges are [lo, hi] with lo <= hi");
  r.lo = v[0];
  r.hi = v[1];
  return r;
}

inline spectra::SplitSizes sizes_from_json(const nlohmann::json& j, spectra::SplitSizes s) {
  s.train = j.value("train", s.train);
  s.val = j.value("val", s.val);
  s.test = j.value("test", s.test);
  return s;
}

inline nlohmann::json to_json(const spectra::SplitSizes& s) {
  return {{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

}  // namespace detail

// Fully resolved scenario section (defaults filled in); the basis of hashing.
inline nlohmann::json scenario_to_json(const spectra::ScenarioConfig& s) {
  return {{"isotopes", s.isotopes},
          {"grid", {{"n_bins", s.grid.n_bins}, {"e_min", s.grid.e_min}, {"e_max", s.grid.e_max}}},
          {"source_detector", detail::to_json(s.source_detector)},
          {"target_detector", detail::to_json(s.target_detector)},
          {"source_sizes", detail::to_json(s.source_sizes)},
          {"target_sizes", detail::to_json(s.target_sizes)},
          {"mixing", s.mixing == spectra::MixingMode::kMixed ? "mixed" : "single_label"},
          {"max_components", s.max_components},
          {"alpha", s.alpha},
          {"snr", {s.snr.lo, s.snr.hi}},
          {"bg_cps", {s.bg_cps.lo, s.bg_cps.hi}},
          {"live_time", {s.live_time.lo, s.live_time.hi}},
          {"gain_jitter", s.gain_jitter}};
}

// The scenario's target detector is either given in full ("target_detector")
// or as a shift of the source detector ("target_shift"); the default is the
// standard shift.
inline spectra::ScenarioConfig scenario_from_json(const nlohmann::json& j,
                                                  std::uint64_t master_seed) {
  spectra::ScenarioConfig s;
  s.master_seed = master_seed;
  s.isotopes = j.at("isotopes").get<std::vector<std::string>>();
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    s.grid.n_bins = g.value("n_bins", s.grid.n_bins);
    s.grid.e_min = g.value("e_min", s.grid.e_min);
    s.grid.e_max = g.value("e_max", s.grid.e_max);
  }
  if (j.contains("source_detector"))
    s.source_detector = detail::detector_from_json(j.at("source_detector"));
  if (j.contains("target_detector")) {
    require(!j.contains("target_shift"), "give target_detector or target_shift, not both");
    s.target_detector = detail::detector_from_json(j.at("target_detector"), s.source_detector);
  } else {
    const nlohmann::json shift = j.value("target_shift", nlohmann::json::object());
    s.target_detector = spectra::ScenarioConfig::shifted(
        s.source_detector, shift.value("gain", 0.01), shift.value("offset_kev", 5.0),
        shift.value("fwhm_b_scale", 1.3));
  }
  if (j.contains("source_sizes")) s.source_sizes = detail::sizes_from_json(j.at("source_sizes"), s.source_sizes);
  if (j.contains("target_sizes")) s.target_sizes = detail::sizes_from_json(j.at("target_sizes"), s.target_sizes);
  const std::string mixing = j.value("mixing", std::string("single_label"));
  if (mixing == "single_label")
    s.mixing = spectra::MixingMode::kSingleLabel;
  else if (mixing == "mixed")
    s.mixing = spectra::MixingMode::kMixed;
  else
    throw ValidationError("unknown mixing mode '" + mixing + "'");
  s.max_components = j.value("max_components", s.max_components);
  s.alpha = j.value("alpha", s.alpha);
  if (j.contains("snr")) s.snr = detail::range_from_json(j.at("snr"), s.snr);
  if (j.contains("bg_cps")) s.bg_cps = detail::range_from_json(j.at("bg_cps"), s.bg_cps);
  if (j.contains("live_time")) s.live_time = detail::range_from_json(j.at("live_time"), s.live_time);
  s.gain_jitter = j.value("gain_jitter", s.gain_jitter);
  return s;
}

inline std::string hash_json(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

inline nlohmann::json canonical(const ExperimentConfig& c) {
  nlohmann::json archs = nlohmann::json::array();
  for (const auto& a : c.architectures) archs.push_back(models::to_json(a));
  nlohmann::json protos = nlohmann::json::array();
  for (auto p : c.protocols) protos.push_back(training::to_string(p));
  return {{"master_seed", c.master_seed()},
          {"scenario", scenario_to_json(c.scenario)},
          {"architectures", archs},
          {"protocols", protos},
          {"size_ladder", c.size_ladder},
          {"n_trials", c.n_trials},
          {"search_budget", c.search_budget},
          {"train",
           {{"source", training::to_json(c.source_train)},
            {"target", training::to_json(c.target_train)},
            {"finetune", training::to_json(c.finetune_train)}}}};
}

inline ExperimentConfig parse_config(const nlohmann::json& j,
                                     const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  try {
    require(j.is_object(), "config must be a JSON object");
    const auto seed = j.value("master_seed", std::uint64_t{0});
    c.scenario = scenario_from_json(j.at("scenario"), seed);
    const std::size_t M = c.scenario.isotopes.size(), n_bins = c.scenario.grid.n_bins;
    for (const auto& a : j.value("architectures", nlohmann::json::array({"MLP"}))) {
      if (a.is_string())
        c.architectures.push_back(models::arch_from_json({{"kind", a}}, M, n_bins));
      else
        c.architectures.push_back(models::arch_from_json(a, M, n_bins));
      require(c.architectures.back().n_classes == M && c.architectures.back().n_bins == n_bins,
              "architecture dimensions must match the scenario");
    }
    require(!c.architectures.empty(), "architectures list is empty");
    for (const auto& p : j.value("protocols", std::vector<std::string>{"source_only", "target_only",
                                                                       "domain_adapted"}))
      c.protocols.push_back(training::protocol_from_string(p));
    c.size_ladder = j.value("size_ladder", std::vector<std::size_t>{64});
    require(!c.size_ladder.empty(), "size ladder is empty");
    for (std::size_t i = 0; i < c.size_ladder.size(); ++i) {
      const auto s = c.size_ladder[i];
      require(s >= 1 && (s & (s - 1)) == 0, "size ladder entries must be powers of two");
      require(i == 0 || c.size_ladder[i - 1] < s, "size ladder must be sorted ascending");
      require(s <= c.scenario.target_sizes.train, "size ladder exceeds the target training split");
    }
    c.n_trials = j.value("n_trials", c.n_trials);
    require(c.n_trials >= 1, "n_trials must be >= 1");
    c.search_budget = j.value("search_budget", c.search_budget);
    require(c.search_budget >= 1, "search_budget must be >= 1");
    const nlohmann::json train = j.value("train", nlohmann::json::object());
    c.source_train = training::train_config_from_json(train.value("source", nlohmann::json::object()));
    c.target_train = training::train_config_from_json(train.value("target", nlohmann::json::object()));
    c.finetune_train =
        training::train_config_from_json(train.value("finetune", nlohmann::json::object()));
    c.source_train.validate(false);
    c.target_train.validate(false);
    c.finetune_train.validate(true);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;
    if (j.contains("data_dir")) {
      c.data_dir = j.at("data_dir").get<std::string>();
      if (c.data_dir.is_relative() && !base_dir.empty()) c.data_dir = base_dir / c.data_dir;
      require(std::filesystem::is_directory(c.data_dir),
              "data_dir '" + c.data_dir.string() + "' does not exist");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad experiment config: ") + e.what());
  }
  c.config_hash = hash_json(canonical(c));
  c.scenario_hash =
      hash_json({{"master_seed", c.master_seed()}, {"scenario", scenario_to_json(c.scenario)}});
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_json(path), path.parent_path());
}

inline const models::ArchSpec& find_arch(const ExperimentConfig& c, const std::string& name) {
  for (const auto& a : c.architectures)
    if (models::to_string(a.kind) == name) return a;
  throw ValidationError("architecture '" + name + "' is not in the config");
}

inline std::filesystem::path dataset_file(const std::filesystem::path& dir,
                                          spectra::DomainTag d, spectra::SplitTag s) {
  return dir / (spectra::to_string(d) + "_" + spectra::to_string(s) + ".spda");
}

inline io::DatasetProvenance provenance(const ExperimentConfig& c) {
  return {c.master_seed(), c.scenario_hash};
}

inline void write_scenario(const ExperimentConfig& c, const spectra::Scenario& sc,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  using spectra::DomainTag;
  using spectra::SplitTag;
  const std::pair<DomainTag, const spectra::DomainSplits*> domains[] = {
      {DomainTag::kSource, &sc.source}, {DomainTag::kTarget, &sc.target}};
  for (const auto& [d, splits] : domains) {
    io::write_dataset(dataset_file(dir, d, SplitTag::kTrain), splits->train, provenance(c));
    io::write_dataset(dataset_file(dir, d, SplitTag::kVal), splits->val, provenance(c));
    io::write_dataset(dataset_file(dir, d, SplitTag::kTest), splits->test, provenance(c));
  }
}

inline spectra::LabeledDataset load_checked(const ExperimentConfig& c,
                                            const std::filesystem::path& path) {
  io::LoadedDataset ld = io::read_dataset(path);
  if (ld.provenance.config_hash != c.scenario_hash || ld.provenance.master_seed != c.master_seed())
    throw ValidationError("'" + path.string() + "' was generated from a different scenario (hash " +
                          ld.provenance.config_hash + ", expected " + c.scenario_hash + ")");
  return std::move(ld.data);
}

// Datasets from data_dir when configured, otherwise regenerated in memory.
inline spectra::Scenario load_scenario(const ExperimentConfig& c) {
  if (c.data_dir.empty()) return spectra::build_scenario(c.scenario);
  using spectra::DomainTag;
  using spectra::SplitTag;
  spectra::Scenario sc;
  for (auto d : {DomainTag::kSource, DomainTag::kTarget}) {
    auto& splits = d == DomainTag::kSource ? sc.source : sc.target;
    splits.train = load_checked(c, dataset_file(c.data_dir, d, SplitTag::kTrain));
    splits.val = load_checked(c, dataset_file(c.data_dir, d, SplitTag::kVal));
    splits.test = load_checked(c, dataset_file(c.data_dir, d, SplitTag::kTest));
  }
  return sc;
}

}  // namespace specdapt::config
