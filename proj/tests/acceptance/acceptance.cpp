// Copyright 2026 The specdapt Authors. SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Pass criterion numbers as arguments to run a
// subset, e.g. `acceptance 1 3 7`.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "../support/oracles.hpp"
#include "specdapt/explain.hpp"
#include "specdapt/io.hpp"
#include "specdapt/metrics.hpp"
#include "specdapt/stats.hpp"
#include "specdapt/training.hpp"

using namespace specdapt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// ---- 1: APE oracle ---------------------------------------------------------

Outcome ape_oracle() {
  std::mt19937_64 gen(1001);
  std::uniform_int_distribution<std::size_t> nd(1, 16), md(2, 8);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = nd(gen), m = md(gen);
    Matrix a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(oracle::simplex_point(m, gen));
      b.push_back(oracle::simplex_point(m, gen));
    }
    worst = std::max(worst, std::abs(metrics::ape_score(a, b) - oracle::ape(a, b)));
  }
  return {worst <= 1e-12, "max |diff| " + fmt("%.2e", worst) + " over 1000 pairs"};
}

// ---- 2: gradients ----------------------------------------------------------

Outcome gradients() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (auto k : {models::ArchKind::kMlp, models::ArchKind::kCnn, models::ArchKind::kTbnnLi,
                 models::ArchKind::kTbnnOurs})
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = oracle::check_model(oracle::reduced(k), seed);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
    }
  return {worst < 1e-4 && checked > 0,
          "max rel error " + fmt("%.2e", worst) + " over " + std::to_string(checked) + " entries"};
}

// ---- 3: Wilcoxon -----------------------------------------------------------

Outcome wilcoxon() {
  bool ok = true;
  for (int n = 1; n <= 12; ++n) {
    std::vector<double> a(n), b(n, 0.0);
    for (int i = 0; i < n; ++i) a[i] = 1.0 + i;
    const double p = stats::wilcoxon_signed_rank(a, b, stats::Sidedness::kOneSidedGreater).p_value;
    ok = ok && p == std::ldexp(1.0, -n);
  }
  std::vector<double> ten(10, 1.0), zero(10, 0.0);
  for (int i = 0; i < 10; ++i) ten[i] += 0.1 * i;
  const double p10 = stats::wilcoxon_signed_rank(ten, zero, stats::Sidedness::kOneSidedGreater).p_value;
  ok = ok && std::abs(p10 - 0.0009766) < 5e-8 && stats::format_p(p10) == "0.001";

  std::mt19937_64 gen(303);
  std::uniform_int_distribution<int> nsize(1, 12);
  std::normal_distribution<double> nrm(0.1, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int n = nsize(gen);
    std::vector<double> a(n), b(n), d(n);
    for (int i = 0; i < n; ++i) {
      a[i] = nrm(gen);
      b[i] = nrm(gen);
      d[i] = a[i] - b[i];
    }
    const double p = stats::wilcoxon_signed_rank(a, b, stats::Sidedness::kOneSidedGreater).p_value;
    worst = std::max(worst, std::abs(p - oracle::wilcoxon_upper_p(d)));
  }
  ok = ok && worst <= 1e-12;
  return {ok, "n=10 p " + fmt("%.7f", p10) + " (shown " + stats::format_p(p10) +
                  "), max |diff| vs enumeration " + fmt("%.1e", worst)};
}

// ---- 4: KernelSHAP ---------------------------------------------------------

Outcome kernel_shap() {
  spectra::EnergyGrid grid{96, 0.0, 1500.0};
  auto spec = models::ArchSpec::desk(models::ArchKind::kMlp, 3, 96);
  spec.dense_units = {16, 8};
  Rng rng(44);
  auto model = models::build(spec, rng);
  Rng xr(5);
  spectra::Spectrum x{std::vector<double>(96), 1.0, grid}, base{std::vector<double>(96, 4.0), 1.0, grid};
  for (auto& v : x.counts) v = std::floor(xr.uniform(0.0, 40.0));
  double worst = 0.0, worst_res = 0.0;
  for (std::size_t G : {1u, 2u, 3u, 4u, 6u, 8u, 12u}) {
    explain::ShapConfig cfg;
    cfg.n_groups = G;
    const auto ex = explain::kernel_shap(model, x, base, cfg, 1);
    const auto f = explain::class_probability(model, 1);
    const auto groups = explain::contiguous_groups(96, G);
    const auto ref = oracle::shapley(G, [&](std::uint64_t mask) {
      std::vector<double> v = base.counts;
      for (std::size_t g = 0; g < G; ++g)
        if ((mask >> g) & 1)
          for (std::size_t i = groups[g].first; i < groups[g].second; ++i) v[i] = x.counts[i];
      return f(Matrix{v})[0];
    });
    for (std::size_t g = 0; g < G; ++g) worst = std::max(worst, std::abs(ex.phi[g] - ref[g]));
    worst_res = std::max(worst_res, std::abs(ex.residual));
  }
  return {worst <= 1e-6 && worst_res < 1e-6,
          "max |phi - shapley| " + fmt("%.2e", worst) + ", max residual " + fmt("%.2e", worst_res)};
}

// ---- 5 and 6: desk-scale domain adaptation ----------------------------------

struct ArchRuns {
  std::string name;
  std::vector<double> acc[3], ece[3], nll[3];  // indexed by Protocol
};

std::vector<ArchRuns> run_desk_experiment() {
  spectra::ScenarioConfig cfg;
  cfg.isotopes = {"Am241", "Ba133", "Co57", "Co60", "Cs137", "Eu152", "I131", "Ir192"};
  cfg.source_sizes = {2048, 256, 256};
  cfg.target_sizes = {512, 128, 128};
  cfg.snr = {2.0, 6.0};
  cfg.target_detector = spectra::ScenarioConfig::shifted(cfg.source_detector);
  cfg.master_seed = 7;
  const auto sc = spectra::build_scenario(cfg);

  std::vector<ArchRuns> out;
  for (auto kind : {models::ArchKind::kMlp, models::ArchKind::kTbnnOurs}) {
    training::TrialPlan plan;
    plan.spec = models::ArchSpec::desk(kind, 8, 1024);
    plan.source_cfg.learning_rate = 1e-3;
    plan.source_cfg.batch_size = 64;
    plan.source_cfg.max_epochs = 30;
    plan.source_cfg.patience = 5;
    plan.target_cfg.learning_rate = 1e-3;
    plan.target_cfg.batch_size = 32;
    plan.target_cfg.max_epochs = 300;
    plan.target_cfg.patience = 30;
    plan.finetune_cfg = plan.target_cfg;
    plan.finetune_cfg.learning_rate = 1e-4;
    plan.sizes = {64};
    plan.n_trials = 10;
    plan.master_seed = 7;
    ArchRuns runs;
    runs.name = models::to_string(kind);
    const auto t0 = std::chrono::steady_clock::now();
    const auto recs = training::run_paired_trials(sc, plan, [&](const std::vector<training::TrialRecord>& rs) {
      std::cerr << "  " << runs.name << " trial " << rs.front().trial << " done at "
                << fmt("%.0f", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count())
                << " s\n";
    });
    for (const auto& r : recs) {
      const auto p = static_cast<std::size_t>(r.protocol);
      runs.acc[p].push_back(r.metrics.at("acc").get<double>());
      runs.ece[p].push_back(r.metrics.at("ece").get<double>());
      runs.nll[p].push_back(r.metrics.at("nll").get<double>());
    }
    out.push_back(std::move(runs));
  }
  return out;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Outcome da_effect(const std::vector<ArchRuns>& runs) {
  constexpr auto SO = static_cast<std::size_t>(training::Protocol::kSourceOnly);
  constexpr auto TO = static_cast<std::size_t>(training::Protocol::kTargetOnly);
  constexpr auto DA = static_cast<std::size_t>(training::Protocol::kDomainAdapted);
  bool ok = true;
  std::ostringstream d;
  for (const auto& r : runs) {
    const double p_to = stats::wilcoxon_signed_rank(r.acc[DA], r.acc[TO], stats::Sidedness::kOneSidedGreater).p_value;
    const double p_so = stats::wilcoxon_signed_rank(r.acc[DA], r.acc[SO], stats::Sidedness::kOneSidedGreater).p_value;
    const bool arch_ok = r.acc[DA].size() == 10 && mean(r.acc[DA]) > mean(r.acc[TO]) &&
                         mean(r.acc[DA]) > mean(r.acc[SO]) && p_to <= 0.05 && p_so <= 0.05;
    ok = ok && arch_ok;
    d << r.name << " DA " << fmt("%.3f", mean(r.acc[DA])) << " TO " << fmt("%.3f", mean(r.acc[TO]))
      << " SO " << fmt("%.3f", mean(r.acc[SO])) << " p(TO) " << fmt("%.4f", p_to) << " p(SO) "
      << fmt("%.4f", p_so) << "; ";
  }
  return {ok, d.str()};
}

Outcome diagnostics_direction(const std::vector<ArchRuns>& runs) {
  constexpr auto TO = static_cast<std::size_t>(training::Protocol::kTargetOnly);
  constexpr auto DA = static_cast<std::size_t>(training::Protocol::kDomainAdapted);
  bool ok = true;
  std::ostringstream d;
  for (const auto& r : runs) {
    std::size_t both = 0;
    for (std::size_t t = 0; t < r.ece[DA].size(); ++t)
      both += r.ece[DA][t] <= r.ece[TO][t] && r.nll[DA][t] <= r.nll[TO][t];
    ok = ok && both >= 7;
    d << r.name << " ECE and NLL no worse in " << both << "/10 trials (ECE " << fmt("%.3f", mean(r.ece[DA]))
      << " vs " << fmt("%.3f", mean(r.ece[TO])) << ", NLL " << fmt("%.3f", mean(r.nll[DA])) << " vs "
      << fmt("%.3f", mean(r.nll[TO])) << "); ";
  }
  return {ok, d.str()};
}

// ---- 7: synthesis invariants -----------------------------------------------

Outcome synthesis() {
  using namespace spectra;
  EnergyGrid grid;
  DetectorModel det;
  bool ok = true;
  std::ostringstream d;

  Rng rng(71);
  double worst_cons = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> x(grid.n_bins);
    for (auto& v : x) v = std::floor(rng.uniform(0.0, 300.0));
    const auto y = gaussian_broaden(x, [&](double e) { return det.fwhm(e); }, grid);
    const double sx = std::accumulate(x.begin(), x.end(), 0.0), sy = std::accumulate(y.begin(), y.end(), 0.0);
    worst_cons = std::max(worst_cons, std::abs(sy / sx - 1.0));
  }
  ok = ok && worst_cons <= 1e-9;
  d << "conservation " << fmt("%.1e", worst_cons);

  bool simplex = true;
  for (const auto& [name, lines] : line_library()) {
    const auto t = render_template({name, lines}, det, grid);
    simplex = simplex && std::abs(std::accumulate(t.shape.begin(), t.shape.end(), 0.0) - 1.0) < 1e-12;
    for (double v : t.shape) simplex = simplex && v >= 0.0;
  }
  ScenarioConfig mc;
  mc.isotopes = {"Cs137", "Co60", "Am241", "Ba133", "Eu152"};
  mc.mixing = MixingMode::kMixed;
  mc.max_components = 3;
  mc.master_seed = 4;
  const auto mixed = build_split(mc, DomainTag::kSource, SplitTag::kTrain, 200);
  for (const auto& row : mixed.labels) {
    simplex = simplex && std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-12;
    std::size_t nz = 0;
    for (double v : row) {
      simplex = simplex && v >= 0.0;
      nz += v > 0.0;
    }
    simplex = simplex && nz <= 3;
  }
  ok = ok && simplex;
  d << ", simplex " << (simplex ? "ok" : "violated");

  const auto fg = render_template(isotope_lines("Cs137"), det, grid);
  const auto bg = background_template(det, grid);
  const double B = 100.0 * 20.0, F = 8.0 * std::sqrt(B);
  double total = 0.0;
  const int reps = 500;
  for (int i = 0; i < reps; ++i) total += synthesize(fg, bg, 8.0, 100.0, 20.0, grid, rng).total();
  const double rel = std::abs(total / reps / (B + F) - 1.0);
  ok = ok && rel <= 0.01;
  d << ", Poisson mean off by " << fmt("%.2f", 100.0 * rel) << "%";

  ScenarioConfig sc;
  sc.isotopes = {"Cs137", "Co60", "I131"};
  sc.source_sizes = {32, 8, 8};
  sc.target_sizes = {16, 8, 8};
  sc.target_detector = ScenarioConfig::shifted(sc.source_detector);
  sc.master_seed = 9;
  const auto a = io::encode_dataset(build_scenario(sc).target.train).buffer();
  const auto b = io::encode_dataset(build_scenario(sc).target.train).buffer();
  const bool same = a == b;
  ok = ok && same;
  d << ", regeneration " << (same ? "byte-identical" : "differs");
  return {ok, d.str()};
}

// ---- 8: persistence --------------------------------------------------------

Outcome persistence() {
  const fs::path dir = fs::temp_directory_path() / "specdapt_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool ok = true;
  std::ostringstream d;

  spectra::ScenarioConfig c;
  c.isotopes = {"Cs137", "Co60", "Am241", "Eu152"};
  c.mixing = spectra::MixingMode::kMixed;
  c.max_components = 3;
  c.master_seed = 3;
  const auto ds = spectra::build_split(c, spectra::DomainTag::kSource, spectra::SplitTag::kTest, 25);
  io::write_dataset(dir / "a.spda", ds, {3, "0123456789abcdef"});
  const auto back = io::read_dataset(dir / "a.spda");
  io::write_dataset(dir / "b.spda", back.data, back.provenance);
  const bool ds_same = io::read_text(dir / "a.spda") == io::read_text(dir / "b.spda") &&
                       io::read_text(dir / "a.spda.json") == io::read_text(dir / "b.spda.json");

  Rng rng(8);
  auto m = models::build(models::ArchSpec::desk(models::ArchKind::kTbnnOurs, 4, 1024), rng);
  m.set_layer_trainable("embed_conv", false);
  io::write_checkpoint(dir / "a.spdw", m.params);
  const auto params = io::read_checkpoint(dir / "a.spdw");
  io::write_checkpoint(dir / "b.spdw", params);
  const bool ck_same = io::read_text(dir / "a.spdw") == io::read_text(dir / "b.spdw") &&
                       params.values_equal(m.params);
  ok = ds_same && ck_same;
  d << "dataset " << (ds_same ? "identical" : "differs") << ", checkpoint "
    << (ck_same ? "identical" : "differs");

  int codes_ok = 0;
  for (const char* f : {"a.spda", "a.spdw"}) {
    {
      std::fstream s(dir / f, std::ios::in | std::ios::out | std::ios::binary);
      s.seekp(0);
      s.put('Z');
    }
    try {
      if (std::string(f).ends_with(".spda"))
        io::read_dataset(dir / f);
      else
        io::read_checkpoint(dir / f);
    } catch (const Error& e) {
      codes_ok += e.code() == ExitCode::kCorruptFile;
    }
  }
  ok = ok && codes_ok == 2;
  d << ", corrupt magic -> exit code " << static_cast<int>(ExitCode::kCorruptFile) << " ("
    << codes_ok << "/2)";
  fs::remove_all(dir);
  return {ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int n) { return only.empty() || only.contains(n); };

  struct Limit {
    int id;
    const char* name;
    double seconds;  // 0: no runtime bound
  };
  int failures = 0;
  auto report = [&](const Limit& l, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = l.seconds == 0.0 || s < l.seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << "criterion " << l.id << " [" << l.name << "]: " << (pass ? "PASS" : "FAIL") << "  "
              << o.detail << " (" << fmt("%.2f", s) << " s"
              << (in_time ? "" : ", over the " + fmt("%.0f", l.seconds) + " s limit") << ")\n"
              << std::flush;
  };

  if (wanted(1)) report({1, "APE oracle", 1.0}, ape_oracle);
  if (wanted(2)) report({2, "gradient correctness", 120.0}, gradients);
  if (wanted(3)) report({3, "Wilcoxon exactness", 30.0}, wilcoxon);
  if (wanted(4)) report({4, "KernelSHAP exactness", 120.0}, kernel_shap);
  if (wanted(5) || wanted(6)) {
    std::vector<ArchRuns> runs;
    report({5, "domain-adaptation effect", 45.0 * 60.0}, [&] {
      runs = run_desk_experiment();
      return da_effect(runs);
    });
    if (wanted(6))
      report({6, "diagnostics direction", 0.0}, [&] {
        if (runs.empty()) return Outcome{false, "no runs from criterion 5"};
        return diagnostics_direction(runs);
      });
  }
  if (wanted(7)) report({7, "synthesis invariants", 60.0}, synthesis);
  if (wanted(8)) report({8, "persistence", 0.0}, persistence);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << "\n";
  return failures == 0 ? 0 : 1;
}
