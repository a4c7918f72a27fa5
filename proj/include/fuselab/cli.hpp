#pragma once

// Command-line front end. run() is usable in-process; tools/fuselab_cli.cpp
// only forwards argv to it.
//
// Subcommands: gen-data, train, merge, eval, barrier, analyze, experiment.
// `--config <file>` reads key=value lines; a key is the long option name
// without dashes and only applies when that option is absent from the command
// line.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fuselab/analysis.hpp"
#include "fuselab/datagen.hpp"
#include "fuselab/eval.hpp"
#include "fuselab/experiment.hpp"
#include "fuselab/gamma_search.hpp"
#include "fuselab/merge.hpp"
#include "fuselab/model_io.hpp"
#include "fuselab/report.hpp"
#include "fuselab/trainer.hpp"

namespace fuselab::cli {

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

namespace detail {

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in list '" + s + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (...) {
    used = 0;
  }
  if (used != s.size() || used == 0) throw ConfigError("not a number: '" + s + "'");
  return v;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_double(item));
  return out;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    if (item.find_first_not_of("0123456789") != std::string::npos) throw ConfigError("bad seed '" + item + "'");
    out.push_back(std::stoull(item));
  }
  return out;
}

inline std::vector<Eigen::Index> parse_width_list(const std::string& s) {
  std::vector<Eigen::Index> out;
  for (const auto& item : split_list(s)) {
    if (item.find_first_not_of("0123456789") != std::string::npos) throw ConfigError("bad width '" + item + "'");
    out.push_back(static_cast<Eigen::Index>(std::stoll(item)));
  }
  return out;
}

inline std::vector<Method> parse_method_list(const std::string& s) {
  std::vector<Method> out;
  for (const auto& item : split_list(s)) {
    auto m = parse_method(item);
    if (!m) throw ConfigError("unknown method '" + item + "' (expected direct, permute or cca)");
    out.push_back(*m);
  }
  return out;
}

inline std::array<double, 2> parse_alpha(const std::string& s) {
  const auto v = parse_double_list(s);
  if (v.size() != 2) throw ConfigError("--alpha expects two values a,b");
  return {v[0], v[1]};
}

inline SplitKind parse_split_kind(const std::string& s) {
  auto k = parse_split(s);
  if (!k) throw ConfigError("unknown split '" + s + "' (expected full, eighty-twenty, dirichlet or disjoint)");
  return *k;
}

inline std::string timestamp_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Pulls `--config` out of `args` and appends its entries for options that the
// command line does not set.
inline std::vector<std::string> inject_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file path");
      if (path) throw ConfigError("--config given twice");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      if (path) throw ConfigError("--config given twice");
      path = args[i].substr(9);
    } else {
      kept.push_back(args[i]);
    }
  }
  if (!path) return kept;
  std::ifstream in(*path);
  if (!in) throw Error("cannot open config file '" + *path + "'");
  const auto present = [&](const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : kept)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(*path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config") throw ConfigError(*path + ":" + std::to_string(lineno) + ": bad key");
    if (present(key)) continue;
    if (value == "true") {
      kept.push_back("--" + key);
    } else if (value == "false") {
      continue;
    } else {
      kept.push_back("--" + key);
      kept.push_back(value);
    }
  }
  return kept;
}

struct GammaFlags {
  std::optional<double> gamma;
  bool relative = false;
  std::string search;

  void add_to(CLI::App& app) {
    app.add_option("--gamma", gamma, "CCA regularizer (absolute unless --relative)");
    app.add_flag("--relative", relative, "read --gamma and --gamma-search as factors of the mean activation variance");
    app.add_option("--gamma-search", search, "comma list of gamma candidates, selected by merged accuracy");
  }

  CcaOptions make(double g) const { return relative ? CcaOptions::relative(g) : CcaOptions::absolute(g); }

  CcaOptions base() const {
    if (!gamma) return CcaOptions::relative(kDefaultRelativeGamma);
    if (!(*gamma >= 0.0) || !std::isfinite(*gamma)) throw ConfigError("--gamma must be finite and >= 0");
    return make(*gamma);
  }

  std::vector<CcaOptions> candidates() const {
    std::vector<CcaOptions> out;
    if (search.empty()) return out;
    for (double g : parse_double_list(search)) {
      if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("--gamma-search values must be finite and >= 0");
      out.push_back(make(g));
    }
    return out;
  }
};

inline std::vector<MlpModel> load_models(const std::vector<std::string>& paths) {
  std::vector<MlpModel> out;
  for (const auto& p : paths) out.push_back(load_model(p));
  return out;
}

inline void emit(const Report& r, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << r.render();
  } else {
    r.save(path);
  }
}

inline Dataset split_part(const Dataset& ds, SplitKind kind, std::array<double, 2> alpha, std::uint64_t seed,
                          int part) {
  if (kind == SplitKind::Full) return ds;
  auto [p1, p2] = split(ds, SplitSpec{kind, alpha, seed});
  return part == 0 ? p1 : p2;
}

}  // namespace detail

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  using namespace detail;
  CLI::App app{"fuselab: align and merge independently trained MLPs", "fuselab"};
  app.require_subcommand(1);

  // gen-data
  struct {
    int classes = kDefaultClasses, per_class = kDefaultPerClass, dim = kDefaultDim;
    std::uint64_t seed = 0;
    std::string out, test_out;
    double test_fraction = 0.2;
  } gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a Gaussian-cluster classification dataset");
  gen_cmd->add_option("--classes", gen.classes, "number of classes")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.per_class, "samples per class")->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim, "feature dimension")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output dataset file (training part with --test-out)")->required();
  gen_cmd->add_option("--test-out", gen.test_out, "also hold out a stratified test set into this file");
  gen_cmd->add_option("--test-fraction", gen.test_fraction, "held-out fraction")->capture_default_str();

  // train
  struct {
    std::string data, out, hidden = "64,64", split = "full", alpha = "0.5,0.5";
    int epochs = TrainConfig{}.epochs, batch_size = TrainConfig{}.batch_size;
    double lr = TrainConfig{}.learning_rate, momentum = TrainConfig{}.momentum;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> shuffle_seed;
    std::uint64_t split_seed = 0;
    int part = 0;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "train an MLP on a dataset file");
  train_cmd->add_option("--data", tr.data, "training dataset file")->required();
  train_cmd->add_option("--out", tr.out, "output model file")->required();
  train_cmd->add_option("--hidden", tr.hidden, "hidden widths, comma separated")->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", tr.momentum)->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "initialization seed")->capture_default_str();
  train_cmd->add_option("--shuffle-seed", tr.shuffle_seed, "batch order seed (default: seed + 7919)");
  train_cmd->add_option("--split", tr.split, "train on one part of a split: full|eighty-twenty|dirichlet|disjoint")
      ->capture_default_str();
  train_cmd->add_option("--alpha", tr.alpha, "Dirichlet concentration a,b")->capture_default_str();
  train_cmd->add_option("--split-seed", tr.split_seed)->capture_default_str();
  train_cmd->add_option("--part", tr.part, "which split part (0 or 1)")->check(CLI::Range(0, 1))->capture_default_str();

  // merge
  struct {
    std::vector<std::string> models;
    std::string method = "cca", probes, test, out, report;
    GammaFlags gamma;
    bool repair = false;
    std::size_t reference = 0;
    std::optional<Eigen::Index> probe_limit;
    int grid = kDefaultGridSize;
  } mg;
  auto* merge_cmd = app.add_subcommand("merge", "align and average model files");
  merge_cmd->add_option("models", mg.models, "model files")->required()->expected(2, -1);
  merge_cmd->add_option("--method", mg.method, "direct|permute|cca")->capture_default_str();
  mg.gamma.add_to(*merge_cmd);
  merge_cmd->add_flag("--repair", mg.repair, "reset merged neuron statistics to the reference");
  merge_cmd->add_option("--probes", mg.probes, "dataset whose features drive alignment")->required();
  merge_cmd->add_option("--probe-limit", mg.probe_limit, "use only the first N probe rows");
  merge_cmd->add_option("--reference", mg.reference, "index of the reference model")->capture_default_str();
  merge_cmd->add_option("--test", mg.test, "dataset for the report's accuracies (default: probes)");
  merge_cmd->add_option("--out", mg.out, "merged model file")->required();
  merge_cmd->add_option("--report", mg.report, "report file (default: <out>.report)");
  merge_cmd->add_option("--grid", mg.grid, "interpolation grid size")->capture_default_str();

  // eval
  struct {
    std::vector<std::string> models;
    std::string data, report;
  } ev;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy, loss and logit ensemble of model files");
  eval_cmd->add_option("models", ev.models, "model files")->required()->expected(1, -1);
  eval_cmd->add_option("--data", ev.data, "evaluation dataset")->required();
  eval_cmd->add_option("--report", ev.report, "report file (default: stdout)");

  // barrier
  struct {
    std::vector<std::string> models;
    std::string data, method = "direct", probes, report;
    GammaFlags gamma;
    int grid = kDefaultGridSize;
  } br;
  auto* barrier_cmd = app.add_subcommand("barrier", "loss along the linear path between two models");
  barrier_cmd->add_option("models", br.models, "two model files")->required()->expected(2);
  barrier_cmd->add_option("--data", br.data, "evaluation dataset")->required();
  barrier_cmd->add_option("--method", br.method, "align the second model first: direct|permute|cca")
      ->capture_default_str();
  barrier_cmd->add_option("--probes", br.probes, "alignment dataset (needed unless direct)");
  br.gamma.add_to(*barrier_cmd);
  barrier_cmd->add_option("--grid", br.grid, "interpolation grid size")->capture_default_str();
  barrier_cmd->add_option("--report", br.report, "report file (default: stdout)");

  // analyze
  struct {
    std::vector<std::string> models;
    std::string probes, methods = "permute,cca", report;
    GammaFlags gamma;
    std::optional<Eigen::Index> probe_limit;
  } an;
  auto* analyze_cmd = app.add_subcommand("analyze", "matching diagnostics for 2 or 3 models");
  analyze_cmd->add_option("models", an.models, "two or three model files")->required()->expected(2, 3);
  analyze_cmd->add_option("--probes", an.probes, "dataset whose features drive alignment")->required();
  analyze_cmd->add_option("--probe-limit", an.probe_limit, "use only the first N probe rows");
  analyze_cmd->add_option("--methods", an.methods, "methods for the three-model comparison")->capture_default_str();
  an.gamma.add_to(*analyze_cmd);
  analyze_cmd->add_option("--report", an.report, "report file (default: stdout)");

  // experiment
  struct {
    std::string methods = "direct,permute,cca", seeds, split = "full", alpha = "0.5,0.5", hidden = "64,64", out,
                report;
    int models = 2, classes = kDefaultClasses, per_class = kDefaultPerClass, dim = kDefaultDim;
    std::uint64_t data_seed = 0;
    double test_fraction = 0.2;
    int epochs = TrainConfig{}.epochs, batch_size = TrainConfig{}.batch_size;
    double lr = TrainConfig{}.learning_rate, momentum = TrainConfig{}.momentum;
    GammaFlags gamma;
    bool repair = false;
    std::size_t reference = 0;
    std::optional<Eigen::Index> probe_limit;
    int grid = kDefaultGridSize;
  } ex;
  auto* exp_cmd = app.add_subcommand("experiment", "generate, split, train, merge and evaluate in one run");
  exp_cmd->add_option("--methods,--method", ex.methods, "comma list of direct|permute|cca")->capture_default_str();
  exp_cmd->add_option("--models", ex.models, "number of models")->capture_default_str();
  exp_cmd->add_option("--seeds", ex.seeds, "comma list of init seeds (default 0..models-1)");
  exp_cmd->add_option("--split", ex.split, "full|eighty-twenty|dirichlet|disjoint")->capture_default_str();
  exp_cmd->add_option("--alpha", ex.alpha, "Dirichlet concentration a,b")->capture_default_str();
  exp_cmd->add_option("--classes", ex.classes)->capture_default_str();
  exp_cmd->add_option("--per-class", ex.per_class)->capture_default_str();
  exp_cmd->add_option("--dim", ex.dim)->capture_default_str();
  exp_cmd->add_option("--data-seed", ex.data_seed)->capture_default_str();
  exp_cmd->add_option("--test-fraction", ex.test_fraction)->capture_default_str();
  exp_cmd->add_option("--hidden", ex.hidden)->capture_default_str();
  exp_cmd->add_option("--epochs", ex.epochs)->capture_default_str();
  exp_cmd->add_option("--batch-size", ex.batch_size)->capture_default_str();
  exp_cmd->add_option("--lr", ex.lr)->capture_default_str();
  exp_cmd->add_option("--momentum", ex.momentum)->capture_default_str();
  ex.gamma.add_to(*exp_cmd);
  exp_cmd->add_flag("--repair", ex.repair);
  exp_cmd->add_option("--reference", ex.reference)->capture_default_str();
  exp_cmd->add_option("--probe-limit", ex.probe_limit);
  exp_cmd->add_option("--grid", ex.grid)->capture_default_str();
  exp_cmd->add_option("--out", ex.out, "directory for datasets, models and report.txt");
  exp_cmd->add_option("--report", ex.report, "report file (default: <out>/report.txt, else stdout)");

  try {
    args = inject_config(std::move(args));
  } catch (const std::exception& e) {
    err << "fuselab: config: " << e.what() << '\n';
    return 2;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "gen-data") {
      const Dataset ds = stage("generate", [&] { return generate(gen.classes, gen.per_class, gen.dim, gen.seed); });
      if (gen.test_out.empty()) {
        stage("write dataset", [&] { save_dataset(ds, gen.out); });
        out << "wrote " << gen.out << " (" << ds.size() << " rows)\n";
      } else {
        const auto [train_ds, test_ds] = stage("holdout", [&] { return holdout(ds, gen.test_fraction, gen.seed + 1); });
        stage("write dataset", [&] {
          save_dataset(train_ds, gen.out);
          save_dataset(test_ds, gen.test_out);
        });
        out << "wrote " << gen.out << " (" << train_ds.size() << " rows) and " << gen.test_out << " ("
            << test_ds.size() << " rows)\n";
      }
      return 0;
    }

    if (cmd == "train") {
      TrainConfig cfg = stage("parse flags", [&] {
        TrainConfig c;
        c.hidden_widths = parse_width_list(tr.hidden);
        c.epochs = tr.epochs;
        c.batch_size = tr.batch_size;
        c.learning_rate = tr.lr;
        c.momentum = tr.momentum;
        c.init_seed = tr.seed;
        c.shuffle_seed = tr.shuffle_seed.value_or(tr.seed + kShuffleSeedOffset);
        c.validate();
        return c;
      });
      const Dataset ds = stage("load dataset", [&] {
        return split_part(load_dataset(tr.data), parse_split_kind(tr.split), parse_alpha(tr.alpha), tr.split_seed,
                          tr.part);
      });
      const auto result = stage("train", [&] { return train_with_log(ds, cfg); });
      stage("write model", [&] { save_model(result.model, tr.out); });
      out << "initial_loss: " << format_double(result.log.initial_loss) << '\n';
      for (std::size_t e = 0; e < result.log.epoch_mean_losses.size(); ++e)
        out << "epoch." << e << ".mean_loss: " << format_double(result.log.epoch_mean_losses[e]) << '\n';
      out << "train_accuracy: " << format_double(cross_entropy_accuracy(result.model, ds).accuracy) << '\n';
      return 0;
    }

    if (cmd == "merge") {
      MergeOptions opts = stage("parse flags", [&] {
        MergeOptions o;
        auto m = parse_method(mg.method);
        if (!m) throw ConfigError("unknown method '" + mg.method + "'");
        o.align.method = *m;
        o.align.cca = mg.gamma.base();
        o.repair = mg.repair;
        o.reference = mg.reference;
        if (o.reference >= mg.models.size()) throw ConfigError("--reference out of range");
        return o;
      });
      const auto models = stage("load models", [&] { return load_models(mg.models); });
      const Dataset probe_ds = stage("load probes", [&] { return load_dataset(mg.probes); });
      const Dataset eval_ds = mg.test.empty() ? probe_ds : stage("load test data", [&] { return load_dataset(mg.test); });
      const Matrix probes = probe_matrix(probe_ds, mg.probe_limit);
      const auto candidates = stage("parse flags", [&] { return mg.gamma.candidates(); });
      if (!candidates.empty() && opts.align.method == Method::CCA) {
        opts.align.cca = stage("gamma search", [&] {
          std::vector<std::pair<MlpModel, MlpModel>> pairs;
          for (std::size_t j = 0; j < models.size(); ++j)
            if (j != opts.reference) pairs.emplace_back(models[opts.reference], models[j]);
          return select_gamma_option(candidates, pairs, probes, probe_ds);
        });
      }
      const auto outcome = stage("merge", [&] { return run_merge(models, probes, opts); });
      MergeReport mr;
      stage("evaluate", [&] { fill_report(mr, models, outcome, opts, eval_ds, mg.grid); });
      Report r = mr.to_report();
      r.add("eval_set", std::string(mg.test.empty() ? "probes" : "test"));
      stage("write output", [&] {
        save_model(outcome.merged, mg.out);
        r.save(mg.report.empty() ? mg.out + ".report" : mg.report);
      });
      out << "merged_accuracy: " << format_double(mr.merged_accuracy) << '\n';
      return 0;
    }

    if (cmd == "eval") {
      const auto models = stage("load models", [&] { return load_models(ev.models); });
      const Dataset ds = stage("load dataset", [&] { return load_dataset(ev.data); });
      Report r = stage("evaluate", [&] {
        Report rep;
        rep.add("models", models.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < models.size(); ++i) {
          const auto la = cross_entropy_accuracy(models[i], ds);
          const std::string p = "model." + std::to_string(i) + ".";
          rep.add(p + "path", ev.models[i]);
          rep.add(p + "seed", models[i].seed_tag().value_or("none"));
          rep.add(p + "accuracy", la.accuracy);
          rep.add(p + "loss", la.loss);
          sum += la.accuracy;
        }
        if (models.size() > 1) {
          rep.add("base_models_avg", sum / static_cast<double>(models.size()));
          rep.add("ensemble_accuracy", ensemble_accuracy(models, ds));
        }
        return rep;
      });
      stage("write output", [&] { emit(r, ev.report, out); });
      return 0;
    }

    if (cmd == "barrier") {
      const auto method = stage("parse flags", [&] {
        auto m = parse_method(br.method);
        if (!m) throw ConfigError("unknown method '" + br.method + "'");
        if (*m != Method::Identity && br.probes.empty()) throw ConfigError("--probes is required to align");
        return *m;
      });
      const auto models = stage("load models", [&] { return load_models(br.models); });
      const Dataset ds = stage("load dataset", [&] { return load_dataset(br.data); });
      MlpModel other = models[1];
      if (method != Method::Identity) {
        other = stage("align", [&] {
          const Matrix probes = load_dataset(br.probes).features;
          return apply_plan(models[1], align(models[0], models[1], probes, AlignOptions{method, br.gamma.base()}));
        });
      }
      const auto curve = stage("evaluate", [&] { return interpolation_curve(models[0], other, ds, br.grid); });
      Report r;
      r.add("method", std::string(method_name(method)));
      r.add("grid", br.grid);
      r.add("barrier", curve.barrier);
      for (std::size_t k = 0; k < curve.lambdas.size(); ++k) {
        const std::string p = "point." + std::to_string(k) + ".";
        r.add(p + "lambda", curve.lambdas[k]);
        r.add(p + "loss", curve.losses[k]);
        r.add(p + "accuracy", curve.accuracies[k]);
      }
      stage("write output", [&] { emit(r, br.report, out); });
      return 0;
    }

    if (cmd == "analyze") {
      AnalysisOptions opts = stage("parse flags", [&] {
        AnalysisOptions o;
        o.cca = an.gamma.base();
        o.indirect_methods.clear();
        for (Method m : parse_method_list(an.methods))
          if (m != Method::Identity) o.indirect_methods.push_back(m);
        if (!an.gamma.search.empty()) throw ConfigError("analyze does not search gamma; pass --gamma");
        return o;
      });
      const auto models = stage("load models", [&] { return load_models(an.models); });
      const Matrix probes =
          stage("load probes", [&] { return probe_matrix(load_dataset(an.probes), an.probe_limit); });
      const Report r = stage("analyze", [&] { return analyze(models, probes, opts); });
      stage("write output", [&] { emit(r, an.report, out); });
      return 0;
    }

    if (cmd == "experiment") {
      ExperimentConfig cfg = stage("parse flags", [&] {
        ExperimentConfig c;
        c.methods = parse_method_list(ex.methods);
        c.models = ex.models;
        if (!ex.seeds.empty()) c.seeds = parse_seed_list(ex.seeds);
        c.split = parse_split_kind(ex.split);
        c.alpha = parse_alpha(ex.alpha);
        c.classes = ex.classes;
        c.per_class = ex.per_class;
        c.dim = ex.dim;
        c.data_seed = ex.data_seed;
        c.test_fraction = ex.test_fraction;
        c.train.hidden_widths = parse_width_list(ex.hidden);
        c.train.epochs = ex.epochs;
        c.train.batch_size = ex.batch_size;
        c.train.learning_rate = ex.lr;
        c.train.momentum = ex.momentum;
        c.train.validate();
        c.cca = ex.gamma.base();
        c.gamma_search = ex.gamma.candidates();
        c.repair = ex.repair;
        c.reference = ex.reference;
        c.probe_limit = ex.probe_limit;
        c.grid_size = ex.grid;
        return c;
      });
      const auto res = stage("experiment", [&] { return run_experiment(cfg); });
      Report r;
      r.add("timestamp", timestamp_now());
      r.append(res.report);
      stage("write output", [&] {
        std::string report_path = ex.report;
        if (!ex.out.empty()) {
          namespace fs = std::filesystem;
          fs::create_directories(ex.out);
          const fs::path dir(ex.out);
          save_dataset(res.train_ds, (dir / "train.data").string());
          save_dataset(res.test_ds, (dir / "test.data").string());
          for (std::size_t i = 0; i < res.models.size(); ++i)
            save_model(res.models[i], (dir / ("model_" + std::to_string(i) + ".model")).string());
          for (const auto& m : res.merges) {
            const std::string name(method_name(m.report.method));
            save_model(m.merged, (dir / ("merged_" + name + ".model")).string());
          }
          if (report_path.empty()) report_path = (dir / "report.txt").string();
        }
        emit(r, report_path, out);
      });
      return 0;
    }
  } catch (const StageError& e) {
    err << "fuselab " << cmd << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "fuselab " << cmd << ": " << e.what() << '\n';
    return 1;
  }
  return 1;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args), out, err);
}

}  // namespace fuselab::cli
