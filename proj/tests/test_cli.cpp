#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fuselab/cli.hpp"
#include "support.hpp"

using namespace fuselab;
using namespace fuselab::test;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(std::move(args), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small task so each CLI round trip stays fast.
const std::vector<std::string> kTask{"--classes", "4", "--per-class", "40", "--dim", "5"};
const std::vector<std::string> kTrain{"--hidden", "12,10", "--epochs", "3"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string without_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("timestamp: ", 0) != 0) out += line + '\n';
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Cli, StepwisePathMatchesExperiment) {
  TempDir dir;
  const auto exp = invoke(cat(cat({"experiment", "--methods", "direct,permute,cca", "--out", dir.file("exp")}, kTask),
                           kTrain));
  ASSERT_EQ(exp.code, 0) << exp.err;
  const Report er = Report::load(dir.file("exp/report.txt"));

  ASSERT_EQ(invoke(cat({"gen-data", "--out", dir.file("train.data"), "--test-out", dir.file("test.data")}, kTask)).code,
            0);
  EXPECT_EQ(load_dataset(dir.file("train.data")), load_dataset(dir.file("exp/train.data")));
  EXPECT_EQ(load_dataset(dir.file("test.data")), load_dataset(dir.file("exp/test.data")));
  for (int i = 0; i < 2; ++i) {
    const std::string m = dir.file("m" + std::to_string(i) + ".model");
    const auto tr = invoke(cat({"train", "--data", dir.file("train.data"), "--out", m, "--seed", std::to_string(i)}, kTrain));
    ASSERT_EQ(tr.code, 0) << tr.err;
    EXPECT_NE(tr.out.find("train_accuracy: "), std::string::npos);
    EXPECT_EQ(load_model(m), load_model(dir.file("exp/model_" + std::to_string(i) + ".model")));
  }
  for (const std::string method : {"direct", "permute", "cca"}) {
    const std::string out = dir.file("merged_" + method + ".model");
    const auto mg = invoke({"merge", dir.file("m0.model"), dir.file("m1.model"), "--method", method, "--probes",
                         dir.file("train.data"), "--test", dir.file("test.data"), "--out", out});
    ASSERT_EQ(mg.code, 0) << mg.err;
    EXPECT_LE(max_model_diff(load_model(out), load_model(dir.file("exp/merged_" + method + ".model"))), 1e-12);
    const Report mr = Report::load(out + ".report");
    EXPECT_EQ(mr.get("eval_set"), "test");
    EXPECT_NEAR(mr.get_double("merged_accuracy"), er.get_double("row." + method + ".merged_accuracy"), 1e-12);
    EXPECT_NEAR(mr.get_double("barrier"), er.get_double("row." + method + ".barrier"), 1e-12);

    const auto ev = invoke({"eval", out, "--data", dir.file("test.data")});
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_NEAR(Report::parse(ev.out).get_double("model.0.accuracy"),
                er.get_double("row." + method + ".merged_accuracy"), 1e-12);
  }
  const auto ev = invoke({"eval", dir.file("m0.model"), dir.file("m1.model"), "--data", dir.file("test.data")});
  const Report r = Report::parse(ev.out);
  EXPECT_NEAR(r.get_double("ensemble_accuracy"), er.get_double("ensemble_accuracy"), 1e-12);
  EXPECT_NEAR(r.get_double("base_models_avg"), er.get_double("base_models_avg"), 1e-12);
}

TEST(Cli, ExperimentIsDeterministic) {
  const auto args = cat(cat({"experiment", "--methods", "permute,cca", "--models", "3"}, kTask), kTrain);
  const auto a = invoke(args);
  const auto b = invoke(args);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out.find("timestamp: "), a.out.find('\n') + 1);
  EXPECT_EQ(without_timestamp(a.out), without_timestamp(b.out));
}

TEST(Cli, ConfigFilePrecedence) {
  TempDir dir;
  {
    std::ofstream cfg(dir.file("c.cfg"));
    cfg << "# comment\nclasses = 6\nper-class = 30\ndim = 3\nepochs = 2\nhidden = 8\nmethods = direct\nrepair = true\n";
  }
  const auto r = invoke({"experiment", "--config", dir.file("c.cfg"), "--classes", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Report rep = Report::parse(r.out);
  EXPECT_EQ(rep.get("data.classes"), "4");       // flag beats config
  EXPECT_EQ(rep.get("data.per_class"), "30");    // config beats default
  EXPECT_EQ(rep.get("train.batch_size"), std::to_string(TrainConfig{}.batch_size));  // default
  EXPECT_EQ(rep.get("merge.repair"), "true");
  EXPECT_EQ(rep.get("experiment.methods"), "direct");

  {
    std::ofstream bad(dir.file("bad.cfg"));
    bad << "classes = 4\nnot a pair\n";
  }
  const auto b = invoke({"experiment", "--config=" + dir.file("bad.cfg")});
  EXPECT_EQ(b.code, 2);
  EXPECT_NE(b.err.find("bad.cfg:2"), std::string::npos) << b.err;
}

TEST(Cli, ErrorsAreReported) {
  EXPECT_NE(invoke({"train", "--data", "x", "--out", "y", "--bogus"}).code, 0);
  EXPECT_NE(invoke({}).code, 0);
  EXPECT_NE(invoke({"frobnicate"}).code, 0);

  const auto missing = invoke({"eval", "/nonexistent/dir/m.model", "--data", "/nonexistent/d.data"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("/nonexistent/dir/m.model"), std::string::npos) << missing.err;
  EXPECT_NE(missing.err.find("fuselab eval"), std::string::npos);

  const auto bad_method = invoke(cat({"experiment", "--methods", "average"}, kTask));
  EXPECT_EQ(bad_method.code, 1);
  EXPECT_NE(bad_method.err.find("average"), std::string::npos);

  const auto dup = invoke(cat(cat({"experiment", "--methods", "cca,cca"}, kTask), kTrain));
  EXPECT_EQ(dup.code, 1);
}

TEST(Cli, DirichletSplitExperimentSchema) {
  const auto r = invoke(cat(cat({"experiment", "--split", "dirichlet", "--alpha", "0.5,0.5", "--methods", "permute,cca"},
                             kTask),
                         kTrain));
  ASSERT_EQ(r.code, 0) << r.err;
  const Report rep = Report::parse(r.out);
  EXPECT_EQ(rep.get("experiment.split"), "dirichlet");
  EXPECT_TRUE(rep.has("experiment.alpha"));
  EXPECT_EQ(rep.get_double("data.part.0.size") + rep.get_double("data.part.1.size"),
            rep.get_double("data.train_size"));
  for (const std::string m : {"permute", "cca"}) {
    for (const std::string k : {"merged_accuracy", "merged_loss", "barrier", "repair_unscaled"})
      EXPECT_TRUE(rep.has("row." + m + "." + k)) << m << " " << k;
    const double acc = rep.get_double("row." + m + ".merged_accuracy");
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
  }
  EXPECT_TRUE(rep.has("row.cca.cca.model.1.layer.0.corr_mean"));
  EXPECT_FALSE(rep.has("row.direct.merged_accuracy"));

  const auto three = invoke(cat({"experiment", "--split", "dirichlet", "--models", "3"}, kTask));
  EXPECT_EQ(three.code, 1);
}

TEST(Cli, BarrierAndAnalyzeCommands) {
  TempDir dir;
  ASSERT_EQ(invoke(cat({"gen-data", "--out", dir.file("d.data")}, kTask)).code, 0);
  for (int i = 0; i < 3; ++i) {
    ASSERT_EQ(invoke(cat({"train", "--data", dir.file("d.data"), "--out", dir.file(std::to_string(i) + ".model"), "--seed",
                       std::to_string(i)},
                      kTrain))
                  .code,
              0);
  }
  const auto self = invoke({"barrier", dir.file("0.model"), dir.file("0.model"), "--data", dir.file("d.data")});
  ASSERT_EQ(self.code, 0) << self.err;
  const Report sb = Report::parse(self.out);
  EXPECT_NEAR(sb.get_double("barrier"), 0.0, 1e-10);
  EXPECT_EQ(sb.get("grid"), "21");
  EXPECT_TRUE(sb.has("point.20.lambda"));

  const auto no_probes =
      invoke({"barrier", dir.file("0.model"), dir.file("1.model"), "--data", dir.file("d.data"), "--method", "cca"});
  EXPECT_EQ(no_probes.code, 1);

  const auto aligned = invoke({"barrier", dir.file("0.model"), dir.file("1.model"), "--data", dir.file("d.data"),
                            "--method", "permute", "--probes", dir.file("d.data"), "--grid", "5"});
  ASSERT_EQ(aligned.code, 0) << aligned.err;
  EXPECT_TRUE(Report::parse(aligned.out).has("point.4.loss"));

  const auto an = invoke({"analyze", dir.file("0.model"), dir.file("1.model"), dir.file("2.model"), "--probes",
                       dir.file("d.data"), "--report", dir.file("an.txt")});
  ASSERT_EQ(an.code, 0) << an.err;
  const Report ar = Report::load(dir.file("an.txt"));
  EXPECT_TRUE(ar.has("mean.non_optimal_pct"));
  EXPECT_TRUE(ar.has("indirect.cca.layer.1.frobenius_normalized"));
  EXPECT_NE(invoke({"analyze", dir.file("0.model"), dir.file("1.model"), "--probes", dir.file("d.data"),
                 "--gamma-search", "0.1,1"})
                .code,
            0);
}

TEST(Cli, MergeGammaSearchAndRepair) {
  TempDir dir;
  ASSERT_EQ(invoke(cat({"gen-data", "--out", dir.file("d.data")}, kTask)).code, 0);
  for (int i = 0; i < 2; ++i)
    ASSERT_EQ(invoke(cat({"train", "--data", dir.file("d.data"), "--out", dir.file(std::to_string(i) + ".model"), "--seed",
                       std::to_string(i)},
                      kTrain))
                  .code,
              0);
  const auto r = invoke({"merge", dir.file("0.model"), dir.file("1.model"), "--probes", dir.file("d.data"), "--out",
                      dir.file("m.model"), "--gamma-search", "0.001,0.1", "--relative", "--repair", "--report",
                      dir.file("m.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Report rep = Report::load(dir.file("m.txt"));
  EXPECT_EQ(rep.get("eval_set"), "probes");
  EXPECT_EQ(rep.get("repair"), "true");
  const std::string g = rep.get("gamma");
  EXPECT_TRUE(g == "relative=0.001" || g == "relative=0.10000000000000001") << g;
  EXPECT_TRUE(model_finite(load_model(dir.file("m.model"))));
  EXPECT_FALSE(slurp(dir.file("m.txt")).empty());
}
