#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "xmam/benchmark.hpp"
#include "xmam/errors.hpp"
#include "xmam/nn.hpp"
#include "xmam/simulation.hpp"

namespace xmam {
namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.num_clients = 10;
  c.tau = 5;
  c.malicious_fraction = 0.2;
  c.global_iterations = 3;
  c.batch_size = 8;
  c.lr = 0.05;
  c.data.kind = DatasetKind::synthetic;
  c.data.synthetic = {3, 40, 8, 6.0, 1};
  c.data.synthetic_test_per_class = 20;
  c.data.dirichlet_alpha = 10.0;
  c.model.preset = "mlp";
  c.model.hidden = 8;
  c.attack.trigger = {1, Corner::top_left, 0, 8.0};
  c.aggregator.kind = AggregatorKind::fedavg;
  return c;
}

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(ExperimentConfig{}.validate()); }

TEST(Config, RejectsHalfMalicious) {
  ExperimentConfig c = small_config();
  c.malicious_fraction = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.malicious_fraction = 0.49;
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsBadValues) {
  auto expect_bad = [](auto mutate) {
    ExperimentConfig c = small_config();
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  expect_bad([](ExperimentConfig& c) { c.tau = 11; });
  expect_bad([](ExperimentConfig& c) { c.tau = 0; });
  expect_bad([](ExperimentConfig& c) { c.lr = 0.0; });
  expect_bad([](ExperimentConfig& c) { c.momentum = 1.0; });
  expect_bad([](ExperimentConfig& c) { c.warmup_lr = -1.0; });
  expect_bad([](ExperimentConfig& c) { c.model.preset = "resnet"; });
  expect_bad([](ExperimentConfig& c) { c.attack.poison_fraction = 1.0; });
  expect_bad([](ExperimentConfig& c) { c.attack.epsilon = 0.0; c.attack.mode = AttackMode::pgd; });
  expect_bad([](ExperimentConfig& c) {
    c.malicious_fraction = 0.0;
    c.attack.adaptive = AdaptiveKind::krum_attack;
  });
  expect_bad([](ExperimentConfig& c) {
    c.aggregator.kind = AggregatorKind::krum;
    c.aggregator.f = 3;
  });
}

TEST(Config, LearningRateSchedule) {
  const ExperimentConfig c;
  EXPECT_DOUBLE_EQ(c.lr_at(0), 1e-3);
  EXPECT_NEAR(c.lr_at(100), 8.186e-4, 1e-7);
}

TEST(Config, MaliciousCountsRound) {
  ExperimentConfig c;
  EXPECT_EQ(c.malicious_clients(), 40u);
  EXPECT_EQ(c.malicious_per_round(), 6u);
  c.tau = 7;
  c.malicious_fraction = 0.3;
  EXPECT_EQ(c.malicious_per_round(), 2u);
}

TEST(Enums, RoundTrip) {
  for (auto k : {AttackKind::none, AttackKind::trigger, AttackKind::subpopulation})
    EXPECT_EQ(parse_attack_kind(to_string(k)), k);
  for (auto m : {AttackMode::blackbox, AttackMode::pgd, AttackMode::smp})
    EXPECT_EQ(parse_attack_mode(to_string(m)), m);
  for (auto a : {AdaptiveKind::none, AdaptiveKind::krum_attack, AdaptiveKind::xmam_attack})
    EXPECT_EQ(parse_adaptive_kind(to_string(a)), a);
  EXPECT_THROW(parse_attack_mode("whitebox"), ArgumentError);
}

// --- metrics -------------------------------------------------------------------

struct Metrics : ::testing::Test {
  ExperimentConfig config = small_config();
  ExperimentData data = load_experiment_data(config.data);
  Federation fed = build_federation(config, data);
};

TEST_F(Metrics, AlwaysTargetModelHasFullSuccess) {
  ParamVector w(fed.spec.param_count());
  const std::size_t classes = 3;
  w[w.size() - classes + static_cast<std::size_t>(fed.backdoor.target_label)] = 5.0;
  EXPECT_EQ(attack_success_rate(w, fed.spec, fed.backdoor), 1.0);
  EXPECT_NEAR(testing_error_rate(w, fed.spec, fed.test), 2.0 / 3.0, 1e-12);
}

TEST_F(Metrics, SuccessRateMatchesPredictionCount) {
  const ParamVector w = init_params(fed.spec, 17);
  std::size_t hits = 0;
  for (const Tensor& x : fed.backdoor.test_set.inputs)
    hits += predict(w, fed.spec, x) == static_cast<std::size_t>(fed.backdoor.target_label);
  EXPECT_DOUBLE_EQ(attack_success_rate(w, fed.spec, fed.backdoor),
                   static_cast<Scalar>(hits) / static_cast<Scalar>(fed.backdoor.test_set.size()));
}

TEST_F(Metrics, UniformRandomPredictorNearChance) {
  // Ten classes, random labels, a model that predicts a fixed class.
  Dataset d;
  d.num_classes = 10;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 400; ++i) {
    d.inputs.push_back(Tensor({1, 1, 8}, 0.0));
    d.labels.push_back(static_cast<int>(rng() % 10));
  }
  const NetworkSpec spec = mlp({1, 1, 8}, 4, 10);
  ParamVector w(spec.param_count());
  w[w.size() - 10 + 3] = 1.0;
  const Scalar err = testing_error_rate(w, spec, d);
  EXPECT_NEAR(1.0 - err, 0.1, 0.05);
}

TEST_F(Metrics, EmptySetsThrow) {
  const ParamVector w(fed.spec.param_count());
  EXPECT_THROW(testing_error_rate(w, fed.spec, Dataset{}), ArgumentError);
  EXPECT_THROW(attack_success_rate(w, fed.spec, BackdoorTask{}), ArgumentError);
}

TEST_F(Metrics, BackdoorTaskExcludesTargetClass) {
  ASSERT_FALSE(fed.backdoor.test_set.empty());
  for (int y : fed.backdoor.test_set.labels) EXPECT_NE(y, fed.backdoor.target_label);
}

// --- rounds ----------------------------------------------------------------------

struct Rounds : Metrics {
  TrainingState start() const { return {init_params(fed.spec, 3), 0}; }
};

TEST_F(Rounds, SamplesExactMaliciousCount) {
  config.tau = 6;
  config.malicious_fraction = 0.3;
  fed = build_federation(config, data);
  TrainingState s = start();
  for (int t = 0; t < 4; ++t) {
    const RoundOutput out = run_round(fed, config, s);
    EXPECT_EQ(out.report.sampled_ids.size(), 6u);
    EXPECT_TRUE(std::is_sorted(out.report.sampled_ids.begin(), out.report.sampled_ids.end()));
    EXPECT_EQ(std::count(out.report.sampled_malicious.begin(), out.report.sampled_malicious.end(), true),
              static_cast<std::ptrdiff_t>(config.malicious_per_round()));
    s = out.state;
  }
}

TEST_F(Rounds, GlobalStepIsEtaTimesAggregate) {
  config.aggregator.eta_g = 0.5;
  const TrainingState s = start();
  const RoundOutput out = run_round(fed, config, s);
  const ParamVector avg = fedavg(out.updates);
  ASSERT_EQ(out.state.round, 1u);
  for (std::size_t i = 0; i < avg.size(); ++i)
    EXPECT_NEAR(out.state.global[i] - s.global[i], 0.5 * avg[i], 1e-14);
}

TEST_F(Rounds, ZeroServerRateKeepsModel) {
  config.aggregator.eta_g = 0.0;
  const TrainingState s = start();
  EXPECT_EQ(run_round(fed, config, s).state.global, s.global);
}

TEST_F(Rounds, PgdIsProjectedBlackbox) {
  const TrainingState s = start();
  const RoundOutput black = run_round(fed, config, s);
  ExperimentConfig pgd = config;
  pgd.attack.mode = AttackMode::pgd;
  pgd.attack.epsilon = 0.01;
  const RoundOutput projected = run_round(fed, pgd, s);
  ASSERT_EQ(black.report.sampled_ids, projected.report.sampled_ids);
  std::size_t checked = 0;
  for (std::size_t k = 0; k < black.updates.size(); ++k) {
    if (black.report.sampled_malicious[k]) {
      EXPECT_EQ(projected.updates[k], pgd_project(black.updates[k], 0.01));
      ++checked;
    } else {
      EXPECT_EQ(projected.updates[k], black.updates[k]);
    }
  }
  EXPECT_EQ(checked, config.malicious_per_round());
}

TEST_F(Rounds, XmamOnIdenticalUpdatesMatchesFedavg) {
  // Every client holds the same single example, so every update is bit-identical.
  Federation same = fed;
  for (ClientShard& sh : same.shards) {
    sh.clean = data.train.subset(std::vector<std::size_t>{0});
    sh.source_indices = {0};
    sh.poisoned = Dataset{};
    sh.is_malicious = false;
  }
  same.malicious_ids.clear();
  ExperimentConfig c = config;
  c.malicious_fraction = 0.0;
  c.attack.kind = AttackKind::none;
  const TrainingState s = start();
  const RoundOutput avg = run_round(same, c, s);
  c.aggregator.kind = AggregatorKind::xmam;
  const RoundOutput x = run_round(same, c, s);
  EXPECT_EQ(x.report.preserved_ids, x.report.sampled_ids);
  for (std::size_t i = 0; i < avg.state.global.size(); ++i)
    EXPECT_NEAR(x.state.global[i], avg.state.global[i], 1e-15);
}

TEST_F(Rounds, DiagnosticsStoredOnSchedule) {
  config.diagnostics_every = 2;
  TrainingState s = start();
  for (std::size_t t = 0; t < 3; ++t) {
    const RoundOutput out = run_round(fed, config, s);
    EXPECT_EQ(out.report.diagnostics.has_value(), t % 2 == 0);
    if (out.report.diagnostics) {
      EXPECT_EQ(out.report.diagnostics->slous.size(), config.tau);
      EXPECT_EQ(out.report.diagnostics->update_pca.size(), config.tau);
      EXPECT_EQ(out.report.diagnostics->update_norms.size(), config.tau);
    }
    s = out.state;
  }
}

TEST_F(Rounds, AdaptiveAttackRecordsLambda) {
  config.attack.adaptive = AdaptiveKind::krum_attack;
  config.aggregator.kind = AggregatorKind::krum;
  fed = build_federation(config, data);
  const RoundOutput out = run_round(fed, config, start());
  ASSERT_TRUE(out.report.diagnostics && out.report.diagnostics->lambda_search);
  const Scalar lambda = out.report.diagnostics->lambda_search->lambda;
  EXPECT_GT(lambda, 0.0);
  EXPECT_LE(lambda, 1.0);
  std::vector<std::size_t> mal;
  for (std::size_t k = 0; k < out.updates.size(); ++k)
    if (out.report.sampled_malicious[k]) mal.push_back(k);
  ASSERT_FALSE(mal.empty());
  for (std::size_t k : mal) EXPECT_EQ(out.updates[k], out.updates[mal[0]]);
}

TEST_F(Rounds, WrongModelSizeThrows) {
  EXPECT_THROW(run_round(fed, config, {ParamVector(3), 0}), DimensionError);
}

// --- experiments ---------------------------------------------------------------

TEST(Experiment, ZeroIterationsReturnInitialModel) {
  ExperimentConfig c = small_config();
  c.global_iterations = 0;
  const ExperimentData data = load_experiment_data(c.data);
  const ExperimentResult r = run_experiment(c, data);
  EXPECT_TRUE(r.reports.empty());
  EXPECT_EQ(r.final_model, initial_model(build_federation(c, data), c));
}

TEST(Experiment, DeterministicUnderSeed) {
  ExperimentConfig c = small_config();
  c.aggregator.kind = AggregatorKind::xmam;
  c.warmup_rounds = 2;
  const ExperimentData data = load_experiment_data(c.data);
  const ExperimentResult a = run_experiment(c, data), b = run_experiment(c, data);
  EXPECT_EQ(a.final_model, b.final_model);
  ASSERT_EQ(a.reports.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(a.reports[t].preserved_ids, b.reports[t].preserved_ids);
    EXPECT_EQ(a.reports[t].test_error, b.reports[t].test_error);
    EXPECT_EQ(a.reports[t].iteration, t);
  }
  c.seed = 1;
  EXPECT_NE(run_experiment(c, data).final_model, a.final_model);
}

TEST(Experiment, SharedStartMatchesInternalWarmup) {
  ExperimentConfig c = small_config();
  c.warmup_rounds = 3;
  const ExperimentData data = load_experiment_data(c.data);
  const ParamVector w0 = initial_model(build_federation(c, data), c);
  EXPECT_EQ(run_experiment(c, data, {}, &w0).final_model, run_experiment(c, data).final_model);
  const ParamVector bad(2);
  EXPECT_THROW(run_experiment(c, data, {}, &bad), DimensionError);
}

TEST(Experiment, SinksSeeEveryRound) {
  ExperimentConfig c = small_config();
  const ExperimentData data = load_experiment_data(c.data);
  std::vector<std::size_t> seen;
  run_experiment(c, data, {[&](const RoundReport& r) { seen.push_back(r.iteration); }});
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Experiment, SubpopulationAttackBuilds) {
  ExperimentConfig c = small_config();
  c.attack.kind = AttackKind::subpopulation;
  c.attack.source_class = 1;
  c.attack.tail_fraction = 0.2;
  const ExperimentData data = load_experiment_data(c.data);
  const Federation fed = build_federation(c, data);
  EXPECT_FALSE(fed.backdoor.test_set.empty());
  for (std::size_t id : fed.malicious_ids) EXPECT_FALSE(fed.shards[id].poisoned.empty());
  std::size_t benign_total = 0;
  for (const ClientShard& s : fed.shards) benign_total += s.clean.size();
  EXPECT_EQ(benign_total + fed.backdoor.source_indices.size(), data.train.size());
}

// --- screening cost ------------------------------------------------------------

TEST(Screening, FedavgHasNoScreening) {
  ScreeningOptions o;
  o.aggregators = {AggregatorKind::fedavg};
  o.tau = 10;
  o.zeta = 20000;
  o.repeats = 3;
  o.f = 2;
  EXPECT_EQ(screening_benchmark(o).row(AggregatorKind::fedavg).mean_seconds, 0.0);
}

TEST(Screening, KrumCostGrowsQuadraticallyInTau) {
  ScreeningOptions o;
  o.aggregators = {AggregatorKind::krum};
  o.zeta = 400000;
  o.repeats = 3;
  o.f = 2;
  o.tau = 10;
  const Scalar small = screening_benchmark(o).row(AggregatorKind::krum).mean_seconds;
  o.tau = 20;
  const Scalar large = screening_benchmark(o).row(AggregatorKind::krum).mean_seconds;
  EXPECT_GE(large / small, 3.0);
}

// --- benign-only fidelity -------------------------------------------------------

// With no malicious clients, XMAM should keep every sampled update in almost
// every round. Runs on the bundled digit images.
TEST(Invariant, BenignRoundsPreserveEveryone) {
  ExperimentConfig c;
  c.num_clients = 50;
  c.tau = 10;
  c.malicious_fraction = 0.0;
  c.global_iterations = 20;
  c.lr = 0.05;
  c.lr_decay = 1.0;
  c.data.mnist_dir = XMAM_TEST_MNIST_DIR;
  c.data.dirichlet_alpha = 10.0;
  c.attack.kind = AttackKind::none;
  c.aggregator.kind = AggregatorKind::xmam;
  c.diagnostics_every = 0;
  const ExperimentResult r = run_experiment(c, load_experiment_data(c.data));
  std::size_t full = 0;
  for (const RoundReport& rep : r.reports) full += rep.preserved_ids.size() == c.tau;
  EXPECT_GE(static_cast<Scalar>(full), 0.95 * static_cast<Scalar>(r.reports.size()))
      << full << " of " << r.reports.size() << " rounds kept all " << c.tau << " updates";
}

}  // namespace
}  // namespace xmam
