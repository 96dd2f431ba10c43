#include "ldnn/error.hpp"
#include "ldnn/metalearn.hpp"
#include "ldnn/tasks.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>

using namespace ldnn;

namespace {

using State = OscillatorState<double>;

State integrate(State s, double h, double mu, double t_end) {
  const long n = std::lround(t_end / h);
  for (long i = 0; i < n; ++i) s = rk4_step(s, h, mu);
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ldnn_test_tasks_" + name);
}

}  // namespace

TEST(Container, RoundTripClassification) {
  Dataset d = generate_synthetic_1d(3, 2);
  const std::string path = temp_file("rt.dsv").string();
  save_dataset(d, path);
  const Dataset back = load_dataset(path);
  EXPECT_EQ(back.inputs.rows(), 2);
  EXPECT_EQ(back.inputs.cols(), 40);
  EXPECT_TRUE(back == d);
  std::filesystem::remove(path);
}

TEST(Container, RoundTripRegression) {
  VdpForecastParams p;
  p.n_transient = 10;
  p.n_samples = 50;
  const VdpForecastData v = build_vdp_forecast_dataset(p, 1);
  const Dataset back = parse_dataset(format_dataset(v.val));
  EXPECT_TRUE(back == v.val);
}

TEST(Container, Errors) {
  EXPECT_THROW(parse_dataset("#dsv1 task=classification D=2 K=3 M=0\n"), ParseError);
  try {
    parse_dataset("#dsv1 task=classification D=2 K=3 M=0\n");
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("no examples"), std::string::npos);
  }
  EXPECT_THROW(parse_dataset("#dsv1 task=classification D=2 K=10 M=1\n0.5,0.5,10\n"), ParseError);
  EXPECT_THROW(parse_dataset("#dsv1 task=regression D=1 O=1 M=1 split=dev\n1,2\n"), ParseError);
  EXPECT_THROW(parse_dataset("#dsv1 task=classification D=2 K=10 M=1\n0.5,x,1\n"), ParseError);
  EXPECT_THROW(parse_dataset("#dsv1 task=classification D=2 K=10 M=2\n0.5,0.5,1\n"), ParseError);
  EXPECT_THROW(parse_dataset("0.5,0.5,1\n"), ParseError);
  EXPECT_THROW(load_dataset(temp_file("missing.dsv").string()), IoError);
}

TEST(Container, ErrorNamesTheLine) {
  try {
    parse_dataset("#dsv1 task=regression D=1 O=1 M=2\n1,2\n3,oops\n", "f.dsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("f.dsv:3"), std::string::npos) << e.what();
  }
}

TEST(Synthetic, DegenerateGeneratorCollapsesToTemplates) {
  Synthetic1dParams p;
  p.pad_lo = p.pad_hi = 40;
  p.scale_coeff = 0;
  p.max_translation = 0;
  p.corr_noise = 0;
  p.iid_noise = 0;
  p.shear = 0;
  const Dataset d = generate_synthetic_1d(5, 300, p);
  std::array<Eigen::RowVectorXd, 10> tmpl;
  for (int k = 0; k < 10; ++k) tmpl[static_cast<std::size_t>(k)] = d.inputs.row(k);
  long correct = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    int best = 0;
    double bd = 1e300;
    for (int k = 0; k < 10; ++k) {
      const double dist = (d.inputs.row(i) - tmpl[static_cast<std::size_t>(k)]).squaredNorm();
      if (dist < bd) bd = dist, best = k;
    }
    correct += best == d.labels[static_cast<std::size_t>(i)];
  }
  EXPECT_EQ(correct, d.size());
}

TEST(Synthetic, Deterministic) {
  EXPECT_TRUE(generate_synthetic_1d(9, 100) == generate_synthetic_1d(9, 100));
  EXPECT_FALSE(generate_synthetic_1d(9, 100) == generate_synthetic_1d(10, 100));
}

TEST(Synthetic, ShapeAndBalance) {
  const Dataset d = generate_synthetic_1d(2, 1000);
  EXPECT_EQ(d.input_dim(), 40);
  EXPECT_EQ(d.num_classes, 10);
  std::array<int, 10> count{};
  for (int y : d.labels) ++count[static_cast<std::size_t>(y)];
  for (int c : count) {
    EXPECT_GE(c, 90);
    EXPECT_LE(c, 110);
  }
  EXPECT_TRUE(d.inputs.allFinite());
  EXPECT_THROW(generate_synthetic_1d(1, 0), ConfigError);
}

TEST(Synthetic, NotLinearlyEasy) {
  const auto [tr, va] = split_dataset(generate_synthetic_1d(11, 4000), 0.8, 12);
  auto fit = [&](Builtin act) {
    NetworkConfig c;
    c.input_dim = 40;
    c.output_dim = 10;
    c.activations = {act};
    c.hidden = {interleaved_layer(100, 1)};
    TrainSchedule s;
    s.epochs = 30;
    s.seed = 13;
    s.snapshot_interval = 0;
    return evaluate(c, train(c, s, tr, va).params, va);
  };
  const double linear = fit(Builtin::Identity);
  const double relu = fit(Builtin::Relu);
  EXPECT_LT(linear, relu) << "linear " << linear << " relu " << relu;
}

TEST(Split, PartitionsRows) {
  const Dataset d = generate_synthetic_1d(4, 100);
  const auto [a, b] = split_dataset(d, 0.8, 5);
  EXPECT_EQ(a.size(), 80);
  EXPECT_EQ(b.size(), 20);
  EXPECT_EQ(a.split, Split::Train);
  EXPECT_EQ(b.split, Split::Val);
  EXPECT_THROW(split_dataset(d, 1.0, 5), ConfigError);
}

TEST(Vdp, DerivativeExamples) {
  auto [dx0, dv0] = vdp_derivative(State{0, 0, 0}, 2.7);
  EXPECT_EQ(dx0, 0.0);
  EXPECT_EQ(dv0, 0.0);
  auto [dx1, dv1] = vdp_derivative(State{1, 1, 0}, 2.7);
  EXPECT_EQ(dx1, 1.0);
  EXPECT_EQ(dv1, -1.0);
  for (double mu : {0.0, 1.0, 2.7}) {
    auto [dx, dv] = vdp_derivative(State{2, 0, 0}, mu);
    EXPECT_EQ(dx, 0.0);
    EXPECT_EQ(dv, -2.0);
  }
}

TEST(Vdp, HarmonicPeriod) {
  const State s = integrate({1, 0, 0}, 1e-3, 0.0, 2 * std::numbers::pi);
  // 2*pi is not a multiple of h; finish with one partial step.
  const double rest = 2 * std::numbers::pi - s.t;
  const State end = rest > 0 ? rk4_step(s, rest, 0.0) : s;
  EXPECT_NEAR(end.x, 1.0, 1e-9);
  EXPECT_NEAR(end.v, 0.0, 1e-9);
}

TEST(Vdp, FourthOrderConvergence) {
  const double mu = 2.7, t = 1.0;
  const State ref = integrate({1, 0, 0}, 1e-3, mu, t);
  auto err = [&](double h) {
    const State s = integrate({1, 0, 0}, h, mu, t);
    return std::hypot(s.x - ref.x, s.v - ref.v);
  };
  const double ratio = err(0.02) / err(0.01);
  EXPECT_GE(ratio, 8.0);
  EXPECT_LE(ratio, 32.0);
}

TEST(Vdp, SmallStepIsEuler) {
  const State s{0.3, -0.7, 0};
  for (double h : {1e-3, 1e-4}) {
    const State n = rk4_step(s, h, 2.7);
    auto [dx, dv] = vdp_derivative(s, 2.7);
    EXPECT_LT(std::abs(n.x - (s.x + h * dx)), 10 * h * h);
    EXPECT_LT(std::abs(n.v - (s.v + h * dv)), 10 * h * h);
    EXPECT_EQ(n.t, h);
  }
}

TEST(Vdp, HarmonicEnergyConserved) {
  State s{1, 0, 0};
  const double e0 = 0.5;
  for (int i = 0; i < 10000; ++i) s = rk4_step(s, 1e-3, 0.0);
  EXPECT_LT(std::abs((s.x * s.x + s.v * s.v) / 2 - e0) / e0, 1e-8);
}

TEST(Vdp, LimitCycleAmplitude) {
  State s = integrate({1, 0, 0}, 1e-3, 2.7, 100.0);
  double amp = 0.0;
  for (int i = 0; i < 20000; ++i) {
    s = rk4_step(s, 1e-3, 2.7);
    amp = std::max(amp, std::abs(s.x));
  }
  EXPECT_NEAR(amp, 2.0, 0.2);
}

TEST(Vdp, DatasetStandardized) {
  const VdpForecastData v = build_vdp_forecast_dataset({}, 7);
  EXPECT_EQ(v.train.size(), 3200);
  EXPECT_EQ(v.val.size(), 800);
  EXPECT_EQ(v.train.kind, TaskKind::Regression);
  EXPECT_EQ(v.train.output_dim(), 2);
  const Eigen::RowVectorXd mean = v.train.inputs.colwise().mean();
  const Eigen::RowVectorXd var =
      (v.train.inputs.rowwise() - mean).array().square().colwise().mean();
  for (int j = 0; j < 2; ++j) {
    EXPECT_LT(std::abs(mean(j)), 1e-10);
    EXPECT_LT(std::abs(var(j) - 1.0), 1e-10);
  }
  const Tensor raw = v.transform.invert(v.train.inputs);
  EXPECT_LT((v.transform.apply(raw) - v.train.inputs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Vdp, ConsecutiveSampling) {
  VdpForecastParams p;
  p.n_samples = 400;
  const VdpForecastData v = build_vdp_forecast_dataset(p, 8);
  Tensor inputs(400, 2), targets(400, 2);
  inputs << v.transform.invert(v.train.inputs), v.transform.invert(v.val.inputs);
  targets << v.transform.invert(v.train.targets), v.transform.invert(v.val.targets);
  // Every target but the last one in time is some other sample's input.
  int unmatched = 0;
  for (Eigen::Index i = 0; i < 400; ++i) {
    double best = 1e300;
    for (Eigen::Index j = 0; j < 400; ++j) best = std::min(best, (targets.row(i) - inputs.row(j)).norm());
    unmatched += best > 1e-12;
  }
  EXPECT_EQ(unmatched, 1);
}

TEST(Vdp, IntegratorIsAPerfectPredictor) {
  const VdpForecastParams p;
  const VdpForecastData v = build_vdp_forecast_dataset(p, 9);
  const Tensor raw = v.transform.invert(v.val.inputs);
  Tensor pred(raw.rows(), 2);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const State s = rk4_step(State{raw(i, 0), raw(i, 1), 0}, p.h, p.mu);
    pred(i, 0) = s.x;
    pred(i, 1) = s.v;
  }
  EXPECT_LT(mse_loss(v.transform.apply(pred), v.val.targets), 1e-8);
}

TEST(Vdp, RejectsBadParameters) {
  VdpForecastParams p;
  p.n_samples = 0;
  EXPECT_THROW(build_vdp_forecast_dataset(p, 1), ConfigError);
  p = {};
  p.h = 0;
  EXPECT_THROW(build_vdp_forecast_dataset(p, 1), ConfigError);
  p = {};
  p.x0 = 1e5;
  p.h = 0.5;
  EXPECT_THROW(build_vdp_forecast_dataset(p, 1), NonFiniteError);
}
