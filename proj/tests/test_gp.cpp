#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "metabo/gp.hpp"
#include "metabo/rng.hpp"
#include "oracle_helpers.hpp"

using metabo::Dataset;
using metabo::GpPosterior;
using metabo::KernelSpec;
using metabo::SurrogateRole;

namespace {

Eigen::VectorXd vec1(double x) {
  Eigen::VectorXd v(1);
  v[0] = x;
  return v;
}

Dataset random_dataset(metabo::Rng& rng, int n, int dim) {
  Eigen::MatrixXd X(n, dim);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) X(i, d) = rng.uniform();
    y[i] = rng.normal();
  }
  return Dataset(X, y);
}

}  // namespace

TEST_CASE("kernel_eval matches the squared-exponential form", "[gp]") {
  KernelSpec spec;
  spec.lengthscale = 0.05;
  spec.signal_variance = 1.0;

  SECTION("zero distance returns the signal variance") {
    CHECK(metabo::kernel_eval(spec, vec1(0.3), vec1(0.3)) == spec.signal_variance);
    spec.signal_variance = 2.5;
    CHECK(metabo::kernel_eval(spec, vec1(0.3), vec1(0.3)) == 2.5);
  }

  SECTION("one lengthscale of separation") {
    CHECK_THAT(metabo::kernel_eval(spec, vec1(0.0), vec1(0.05)),
               Catch::Matchers::WithinAbs(0.6065306597126334, 1e-12));
  }

  SECTION("value decays monotonically toward zero with distance") {
    double prev = metabo::kernel_eval(spec, vec1(0.0), vec1(0.0));
    for (double gap = 0.02; gap < 1.0; gap += 0.02) {
      const double v = metabo::kernel_eval(spec, vec1(0.0), vec1(gap));
      CHECK(v < prev);
      CHECK(v > 0.0);
      prev = v;
    }
    CHECK(metabo::kernel_eval(spec, vec1(0.0), vec1(50.0)) < 1e-300);
  }

  SECTION("dimension mismatch is rejected") {
    Eigen::VectorXd a(2);
    a << 0.0, 0.0;
    CHECK_THROWS_AS(metabo::kernel_eval(spec, a, vec1(0.0)), std::invalid_argument);
  }
}

TEST_CASE("KernelSpec validation rejects non-positive parameters", "[gp]") {
  KernelSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.lengthscale = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = KernelSpec{};
  spec.signal_variance = -1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = KernelSpec{};
  spec.noise_variance = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = KernelSpec{};
  spec.regularization = -0.5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("fit handles empty and degenerate data", "[gp]") {
  KernelSpec spec;

  SECTION("empty data gives the prior everywhere") {
    GpPosterior post = metabo::fit(spec, Dataset{}, SurrogateRole::target);
    for (double x : {0.0, 0.4, 1.0}) {
      const auto p = post.predict(vec1(x));
      CHECK(p.mean == 0.0);
      CHECK(p.variance == spec.signal_variance);
    }
  }

  SECTION("duplicate inputs with different outputs stay positive definite") {
    Eigen::MatrixXd X(2, 1);
    X << 0.5, 0.5;
    Eigen::VectorXd y(2);
    y << 1.0, -1.0;
    CHECK_NOTHROW(metabo::fit(spec, Dataset(X, y), SurrogateRole::target));
    CHECK_NOTHROW(metabo::fit(spec, Dataset(X, y), SurrogateRole::meta));
  }

  SECTION("fit_count advances with every fit") {
    const auto before = metabo::fit_count().load();
    metabo::fit(spec, Dataset{}, SurrogateRole::target);
    metabo::fit(spec, Dataset{}, SurrogateRole::meta);
    CHECK(metabo::fit_count().load() == before + 2);
  }
}

TEST_CASE("predict matches the dense-inverse oracle", "[gp]") {
  metabo::Rng rng(20240814);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(25));
    const int dim = 1 + static_cast<int>(rng.uniform_index(3));
    KernelSpec spec;
    spec.lengthscale = rng.uniform(0.05, 0.6);
    spec.signal_variance = rng.uniform(0.5, 2.0);
    spec.noise_variance = rng.uniform(0.005, 0.1);
    spec.regularization = rng.uniform(0.01, 1.2);
    const Dataset data = random_dataset(rng, n, dim);

    for (SurrogateRole role : {SurrogateRole::target, SurrogateRole::meta}) {
      const GpPosterior post = metabo::fit(spec, data, role);
      const double ridge =
          role == SurrogateRole::target ? spec.regularization : spec.noise_variance;
      for (int q = 0; q < 5; ++q) {
        Eigen::VectorXd x(dim);
        for (int d = 0; d < dim; ++d) x[d] = rng.uniform();
        const auto got = post.predict(x);
        const auto want = oracle::dense_gp_predict(spec.lengthscale, spec.signal_variance,
                                                   ridge, data.inputs(), data.outputs(), x);
        CHECK_THAT(got.mean, Catch::Matchers::WithinAbs(want.mean, 1e-8));
        CHECK_THAT(got.variance,
                   Catch::Matchers::WithinAbs(std::max(want.variance, 1e-12), 1e-8));
      }
    }
  }
}

TEST_CASE("predict closed forms and bounds", "[gp]") {
  SECTION("single observation, unit kernel, tiny ridge") {
    KernelSpec spec;
    spec.signal_variance = 1.0;
    spec.regularization = 1e-6;
    Dataset data;
    data.append(vec1(0.3), 1.0);
    const GpPosterior post = metabo::fit(spec, data, SurrogateRole::target);
    CHECK_THAT(post.predict(vec1(0.3)).mean,
               Catch::Matchers::WithinAbs(1.0 / (1.0 + 1e-6), 1e-12));
  }

  SECTION("variance is smaller at a training input than far away, and stays in (0, prior]") {
    KernelSpec spec;
    Dataset data;
    data.append(vec1(0.2), 0.7);
    data.append(vec1(0.8), -0.3);
    const GpPosterior post = metabo::fit(spec, data, SurrogateRole::target);
    const double at_train = post.predict(vec1(0.2)).variance;
    const double far = post.predict(vec1(0.5)).variance;
    CHECK(at_train < far);
    for (double x = 0.0; x <= 1.0; x += 0.01) {
      const double v = post.predict(vec1(x)).variance;
      CHECK(v > 0.0);
      CHECK(v <= spec.signal_variance);
    }
  }

  SECTION("query dimension mismatch is rejected") {
    KernelSpec spec;
    Dataset data;
    data.append(vec1(0.2), 0.7);
    const GpPosterior post = metabo::fit(spec, data, SurrogateRole::target);
    Eigen::VectorXd bad(2);
    bad << 0.1, 0.2;
    CHECK_THROWS_AS(post.predict(bad), std::invalid_argument);
  }

  SECTION("prediction is invariant under permutation of the training points") {
    metabo::Rng rng(7);
    KernelSpec spec;
    spec.regularization = 0.05;
    const Dataset data = random_dataset(rng, 12, 2);
    Eigen::MatrixXd reversed_X = data.inputs().colwise().reverse();
    Eigen::VectorXd reversed_y = data.outputs().reverse();
    const GpPosterior a = metabo::fit(spec, data, SurrogateRole::target);
    const GpPosterior b = metabo::fit(spec, Dataset(reversed_X, reversed_y), SurrogateRole::target);
    for (int q = 0; q < 10; ++q) {
      Eigen::VectorXd x(2);
      x << rng.uniform(), rng.uniform();
      CHECK_THAT(a.predict(x).mean, Catch::Matchers::WithinAbs(b.predict(x).mean, 1e-10));
      CHECK_THAT(a.predict(x).variance, Catch::Matchers::WithinAbs(b.predict(x).variance, 1e-10));
    }
  }
}

TEST_CASE("log marginal likelihood", "[gp]") {
  SECTION("single point at zero equals the Gaussian log density") {
    KernelSpec spec;
    spec.signal_variance = 0.8;
    spec.noise_variance = 0.05;
    Dataset data;
    data.append(vec1(0.4), 0.0);
    const double v = spec.signal_variance + spec.noise_variance;
    CHECK_THAT(metabo::log_marginal_likelihood(spec, data),
               Catch::Matchers::WithinAbs(-0.5 * std::log(2.0 * std::numbers::pi * v), 1e-12));
  }

  SECTION("wildly rescaled outputs score worse than well-scaled ones") {
    metabo::Rng rng(11);
    KernelSpec spec;
    Dataset data = random_dataset(rng, 15, 1);
    Dataset scaled(data.inputs(), data.outputs() * 400.0);
    CHECK(metabo::log_marginal_likelihood(spec, scaled) <
          metabo::log_marginal_likelihood(spec, data));
  }

  SECTION("independent of input ordering") {
    metabo::Rng rng(12);
    KernelSpec spec;
    const Dataset data = random_dataset(rng, 9, 2);
    const Dataset rev(data.inputs().colwise().reverse(), data.outputs().reverse());
    CHECK_THAT(metabo::log_marginal_likelihood(spec, data),
               Catch::Matchers::WithinAbs(metabo::log_marginal_likelihood(spec, rev), 1e-9));
  }

  SECTION("empty data is rejected") {
    CHECK_THROWS_AS(metabo::log_marginal_likelihood(KernelSpec{}, Dataset{}),
                    std::invalid_argument);
  }
}

TEST_CASE("grid-search hyperparameter selection", "[gp]") {
  SECTION("a single-element grid is returned unchanged") {
    Dataset data;
    data.append(vec1(0.1), 0.2);
    KernelSpec only;
    only.lengthscale = 0.33;
    const KernelSpec got = metabo::fit_hyperparameters(data, {only});
    CHECK(got.lengthscale == 0.33);
  }

  SECTION("recovers the generating lengthscale from sampled data") {
    // Draw a function from a known prior on a fixed grid, then score a
    // lengthscale grid bracketing the truth.
    metabo::Rng rng(21);
    KernelSpec truth;
    truth.lengthscale = 0.2;
    truth.signal_variance = 1.0;
    truth.noise_variance = 0.01;
    const int n = 40;
    Eigen::MatrixXd X(n, 1);
    for (int i = 0; i < n; ++i) X(i, 0) = static_cast<double>(i) / (n - 1);
    Eigen::MatrixXd K = metabo::gram_matrix(truth, X);
    K.diagonal().array() += 1e-9;
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(K).matrixL();
    Eigen::VectorXd f = L * rng.normal_vector(n);
    for (int i = 0; i < n; ++i) f[i] += std::sqrt(truth.noise_variance) * rng.normal();

    std::vector<KernelSpec> grid;
    for (double ell : {0.02, 0.2, 0.9}) {
      KernelSpec s = truth;
      s.lengthscale = ell;
      grid.push_back(s);
    }
    const KernelSpec got = metabo::fit_hyperparameters(Dataset(X, f), grid);
    CHECK(got.lengthscale == 0.2);
  }

  SECTION("duplicate grid entries keep the first occurrence") {
    Dataset data;
    data.append(vec1(0.1), 0.2);
    KernelSpec a;
    a.lengthscale = 0.5;
    a.signal_variance = 1.0;
    KernelSpec b = a;
    b.signal_variance = 1.0 + 1e-15;  // indistinguishable evidence, distinct object
    const KernelSpec got = metabo::fit_hyperparameters(data, {a, b, a});
    CHECK(got.signal_variance == 1.0);
  }

  SECTION("empty grid is rejected") {
    Dataset data;
    data.append(vec1(0.1), 0.2);
    CHECK_THROWS_AS(metabo::fit_hyperparameters(data, {}), std::invalid_argument);
  }
}

TEST_CASE("information gain increment", "[gp]") {
  CHECK(metabo::information_gain_increment(0.0, 0.01) == 0.0);
  CHECK_THAT(metabo::information_gain_increment(0.01, 0.01),
             Catch::Matchers::WithinAbs(0.34657359027997264, 1e-15));

  SECTION("strictly increasing in the predictive variance") {
    double prev = -1.0;
    for (double v : {0.0, 1e-6, 1e-3, 0.1, 0.5, 1.0, 4.0}) {
      const double g = metabo::information_gain_increment(v, 0.01);
      CHECK(g > prev);
      CHECK(g >= 0.0);
      prev = g;
    }
  }

  SECTION("posterior overload uses the clamped predictive variance") {
    KernelSpec spec;
    const GpPosterior prior = metabo::fit(spec, Dataset{}, SurrogateRole::target);
    CHECK_THAT(metabo::information_gain_increment(prior, vec1(0.5), spec.noise_variance),
               Catch::Matchers::WithinAbs(
                   metabo::information_gain_increment(spec.signal_variance, spec.noise_variance),
                   1e-15));
  }
}
