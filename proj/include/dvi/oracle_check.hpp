#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dvi/conjugate.hpp"
#include "dvi/data.hpp"
#include "dvi/model.hpp"

namespace dvi {

/// Conjugate-reduction instance: identity generator over a standard normal
/// auxiliary prior with a frozen random feature net, so the exact posterior
/// over omega and the log evidence are available in closed form.
struct ConjugateFixture {
  ModelBundle bundle;  // gamma trainable; theta, psi, log sigma^2 frozen
  Dataset data;        // synthetic regression set
  Eigen::MatrixXd phi; // N x M frozen features
  GaussianPosterior posterior;
  double log_evidence = 0.0;
};

/// feature_scale shrinks the random feature net's output layer; it sets how
/// strongly the data contracts the posterior relative to the prior.
ConjugateFixture make_conjugate_fixture(uint64_t seed, int n = 200, int d = 5, int m = 16,
                                        double sigma2 = 1.0, double feature_scale = 0.15,
                                        double weight_scale = 1.0);

struct OracleCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// The conjugate-reduction invariant suite behind `dvi oracle-check`.
/// include_training adds the short score-net training checks.
std::vector<OracleCheck> run_oracle_checks(uint64_t seed, bool include_training = true);

}  // namespace dvi
