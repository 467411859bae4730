#pragma once

// Brute-force Bayes study of why argmax decoding keeps multimodal action
// distributions on their support.
//
// Setup: one scalar action position with a categorical prior over K bin
// values, noised exactly like training data: z = tau * alpha * e_k + (1 -
// tau) * eps. The exact posterior over bins given z is
//
//   p(k | z)  ∝  probs_k * exp(-|z - tau * alpha * e_k|^2 / (2 (1 - tau)^2))
//
// The continuous Bayes-optimal value estimate sum_k p_k * b_k averages
// across modes and generically falls between bin values; committing to
// argmax_k p_k always lands exactly on one.

#include <cstdint>
#include <limits>
#include <span>

#include "qdd/codec.hpp"
#include "qdd/common.hpp"

namespace qdd {

// Prior over K discretized action values. Every bin carries positive mass:
// the support is the full bin-value set.
struct CategoricalPrior {
  Vec probs;       // strictly positive, sums to 1
  Vec bin_values;  // strictly increasing (action units)

  int bins() const { return static_cast<int>(probs.size()); }
};

inline void validate_prior(const CategoricalPrior& prior) {
  require(prior.probs.size() >= 2, "invalid-argument", "prior needs at least 2 bins");
  require(prior.probs.size() == prior.bin_values.size(), "shape-mismatch",
          "prior probs and bin values disagree on size");
  double sum = 0.0;
  for (double p : prior.probs) {
    require(p > 0.0, "invalid-argument", "prior mass must be strictly positive on every bin");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-12, "invalid-argument", "prior does not sum to 1");
  for (std::size_t k = 0; k + 1 < prior.bin_values.size(); ++k)
    require(prior.bin_values[k] < prior.bin_values[k + 1], "invalid-argument",
            "bin values must be strictly increasing");
}

// Mostly-bimodal prior on the codec's bin centers: heavy mass on the two
// outermost bins, a positive trickle everywhere else.
inline CategoricalPrior default_two_mode_prior(int bins, double mode_mass = 0.495) {
  require(bins >= 2, "invalid-argument", "need at least 2 bins");
  require(mode_mass > 0.0 && 2.0 * mode_mass < 1.0 + 1e-15, "invalid-argument",
          "mode mass must fit in the unit budget");
  CategoricalPrior prior;
  prior.probs.assign(static_cast<std::size_t>(bins), 0.0);
  prior.bin_values.resize(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) prior.bin_values[static_cast<std::size_t>(k)] = bin_center(k, bins);
  if (bins == 2) {
    prior.probs = {0.5, 0.5};
    return prior;
  }
  double rest = (1.0 - 2.0 * mode_mass) / static_cast<double>(bins - 2);
  for (int k = 1; k + 1 < bins; ++k) prior.probs[static_cast<std::size_t>(k)] = rest;
  prior.probs.front() = mode_mass;
  prior.probs.back() = mode_mass;
  // Absorb rounding slack into the first mode so the mass sums to 1 exactly.
  double sum = 0.0;
  for (double p : prior.probs) sum += p;
  prior.probs.front() += 1.0 - sum;
  return prior;
}

inline void validate_posterior_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    fail("degenerate-tau", "posterior needs tau strictly inside (0, 1); at the endpoints it "
                           "degenerates to the prior / a point mass");
}

// Exact posterior over bins given one noisy one-hot row, via log-sum-exp.
inline Vec exact_posterior(std::span<const double> z, const CategoricalPrior& prior, double tau,
                           double alpha) {
  validate_prior(prior);
  validate_posterior_tau(tau);
  require(alpha > 0.0 && alpha <= 1.0, "invalid-smoothing", "smoothing scale must lie in (0, 1]");
  const int bins = prior.bins();
  require(static_cast<int>(z.size()) == bins, "shape-mismatch",
          "noisy row size does not match prior");
  const double sigma2 = (1.0 - tau) * (1.0 - tau);
  Vec logw(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    double sq = 0.0;
    for (int j = 0; j < bins; ++j) {
      double mu = (j == k) ? tau * alpha : 0.0;
      double d = z[static_cast<std::size_t>(j)] - mu;
      sq += d * d;
    }
    logw[static_cast<std::size_t>(k)] =
        std::log(prior.probs[static_cast<std::size_t>(k)]) - sq / (2.0 * sigma2);
  }
  double m = logw[0];
  for (double w : logw) m = std::max(m, w);
  Vec post(static_cast<std::size_t>(bins));
  double total = 0.0;
  for (int k = 0; k < bins; ++k) {
    post[static_cast<std::size_t>(k)] = std::exp(logw[static_cast<std::size_t>(k)] - m);
    total += post[static_cast<std::size_t>(k)];
  }
  for (double& p : post) p /= total;
  return post;
}

// Continuous Bayes-optimal value estimate: the posterior-weighted mean of
// the bin values (what an MSE-trained denoiser converges to).
inline double continuous_bayes(std::span<const double> z, const CategoricalPrior& prior,
                               double tau, double alpha) {
  Vec post = exact_posterior(z, prior, tau, alpha);
  double mean = 0.0;
  for (int k = 0; k < prior.bins(); ++k)
    mean += post[static_cast<std::size_t>(k)] * prior.bin_values[static_cast<std::size_t>(k)];
  return mean;
}

inline double support_distance(double v, const CategoricalPrior& prior) {
  double dist = std::numeric_limits<double>::infinity();
  for (double b : prior.bin_values) dist = std::min(dist, std::abs(v - b));
  return dist;
}

inline double posterior_entropy(const Vec& post) {
  double h = 0.0;
  for (double p : post)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

struct SupportConfig {
  CategoricalPrior prior;
  double alpha = 0.1;
  int trials = 10000;
  double entropy_floor = 0.1;        // nats; below this the posterior is too peaked to count
  double off_support_factor = 0.05;  // "off support" = farther than this fraction of min bin gap
  std::uint64_t seed = 0;
};

struct SupportReport {
  double tau = 0.0;
  double alpha = 0.0;
  int bins = 0;
  int trials = 0;
  double min_bin_gap = 0.0;
  int on_support_count = 0;       // argmax decode landed exactly on a bin value
  int qualified = 0;              // trials with posterior entropy above the floor
  int qualified_off_support = 0;  // qualified trials whose Bayes value left the support
  double off_support_fraction = 0.0;  // among qualified trials
  double min_off_distance = 0.0;      // over qualified off-support trials
  double mean_off_distance = 0.0;
  double mean_entropy = 0.0;
  Vec entropies;  // per trial
  std::uint64_t seed = 0;
};

inline SupportReport run_support_experiment(const SupportConfig& cfg, double tau,
                                            int threads = 1) {
  validate_prior(cfg.prior);
  validate_posterior_tau(tau);
  require(cfg.trials >= 1, "invalid-argument", "need at least one trial");
  require(cfg.entropy_floor >= 0.0, "invalid-argument", "entropy floor must be non-negative");

  const int bins = cfg.prior.bins();
  double min_gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k + 1 < bins; ++k)
    min_gap = std::min(min_gap, cfg.prior.bin_values[static_cast<std::size_t>(k + 1)] -
                                    cfg.prior.bin_values[static_cast<std::size_t>(k)]);

  Vec cdf(cfg.prior.probs.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < cdf.size(); ++k) {
    acc += cfg.prior.probs[k];
    cdf[k] = acc;
  }
  cdf.back() = 1.0;

  struct Trial {
    bool on_support = false;
    bool qualified = false;
    bool off_support = false;
    double off_distance = 0.0;
    double entropy = 0.0;
  };
  Rng root(cfg.seed);
  std::vector<Trial> trials(static_cast<std::size_t>(cfg.trials));
  parallel_for(static_cast<std::size_t>(cfg.trials), threads, [&](std::size_t i) {
    Rng rng = root.derive("support-trial", i);
    double u = rng.uniform();
    int true_token = 0;
    while (cdf[static_cast<std::size_t>(true_token)] < u) ++true_token;

    Vec z(static_cast<std::size_t>(bins));
    const double keep = 1.0 - tau;
    for (int j = 0; j < bins; ++j) {
      double mu = (j == true_token) ? tau * cfg.alpha : 0.0;
      z[static_cast<std::size_t>(j)] = mu + keep * rng.normal();
    }

    Vec post = exact_posterior(z, cfg.prior, tau, cfg.alpha);
    int map_token = 0;
    for (int k = 1; k < bins; ++k)
      if (post[static_cast<std::size_t>(k)] > post[static_cast<std::size_t>(map_token)])
        map_token = k;
    double map_value = cfg.prior.bin_values[static_cast<std::size_t>(map_token)];
    double bayes_value = 0.0;
    for (int k = 0; k < bins; ++k)
      bayes_value +=
          post[static_cast<std::size_t>(k)] * cfg.prior.bin_values[static_cast<std::size_t>(k)];

    Trial& t = trials[i];
    t.entropy = posterior_entropy(post);
    // Exact set membership, not assumed: scan the support for the decoded value.
    for (double b : cfg.prior.bin_values)
      if (map_value == b) t.on_support = true;
    t.qualified = t.entropy > cfg.entropy_floor;
    t.off_distance = support_distance(bayes_value, cfg.prior);
    t.off_support = t.off_distance > cfg.off_support_factor * min_gap;
  });

  SupportReport report;
  report.tau = tau;
  report.alpha = cfg.alpha;
  report.bins = bins;
  report.trials = cfg.trials;
  report.min_bin_gap = min_gap;
  report.seed = cfg.seed;
  report.entropies.reserve(trials.size());
  double ent_sum = 0.0, off_sum = 0.0;
  double off_min = std::numeric_limits<double>::infinity();
  for (const auto& t : trials) {
    if (t.on_support) ++report.on_support_count;
    if (t.qualified) {
      ++report.qualified;
      if (t.off_support) {
        ++report.qualified_off_support;
        off_sum += t.off_distance;
        off_min = std::min(off_min, t.off_distance);
      }
    }
    ent_sum += t.entropy;
    report.entropies.push_back(t.entropy);
  }
  report.mean_entropy = ent_sum / static_cast<double>(cfg.trials);
  if (report.qualified > 0)
    report.off_support_fraction =
        static_cast<double>(report.qualified_off_support) / static_cast<double>(report.qualified);
  if (report.qualified_off_support > 0) {
    report.min_off_distance = off_min;
    report.mean_off_distance = off_sum / static_cast<double>(report.qualified_off_support);
  }
  return report;
}

inline std::vector<SupportReport> run_support_sweep(const SupportConfig& cfg,
                                                    std::span<const double> tau_list,
                                                    int threads = 1) {
  require(!tau_list.empty(), "invalid-argument", "need at least one tau");
  std::vector<SupportReport> reports;
  reports.reserve(tau_list.size());
  for (double tau : tau_list) reports.push_back(run_support_experiment(cfg, tau, threads));
  return reports;
}

}  // namespace qdd
