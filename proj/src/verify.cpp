#include "dsgd/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "dsgd/analysis.hpp"
#include "dsgd/datasets.hpp"
#include "dsgd/engine.hpp"

namespace dsgd {

namespace {

std::string fmt(double x, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

template <class Body>
CheckResult timed(const std::string& name, Body&& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = name;
  try {
    body(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

struct Family {
  std::string name;
  ObjectiveSpec spec;
  Dataset data;
};

// Small problems of each family; sizes keep the checks fast.
std::vector<Family> small_families(std::uint64_t seed, std::size_t n) {
  std::vector<Family> out;
  out.push_back({"quadratic", ObjectiveSpec::quadratic(geometric_spectrum(5, 1.0, 10.0)),
                 quadratic_centers(n, 5, seed, 1.0)});
  out.push_back({"logistic", ObjectiveSpec::logistic(0.1), synthetic_logistic(n, 5, seed, 2.0, 0.1)});
  MlpParams mlp;
  mlp.hidden = {5, 3};
  mlp.classes = 3;
  mlp.lambda = 0.01;
  out.push_back({"mlp", ObjectiveSpec::mlp(mlp), gaussian_blobs(n, 4, 3, seed, 2.0)});
  MlpParams sig = mlp;
  sig.activation = Activation::Sigmoid;
  out.push_back({"mlp-sigmoid", ObjectiveSpec::mlp(sig), gaussian_blobs(n, 4, 3, seed + 1, 2.0)});
  return out;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

CheckResult check_uniform_conditionals(const VerifyOptions& options) {
  return timed("uniform-shuffle-conditionals", [&](CheckResult& r) {
    const ShufflerSpec shuffler{options.inject_biased_shuffler ? ShuffleAlgorithm::Identity
                                                               : ShuffleAlgorithm::FisherYates,
                                0};
    r.params = {{"shuffler", to_string(shuffler.algorithm)},
                {"n", "4,6"},
                {"(M,b)", "(1,1),(2,1),(1,2)"}};
    double worst = 0.0;
    std::size_t probabilities = 0;
    r.pass = true;
    for (std::size_t n : {4, 6}) {
      for (auto [M, b] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {2, 1}, {1, 2}}) {
        const StreamSpec spec{Regime::GlobalShuffle, n, M, b, 1, shuffler, 0};
        const std::size_t T = spec.iterations_per_epoch();
        for (std::size_t t = 0; t < T; ++t) {
          const double expected = 1.0 / static_cast<double>(T - t);
          for (const auto& [history, dist] : conditional_batch_table(spec, t)) {
            for (const auto& [tuple, p] : dist.probability) {
              ++probabilities;
              const double err = std::abs(p - expected);
              if (err > worst) worst = err;
              if (err > 1e-12 && r.pass) {
                r.pass = false;
                std::ostringstream msg;
                msg << "n=" << n << " M=" << M << " b=" << b << " t=" << t << ": P=" << p
                    << " expected " << expected;
                r.detail = msg.str();
              }
            }
          }
        }
      }
    }
    r.observed = "max |P - 1/(T-t)| = " + fmt(worst) + " over " + std::to_string(probabilities);
    r.expected = "<= 1e-12";
  });
}

CheckResult check_riffle_gap_bound(const VerifyOptions&) {
  return timed("riffle-conditional-gap", [&](CheckResult& r) {
    const std::size_t n = 4, M = 1, b = 1;
    const double threshold = static_cast<double>(b * M) / static_cast<double>(n);
    int h = 0;
    double eps = 1.0;
    for (; h <= 16; ++h) {
      eps = tv_exact({ShuffleAlgorithm::Riffle, h}, n).epsilon;
      if (eps <= threshold) break;
    }
    r.params = {{"n", "4"}, {"M", "1"}, {"b", "1"}, {"h", std::to_string(h)}, {"eps", fmt(eps, "%.6f")}};
    if (eps > threshold) {
      r.pass = false;
      r.detail = "no h <= 16 reaches eps <= bM/n";
      return;
    }
    r.pass = true;
    double worst_ratio = 0.0;
    std::ostringstream obs;
    const std::size_t T = n / (b * M);
    for (std::size_t t = 0; t + 1 < T; ++t) {
      const auto rep = check_conditional_gap({ShuffleAlgorithm::Riffle, h}, n, M, b, t);
      obs << (t ? "; " : "") << "t=" << t << " gap " << fmt(rep.max_gap, "%.4f") << " <= "
          << fmt(rep.bound, "%.4f");
      worst_ratio = std::max(worst_ratio, rep.max_gap / rep.bound);
      if (!rep.precondition_met || !rep.pass) {
        r.pass = false;
        r.detail = "t=" + std::to_string(t) + " violates the bound";
      }
    }
    r.observed = obs.str();
    r.expected = "gap <= 4 n eps / (n - b M t)";
  });
}

CheckResult check_batch_mean_identity(const VerifyOptions& options) {
  return timed("batch-mean-identity", [&](CheckResult& r) {
    const std::size_t n = 6;
    RandomSource rng(derive_seed(options.seed, 31));
    r.params = {{"n", "6"}, {"sequences", "20"}, {"trials", std::to_string(options.lemma_trials)}};
    r.pass = true;
    std::size_t cases = 0;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      std::vector<double> values(n);
      for (double& v : values) v = rng.normal();
      for (std::size_t b = 1; b <= n; ++b) {
        for (std::size_t t = 0; (t + 1) * b <= n; ++t) {
          const auto rep = verify_lemma31(n, b, t, values, options.lemma_trials, rng);
          ++cases;
          if (rep.standard_error > 1e-12) {
            worst = std::max(worst, std::abs(rep.lhs - rep.rhs) / rep.standard_error);
          }
          if (!rep.pass && r.pass) {
            r.pass = false;
            std::ostringstream msg;
            msg << "sequence " << k << " b=" << b << " t=" << t << ": lhs " << rep.lhs << " rhs "
                << rep.rhs << " se " << rep.standard_error;
            r.detail = msg.str();
          }
        }
      }
    }
    r.observed = "max |lhs - rhs| / SE = " + fmt(worst) + " over " + std::to_string(cases) + " cases";
    r.expected = "<= 4";
  });
}

CheckResult check_tv_oracles(const VerifyOptions& options) {
  return timed("tv-exact-vs-empirical", [&](CheckResult& r) {
    r.params = {{"samples", std::to_string(options.tv_samples)}, {"n", "3,4"}, {"h", "1,2,4"}};
    r.pass = true;
    double worst = 0.0;
    RandomSource rng(derive_seed(options.seed, 41));
    for (auto alg : {ShuffleAlgorithm::Riffle, ShuffleAlgorithm::TopToRandom}) {
      for (std::size_t n : {3, 4}) {
        for (int h : {1, 2, 4}) {
          const ShufflerSpec spec{alg, h};
          const double exact = tv_exact(spec, n).epsilon;
          const double sampled = tv_empirical(spec, n, options.tv_samples, rng).epsilon;
          const double diff = std::abs(exact - sampled);
          worst = std::max(worst, diff);
          if (diff > 0.005 && r.pass) {
            r.pass = false;
            r.detail = to_string(alg) + " n=" + std::to_string(n) + " h=" + std::to_string(h) +
                       ": exact " + fmt(exact, "%.6f") + " sampled " + fmt(sampled, "%.6f");
          }
        }
      }
    }
    double fy = 0.0;
    for (std::size_t n = 1; n <= 6; ++n) {
      fy = std::max(fy, tv_exact({ShuffleAlgorithm::FisherYates, 0}, n).epsilon);
    }
    if (fy > 1e-12) {
      r.pass = false;
      r.detail = "Fisher-Yates is not exactly uniform: eps = " + fmt(fy);
    }
    r.observed = "max |exact - sampled| = " + fmt(worst, "%.5f") + ", Fisher-Yates eps = " + fmt(fy);
    r.expected = "<= 0.005, <= 1e-12";
  });
}

CheckResult check_gradients(const VerifyOptions& options) {
  return timed("gradient-finite-differences", [&](CheckResult& r) {
    r.params = {{"points", "100"}, {"families", "quadratic,logistic,mlp,mlp-sigmoid"}};
    r.pass = true;
    double worst = 0.0;
    RandomSource rng(derive_seed(options.seed, 51));
    for (const auto& fam : small_families(derive_seed(options.seed, 52), 12)) {
      const std::size_t d = parameter_dim(fam.spec, fam.data);
      for (int k = 0; k < 100; ++k) {
        std::vector<double> w(d);
        for (double& x : w) x = rng.normal();
        const auto exact = full_objective(fam.spec, fam.data, w).gradient;
        std::vector<double> fd(d), diff(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double step = 1e-5 * std::max(1.0, std::abs(w[j]));
          auto plus = w, minus = w;
          plus[j] += step;
          minus[j] -= step;
          fd[j] = (full_objective(fam.spec, fam.data, plus).value -
                   full_objective(fam.spec, fam.data, minus).value) /
                  (2.0 * step);
          diff[j] = fd[j] - exact[j];
        }
        const double rel = norm(diff) / std::max({norm(exact), norm(fd), 1e-8});
        worst = std::max(worst, rel);
        if (rel > 1e-4 && r.pass) {
          r.pass = false;
          r.detail = fam.name + " point " + std::to_string(k) + ": relative error " + fmt(rel);
        }
      }
    }
    r.observed = "max relative error " + fmt(worst);
    r.expected = "<= 1e-4";
  });
}

CheckResult check_aggregation(const VerifyOptions& options) {
  return timed("aggregation-equivalence", [&](CheckResult& r) {
    r.params = {{"iterations", "100"}, {"(M,b)", "(2,3),(3,2),(4,1)"}};
    r.pass = true;
    double worst = 0.0;
    for (const auto& fam : small_families(derive_seed(options.seed, 61), 24)) {
      const double eta = fam.spec.is_quadratic() ? 0.05 : 0.2;
      for (auto [M, b] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 3}, {3, 2}, {4, 1}}) {
        const StreamSpec spec{Regime::GlobalShuffle, fam.data.size(), M, b, 100,
                              {ShuffleAlgorithm::FisherYates, 0}, derive_seed(options.seed, 62)};
        const auto stream = build_stream(spec);
        const std::size_t T = stream.iterations();
        const ParamVector w0 = default_initial_point(fam.spec, fam.data, 7);
        TrainState split = TrainState::start(w0);
        TrainState merged = TrainState::start(w0);
        std::vector<std::span<const std::size_t>> batches(M);
        for (std::size_t k = 0; k < 100; ++k) {
          const std::size_t s = k / T, t = k % T;
          for (std::size_t m = 0; m < M; ++m) batches[m] = stream.batch(s, t, m);
          split = step(split, batches, fam.spec, fam.data, eta, T);
          const std::span<const std::size_t> all[] = {stream.iteration(s, t)};
          merged = step(merged, all, fam.spec, fam.data, eta, T);
          for (std::size_t j = 0; j < split.w.size(); ++j) {
            const double diff = std::abs(split.w[j] - merged.w[j]);
            worst = std::max(worst, diff);
            if (diff > 1e-12 && r.pass) {
              r.pass = false;
              r.detail = fam.name + " M=" + std::to_string(M) + " b=" + std::to_string(b) +
                         " iteration " + std::to_string(k + 1) + ": |diff| " + fmt(diff);
            }
          }
        }
      }
    }
    r.observed = "max |w_(M,b) - w_(1,Mb)| = " + fmt(worst);
    r.expected = "<= 1e-12";
  });
}

std::vector<CheckResult> run_verify(const VerifyOptions& options,
                                    const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> out;
  for (auto check : {check_uniform_conditionals, check_riffle_gap_bound, check_batch_mean_identity,
                     check_tv_oracles, check_gradients, check_aggregation}) {
    out.push_back(check(options));
    if (on_result) on_result(out.back());
  }
  return out;
}

std::string format_check_line(const CheckResult& r) {
  std::ostringstream line;
  line << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.observed << " (expected "
       << r.expected << ") [" << fmt(r.seconds, "%.1f") << " s]";
  if (!r.pass && !r.detail.empty()) line << "\n     " << r.detail;
  return line.str();
}

std::string checks_to_json(const std::vector<CheckResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    arr.push_back({{"name", r.name},
                   {"params", r.params},
                   {"observed", r.observed},
                   {"expected", r.expected},
                   {"pass", r.pass},
                   {"detail", r.detail},
                   {"seconds", r.seconds}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace dsgd
