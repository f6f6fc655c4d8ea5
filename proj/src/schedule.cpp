#include "dsgd/schedule.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "dsgd/error.hpp"

namespace dsgd {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::GlobalShuffle: return "global";
    case Regime::LocalShuffle: return "local";
    case Regime::IIDSampling: return "iid";
    case Regime::WithoutReplacement: return "without-replacement";
  }
  return "unknown";
}

Regime parse_regime(const std::string& name) {
  if (name == "global") return Regime::GlobalShuffle;
  if (name == "local") return Regime::LocalShuffle;
  if (name == "iid") return Regime::IIDSampling;
  if (name == "without-replacement") return Regime::WithoutReplacement;
  throw InvalidArgument("unknown regime '" + name + "'");
}

void StreamSpec::validate() const {
  if (n == 0 || workers == 0 || batch_size == 0 || epochs == 0) {
    throw InvalidArgument("stream spec needs positive n, M, b and S");
  }
  if (n % (workers * batch_size) != 0) {
    std::ostringstream msg;
    msg << "n = " << n << " is not divisible by M*b = " << workers << "*" << batch_size << " = "
        << workers * batch_size;
    throw InvalidArgument(msg.str());
  }
  if (shuffler.rounds < 0) throw InvalidArgument("shuffle rounds must be >= 0");
}

std::uint64_t epoch_seed(std::uint64_t master, std::size_t epoch, std::size_t worker) {
  return derive_seed(master, epoch, worker);
}

BatchStream::BatchStream(StreamSpec spec, std::vector<std::size_t> indices,
                         std::vector<Permutation> provenance)
    : spec_(std::move(spec)), indices_(std::move(indices)), provenance_(std::move(provenance)) {
  spec_.validate();
  if (indices_.size() != spec_.epochs * spec_.n) {
    throw InvalidArgument("batch stream storage does not match S * n");
  }
}

std::span<const std::size_t> BatchStream::iteration(std::size_t epoch, std::size_t iter) const {
  if (epoch >= epochs() || iter >= iterations()) throw InvalidArgument("(epoch, iter) out of range");
  const std::size_t width = workers() * batch_size();
  return {indices_.data() + (epoch * iterations() + iter) * width, width};
}

std::span<const std::size_t> BatchStream::batch(std::size_t epoch, std::size_t iter,
                                                std::size_t worker) const {
  if (worker >= workers()) throw InvalidArgument("worker out of range");
  return iteration(epoch, iter).subspan(worker * batch_size(), batch_size());
}

std::vector<std::size_t> partition_in_order(const Permutation& sigma, std::size_t workers,
                                            std::size_t batch_size) {
  const std::size_t n = sigma.size();
  const std::size_t block = n / workers;
  const std::size_t iterations = block / batch_size;
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t t = 0; t < iterations; ++t) {
    for (std::size_t m = 0; m < workers; ++m) {
      for (std::size_t j = 0; j < batch_size; ++j) {
        out.push_back(sigma[m * block + t * batch_size + j]);
      }
    }
  }
  return out;
}

BatchStream build_stream(const StreamSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n;
  const std::size_t M = spec.workers;
  const std::size_t b = spec.batch_size;
  const std::size_t T = spec.iterations_per_epoch();
  std::vector<std::size_t> indices;
  indices.reserve(spec.epochs * n);
  std::vector<Permutation> provenance;

  switch (spec.regime) {
    case Regime::GlobalShuffle:
      for (std::size_t s = 0; s < spec.epochs; ++s) {
        RandomSource rng(epoch_seed(spec.seed, s, 0));
        Permutation sigma = shuffle(spec.shuffler, n, rng);
        const auto epoch = partition_in_order(sigma, M, b);
        indices.insert(indices.end(), epoch.begin(), epoch.end());
        provenance.push_back(std::move(sigma));
      }
      break;

    case Regime::LocalShuffle: {
      RandomSource rng(epoch_seed(spec.seed, 0, 0));
      Permutation sigma = shuffle(spec.shuffler, n, rng);
      const std::size_t block = n / M;
      const auto first = partition_in_order(sigma, M, b);
      indices.insert(indices.end(), first.begin(), first.end());
      provenance.push_back(sigma);
      for (std::size_t s = 1; s < spec.epochs; ++s) {
        std::vector<Permutation> local;
        for (std::size_t m = 0; m < M; ++m) {
          RandomSource local_rng(epoch_seed(spec.seed, s, m + 1));
          local.push_back(shuffle(spec.shuffler, block, local_rng));
        }
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t j = 0; j < b; ++j) {
              indices.push_back(sigma[m * block + local[m][t * b + j]]);
            }
          }
        }
        for (auto& p : local) provenance.push_back(std::move(p));
      }
      break;
    }

    case Regime::IIDSampling:
      for (std::size_t s = 0; s < spec.epochs; ++s) {
        RandomSource rng(epoch_seed(spec.seed, s, 0));
        for (std::size_t k = 0; k < n; ++k) indices.push_back(rng.uniform_index(n));
      }
      break;

    case Regime::WithoutReplacement:
      for (std::size_t s = 0; s < spec.epochs; ++s) {
        RandomSource rng(epoch_seed(spec.seed, s, 0));
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        std::vector<std::size_t> iteration(M * b);
        std::size_t drawn = 0;
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t k = 0; k < M * b; ++k) {
            const std::size_t pick = drawn + rng.uniform_index(n - drawn);
            std::swap(pool[drawn], pool[pick]);
            // Draw k of the iteration is dealt to worker k mod M.
            iteration[(k % M) * b + k / M] = pool[drawn];
            ++drawn;
          }
          indices.insert(indices.end(), iteration.begin(), iteration.end());
        }
      }
      break;
  }
  return BatchStream(spec, std::move(indices), std::move(provenance));
}

void write_stream_text(std::ostream& out, const BatchStream& stream) {
  const auto& spec = stream.spec();
  out << "# regime=" << to_string(spec.regime) << " n=" << spec.n << " M=" << spec.workers
      << " b=" << spec.batch_size << " S=" << spec.epochs << " T=" << stream.iterations()
      << " shuffler=" << to_string(spec.shuffler.algorithm) << " h=" << spec.shuffler.rounds
      << " seed=" << spec.seed << "\n";
  for (std::size_t s = 0; s < stream.epochs(); ++s) {
    for (std::size_t t = 0; t < stream.iterations(); ++t) {
      out << s + 1 << ' ' << t + 1;
      for (std::size_t m = 0; m < stream.workers(); ++m) {
        out << " |";
        for (std::size_t i : stream.batch(s, t, m)) out << ' ' << i;
      }
      out << '\n';
    }
  }
}

namespace {

std::vector<BatchTuple> tuples_of(const Permutation& sigma, std::size_t workers,
                                  std::size_t batch_size) {
  const auto flat = partition_in_order(sigma, workers, batch_size);
  const std::size_t width = workers * batch_size;
  std::vector<BatchTuple> tuples;
  for (std::size_t start = 0; start < flat.size(); start += width) {
    BatchTuple tuple(workers);
    for (std::size_t m = 0; m < workers; ++m) {
      auto& batch = tuple[m];
      batch.assign(flat.begin() + static_cast<long>(start + m * batch_size),
                   flat.begin() + static_cast<long>(start + (m + 1) * batch_size));
      std::sort(batch.begin(), batch.end());
    }
    tuples.push_back(std::move(tuple));
  }
  return tuples;
}

struct Accumulator {
  double history = 0.0;
  std::map<BatchTuple, double> next;
  std::map<BatchTuple, double> remaining;
};

void check_conditional_preconditions(const StreamSpec& spec, std::size_t t) {
  spec.validate();
  if (spec.regime != Regime::GlobalShuffle) {
    throw InvalidArgument("conditional batch distribution is defined for the global regime");
  }
  if (t >= spec.iterations_per_epoch()) throw InvalidArgument("t must be < T");
}

ConditionalBatchDistribution finish(const Accumulator& acc) {
  ConditionalBatchDistribution out;
  out.history_probability = acc.history;
  for (const auto& [tuple, weight] : acc.remaining) {
    if (weight <= 0.0) continue;
    const auto it = acc.next.find(tuple);
    out.probability[tuple] = (it == acc.next.end() ? 0.0 : it->second) / weight;
  }
  return out;
}

template <class Visit>
void for_each_permutation(const StreamSpec& spec, const EnumerationLimits& limits, Visit&& visit) {
  const PermutationDistribution dist = enumerate_distribution(spec.shuffler, spec.n, limits);
  for (std::uint64_t r = 0; r < dist.probability.size(); ++r) {
    const double p = dist.probability[r];
    if (p == 0.0) continue;
    visit(tuples_of(permutation_unrank(r, spec.n), spec.workers, spec.batch_size), p);
  }
}

void accumulate(Accumulator& acc, const std::vector<BatchTuple>& tuples, std::size_t t, double p) {
  acc.history += p;
  acc.next[tuples[t]] += p;
  for (std::size_t k = t; k < tuples.size(); ++k) acc.remaining[tuples[k]] += p;
}

}  // namespace

ConditionalBatchDistribution conditional_batch_distribution(const StreamSpec& spec, std::size_t t,
                                                            const std::vector<BatchTuple>& history,
                                                            const EnumerationLimits& limits) {
  check_conditional_preconditions(spec, t);
  if (history.size() != t) throw InvalidArgument("history length must equal t");
  std::vector<BatchTuple> wanted = history;
  for (auto& tuple : wanted) {
    if (tuple.size() != spec.workers) throw InvalidArgument("history tuple has wrong worker count");
    for (auto& batch : tuple) std::sort(batch.begin(), batch.end());
  }

  Accumulator acc;
  for_each_permutation(spec, limits, [&](const std::vector<BatchTuple>& tuples, double p) {
    if (std::equal(wanted.begin(), wanted.end(), tuples.begin())) accumulate(acc, tuples, t, p);
  });
  if (acc.history <= 0.0) throw InvalidArgument("history has zero probability under the shuffler");
  return finish(acc);
}

std::map<std::vector<BatchTuple>, ConditionalBatchDistribution> conditional_batch_table(
    const StreamSpec& spec, std::size_t t, const EnumerationLimits& limits) {
  check_conditional_preconditions(spec, t);
  std::map<std::vector<BatchTuple>, Accumulator> accs;
  for_each_permutation(spec, limits, [&](const std::vector<BatchTuple>& tuples, double p) {
    std::vector<BatchTuple> history(tuples.begin(), tuples.begin() + static_cast<long>(t));
    accumulate(accs[std::move(history)], tuples, t, p);
  });
  std::map<std::vector<BatchTuple>, ConditionalBatchDistribution> table;
  for (const auto& [history, acc] : accs) table.emplace(history, finish(acc));
  return table;
}

}  // namespace dsgd
