#include "dsgd/shuffling.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <sstream>

#include "dsgd/error.hpp"

namespace dsgd {

bool is_bijection(std::span<const std::size_t> mapping) {
  std::vector<bool> seen(mapping.size(), false);
  for (std::size_t v : mapping) {
    if (v >= mapping.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

Permutation::Permutation(std::vector<std::size_t> mapping) : mapping_(std::move(mapping)) {
  if (!is_bijection(mapping_)) throw InvalidArgument("mapping is not a permutation");
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return Permutation(std::move(m));
}

std::string to_string(ShuffleAlgorithm algorithm) {
  switch (algorithm) {
    case ShuffleAlgorithm::FisherYates: return "fisher-yates";
    case ShuffleAlgorithm::Riffle: return "riffle";
    case ShuffleAlgorithm::TopToRandom: return "top-to-random";
    case ShuffleAlgorithm::Identity: return "identity";
  }
  return "unknown";
}

ShuffleAlgorithm parse_shuffle_algorithm(const std::string& name) {
  if (name == "fisher-yates") return ShuffleAlgorithm::FisherYates;
  if (name == "riffle") return ShuffleAlgorithm::Riffle;
  if (name == "top-to-random") return ShuffleAlgorithm::TopToRandom;
  if (name == "identity") return ShuffleAlgorithm::Identity;
  throw InvalidArgument("unknown shuffle algorithm '" + name + "'");
}

void apply_riffle(std::span<const std::size_t> deck, std::uint64_t mask,
                  std::span<std::size_t> out) {
  const std::size_t n = deck.size();
  std::size_t cut = 0;
  for (std::size_t p = 0; p < n; ++p) cut += ((mask >> p) & 1U) == 0 ? 1 : 0;
  std::size_t top = 0;
  std::size_t bottom = cut;
  for (std::size_t p = 0; p < n; ++p) {
    out[p] = ((mask >> p) & 1U) == 0 ? deck[top++] : deck[bottom++];
  }
}

void apply_top_to_random(std::span<std::size_t> deck, std::size_t position) {
  std::rotate(deck.begin(), deck.begin() + 1, deck.begin() + static_cast<long>(position) + 1);
}

Permutation shuffle(const ShufflerSpec& spec, std::size_t n, RandomSource& rng) {
  if (n < 1) throw InvalidArgument("shuffle needs n >= 1");
  if (spec.rounds < 0) throw InvalidArgument("shuffle rounds must be >= 0");
  std::vector<std::size_t> deck(n);
  std::iota(deck.begin(), deck.end(), std::size_t{0});

  switch (spec.algorithm) {
    case ShuffleAlgorithm::Identity:
      break;
    case ShuffleAlgorithm::FisherYates:
      for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(deck[i], deck[rng.uniform_index(i + 1)]);
      }
      break;
    case ShuffleAlgorithm::TopToRandom:
      for (int r = 0; r < spec.rounds; ++r) apply_top_to_random(deck, rng.uniform_index(n));
      break;
    case ShuffleAlgorithm::Riffle: {
      std::vector<std::size_t> out(n);
      std::vector<std::uint64_t> bits((n + 63) / 64);
      for (int r = 0; r < spec.rounds; ++r) {
        if (n <= 64) {
          apply_riffle(deck, n == 64 ? rng.next() : rng.next() & ((std::uint64_t{1} << n) - 1),
                       out);
        } else {
          for (auto& word : bits) word = rng.next();
          std::size_t cut = 0;
          for (std::size_t p = 0; p < n; ++p) cut += ((bits[p / 64] >> (p % 64)) & 1U) == 0;
          std::size_t top = 0;
          std::size_t bottom = cut;
          for (std::size_t p = 0; p < n; ++p) {
            out[p] = ((bits[p / 64] >> (p % 64)) & 1U) == 0 ? deck[top++] : deck[bottom++];
          }
        }
        deck.swap(out);
      }
      break;
    }
  }
  return Permutation(std::move(deck));
}

std::uint64_t factorial(std::size_t n) {
  std::uint64_t f = 1;
  for (std::size_t k = 2; k <= n; ++k) f *= k;
  return f;
}

std::uint64_t permutation_rank(std::span<const std::size_t> mapping) {
  const std::size_t n = mapping.size();
  std::uint64_t rank = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t smaller = 0;
    for (std::size_t j = i + 1; j < n; ++j) smaller += mapping[j] < mapping[i] ? 1 : 0;
    rank = rank * (n - i) + smaller;
  }
  return rank;
}

Permutation permutation_unrank(std::uint64_t rank, std::size_t n) {
  std::vector<std::size_t> digits(n);
  for (std::size_t i = n; i-- > 0;) {
    const std::size_t base = n - i;
    digits[i] = static_cast<std::size_t>(rank % base);
    rank /= base;
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> mapping(n);
  for (std::size_t i = 0; i < n; ++i) {
    mapping[i] = pool[digits[i]];
    pool.erase(pool.begin() + static_cast<long>(digits[i]));
  }
  return Permutation(std::move(mapping));
}

double PermutationDistribution::operator()(const Permutation& p) const {
  if (p.size() != n) throw InvalidArgument("permutation size differs from distribution size");
  return probability[permutation_rank(p.mapping())];
}

namespace {

// Branching factor of each elementary random step of the shuffler.
std::vector<std::uint64_t> step_branches(const ShufflerSpec& spec, std::size_t n) {
  std::vector<std::uint64_t> steps;
  switch (spec.algorithm) {
    case ShuffleAlgorithm::Identity:
      break;
    case ShuffleAlgorithm::FisherYates:
      for (std::size_t i = n - 1; i > 0; --i) steps.push_back(i + 1);
      break;
    case ShuffleAlgorithm::TopToRandom:
      steps.assign(static_cast<std::size_t>(spec.rounds), n);
      break;
    case ShuffleAlgorithm::Riffle:
      steps.assign(static_cast<std::size_t>(spec.rounds), std::uint64_t{1} << n);
      break;
  }
  return steps;
}

}  // namespace

std::uint64_t enumeration_work(const ShufflerSpec& spec, std::size_t n) {
  if (n > 20) return UINT64_MAX;
  const std::uint64_t support_cap = factorial(n);
  std::uint64_t reachable = 1;
  std::uint64_t work = 0;
  for (std::uint64_t branches : step_branches(spec, n)) {
    if (branches > UINT64_MAX / reachable) return UINT64_MAX;
    const std::uint64_t step_work = reachable * branches;
    if (work > UINT64_MAX - step_work) return UINT64_MAX;
    work += step_work;
    reachable = std::min(support_cap, step_work);
  }
  return work;
}

PermutationDistribution enumerate_distribution(const ShufflerSpec& spec, std::size_t n,
                                               const EnumerationLimits& limits) {
  if (n < 1) throw InvalidArgument("enumeration needs n >= 1");
  if (spec.rounds < 0) throw InvalidArgument("shuffle rounds must be >= 0");
  if (n > limits.max_n) {
    std::ostringstream msg;
    msg << "exact enumeration supports n <= " << limits.max_n << ", got n = " << n;
    throw BudgetExceeded(msg.str());
  }
  const std::uint64_t work = enumeration_work(spec, n);
  if (work > limits.budget) {
    std::ostringstream msg;
    msg << "enumeration of " << to_string(spec.algorithm) << " (h=" << spec.rounds << ", n=" << n
        << ") needs " << work << " outcomes, budget is " << limits.budget;
    throw BudgetExceeded(msg.str());
  }

  const std::uint64_t support = factorial(n);
  PermutationDistribution dist{n, std::vector<double>(support, 0.0)};
  dist.probability[0] = 1.0;  // rank 0 is the identity

  std::vector<double> next(support);
  std::vector<std::size_t> out(n);
  auto propagate = [&](auto&& branch_fn, std::uint64_t branches) {
    std::fill(next.begin(), next.end(), 0.0);
    const double weight = 1.0 / static_cast<double>(branches);
    for (std::uint64_t r = 0; r < support; ++r) {
      const double p = dist.probability[r];
      if (p == 0.0) continue;
      const Permutation deck = permutation_unrank(r, n);
      for (std::uint64_t choice = 0; choice < branches; ++choice) {
        branch_fn(deck.mapping(), choice, out);
        next[permutation_rank(out)] += p * weight;
      }
    }
    dist.probability.swap(next);
  };

  switch (spec.algorithm) {
    case ShuffleAlgorithm::Identity:
      break;
    case ShuffleAlgorithm::FisherYates:
      for (std::size_t i = n - 1; i > 0; --i) {
        propagate(
            [i](const std::vector<std::size_t>& deck, std::uint64_t j, std::vector<std::size_t>& o) {
              o = deck;
              std::swap(o[i], o[j]);
            },
            i + 1);
      }
      break;
    case ShuffleAlgorithm::TopToRandom:
      for (int r = 0; r < spec.rounds; ++r) {
        propagate(
            [](const std::vector<std::size_t>& deck, std::uint64_t pos, std::vector<std::size_t>& o) {
              o = deck;
              apply_top_to_random(o, pos);
            },
            n);
      }
      break;
    case ShuffleAlgorithm::Riffle:
      for (int r = 0; r < spec.rounds; ++r) {
        propagate(
            [](const std::vector<std::size_t>& deck, std::uint64_t mask,
               std::vector<std::size_t>& o) { apply_riffle(deck, mask, o); },
            std::uint64_t{1} << n);
      }
      break;
  }
  return dist;
}

}  // namespace dsgd
