#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsgd/random.hpp"

namespace dsgd {

// A bijection on {0, ..., n-1}. mapping[t] is the data index placed at
// position t of the shuffled order.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> mapping);

  static Permutation identity(std::size_t n);

  std::size_t size() const { return mapping_.size(); }
  std::size_t operator[](std::size_t t) const { return mapping_[t]; }
  const std::vector<std::size_t>& mapping() const { return mapping_; }

  bool operator==(const Permutation&) const = default;

 private:
  std::vector<std::size_t> mapping_;
};

bool is_bijection(std::span<const std::size_t> mapping);

enum class ShuffleAlgorithm { FisherYates, Riffle, TopToRandom, Identity };

std::string to_string(ShuffleAlgorithm algorithm);
// Accepts "fisher-yates", "riffle", "top-to-random", "identity".
ShuffleAlgorithm parse_shuffle_algorithm(const std::string& name);

struct ShufflerSpec {
  ShuffleAlgorithm algorithm = ShuffleAlgorithm::FisherYates;
  // Number of riffle / top-to-random moves. Ignored by FisherYates and Identity.
  int rounds = 0;

  bool operator==(const ShufflerSpec&) const = default;
};

// Draws one permutation of {0, ..., n-1}. Round-based shufflers start from the
// identity order. Riffle rounds follow the Gilbert-Shannon-Reeds model: each
// round draws n fair bits; bit p = 0 means output position p takes the next
// card of the top packet (the first k cards, k = number of zero bits), bit 1
// takes the next card of the bottom packet. This gives a Binomial(n, 1/2) cut
// followed by a uniformly random interleaving.
Permutation shuffle(const ShufflerSpec& spec, std::size_t n, RandomSource& rng);

// One GSR riffle of `deck` driven by the bit mask described above.
void apply_riffle(std::span<const std::size_t> deck, std::uint64_t mask,
                  std::span<std::size_t> out);

// Moves the top card so that it ends at `position` (0 leaves the deck as is).
void apply_top_to_random(std::span<std::size_t> deck, std::size_t position);

struct EnumerationLimits {
  std::size_t max_n = 6;
  // Cap on (reachable permutations x branches) summed over shuffler steps.
  std::uint64_t budget = 10'000'000;
};

// Exact output distribution of a shuffler, indexed by lexicographic rank.
struct PermutationDistribution {
  std::size_t n = 0;
  std::vector<double> probability;

  double operator()(const Permutation& p) const;
};

// Work estimate used for the budget check, without running the enumeration.
std::uint64_t enumeration_work(const ShufflerSpec& spec, std::size_t n);

// Exhaustively propagates every internal random decision of the shuffler.
// Throws BudgetExceeded if n > limits.max_n or the work exceeds the budget.
PermutationDistribution enumerate_distribution(const ShufflerSpec& spec, std::size_t n,
                                               const EnumerationLimits& limits = {});

std::uint64_t factorial(std::size_t n);
// Lexicographic rank in [0, n!) and its inverse.
std::uint64_t permutation_rank(std::span<const std::size_t> mapping);
Permutation permutation_unrank(std::uint64_t rank, std::size_t n);

}  // namespace dsgd
