#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dsgd/shuffling.hpp"

namespace dsgd {

enum class Regime { GlobalShuffle, LocalShuffle, IIDSampling, WithoutReplacement };

std::string to_string(Regime regime);
// Accepts "global", "local", "iid", "without-replacement".
Regime parse_regime(const std::string& name);

struct StreamSpec {
  Regime regime = Regime::GlobalShuffle;
  std::size_t n = 0;
  std::size_t workers = 1;     // M
  std::size_t batch_size = 1;  // b, per worker
  std::size_t epochs = 1;      // S
  ShufflerSpec shuffler;
  std::uint64_t seed = 0;

  // Iterations per epoch, n / (M b).
  std::size_t iterations_per_epoch() const { return n / (workers * batch_size); }
  // Throws InvalidArgument unless n, M, b, S are positive and M b divides n.
  void validate() const;

  bool operator==(const StreamSpec&) const = default;
};

// Seed of the randomness used in epoch `epoch` (0-based) by `worker`; worker
// 0 is the master (global shuffle, sampling), worker m+1 is local worker m.
std::uint64_t epoch_seed(std::uint64_t master, std::size_t epoch, std::size_t worker);

// Realized per-epoch, per-iteration, per-worker index sets. All coordinates
// are 0-based.
class BatchStream {
 public:
  BatchStream(StreamSpec spec, std::vector<std::size_t> indices,
              std::vector<Permutation> provenance);

  const StreamSpec& spec() const { return spec_; }
  std::size_t epochs() const { return spec_.epochs; }
  std::size_t iterations() const { return spec_.iterations_per_epoch(); }
  std::size_t workers() const { return spec_.workers; }
  std::size_t batch_size() const { return spec_.batch_size; }

  std::span<const std::size_t> batch(std::size_t epoch, std::size_t iter, std::size_t worker) const;
  // All M batches of one iteration, worker-major.
  std::span<const std::size_t> iteration(std::size_t epoch, std::size_t iter) const;

  // GlobalShuffle: one permutation per epoch. LocalShuffle: the epoch-0
  // global permutation, then for each later epoch one permutation per worker
  // of positions within its block. Empty for the sampling regimes.
  const std::vector<Permutation>& provenance() const { return provenance_; }

  bool operator==(const BatchStream&) const = default;

 private:
  StreamSpec spec_;
  std::vector<std::size_t> indices_;
  std::vector<Permutation> provenance_;
};

BatchStream build_stream(const StreamSpec& spec);

// Global-shuffle stream of a single epoch for an explicit permutation: worker
// m gets the contiguous block [m n/M, (m+1) n/M) of the shuffled order, sliced
// into T batches of size b.
std::vector<std::size_t> partition_in_order(const Permutation& sigma, std::size_t workers,
                                            std::size_t batch_size);

// Text debug format: a header line, then one line per (epoch, iteration):
//   "<epoch> <iter> | <worker 1 indices> | <worker 2 indices> ..."
// with 1-based epoch/iteration and 0-based sample indices.
void write_stream_text(std::ostream& out, const BatchStream& stream);

// A batch tuple (B_1, ..., B_M); each batch is stored sorted.
using BatchTuple = std::vector<std::vector<std::size_t>>;

// Per-candidate conditional probabilities for the batch tuple at iteration t
// (0-based, i.e. after t completed iterations) given the first t tuples of the
// epoch. For each candidate B the value is
//   P(D(t) = B | history, B occurs at one of the iterations t..T-1),
// which is the conditional probability of the tuple sampled without
// replacement from the T - t tuples still to come. Under a sufficient shuffler
// every value equals 1 / (T - t). When M b = 1 the condition is implied by the
// history and the values form the ordinary next-batch distribution.
struct ConditionalBatchDistribution {
  std::map<BatchTuple, double> probability;
  // P(history) under the shuffler.
  double history_probability = 0.0;
};

ConditionalBatchDistribution conditional_batch_distribution(
    const StreamSpec& spec, std::size_t t, const std::vector<BatchTuple>& history,
    const EnumerationLimits& limits = {});

// The same quantity for every history of length t that has positive
// probability under the shuffler, computed in one pass over all n!
// permutations.
std::map<std::vector<BatchTuple>, ConditionalBatchDistribution> conditional_batch_table(
    const StreamSpec& spec, std::size_t t, const EnumerationLimits& limits = {});

}  // namespace dsgd
