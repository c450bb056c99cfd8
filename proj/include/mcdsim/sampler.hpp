#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include "mcdsim/error.hpp"

namespace mcdsim {

/// Fibonacci LFSR description. Register positions are 1..n_reg; in the
/// integer state, position p is bit (n_reg - p), so position n_reg is the LSB.
struct LfsrSpec {
  unsigned n_reg = 16;
  std::vector<unsigned> taps = {16, 15, 13, 4};
  std::uint64_t seed = 1;

  void validate() const;
};

/// 2^n_reg - 1, the period of a maximal-length tap set.
std::uint64_t lfsr_max_period(unsigned n_reg);

class Lfsr {
 public:
  explicit Lfsr(LfsrSpec spec);

  /// Emits the bit at position n_reg, shifts every register one position
  /// towards n_reg, and loads the XOR of the tapped positions into position 1.
  int step();

  std::uint64_t state() const { return state_; }
  const LfsrSpec& spec() const { return spec_; }

 private:
  LfsrSpec spec_;
  std::uint64_t state_;
  std::uint64_t tap_mask_ = 0;
};

/// One PF-wide word of filter-wise keep decisions: bits[j] = 1 keeps filter j
/// of the current group. Bits at index >= used were generated but cover no filter.
struct MaskWord {
  std::vector<std::uint8_t> bits;
  std::size_t used = 0;

  std::size_t width() const { return bits.size(); }
  bool keep(std::size_t j) const { return bits.at(j) != 0; }
  friend bool operator==(const MaskWord&, const MaskWord&) = default;
};

class FifoOverflow : public Error {
 public:
  FifoOverflow(std::size_t occupancy, std::size_t capacity);
  std::size_t occupancy() const { return occupancy_; }

 private:
  std::size_t occupancy_;
};

/// Test hook overriding the AND output.
enum class ForcedDrop { None, NeverDrop, AlwaysDrop };

struct SamplerConfig {
  unsigned k = 2;  ///< chains; drop probability is 2^-k
  std::size_t sipo_width = 64;
  std::size_t fifo_depth = 16;
  unsigned n_reg = 16;
  std::vector<unsigned> taps = {16, 15, 13, 4};
  std::uint64_t seed = 0;
};

/// Distinct nonzero n_reg-bit seeds for k chains, expanded from one user seed.
std::vector<std::uint64_t> derive_chain_seeds(std::uint64_t user_seed, unsigned k, unsigned n_reg);

/// k for p = 2^-k; throws unless p is exactly dyadic with k >= 1.
unsigned dropout_chain_count(double p);

/// k ANDed LFSR chains feeding a SIPO register and a depth-D FIFO of mask words.
/// The AND output is the drop indicator, so P(drop) = 2^-k.
class BernoulliSampler {
 public:
  explicit BernoulliSampler(const SamplerConfig& cfg);
  BernoulliSampler(std::vector<LfsrSpec> chains, std::size_t sipo_width, std::size_t fifo_depth);

  unsigned k() const { return static_cast<unsigned>(chains_.size()); }
  double drop_prob() const;
  std::size_t sipo_width() const { return sipo_width_; }
  std::size_t fifo_depth() const { return fifo_depth_; }
  std::size_t fifo_occupancy() const { return fifo_.size(); }
  /// Keep/drop decisions drawn from the chains so far.
  std::uint64_t decisions_drawn() const { return decisions_; }

  void force(ForcedDrop mode) { forced_ = mode; }

  /// Steps every chain once and returns the AND of their outputs (1 = drop).
  int draw_drop_bit();

  /// Shifts sipo_width drop bits through the SIPO and enqueues the keep word.
  /// Throws FifoOverflow when the FIFO already holds fifo_depth words.
  void produce_word();
  /// Dequeues the oldest word, producing one first if the FIFO is empty.
  MaskWord consume_word();
  /// produce_word() followed by consume_word().
  MaskWord fill_mask_word();

  /// ceil(filters / sipo_width) words; the last word's `used` marks the tail.
  std::vector<MaskWord> mask_stream_for_layer(std::size_t filters);

 private:
  std::vector<Lfsr> chains_;
  std::size_t sipo_width_;
  std::size_t fifo_depth_;
  std::deque<MaskWord> fifo_;
  std::uint64_t decisions_ = 0;
  ForcedDrop forced_ = ForcedDrop::None;
};

}  // namespace mcdsim
