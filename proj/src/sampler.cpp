#include "mcdsim/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "mcdsim/rng.hpp"

namespace mcdsim {

namespace {

std::uint64_t state_mask(unsigned n_reg) {
  return n_reg == 64 ? ~0ULL : ((1ULL << n_reg) - 1);
}

}  // namespace

void LfsrSpec::validate() const {
  if (n_reg < 2 || n_reg > 64) throw Error("lfsr: n_reg must be in 2..64, got " + std::to_string(n_reg));
  if (taps.empty()) throw Error("lfsr: tap set is empty");
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const unsigned t = taps[i];
    if (t < 1 || t > n_reg) {
      throw Error("lfsr: tap " + std::to_string(t) + " outside 1.." + std::to_string(n_reg));
    }
    if (std::find(taps.begin(), taps.begin() + static_cast<std::ptrdiff_t>(i), t) !=
        taps.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw Error("lfsr: duplicate tap " + std::to_string(t));
    }
  }
  if ((seed & state_mask(n_reg)) == 0) throw Error("lfsr: seed must be a nonzero n_reg-bit state");
  if ((seed & ~state_mask(n_reg)) != 0) throw Error("lfsr: seed wider than n_reg bits");
}

std::uint64_t lfsr_max_period(unsigned n_reg) { return state_mask(n_reg); }

Lfsr::Lfsr(LfsrSpec spec) : spec_(std::move(spec)), state_(spec_.seed) {
  spec_.validate();
  for (unsigned t : spec_.taps) tap_mask_ ^= 1ULL << (spec_.n_reg - t);
}

int Lfsr::step() {
  const int out = static_cast<int>(state_ & 1ULL);
  const auto feedback = static_cast<std::uint64_t>(std::popcount(state_ & tap_mask_) & 1);
  state_ = (state_ >> 1) | (feedback << (spec_.n_reg - 1));
  return out;
}

FifoOverflow::FifoOverflow(std::size_t occupancy, std::size_t capacity)
    : Error("bernoulli fifo overflow: occupancy " + std::to_string(occupancy) + " of " +
            std::to_string(capacity)),
      occupancy_(occupancy) {}

std::vector<std::uint64_t> derive_chain_seeds(std::uint64_t user_seed, unsigned k, unsigned n_reg) {
  const std::uint64_t mask = state_mask(n_reg);
  std::vector<std::uint64_t> seeds;
  std::uint64_t counter = 0;
  while (seeds.size() < k) {
    const std::uint64_t s = splitmix64(user_seed + 0x9E3779B97F4A7C15ULL * ++counter) & mask;
    if (s == 0 || std::find(seeds.begin(), seeds.end(), s) != seeds.end()) continue;
    seeds.push_back(s);
  }
  return seeds;
}

unsigned dropout_chain_count(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error("dropout probability must be 2^-k with k >= 1");
  int exp = 0;
  const double mant = std::frexp(p, &exp);
  if (mant != 0.5) {
    throw Error("dropout probability " + std::to_string(p) + " is not of the form 2^-k");
  }
  return static_cast<unsigned>(1 - exp);
}

BernoulliSampler::BernoulliSampler(const SamplerConfig& cfg)
    : sipo_width_(cfg.sipo_width), fifo_depth_(cfg.fifo_depth) {
  if (cfg.k == 0) throw Error("sampler: k must be >= 1 (p = 1 is unsupported)");
  for (std::uint64_t s : derive_chain_seeds(cfg.seed, cfg.k, cfg.n_reg)) {
    chains_.emplace_back(LfsrSpec{cfg.n_reg, cfg.taps, s});
  }
  if (sipo_width_ == 0) throw Error("sampler: sipo width must be positive");
  if (fifo_depth_ == 0) throw Error("sampler: fifo depth must be positive");
}

BernoulliSampler::BernoulliSampler(std::vector<LfsrSpec> chains, std::size_t sipo_width,
                                   std::size_t fifo_depth)
    : sipo_width_(sipo_width), fifo_depth_(fifo_depth) {
  if (chains.empty()) throw Error("sampler: k must be >= 1 (p = 1 is unsupported)");
  for (auto& c : chains) chains_.emplace_back(std::move(c));
  if (sipo_width_ == 0) throw Error("sampler: sipo width must be positive");
  if (fifo_depth_ == 0) throw Error("sampler: fifo depth must be positive");
}

double BernoulliSampler::drop_prob() const { return std::ldexp(1.0, -static_cast<int>(k())); }

int BernoulliSampler::draw_drop_bit() {
  int bit = 1;
  for (auto& c : chains_) bit &= c.step();
  ++decisions_;
  switch (forced_) {
    case ForcedDrop::NeverDrop: return 0;
    case ForcedDrop::AlwaysDrop: return 1;
    case ForcedDrop::None: break;
  }
  return bit;
}

void BernoulliSampler::produce_word() {
  if (fifo_.size() >= fifo_depth_) throw FifoOverflow(fifo_.size(), fifo_depth_);
  MaskWord w;
  w.bits.resize(sipo_width_);
  w.used = sipo_width_;
  for (std::size_t j = 0; j < sipo_width_; ++j) {
    w.bits[j] = static_cast<std::uint8_t>(1 - draw_drop_bit());
  }
  fifo_.push_back(std::move(w));
}

MaskWord BernoulliSampler::consume_word() {
  if (fifo_.empty()) produce_word();
  MaskWord w = std::move(fifo_.front());
  fifo_.pop_front();
  return w;
}

MaskWord BernoulliSampler::fill_mask_word() {
  produce_word();
  return consume_word();
}

std::vector<MaskWord> BernoulliSampler::mask_stream_for_layer(std::size_t filters) {
  if (filters == 0) throw Error("mask stream: filter count must be >= 1");
  const std::size_t n_words = (filters + sipo_width_ - 1) / sipo_width_;
  std::vector<MaskWord> words;
  words.reserve(n_words);
  for (std::size_t i = 0; i < n_words; ++i) words.push_back(fill_mask_word());
  words.back().used = filters - (n_words - 1) * sipo_width_;
  return words;
}

}  // namespace mcdsim
