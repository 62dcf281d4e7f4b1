#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace toolforge {

std::uint64_t fnv1a64(std::string_view data);
std::string to_hex(std::uint64_t v);

// Shortest decimal that round-trips back to the same double.
std::string format_real(double v);

std::string lowercase(std::string_view s);
std::string trim(std::string_view s);

// Canonical question form used by the VQA script and exact-match scoring:
// lowercase, punctuation stripped, whitespace collapsed to single spaces.
std::string normalize_question(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// The pipeline RNG. SplitMix64: state advances by the golden-gamma constant,
// output is the finalized mix. Chosen because its full state is one u64,
// which keeps checkpoints trivial and the algorithm documentable.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n) by rejection, so the distribution is exact.
  std::uint64_t below(std::uint64_t n);

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

// Fisher-Yates driven by SplitMix64; std::shuffle is not portable bit-for-bit.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace toolforge
