#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace brenier {

/// Engine for the stream identified by (seed, tags...). Every random draw in
/// the library comes from a stream derived this way, so results depend only
/// on the seed and the position in the run, never on call history.
inline std::mt19937_64 make_rng(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (tags.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace brenier
