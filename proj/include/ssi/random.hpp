#pragma once

#include <cstdint>
#include <random>

namespace ssi {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded source that splits into independent, index-addressed substreams.
class RandomStream {
public:
  explicit RandomStream(std::uint64_t seed) : key_(splitmix64(seed)) {}

  std::uint64_t key() const { return key_; }

  RandomStream substream(std::uint64_t index) const {
    RandomStream s(0);
    s.key_ = splitmix64(key_ ^ splitmix64(index + 0x632be59bd9b4e019ULL));
    return s;
  }

  std::mt19937_64 engine() const { return std::mt19937_64(key_); }

private:
  std::uint64_t key_;
};

} // namespace ssi
