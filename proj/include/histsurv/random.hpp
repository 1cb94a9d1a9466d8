#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace histsurv {

// mt19937_64 is fully specified by the standard and the boost
// distributions are portable, so a seed pins every draw on every platform.
using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream seed for (master seed, stream index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return boost::random::uniform_01<double>()(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return boost::random::normal_distribution<double>()(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double gamma(double shape, double scale) {
    return boost::random::gamma_distribution<double>(shape, scale)(engine_);
  }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  bool bernoulli(double p) { return uniform() < p; }
  Engine& engine() { return engine_; }

 private:
  Engine engine_;
};

}  // namespace histsurv
