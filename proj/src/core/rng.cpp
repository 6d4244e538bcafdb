#include "rng.hpp"

#include <cmath>
#include <stdexcept>

namespace sep {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

uint64_t Rng::derive(uint64_t seed, const std::string& name) {
  return splitmix64(splitmix64(seed) ^ fnv1a64(name));
}

uint64_t Rng::derive(uint64_t seed, const std::string& name, uint64_t index) {
  return splitmix64(derive(seed, name) ^ splitmix64(index + 0x51ed2701a9b4e22fULL));
}

uint64_t Rng::uniform_index(uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_index: bound must be >= 1");
  const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
  return lo + static_cast<int64_t>(uniform_index(static_cast<uint64_t>(hi - lo) + 1));
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::log_uniform(double lo, double hi) {
  if (!(lo > 0.0) || hi < lo) throw std::invalid_argument("log_uniform: need 0 < lo <= hi");
  return std::exp(uniform(std::log(lo), std::log(hi)));
}

double Rng::normal() {
  // Box-Muller; u1 nudged away from 0 so the log is finite.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

std::vector<size_t> Rng::sample_without_replacement(size_t n, size_t k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  // Partial Fisher-Yates over an index pool.
  std::vector<size_t> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<size_t> out(k);
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(uniform_index(n - i));
    std::swap(pool[i], pool[j]);
    out[i] = pool[i];
  }
  return out;
}

}  // namespace sep
