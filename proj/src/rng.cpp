#include "tetherkit/rng.hpp"

#include <cmath>
#include <numbers>

namespace tetherkit {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream RandomStream::substream(std::uint64_t master_seed, std::uint64_t channel) {
  return RandomStream(splitmix64(splitmix64(master_seed) ^ splitmix64(~channel)));
}

std::uint64_t RandomStream::next_u64() {
  return splitmix64(key_ ^ splitmix64(counter_++));
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec3 RandomStream::normal3() {
  const double a = normal();
  const double b = normal();
  const double c = normal();
  return Vec3(a, b, c);
}

VecX RandomStream::normal_vector(Eigen::Index n) {
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

}  // namespace tetherkit
