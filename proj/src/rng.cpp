#include "pplearn/rng.hpp"

#include "pplearn/errors.hpp"

#include <cmath>

namespace pplearn {

namespace {

std::mt19937_64 seeded(std::initializer_list<std::uint32_t> words) {
  std::seed_seq seq(words);
  return std::mt19937_64(seq);
}

std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seeded({lo(seed), hi(seed)})) {}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag) {
  Rng r(0);
  r.engine_ = seeded({lo(seed), hi(seed), lo(stream), hi(stream), lo(tag), hi(tag), 0x9e3779b9u});
  return r;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
}

double Rng::normal() {
  // Marsaglia polar method; the second variate is kept for the next call.
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

int Rng::uniform_label(int k) {
  if (k < 1) {
    throw ConfigError("uniform_label needs k >= 1");
  }
  // Rejection sampling keeps the labels exactly equiprobable.
  const std::uint64_t range = static_cast<std::uint64_t>(k);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t x = engine_();
  while (x >= limit) {
    x = engine_();
  }
  return static_cast<int>(x % range) + 1;
}

}  // namespace pplearn
