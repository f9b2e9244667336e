#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace metalda {

// Seeded stream of the draws the sampler needs. Identical seeds give
// identical sequences.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}
  // Independent substream, e.g. one per worker or per test document.
  RngStream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    gen_.seed(seq);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // log of a Gamma(shape, rate 1) draw. Shapes below 1 use the
  // Ga(a) = Ga(a + 1) * U^(1/a) boost in log space so tiny shapes do not
  // underflow.
  double log_gamma(double shape) {
    if (shape < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return log_gamma(shape + 1.0) + std::log(u) / shape;
    }
    double x = std::gamma_distribution<double>(shape, 1.0)(gen_);
    return std::log(x);
  }

  // Gamma with shape/rate parametrization (mean shape / rate).
  double gamma(double shape, double rate) { return std::exp(log_gamma(shape)) / rate; }

  double beta(double a, double b) {
    const double lx = log_gamma(a);
    const double ly = log_gamma(b);
    // x / (x + y) = 1 / (1 + exp(ly - lx))
    return 1.0 / (1.0 + std::exp(ly - lx));
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace metalda
