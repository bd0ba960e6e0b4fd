#include "labelaudit/rng.hpp"

#include <bit>

#include "labelaudit/parallel.hpp"

#ifdef LABELAUDIT_HAVE_OPENMP
#include <omp.h>
#endif

namespace labelaudit {

int max_threads() {
#ifdef LABELAUDIT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_stream(std::uint64_t parent, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(parent ^ mix64(h));
}

std::uint64_t derive_stream(std::uint64_t parent, std::int64_t key) {
  return mix64(parent ^ mix64(static_cast<std::uint64_t>(key) + 0x632be59bd9b4e019ULL));
}

std::uint64_t derive_stream(std::uint64_t parent, std::span<const double> values) {
  std::uint64_t h = parent;
  for (double v : values) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  return h;
}

std::vector<double> sample_dirichlet(std::span<const double> alpha, Engine& engine) {
  std::vector<double> out(alpha.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] <= 0.0) continue;
    std::gamma_distribution<double> gamma(alpha[i], 1.0);
    out[i] = gamma(engine);
    sum += out[i];
  }
  if (sum <= 0.0) {
    // All gamma draws underflowed: fall back to the mean.
    double total = 0.0;
    for (double a : alpha) total += a > 0.0 ? a : 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) out[i] = alpha[i] > 0.0 ? alpha[i] / total : 0.0;
    return out;
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace labelaudit
