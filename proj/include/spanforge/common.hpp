#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace spanforge {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SPANFORGE_ERROR(Name)                                    \
  struct Name : Error {                                          \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

SPANFORGE_ERROR(IdenticalEntities);
SPANFORGE_ERROR(MalformedId);
SPANFORGE_ERROR(DuplicatePageId);
SPANFORGE_ERROR(OffsetOutOfRange);
SPANFORGE_ERROR(RaggedTable);
SPANFORGE_ERROR(TableTooLarge);
SPANFORGE_ERROR(MalformedRecord);
SPANFORGE_ERROR(SnippetInfeasible);
SPANFORGE_ERROR(InvalidMaskSet);
SPANFORGE_ERROR(NoViableExample);
SPANFORGE_ERROR(SchemaViolation);
SPANFORGE_ERROR(ShapeMismatch);
SPANFORGE_ERROR(EmptyEvidenceRegion);
SPANFORGE_ERROR(EmptyTable);
SPANFORGE_ERROR(CellOutOfRange);
SPANFORGE_ERROR(KTooLarge);
SPANFORGE_ERROR(TooFewGroups);
SPANFORGE_ERROR(Divergence);
SPANFORGE_ERROR(IoError);

#undef SPANFORGE_ERROR

// FNV-1a, used for content hashes and rng seeding. Stable across platforms.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t hash_combine(uint64_t h, uint64_t v) {
  // splitmix64 finalizer over the xor
  uint64_t x = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Deterministic rng. We avoid std distributions (implementation-defined
// sequences) so generated artifacts are bit-stable everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    // xorshift* variant (splitmix64)
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, n)
  uint64_t uniform(uint64_t n) {
    if (n == 0) return 0;
    // rejection sampling to kill modulo bias
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  double uniform_real() {  // in [0, 1)
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  bool coin() { return (next_u64() & 1) != 0; }

  double gaussian() {
    // Box-Muller; one value per call, cached pair dropped for simplicity
    double u1 = uniform_real();
    double u2 = uniform_real();
    while (u1 <= 1e-300) u1 = uniform_real();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Parallel map over [0, n); results land by index so output ordering never
// depends on scheduling.
inline void parallel_for(size_t n, unsigned threads,
                         const std::function<void(size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  unsigned k = std::min<unsigned>(threads, static_cast<unsigned>(n));
  for (unsigned t = 0; t < k; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace spanforge
