#pragma once

// Shared plumbing: error taxonomy, counter-based RNG streams, deterministic
// parallel loops, float formatting.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nngpldp {

// ---- errors ------------------------------------------------------------

struct invalid_kernel : std::runtime_error {
  explicit invalid_kernel(const std::string& msg) : std::runtime_error("invalid-kernel: " + msg) {}
};
struct not_psd : std::runtime_error {
  explicit not_psd(const std::string& msg) : std::runtime_error("not-psd: " + msg) {}
};
struct unsupported_growth : std::runtime_error {
  explicit unsupported_growth(const std::string& msg) : std::runtime_error("unsupported-growth: " + msg) {}
};
struct unstable_mgf : std::runtime_error {
  explicit unstable_mgf(const std::string& msg) : std::runtime_error("unstable-mgf: " + msg) {}
};
struct insufficient_hits : std::runtime_error {
  explicit insufficient_hits(const std::string& msg) : std::runtime_error("insufficient-hits: " + msg) {}
};
struct config_error : std::runtime_error {
  explicit config_error(const std::string& field, const std::string& msg)
      : std::runtime_error("config error: field '" + field + "': " + msg), field_name(field) {}
  std::string field_name;
};
struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

// ---- seeding -----------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// A (master_seed, stream_id) pair addresses one independent variate stream.
// Identical (master_seed, stream_id, draw index) always yields the same
// variate, no matter how work is scheduled.
struct SeedSpec {
  std::uint64_t master_seed = 1;
  std::uint64_t stream_id = 0;

  // Child stream: mixes a salt into the stream id. Used to hand independent
  // streams to layers / replicates / MC blocks.
  SeedSpec derive(std::uint64_t salt) const {
    return SeedSpec{master_seed, splitmix64(stream_id * 0x9e3779b97f4a7c15ULL + salt + 1)};
  }
};

// ---- Philox4x32-10 counter-based generator -------------------------------

namespace detail {

inline void philox_round(std::uint32_t& c0, std::uint32_t& c1, std::uint32_t& c2,
                         std::uint32_t& c3, std::uint32_t k0, std::uint32_t k1) {
  const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * c0;
  const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * c2;
  const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
  const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
  c0 = hi1 ^ c1 ^ k0;
  c1 = lo1;
  c2 = hi0 ^ c3 ^ k1;
  c3 = lo0;
}

struct PhiloxBlock {
  std::uint32_t w[4];
};

// 10-round Philox4x32 keyed by the seed; the 128-bit counter carries
// (draw block index, stream id).
inline PhiloxBlock philox4x32(std::uint64_t key, std::uint64_t ctr_lo, std::uint64_t ctr_hi) {
  std::uint32_t c0 = std::uint32_t(ctr_lo), c1 = std::uint32_t(ctr_lo >> 32);
  std::uint32_t c2 = std::uint32_t(ctr_hi), c3 = std::uint32_t(ctr_hi >> 32);
  std::uint32_t k0 = std::uint32_t(key), k1 = std::uint32_t(key >> 32);
  for (int round = 0; round < 10; ++round) {
    philox_round(c0, c1, c2, c3, k0, k1);
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return PhiloxBlock{{c0, c1, c2, c3}};
}

}  // namespace detail

// One stream of iid variates with random access by draw index. Each counter
// block provides two uniforms / two normals; random-access calls cache
// nothing, so a const RandomStream is safe to share across tasks.
class RandomStream {
 public:
  explicit RandomStream(SeedSpec seed)
      : key_(splitmix64(seed.master_seed)), hi_(splitmix64(seed.stream_id ^ 0xA5A5A5A5DEADBEEFULL)) {}

  // uniform in (0,1], 53-bit resolution; index addresses the draw.
  double uniform(std::uint64_t index) const {
    const auto b = detail::philox4x32(key_, index, hi_);
    const std::uint64_t u64 = (std::uint64_t(b.w[0]) << 32) | b.w[1];
    return double((u64 >> 11) + 1) * 0x1.0p-53;
  }

  // standard normal pair from one counter block (Box–Muller).
  void normal_pair(std::uint64_t index, double& z0, double& z1) const {
    const auto b = detail::philox4x32(key_, index, hi_);
    const std::uint64_t a = (std::uint64_t(b.w[0]) << 32) | b.w[1];
    const std::uint64_t c = (std::uint64_t(b.w[2]) << 32) | b.w[3];
    const double u1 = double((a >> 11) + 1) * 0x1.0p-53;  // (0,1]
    const double u2 = double(c >> 11) * 0x1.0p-53;        // [0,1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    z0 = r * std::cos(6.283185307179586476925286766559 * u2);
    z1 = r * std::sin(6.283185307179586476925286766559 * u2);
  }

  // i-th standard normal of the stream.
  double normal(std::uint64_t index) const {
    double z0, z1;
    normal_pair(index >> 1, z0, z1);
    return (index & 1) ? z1 : z0;
  }

 private:
  std::uint64_t key_;
  std::uint64_t hi_;
};

// Sequential normal generator over a stream (amortizes one block per 2 draws).
class NormalSequence {
 public:
  explicit NormalSequence(SeedSpec seed) : stream_(seed) {}
  double next() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double z0;
    stream_.normal_pair(block_++, z0, spare_);
    have_ = true;
    return z0;
  }

 private:
  RandomStream stream_;
  std::uint64_t block_ = 0;
  double spare_ = 0.0;
  bool have_ = false;
};

// ---- deterministic parallel loop -----------------------------------------

// Static block partition over [0, n): results must be written to
// index-addressed slots inside fn, so the worker count never changes them.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t k = std::min<std::size_t>(std::size_t(workers), n);
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (std::size_t w = 0; w < k; ++w) {
    const std::size_t lo = n * w / k, hi = n * (w + 1) / k;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline int default_workers() {
  if (const char* env = std::getenv("NNGP_LDP_WORKERS")) {
    const long k = std::strtol(env, nullptr, 10);
    if (k >= 1) return int(k);
  }
  return 1;
}

// ---- float formatting ----------------------------------------------------

// 17 significant digits: round-trips any double.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

}  // namespace nngpldp
