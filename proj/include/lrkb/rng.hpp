#pragma once

#include <array>
#include <cstdint>

#include "lrkb/common.hpp"

namespace lrkb {

/// Philox4x32-10 block function (Salmon et al., Random123).
///
/// Stateless: maps a 128-bit counter and a 64-bit key to 128 random bits.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter counter, Key key) noexcept;
};

/// Reproducible stream of standard normal deviates.
///
/// Stream splitting: the 64-bit `seed` is the Philox key, and the counter is
/// (block index low, block index high, stream low, stream high). Distinct
/// `stream` values therefore never share a counter, so streams are
/// independent and can be consumed in any order or on any thread. Each Philox
/// block yields two 53-bit uniforms, turned into two normals by Box-Muller.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) noexcept;

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double normal() noexcept;

  /// Fills `out` in index order.
  void fill(Eigen::Ref<Vector> out) noexcept;
  /// Fills a matrix column by column.
  Matrix matrix(Index rows, Index cols) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<double, 2> uniforms_{};
  int uniform_pos_ = 2;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// Stream ids reserved by library samplers, kept away from small path indices.
inline constexpr std::uint64_t kStiefelStream = 0x5354494546454c00ULL;
inline constexpr std::uint64_t kEnsembleStream = 0x454e53454d424c00ULL;

}  // namespace lrkb
