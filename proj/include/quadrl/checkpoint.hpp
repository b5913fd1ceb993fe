#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "quadrl/normalizer.hpp"
#include "quadrl/ppo.hpp"

namespace quadrl {

/// Binary checkpoint, all fields little-endian:
///
///   offset  type       field
///   0       char[8]    magic "QUADRLCK"
///   8       u32        format version (currently 1)
///   12      u32        reserved, 0
///   16      u64        training iteration
///   24      u64        environment steps consumed
///   32      u32        n_a, number of actor layer sizes, then u32[n_a] sizes
///   ..      u32        n_c, number of critic layer sizes, then u32[n_c] sizes
///   ..      u32[4]     activations: actor hidden, actor output, critic hidden,
///                      critic output (0 = tanh, 1 = identity)
///   ..      f64        normalizer sample count
///   ..      f64        normalizer clip
///   ..      f64[obs]   normalizer mean, then f64[obs] normalizer M2
///   ..      f64[act]   policy log-std
///   ..      f64[...]   actor parameters, then critic parameters; per layer
///                      W (out x in, row-major) followed by b (out)
///   end-8   u64        FNV-1a 64 hash of every preceding byte
struct Checkpoint {
  ppo::Policy policy;
  RunningNormalizer normalizer;
  std::uint64_t iteration = 0;
  std::uint64_t total_steps = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
/// Throws CheckpointError on bad magic, unsupported version, truncation,
/// inconsistent shapes or checksum mismatch.
Checkpoint read_checkpoint(std::istream& in);

/// Writes to a temporary sibling and renames, so readers never see a partial file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Human-readable summary (shapes, counts, normalizer and log-std stats).
std::string describe_checkpoint(const Checkpoint& ck);

}  // namespace quadrl
