#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>

namespace bsde {

/// 64-bit FNV-1a hash.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// SplitMix64 finalizer; a bijective mixer on 64-bit words.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Stream seed derived from the master seed and a label such as "brownian" or "chain".
std::uint64_t derive_stream_seed(std::uint64_t master, std::string_view label) noexcept;

/// Seed of block `block` inside a stream. Results do not depend on how blocks map to threads.
std::uint64_t derive_block_seed(std::uint64_t stream, std::uint64_t block) noexcept;

/// Paths per independently seeded block.
inline constexpr std::size_t kPathBlockSize = 256;

/// Runs fn(block) for block in [0, blocks) on up to `threads` workers.
/// Each block is handled by exactly one worker; fn must only write block-owned data.
void parallel_for_blocks(std::size_t blocks, unsigned threads,
                         const std::function<void(std::size_t)>& fn);

}  // namespace bsde
