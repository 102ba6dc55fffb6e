#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "syminv/network.hpp"

namespace syminv {

/// Binary checkpoint layout, all integers little-endian:
///
///   8 bytes   magic "SYMINVCK"
///   u32       format version (1)
///   u64 x5    depth, filters, use_batchnorm, input_dim, n_classes
///   f64 x2    bn_epsilon, bn_momentum
///   u64       tensor count
///   per tensor: u64 rows, u64 cols, rows*cols f64 in row-major order
///
/// Tensor order: W1..Wd, theta, then for each layer bn_scale, bn_shift,
/// bn_run_mean, bn_run_var as 1 x filters rows (Arch2 only). Doubles are
/// stored as their IEEE-754 bit patterns, so a round trip is exact.
struct Checkpoint {
  ArchConfig config;
  NetworkParams params;
};

std::vector<std::uint8_t> encode_checkpoint(const ArchConfig& config, const NetworkParams& params);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ArchConfig& config,
                     const NetworkParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace syminv
