#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "syminv/matrix.hpp"

namespace syminv {

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;
inline constexpr std::size_t kMnistSide = 28;
inline constexpr std::size_t kMnistPixels = kMnistSide * kMnistSide;
inline constexpr int kMnistClasses = 10;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Images as rows of pixels in [0, 1], with a class label per row.
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Throws FormatError when the row/label counts disagree or a value is out of range.
  void validate() const;
};

struct SplitSpec {
  std::size_t train_count = 50000;
  std::size_t val_count = 10000;
  std::uint64_t seed = 0;
};

/// Decodes an IDX3 image file: big-endian magic 2051, count, 28, 28, then
/// one unsigned byte per pixel. Pixels are divided by 255.
Matrix parse_idx_images(std::span<const std::uint8_t> bytes);
/// Decodes an IDX1 label file: big-endian magic 2049, count, then one byte per label.
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Inverse of parse_idx_images; pixels are rounded back to 0..255.
std::vector<std::uint8_t> serialize_idx_images(const Matrix& images);
std::vector<std::uint8_t> serialize_idx_labels(std::span<const int> labels);

/// Reads a whole file, transparently inflating it when the name ends in ".gz".
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

struct MnistFiles {
  Dataset train;
  Dataset test;
};

/// Loads the four standard MNIST files from `dir`, preferring the raw file
/// and falling back to a ".gz" sibling.
MnistFiles load_mnist(const std::filesystem::path& dir);

/// Resolves the data directory: explicit argument, then $MNIST_DATA_DIR, then "data/mnist".
std::filesystem::path resolve_mnist_dir(const std::string& explicit_dir = {});

/// Seeded disjoint split; the train part is taken first from one permutation.
std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec);
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            const SplitSpec& spec);

/// Consecutive slices of a fresh seeded permutation of 0..n-1. The final
/// partial batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t epoch_seed);

}  // namespace syminv
