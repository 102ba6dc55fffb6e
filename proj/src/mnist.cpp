#include "syminv/mnist.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "syminv/random.hpp"

namespace syminv {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

bool has_gz_extension(const std::filesystem::path& p) { return p.extension() == ".gz"; }

std::vector<std::uint8_t> read_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  for (;;) {
    const int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(f, &code);
      gzclose(f);
      throw std::runtime_error("gzip error in " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(f);
  return out;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.inputs = Matrix(indices.size(), inputs.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = inputs.row(indices[i]);
    std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

void Dataset::validate() const {
  if (inputs.rows() != labels.size()) {
    throw FormatError("dataset has " + std::to_string(inputs.rows()) + " images but " +
                      std::to_string(labels.size()) + " labels");
  }
  for (int l : labels)
    if (l < 0 || l >= kMnistClasses) throw FormatError("label out of range: " + std::to_string(l));
  for (double v : inputs.data())
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("pixel outside [0,1]");
}

Matrix parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("IDX image stream truncated: header needs 16 bytes");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    throw FormatError("IDX image stream has magic " + std::to_string(magic) + ", expected 2051");
  }
  const std::size_t count = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  if (rows != kMnistSide || cols != kMnistSide) {
    throw FormatError("IDX images are " + std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected 28x28");
  }
  const std::size_t expected = 16 + count * kMnistPixels;
  if (bytes.size() != expected) {
    throw FormatError("IDX image stream holds " + std::to_string(bytes.size()) +
                      " bytes, header implies " + std::to_string(expected));
  }
  Matrix m(count, kMnistPixels);
  auto out = m.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = bytes[16 + i] / 255.0;
  return m;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("IDX label stream truncated: header needs 8 bytes");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic) {
    throw FormatError("IDX label stream has magic " + std::to_string(magic) + ", expected 2049");
  }
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() != 8 + count) {
    throw FormatError("IDX label stream holds " + std::to_string(bytes.size() - 8) +
                      " labels, header says " + std::to_string(count));
  }
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int l = bytes[8 + i];
    if (l >= kMnistClasses) {
      throw FormatError("label " + std::to_string(l) + " at index " + std::to_string(i) +
                        " is outside 0..9");
    }
    labels[i] = l;
  }
  return labels;
}

std::vector<std::uint8_t> serialize_idx_images(const Matrix& images) {
  if (images.cols() != kMnistPixels) {
    throw DimensionError("serialize_idx_images: expected 784 columns, got " +
                         images.shape_string());
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size());
  append_be32(out, kIdxImageMagic);
  append_be32(out, static_cast<std::uint32_t>(images.rows()));
  append_be32(out, kMnistSide);
  append_be32(out, kMnistSide);
  for (double v : images.data()) {
    const double px = std::clamp(std::round(v * 255.0), 0.0, 255.0);
    out.push_back(static_cast<std::uint8_t>(px));
  }
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  append_be32(out, kIdxLabelMagic);
  append_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l >= kMnistClasses) throw FormatError("label out of range: " + std::to_string(l));
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  if (has_gz_extension(path)) return read_gzip(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (has_gz_extension(path)) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (f == nullptr) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (n != static_cast<int>(bytes.size())) throw std::runtime_error("short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  Dataset d;
  try {
    d.inputs = parse_idx_images(read_file_bytes(images));
  } catch (const FormatError& e) {
    throw FormatError(images.string() + ": " + e.what());
  }
  try {
    d.labels = parse_idx_labels(read_file_bytes(labels));
  } catch (const FormatError& e) {
    throw FormatError(labels.string() + ": " + e.what());
  }
  if (d.inputs.rows() != d.labels.size()) {
    throw FormatError(images.string() + " and " + labels.string() + " disagree on sample count");
  }
  return d;
}

MnistFiles load_mnist(const std::filesystem::path& dir) {
  auto pick = [&](const std::string& stem) {
    const auto raw = dir / stem;
    if (std::filesystem::exists(raw)) return raw;
    const auto gz = dir / (stem + ".gz");
    if (std::filesystem::exists(gz)) return gz;
    throw std::runtime_error("MNIST file " + stem + "[.gz] not found in " + dir.string());
  };
  MnistFiles files;
  files.train = load_idx_dataset(pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte"));
  files.test = load_idx_dataset(pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte"));
  return files;
}

std::filesystem::path resolve_mnist_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("MNIST_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data/mnist";
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            const SplitSpec& spec) {
  if (spec.train_count + spec.val_count > n) {
    throw std::invalid_argument("split: " + std::to_string(spec.train_count) + " + " +
                                std::to_string(spec.val_count) + " samples requested from " +
                                std::to_string(n));
  }
  Rng rng(spec.seed);
  const auto perm = rng.permutation(n);
  std::vector<std::size_t> train(perm.begin(), perm.begin() + spec.train_count);
  std::vector<std::size_t> val(perm.begin() + spec.train_count,
                               perm.begin() + spec.train_count + spec.val_count);
  return {std::move(train), std::move(val)};
}

std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec) {
  const auto [train, val] = split_indices(data.size(), spec);
  return {data.subset(train), data.subset(val)};
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t epoch_seed) {
  if (batch_size == 0) throw std::invalid_argument("epoch_batches: batch_size must be >= 1");
  Rng rng(epoch_seed);
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return batches;
}

}  // namespace syminv
