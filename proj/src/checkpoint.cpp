#include "syminv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>
#include <string>

#include "syminv/mnist.hpp"

namespace syminv {
namespace {

constexpr char kMagic[8] = {'S', 'Y', 'M', 'I', 'N', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void tensor(std::size_t rows, std::size_t cols, std::span<const double> data) {
    u64(rows);
    u64(cols);
    for (double v : data) f64(v);
  }
  std::vector<std::uint8_t> bytes;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  Matrix tensor() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (cols != 0 && rows > (bytes_.size() - pos_) / 8 / cols) {
      throw FormatError("checkpoint tensor of " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " exceeds the remaining payload");
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) v = f64();
    return m;
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) throw FormatError("checkpoint has trailing bytes");
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Vector as_vector(const Matrix& m, std::size_t expected) {
  if (m.rows() != 1 || m.cols() != expected) {
    throw FormatError("checkpoint batch-norm tensor is " + m.shape_string() + ", expected 1x" +
                      std::to_string(expected));
  }
  return {m.data().begin(), m.data().end()};
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ArchConfig& config, const NetworkParams& params) {
  check_shapes(params, config);
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kVersion);
  w.u64(config.depth);
  w.u64(config.filters);
  w.u64(config.use_batchnorm ? 1 : 0);
  w.u64(config.input_dim);
  w.u64(config.n_classes);
  w.f64(config.bn_epsilon);
  w.f64(config.bn_momentum);
  const std::size_t count = config.depth + 1 + (config.use_batchnorm ? 4 * config.depth : 0);
  w.u64(count);
  for (const auto& m : params.weights) w.tensor(m.rows(), m.cols(), m.data());
  w.tensor(params.theta.rows(), params.theta.cols(), params.theta.data());
  for (std::size_t l = 0; l < params.bn_scale.size(); ++l) {
    w.tensor(1, params.bn_scale[l].size(), params.bn_scale[l]);
    w.tensor(1, params.bn_shift[l].size(), params.bn_shift[l]);
    w.tensor(1, params.bn_run_mean[l].size(), params.bn_run_mean[l]);
    w.tensor(1, params.bn_run_var[l].size(), params.bn_run_var[l]);
  }
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not a checkpoint file");
  if (const auto v = r.u32(); v != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ck;
  auto& c = ck.config;
  c.depth = r.u64();
  c.filters = r.u64();
  c.use_batchnorm = r.u64() != 0;
  c.input_dim = r.u64();
  c.n_classes = r.u64();
  c.bn_epsilon = r.f64();
  c.bn_momentum = r.f64();
  c.validate();
  const std::size_t expected = c.depth + 1 + (c.use_batchnorm ? 4 * c.depth : 0);
  if (const auto count = r.u64(); count != expected) {
    throw FormatError("checkpoint lists " + std::to_string(count) + " tensors, expected " +
                      std::to_string(expected));
  }
  for (std::size_t l = 0; l < c.depth; ++l) ck.params.weights.push_back(r.tensor());
  ck.params.theta = r.tensor();
  if (c.use_batchnorm) {
    for (std::size_t l = 0; l < c.depth; ++l) {
      ck.params.bn_scale.push_back(as_vector(r.tensor(), c.filters));
      ck.params.bn_shift.push_back(as_vector(r.tensor(), c.filters));
      ck.params.bn_run_mean.push_back(as_vector(r.tensor(), c.filters));
      ck.params.bn_run_var.push_back(as_vector(r.tensor(), c.filters));
    }
  }
  r.expect_end();
  check_shapes(ck.params, c);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ArchConfig& config,
                     const NetworkParams& params) {
  write_file_bytes(path, encode_checkpoint(config, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace syminv
