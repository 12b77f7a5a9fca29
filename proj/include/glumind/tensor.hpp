#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace glumind {

/// Dense row-major storage shared by every tensor in the library.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Index = Eigen::Index;

/// Named trainable array of rank 1 or 2.
///
/// Rank-1 tensors of length n are stored as a 1 x n matrix so that every
/// tensor can enter the tape directly.
struct Tensor {
  std::vector<Index> shape;
  Matrix data;
  std::optional<Matrix> grad;

  Tensor() = default;
  explicit Tensor(std::vector<Index> dims);
  Tensor(std::vector<Index> dims, Matrix values);

  static Tensor vector(Index n) { return Tensor({n}); }
  static Tensor matrix(Index rows, Index cols) { return Tensor({rows, cols}); }

  [[nodiscard]] Index numel() const { return data.size(); }
  [[nodiscard]] std::size_t rank() const { return shape.size(); }
  void zero_grad();
};

/// Ordered name -> Tensor map holding every trainable parameter.
///
/// Iteration is lexicographic by name, which fixes the order of optimizer
/// updates, checkpoint records and flattened views.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  Tensor& add(const std::string& name, Tensor t);
  [[nodiscard]] bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  [[nodiscard]] const Tensor& at(std::string_view name) const;

  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] Index parameter_count() const;
  [[nodiscard]] std::vector<std::string> names() const;

  void zero_grads();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  [[nodiscard]] auto begin() const { return entries_.begin(); }
  [[nodiscard]] auto end() const { return entries_.end(); }

  /// Bitwise equality of names, shapes and values (grads ignored).
  [[nodiscard]] bool same_values(const ParamStore& other) const;
  /// Same names and shapes; values may differ.
  [[nodiscard]] bool same_layout(const ParamStore& other) const;

 private:
  Map entries_;
};

// Checkpoint container: "GLUM" magic, u16 version, u32 parameter count, then
// per parameter: u32 name length, name bytes, u32 rank, rank x u64 dims,
// little-endian f64 payload in row-major order.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParamStore& params);
ParamStore read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace glumind
