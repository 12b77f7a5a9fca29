#include "glumind/tensor.hpp"

#include "glumind/errors.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace glumind {

namespace {

std::pair<Index, Index> storage_dims(const std::vector<Index>& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError("tensor rank must be 1 or 2, got " + std::to_string(shape.size()));
  }
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
  }
  return shape.size() == 1 ? std::pair{Index{1}, shape[0]} : std::pair{shape[0], shape[1]};
}

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& in) {
  std::array<unsigned char, sizeof(UInt)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw ParseError("checkpoint truncated");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    v |= static_cast<UInt>(bytes[i]) << (8 * i);
  }
  return v;
}

}  // namespace

Tensor::Tensor(std::vector<Index> dims) : shape(std::move(dims)) {
  const auto [r, c] = storage_dims(shape);
  data = Matrix::Zero(r, c);
}

Tensor::Tensor(std::vector<Index> dims, Matrix values) : shape(std::move(dims)) {
  const auto [r, c] = storage_dims(shape);
  if (values.rows() != r || values.cols() != c) {
    throw ShapeError("tensor values do not match declared shape");
  }
  data = std::move(values);
}

void Tensor::zero_grad() { grad = Matrix::Zero(data.rows(), data.cols()); }

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (name.empty()) throw ConfigError("parameter name must not be empty");
  auto [it, inserted] = entries_.emplace(name, std::move(t));
  if (!inserted) throw ConfigError("duplicate parameter name: " + name);
  return it->second;
}

bool ParamStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

Tensor& ParamStore::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + std::string(name));
  return it->second;
}

const Tensor& ParamStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + std::string(name));
  return it->second;
}

Index ParamStore::parameter_count() const {
  Index n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto it = other.entries_.begin();
  for (const auto& [name, t] : entries_) {
    if (it->first != name || it->second.shape != t.shape) return false;
    ++it;
  }
  return true;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (!same_layout(other)) return false;
  auto it = other.entries_.begin();
  for (const auto& [_, t] : entries_) {
    const Matrix& a = t.data;
    const Matrix& b = it->second.data;
    for (Index i = 0; i < a.size(); ++i) {
      if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) {
        return false;
      }
    }
    ++it;
  }
  return true;
}

void write_checkpoint(std::ostream& out, const ParamStore& params) {
  out.write("GLUM", 4);
  put_le<std::uint16_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.data.size(); ++i) {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(t.data.data()[i]));
    }
  }
  if (!out) throw IoError("failed writing checkpoint stream");
}

ParamStore read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::string(magic.data(), 4) != "GLUM") throw ParseError("not a GLUM checkpoint (bad magic)");
  const auto version = get_le<std::uint16_t>(in);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in);
  ParamStore store;
  for (std::uint32_t p = 0; p < count; ++p) {
    const auto name_len = get_le<std::uint32_t>(in);
    if (name_len > (1u << 16)) throw ParseError("checkpoint parameter name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ParseError("checkpoint truncated in parameter name");
    const auto rank = get_le<std::uint32_t>(in);
    if (rank < 1 || rank > 2) throw ParseError("checkpoint parameter '" + name + "' has unsupported rank");
    std::vector<Index> dims(rank);
    for (auto& d : dims) d = static_cast<Index>(get_le<std::uint64_t>(in));
    Tensor t(dims);
    for (Index i = 0; i < t.data.size(); ++i) {
      t.data.data()[i] = std::bit_cast<double>(get_le<std::uint64_t>(in));
    }
    store.add(name, std::move(t));
  }
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, params);
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace glumind
