#pragma once

// EMBD binary dataset files.
//
//   "ELID" | u32 version (=1) | u32 rows | u32 dim | u8 flag
//   rows*dim float32 values, row-major | rows int32 labels
//
// All integers and floats are little-endian. flag 0 marks raw vectors that
// still need projection, flag 1 marks final embeddings. Label -1 is the open
// class.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "elidecide/error.hpp"
#include "elidecide/feature_space.hpp"

namespace elidecide {

namespace embd_detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 4 + 1;
inline constexpr std::uint32_t kVersion = 1;

}  // namespace embd_detail

inline std::string encode_embd(const LabeledDataset& data) {
  using namespace embd_detail;
  std::string buf;
  buf.reserve(kHeaderSize + data.size() * (data.dim + 1) * 4);
  buf.append("ELID", 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(data.size()));
  put_u32(buf, static_cast<std::uint32_t>(data.dim));
  buf.push_back(data.final_form ? '\x01' : '\x00');
  for (const auto& s : data.samples) {
    ELIDECIDE_REQUIRE(static_cast<std::size_t>(s.embedding.size()) == data.dim, ErrorKind::DimensionMismatch,
                      "sample dimension mismatch while encoding");
    for (Eigen::Index j = 0; j < s.embedding.size(); ++j)
      put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(s.embedding[j])));
  }
  for (const auto& s : data.samples) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<std::int32_t>(s.label)));
  return buf;
}

inline LabeledDataset decode_embd(const std::string& bytes) {
  using namespace embd_detail;
  ELIDECIDE_REQUIRE(bytes.size() >= kHeaderSize, ErrorKind::FormatError, "file too short for EMBD header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  ELIDECIDE_REQUIRE(std::memcmp(p, "ELID", 4) == 0, ErrorKind::FormatError, "bad magic");
  const std::uint32_t version = get_u32(p + 4);
  ELIDECIDE_REQUIRE(version == kVersion, ErrorKind::FormatError, "unsupported version " + std::to_string(version));
  const std::uint32_t rows = get_u32(p + 8);
  const std::uint32_t dim = get_u32(p + 12);
  const unsigned char flag = p[16];
  ELIDECIDE_REQUIRE(flag <= 1, ErrorKind::FormatError, "bad flag byte");
  ELIDECIDE_REQUIRE(dim > 0, ErrorKind::FormatError, "dimension must be positive");

  const std::uint64_t payload = bytes.size() - kHeaderSize;
  const std::uint64_t expected = static_cast<std::uint64_t>(rows) * (static_cast<std::uint64_t>(dim) + 1) * 4;
  if (payload != expected) {
    // A payload that is a whole number of (row + label) records of some other
    // width means the rows disagree with the declared dimension.
    const std::uint64_t per_row = rows ? payload / (4ull * rows) : 0;
    if (rows > 0 && payload % (4ull * rows) == 0 && per_row >= 1)
      throw Error(ErrorKind::DimensionMismatch, "header declares n=" + std::to_string(dim) + " but rows hold " +
                                                    std::to_string(per_row - 1) + " values");
    throw Error(ErrorKind::FormatError, "payload size " + std::to_string(payload) + " != expected " +
                                            std::to_string(expected));
  }

  LabeledDataset data;
  data.dim = dim;
  data.final_form = flag == 1;
  data.samples.resize(rows);
  const unsigned char* values = p + kHeaderSize;
  const unsigned char* labels = values + static_cast<std::size_t>(rows) * dim * 4;
  int max_label = -1;
  for (std::uint32_t r = 0; r < rows; ++r) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (std::uint32_t j = 0; j < dim; ++j)
      v[j] = static_cast<double>(std::bit_cast<float>(get_u32(values + (static_cast<std::size_t>(r) * dim + j) * 4)));
    const auto label = std::bit_cast<std::int32_t>(get_u32(labels + static_cast<std::size_t>(r) * 4));
    ELIDECIDE_REQUIRE(label >= kOpenLabel, ErrorKind::FormatError, "label below -1");
    max_label = std::max(max_label, static_cast<int>(label));
    data.samples[r] = {std::move(v), static_cast<int>(label)};
  }
  data.class_count = max_label + 1;
  return data;
}

inline void save_dataset(const LabeledDataset& data, const std::filesystem::path& path) {
  const std::string bytes = encode_embd(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  ELIDECIDE_REQUIRE(out.good(), ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  ELIDECIDE_REQUIRE(out.good(), ErrorKind::IoError, "write failed for " + path.string());
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  ELIDECIDE_REQUIRE(in.good(), ErrorKind::IoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embd(bytes);
}

}  // namespace elidecide
