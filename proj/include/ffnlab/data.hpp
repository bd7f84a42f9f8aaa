#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffnlab/rng.hpp"
#include "ffnlab/tokenizer.hpp"

namespace ffnlab {

// Fixed-length next-token windows: each stored sequence holds seq_len+1 ids;
// inputs are ids [0, seq_len), targets ids [1, seq_len].
struct PackedDataset {
  int seq_len = 0;
  std::string split;                 // "train" or "test"
  std::vector<int32_t> store;        // count * (seq_len + 1) ids

  size_t count() const {
    return seq_len == 0 ? 0 : store.size() / (seq_len + 1);
  }
  const int32_t* sequence(size_t i) const {
    return store.data() + i * (seq_len + 1);
  }
  std::vector<int> inputs(size_t i) const {
    const int32_t* s = sequence(i);
    return std::vector<int>(s, s + seq_len);
  }
  std::vector<int> targets(size_t i) const {
    const int32_t* s = sequence(i);
    return std::vector<int>(s + 1, s + 1 + seq_len);
  }
};

// Contiguous windows of seq_len+1 tokens with stride seq_len; the tail
// remainder shorter than seq_len+1 is dropped.
inline PackedDataset pack_corpus(const std::vector<int>& tokens, int seq_len,
                                 int vocab_size = 0,
                                 const std::string& split = "train") {
  if (seq_len < 1) throw std::invalid_argument("pack_corpus: seq_len >= 1");
  if (tokens.empty()) throw std::invalid_argument("pack_corpus: empty stream");
  PackedDataset ds;
  ds.seq_len = seq_len;
  ds.split = split;
  size_t window = static_cast<size_t>(seq_len) + 1;
  for (size_t start = 0; start + window <= tokens.size();
       start += static_cast<size_t>(seq_len)) {
    for (size_t j = 0; j < window; ++j) {
      int id = tokens[start + j];
      if (id < 0 || (vocab_size > 0 && id >= vocab_size))
        throw std::out_of_range("pack_corpus: token id out of range");
      ds.store.push_back(static_cast<int32_t>(id));
    }
  }
  return ds;
}

// ceil(N / batch_size) batches of sequence indices; the final batch may be
// partial. A nonzero-seed shuffle applies a seeded permutation first.
inline std::vector<std::vector<size_t>> batches(const PackedDataset& ds,
                                                size_t batch_size,
                                                bool shuffle = false,
                                                uint64_t seed = 0) {
  if (batch_size < 1) throw std::invalid_argument("batches: batch_size >= 1");
  size_t n = ds.count();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle && n > 1) {
    RngStream rng(seed, "shuffle");
    for (size_t i = n - 1; i > 0; --i) {
      size_t j = rng.next_below(i + 1);
      std::swap(order[i], order[j]);
    }
  }
  std::vector<std::vector<size_t>> out;
  for (size_t b = 0; b < n; b += batch_size) {
    size_t end = std::min(n, b + batch_size);
    out.emplace_back(order.begin() + b, order.begin() + end);
  }
  return out;
}

inline size_t batch_count(size_t n_sequences, size_t batch_size) {
  return (n_sequences + batch_size - 1) / batch_size;
}

// ---- packed cache file: "FFNPACK" magic, version, seq_len, count, then
// raw 32-bit little-endian ids ----

namespace detail {
inline void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}
inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("packed cache: truncated");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}
inline void put_u64(std::ostream& out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}
inline uint64_t get_u64(std::istream& in) {
  uint64_t lo = get_u32(in);
  uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}
}  // namespace detail

inline void save_packed(const PackedDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write packed cache: " + path);
  out.write("FFNPACK", 7);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<uint32_t>(ds.seq_len));
  detail::put_u64(out, ds.count());
  for (int32_t id : ds.store)
    detail::put_u32(out, static_cast<uint32_t>(id));
}

inline PackedDataset load_packed(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read packed cache: " + path);
  char magic[7];
  in.read(magic, 7);
  if (!in || std::string(magic, 7) != "FFNPACK")
    throw std::runtime_error("packed cache: bad magic");
  uint32_t version = detail::get_u32(in);
  if (version != 1) throw std::runtime_error("packed cache: bad version");
  PackedDataset ds;
  ds.seq_len = static_cast<int>(detail::get_u32(in));
  uint64_t count = detail::get_u64(in);
  ds.store.resize(count * (ds.seq_len + 1));
  for (auto& id : ds.store) id = static_cast<int32_t>(detail::get_u32(in));
  return ds;
}

// Corpus input: either a directory of plain-text files (one document each,
// read in sorted name order) or a single file with one document per line.
inline std::vector<std::string> load_documents(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<std::string> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (auto& e : fs::directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      std::string content((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
      if (!content.empty()) docs.push_back(std::move(content));
    }
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read corpus: " + path);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) docs.push_back(line);
  }
  if (docs.empty()) throw std::runtime_error("corpus is empty: " + path);
  return docs;
}

// Concatenated token stream with the end-of-text id between documents.
inline std::vector<int> tokenize_documents(
    const TokenizerModel& tok, const std::vector<std::string>& docs) {
  std::vector<int> out;
  for (size_t i = 0; i < docs.size(); ++i) {
    if (i > 0) out.push_back(TokenizerModel::kEndOfText);
    std::vector<int> ids = tok.encode(docs[i]);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

}  // namespace ffnlab
