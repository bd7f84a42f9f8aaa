#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace ffnlab {

// Byte-level BPE. Id 0 is the end-of-text special, ids 1..256 are the raw
// bytes, merged tokens follow in merge order.
class TokenizerModel {
 public:
  static constexpr int kEndOfText = 0;
  static constexpr int kByteBase = 1;

  TokenizerModel();

  int vocab_size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token_bytes(int id) const { return tokens_.at(id); }
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  void save(std::ostream& out) const;
  static TokenizerModel load(std::istream& in);
  void save_file(const std::string& path) const;
  static TokenizerModel load_file(const std::string& path);

  // FNV-1a over the serialized form; ties checkpoints to their tokenizer.
  uint64_t content_hash() const;

  friend TokenizerModel train_tokenizer(const std::string& corpus,
                                        int vocab_max);

 private:
  void add_merge(int left, int right);

  std::vector<std::string> tokens_;            // id -> bytes
  std::vector<std::pair<int, int>> merges_;    // priority order
  std::unordered_map<uint64_t, int> merge_rank_;  // pair key -> rank
};

// Learns merges over the raw byte sequence of the corpus until vocab_max is
// reached or no adjacent pair occurs at least twice. Ties on frequency break
// to the lexicographically smallest (left-bytes, right-bytes) pair.
TokenizerModel train_tokenizer(const std::string& corpus, int vocab_max);

}  // namespace ffnlab
