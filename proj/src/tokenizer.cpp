#include "ffnlab/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "ffnlab/rng.hpp"

namespace ffnlab {

namespace {

constexpr uint64_t pair_key(int l, int r) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(l)) << 32) |
         static_cast<uint32_t>(r);
}

std::string to_hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xf]);
  }
  return out;
}

std::string from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) throw std::runtime_error("tokenizer: bad hex");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw std::runtime_error("tokenizer: bad hex digit");
  };
  std::string out;
  out.reserve(hex.size() / 2);
  for (size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<char>((nib(hex[i]) << 4) | nib(hex[i + 1])));
  return out;
}

struct Node {
  int id;
  int prev;
  int next;
  bool alive;
};

}  // namespace

TokenizerModel::TokenizerModel() {
  tokens_.reserve(257);
  tokens_.push_back("<|endoftext|>");
  for (int b = 0; b < 256; ++b)
    tokens_.push_back(std::string(1, static_cast<char>(b)));
}

void TokenizerModel::add_merge(int left, int right) {
  int rank = static_cast<int>(merges_.size());
  merges_.emplace_back(left, right);
  merge_rank_[pair_key(left, right)] = rank;
  tokens_.push_back(tokens_[left] + tokens_[right]);
}

TokenizerModel train_tokenizer(const std::string& corpus, int vocab_max) {
  if (corpus.empty())
    throw std::invalid_argument("train_tokenizer: empty corpus");
  if (vocab_max < 257)
    throw std::invalid_argument("train_tokenizer: vocab_max must be >= 257");

  TokenizerModel model;
  // Heap entries point into tokens_; keep the storage stable.
  model.tokens_.reserve(static_cast<size_t>(vocab_max));

  std::vector<Node> nodes(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    nodes[i] = {static_cast<unsigned char>(corpus[i]) +
                    TokenizerModel::kByteBase,
                static_cast<int>(i) - 1,
                i + 1 < corpus.size() ? static_cast<int>(i) + 1 : -1, true};
  }

  std::unordered_map<uint64_t, long long> counts;
  std::unordered_map<uint64_t, std::vector<int>> positions;
  for (size_t i = 0; i + 1 < corpus.size(); ++i) {
    uint64_t k = pair_key(nodes[i].id, nodes[i + 1].id);
    ++counts[k];
    positions[k].push_back(static_cast<int>(i));
  }

  // Max-heap with lazy invalidation; tie on count -> lexicographically
  // smallest (left bytes, right bytes).
  struct HeapEntry {
    long long count;
    uint64_t key;
    const std::string* lbytes;
    const std::string* rbytes;
  };
  auto cmp = [](const HeapEntry& a, const HeapEntry& b) {
    if (a.count != b.count) return a.count < b.count;
    if (*a.lbytes != *b.lbytes) return *a.lbytes > *b.lbytes;
    return *a.rbytes > *b.rbytes;
  };
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(cmp)> heap(
      cmp);
  auto push_pair = [&](uint64_t k, long long c) {
    int l = static_cast<int>(k >> 32), r = static_cast<int>(k & 0xffffffff);
    heap.push({c, k, &model.tokens_[l], &model.tokens_[r]});
  };
  for (auto& [k, c] : counts) push_pair(k, c);

  auto bump = [&](uint64_t k, long long delta, int pos) {
    long long& c = counts[k];
    c += delta;
    if (delta > 0 && pos >= 0) positions[k].push_back(pos);
    if (c >= 2) push_pair(k, c);  // heap validates against the latest count
  };

  while (model.vocab_size() < vocab_max) {
    uint64_t best = 0;
    bool found = false;
    while (!heap.empty()) {
      HeapEntry e = heap.top();
      auto it = counts.find(e.key);
      if (it == counts.end() || it->second != e.count || e.count < 2) {
        heap.pop();
        continue;
      }
      best = e.key;
      found = true;
      break;
    }
    if (!found) break;

    int l = static_cast<int>(best >> 32);
    int r = static_cast<int>(best & 0xffffffff);
    int z = model.vocab_size();
    model.add_merge(l, r);

    auto pos_list = std::move(positions[best]);
    positions.erase(best);
    std::sort(pos_list.begin(), pos_list.end());
    for (int p : pos_list) {
      Node& x = nodes[p];
      if (!x.alive || x.id != l || x.next < 0) continue;
      Node& y = nodes[x.next];
      if (!y.alive || y.id != r) continue;
      // Merge y into x, which becomes the new token z.
      if (x.prev >= 0) {
        bump(pair_key(nodes[x.prev].id, l), -1, -1);
        bump(pair_key(nodes[x.prev].id, z), +1, x.prev);
      }
      if (y.next >= 0) {
        bump(pair_key(r, nodes[y.next].id), -1, -1);
        bump(pair_key(z, nodes[y.next].id), +1, p);
      }
      y.alive = false;
      x.id = z;
      x.next = y.next;
      if (y.next >= 0) nodes[y.next].prev = p;
    }
    counts.erase(best);
  }
  return model;
}

std::vector<int> TokenizerModel::encode(const std::string& text) const {
  if (text.empty()) return {};
  size_t n = text.size();
  std::vector<Node> nodes(n);
  for (size_t i = 0; i < n; ++i)
    nodes[i] = {static_cast<unsigned char>(text[i]) + kByteBase,
                static_cast<int>(i) - 1,
                i + 1 < n ? static_cast<int>(i) + 1 : -1, true};

  // Apply merges in learned priority order: repeatedly take the applicable
  // pair of lowest rank, leftmost first.
  struct Cand {
    int rank;
    int pos;
  };
  auto cmp = [](const Cand& a, const Cand& b) {
    if (a.rank != b.rank) return a.rank > b.rank;
    return a.pos > b.pos;
  };
  std::priority_queue<Cand, std::vector<Cand>, decltype(cmp)> heap(cmp);
  auto push_if_mergeable = [&](int p) {
    if (p < 0) return;
    const Node& x = nodes[p];
    if (!x.alive || x.next < 0) return;
    auto it = merge_rank_.find(pair_key(x.id, nodes[x.next].id));
    if (it != merge_rank_.end()) heap.push({it->second, p});
  };
  for (size_t i = 0; i + 1 < n; ++i) push_if_mergeable(static_cast<int>(i));

  while (!heap.empty()) {
    Cand c = heap.top();
    heap.pop();
    Node& x = nodes[c.pos];
    if (!x.alive || x.next < 0) continue;
    Node& y = nodes[x.next];
    auto it = merge_rank_.find(pair_key(x.id, y.id));
    if (it == merge_rank_.end() || it->second != c.rank) continue;
    x.id = 257 + c.rank;
    y.alive = false;
    x.next = y.next;
    if (y.next >= 0) nodes[y.next].prev = c.pos;
    push_if_mergeable(x.prev);
    push_if_mergeable(c.pos);
  }

  std::vector<int> out;
  for (int p = 0; p >= 0; p = nodes[p].next)
    if (nodes[p].alive) out.push_back(nodes[p].id);
  return out;
}

std::string TokenizerModel::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab_size())
      throw std::out_of_range("decode: unknown token id");
    out += tokens_[id];
  }
  return out;
}

void TokenizerModel::save(std::ostream& out) const {
  out << "ffnlab-bpe 1 " << vocab_size() << " " << merges_.size() << "\n";
  for (int i = 0; i < vocab_size(); ++i)
    out << i << "\t" << to_hex(tokens_[i]) << "\n";
  for (auto& [l, r] : merges_) out << l << "\t" << r << "\n";
}

TokenizerModel TokenizerModel::load(std::istream& in) {
  std::string magic;
  int version = 0, vocab = 0, n_merges = 0;
  in >> magic >> version >> vocab >> n_merges;
  if (magic != "ffnlab-bpe" || version != 1 || vocab < 257)
    throw std::runtime_error("tokenizer file: bad header");
  TokenizerModel model;
  for (int i = 0; i < vocab; ++i) {
    int id;
    std::string hex;
    in >> id >> hex;
    if (!in || id != i) throw std::runtime_error("tokenizer file: bad entry");
    std::string bytes = from_hex(hex);
    if (i < 257) {
      if (bytes != model.tokens_[i])
        throw std::runtime_error("tokenizer file: base vocabulary mismatch");
    }
  }
  // Rebuild merged tokens from the merge list so invariants hold.
  std::vector<std::pair<int, int>> merges(n_merges);
  for (auto& [l, r] : merges) {
    in >> l >> r;
    if (!in) throw std::runtime_error("tokenizer file: truncated merges");
  }
  for (auto& [l, r] : merges) {
    if (l < 0 || l >= model.vocab_size() || r < 0 || r >= model.vocab_size())
      throw std::runtime_error("tokenizer file: merge references unknown id");
    model.add_merge(l, r);
  }
  if (model.vocab_size() != vocab)
    throw std::runtime_error("tokenizer file: vocab size mismatch");
  return model;
}

void TokenizerModel::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write tokenizer file: " + path);
  save(out);
}

TokenizerModel TokenizerModel::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read tokenizer file: " + path);
  return load(in);
}

uint64_t TokenizerModel::content_hash() const {
  std::ostringstream ss;
  save(ss);
  return RngStream::fnv1a(ss.str());
}

}  // namespace ffnlab
