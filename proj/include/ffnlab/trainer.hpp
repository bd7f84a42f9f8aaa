#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffnlab/autograd.hpp"
#include "ffnlab/data.hpp"
#include "ffnlab/model.hpp"
#include "ffnlab/schedule.hpp"

namespace ffnlab {

struct StepLog {
  int64_t step = 0;
  int64_t tokens = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct RunRecord {
  std::vector<StepLog> steps;
  uint64_t config_digest = 0;
  uint64_t seed = 0;
  std::string started_at;
  std::string ended_at;
  double total_wall_s = 0.0;
  int64_t total_tokens = 0;
};

inline uint64_t config_digest(const ModelConfig& c) {
  std::ostringstream ss;
  ss << c.n_blocks << "," << c.d_model << "," << c.n_heads << ","
     << c.vocab_size << "," << c.seq_len << "," << c.dropout_p << ","
     << c.variant.layer_count << "," << c.variant.width_multiple;
  return RngStream::fnv1a(ss.str());
}

// Everything a resumable run owns: weights, optimizer moments, position in
// the epoch, and the dropout stream counter.
template <class S>
struct TrainerSession {
  ModelWeights<S> weights;
  OptimizerState<S> opt;
  uint64_t seed = 0;
  uint64_t tokenizer_hash = 0;
  uint64_t dropout_counter = 0;
  int64_t next_batch = 0;

  static TrainerSession start(const ModelConfig& config, uint64_t seed,
                              uint64_t tokenizer_hash = 0) {
    TrainerSession s;
    s.weights = init_model<S>(config, seed);
    s.weights.ensure_grads();
    s.opt = OptimizerState<S>::for_model(s.weights);
    s.seed = seed;
    s.tokenizer_hash = tokenizer_hash;
    return s;
  }
};

struct TrainOptions {
  size_t batch_size = 16;
  int64_t max_batches = 0;  // 0 = run to the end of the epoch
  int checkpoint_stride = 0;
  std::string checkpoint_path;
  std::function<void(const StepLog&)> on_step;
};

template <class S>
void save_checkpoint(const TrainerSession<S>& session,
                     const std::string& path);
template <class S>
TrainerSession<S> load_checkpoint(const std::string& path,
                                  uint64_t expected_tokenizer_hash = 0);

namespace detail {
inline std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}
}  // namespace detail

// Single-epoch training: shuffled batches, per-step forward/backward,
// AdamW with the warmup+cosine learning rate. A non-finite loss or gradient
// aborts with a diagnostic naming the step.
template <class S>
RunRecord train_run(TrainerSession<S>& session, TrainSchedule schedule,
                    const PackedDataset& dataset,
                    const TrainOptions& opts = {}) {
  ModelWeights<S>& w = session.weights;
  const ModelConfig& cfg = w.config;
  if (dataset.seq_len != cfg.seq_len)
    throw std::invalid_argument("train_run: dataset/config seq_len mismatch");

  auto batch_list = batches(dataset, opts.batch_size, true, session.seed);
  if (batch_list.empty()) throw std::invalid_argument("train_run: no batches");
  if (schedule.total_steps == 0)
    schedule.total_steps = static_cast<int>(batch_list.size());
  schedule.validate();

  RngStream drop_rng(session.seed, "dropout");
  drop_rng.set_counter(session.dropout_counter);

  RunRecord record;
  record.config_digest = config_digest(cfg);
  record.seed = session.seed;
  record.started_at = detail::iso_now();

  int64_t end_batch = static_cast<int64_t>(batch_list.size());
  if (opts.max_batches > 0)
    end_batch = std::min(end_batch, session.next_batch + opts.max_batches);

  auto run_start = std::chrono::steady_clock::now();
  Tape<S> tape;
  for (; session.next_batch < end_batch; ++session.next_batch) {
    auto step_start = std::chrono::steady_clock::now();
    const auto& batch = batch_list[session.next_batch];
    int64_t step = session.next_batch + 1;  // 1-based

    tape.clear();
    w.zero_grads();
    Tensor<S> total = Tensor<S>::from({1}, {S(0)});
    for (size_t idx : batch) {
      std::vector<int> in = dataset.inputs(idx);
      std::vector<int> tgt = dataset.targets(idx);
      Tensor<S> logits = model_forward(tape, in, w, true, drop_rng);
      Tensor<S> loss = ops::cross_entropy_mean(tape, logits, tgt);
      total = ops::add(tape, total, loss);
    }
    Tensor<S> batch_loss =
        ops::scale(tape, total, S(1.0 / static_cast<double>(batch.size())));
    double loss_value = static_cast<double>(batch_loss.scalar());
    if (!std::isfinite(loss_value))
      throw std::runtime_error(
          "vanishing/exploding gradient: non-finite loss at step " +
          std::to_string(step));
    tape.backward(batch_loss);

    double lr = lr_at_step(schedule, static_cast<int>(step));
    try {
      adamw_step(w, session.opt, schedule, lr);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string(e.what()) + " at step " +
                               std::to_string(step));
    }
    session.dropout_counter = drop_rng.counter();

    StepLog log;
    log.step = step;
    log.tokens = record.total_tokens +
                 static_cast<int64_t>(batch.size()) * cfg.seq_len;
    log.loss = loss_value;
    log.lr = lr;
    log.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - step_start)
                      .count();
    record.total_tokens = log.tokens;
    record.steps.push_back(log);
    if (opts.on_step) opts.on_step(log);

    if (opts.checkpoint_stride > 0 && !opts.checkpoint_path.empty() &&
        step % opts.checkpoint_stride == 0) {
      TrainerSession<S> snapshot = session;
      snapshot.next_batch = session.next_batch + 1;  // resume after this batch
      save_checkpoint(snapshot, opts.checkpoint_path);
    }
  }
  record.ended_at = detail::iso_now();
  record.total_wall_s = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - run_start)
                            .count();
  return record;
}

// ---- checkpoint file: "FFNLAB" magic, version, config, counters, tensors
// (name, shape, raw little-endian values), optimizer moments ----

namespace detail {

template <class S>
void put_scalar(std::ostream& out, S v) {
  if constexpr (sizeof(S) == 4) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  } else {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  }
}

template <class S>
S get_scalar(std::istream& in) {
  S v;
  if constexpr (sizeof(S) == 4) {
    uint32_t bits = get_u32(in);
    std::memcpy(&v, &bits, 4);
  } else {
    uint64_t bits = get_u64(in);
    std::memcpy(&v, &bits, 8);
  }
  return v;
}

template <class S>
void put_buffer(std::ostream& out, const std::vector<S>& buf) {
  put_u64(out, buf.size());
  for (S v : buf) put_scalar(out, v);
}

template <class S>
void get_buffer(std::istream& in, std::vector<S>& buf) {
  uint64_t n = get_u64(in);
  if (n != buf.size()) throw std::runtime_error("checkpoint: size mismatch");
  for (auto& v : buf) v = get_scalar<S>(in);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace detail

template <class S>
void save_checkpoint(const TrainerSession<S>& session,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  auto& w = const_cast<TrainerSession<S>&>(session).weights;
  const ModelConfig& c = w.config;
  out.write("FFNLAB", 6);
  detail::put_u32(out, 1);
  detail::put_u32(out, sizeof(S) == 4 ? 32 : 64);
  detail::put_u64(out, config_digest(c));
  detail::put_u32(out, static_cast<uint32_t>(c.n_blocks));
  detail::put_u32(out, static_cast<uint32_t>(c.d_model));
  detail::put_u32(out, static_cast<uint32_t>(c.n_heads));
  detail::put_u32(out, static_cast<uint32_t>(c.vocab_size));
  detail::put_u32(out, static_cast<uint32_t>(c.seq_len));
  detail::put_scalar<double>(out, c.dropout_p);
  detail::put_u32(out, static_cast<uint32_t>(c.variant.layer_count));
  detail::put_u32(out, static_cast<uint32_t>(c.variant.width_multiple));
  detail::put_u64(out, w.num_params());
  detail::put_u64(out, session.seed);
  detail::put_u64(out, session.tokenizer_hash);
  detail::put_u64(out, session.dropout_counter);
  detail::put_u64(out, static_cast<uint64_t>(session.next_batch));
  detail::put_u64(out, static_cast<uint64_t>(session.opt.step));
  size_t slot = 0;
  auto& opt = const_cast<TrainerSession<S>&>(session).opt;
  w.for_each_param([&](const std::string& name, Tensor<S>& t, bool) {
    detail::put_string(out, name);
    detail::put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int e : t.shape) detail::put_u32(out, static_cast<uint32_t>(e));
    detail::put_buffer(out, *t.data);
    detail::put_buffer(out, opt.slots.at(slot).m);
    detail::put_buffer(out, opt.slots.at(slot).v);
    ++slot;
  });
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

template <class S>
TrainerSession<S> load_checkpoint(const std::string& path,
                                  uint64_t expected_tokenizer_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::string(magic, 6) != "FFNLAB")
    throw std::runtime_error("checkpoint: bad magic");
  if (detail::get_u32(in) != 1)
    throw std::runtime_error("checkpoint: unsupported version");
  uint32_t width = detail::get_u32(in);
  if (width != (sizeof(S) == 4 ? 32u : 64u))
    throw std::runtime_error("checkpoint: scalar width mismatch");
  uint64_t digest = detail::get_u64(in);
  ModelConfig c;
  c.n_blocks = static_cast<int>(detail::get_u32(in));
  c.d_model = static_cast<int>(detail::get_u32(in));
  c.n_heads = static_cast<int>(detail::get_u32(in));
  c.vocab_size = static_cast<int>(detail::get_u32(in));
  c.seq_len = static_cast<int>(detail::get_u32(in));
  c.dropout_p = detail::get_scalar<double>(in);
  c.variant.layer_count = static_cast<int>(detail::get_u32(in));
  c.variant.width_multiple = static_cast<int>(detail::get_u32(in));
  if (config_digest(c) != digest)
    throw std::runtime_error("checkpoint: config digest mismatch");
  uint64_t param_count_header = detail::get_u64(in);

  TrainerSession<S> s;
  s.weights = allocate_weights<S>(c);
  s.weights.ensure_grads();
  s.opt = OptimizerState<S>::for_model(s.weights);
  s.seed = detail::get_u64(in);
  s.tokenizer_hash = detail::get_u64(in);
  if (expected_tokenizer_hash != 0 && s.tokenizer_hash != 0 &&
      s.tokenizer_hash != expected_tokenizer_hash)
    throw std::runtime_error("checkpoint: tokenizer hash mismatch");
  s.dropout_counter = detail::get_u64(in);
  s.next_batch = static_cast<int64_t>(detail::get_u64(in));
  s.opt.step = static_cast<int64_t>(detail::get_u64(in));
  size_t slot = 0;
  s.weights.for_each_param([&](const std::string& name, Tensor<S>& t, bool) {
    if (detail::get_string(in) != name)
      throw std::runtime_error("checkpoint: tensor name mismatch");
    uint32_t rank = detail::get_u32(in);
    if (rank != t.rank())
      throw std::runtime_error("checkpoint: tensor rank mismatch");
    for (int e : t.shape)
      if (detail::get_u32(in) != static_cast<uint32_t>(e))
        throw std::runtime_error("checkpoint: tensor shape mismatch");
    detail::get_buffer(in, *t.data);
    detail::get_buffer(in, s.opt.slots.at(slot).m);
    detail::get_buffer(in, s.opt.slots.at(slot).v);
    ++slot;
  });
  if (param_count_header != s.weights.num_params())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  return s;
}

// Parameter count recorded in a checkpoint header without loading tensors.
inline uint64_t checkpoint_param_count(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::string(magic, 6) != "FFNLAB")
    throw std::runtime_error("checkpoint: bad magic");
  detail::get_u32(in);  // version
  detail::get_u32(in);  // scalar width
  detail::get_u64(in);  // digest
  for (int i = 0; i < 5; ++i) detail::get_u32(in);  // blocks..seq_len
  detail::get_scalar<double>(in);                   // dropout_p
  detail::get_u32(in);                              // layer_count
  detail::get_u32(in);                              // width_multiple
  return detail::get_u64(in);
}

}  // namespace ffnlab
