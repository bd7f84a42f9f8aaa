#include "ffnlab/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ffnlab/param_budget.hpp"

namespace ffnlab {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::runtime_error("config line " + std::to_string(line) + ": " +
                           what);
}

int to_int(const std::string& v, int line) {
  try {
    size_t pos;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    fail(line, "expected integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, int line) {
  try {
    size_t pos;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    fail(line, "expected number, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& v, int line) {
  try {
    size_t pos;
    uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    fail(line, "expected unsigned integer, got '" + v + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (schedule.max_lr <= 0.0)
    throw std::invalid_argument("max_lr must be > 0");
  if (schedule.warmup_steps < 1)
    throw std::invalid_argument("warmup_steps must be >= 1");
  if (log_stride < 1) throw std::invalid_argument("log_stride must be >= 1");
  if (checkpoint_stride < 0)
    throw std::invalid_argument("checkpoint_stride must be >= 0");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "schedule" && section != "data" &&
          section != "run")
        fail(line_no, "unknown section [" + section + "]");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    if (section.empty()) fail(line_no, "key outside of any section");

    if (section == "model") {
      if (key == "layer_count")
        c.model.variant.layer_count = to_int(value, line_no);
      else if (key == "width_multiple")
        c.model.variant.width_multiple = to_int(value, line_no);
      else if (key == "n_blocks") c.model.n_blocks = to_int(value, line_no);
      else if (key == "d_model") c.model.d_model = to_int(value, line_no);
      else if (key == "n_heads") c.model.n_heads = to_int(value, line_no);
      else if (key == "vocab_size")
        c.model.vocab_size = to_int(value, line_no);
      else if (key == "seq_len") c.model.seq_len = to_int(value, line_no);
      else if (key == "dropout_p")
        c.model.dropout_p = to_double(value, line_no);
      else
        fail(line_no, "unknown key '" + key + "' in [model]");
    } else if (section == "schedule") {
      if (key == "max_lr") c.schedule.max_lr = to_double(value, line_no);
      else if (key == "warmup_steps")
        c.schedule.warmup_steps = to_int(value, line_no);
      else if (key == "beta1") c.schedule.beta1 = to_double(value, line_no);
      else if (key == "beta2") c.schedule.beta2 = to_double(value, line_no);
      else if (key == "eps") c.schedule.eps = to_double(value, line_no);
      else if (key == "weight_decay")
        c.schedule.weight_decay = to_double(value, line_no);
      else if (key == "grad_clip")
        c.schedule.grad_clip = to_double(value, line_no);
      else
        fail(line_no, "unknown key '" + key + "' in [schedule]");
    } else if (section == "data") {
      if (key == "train_corpus") c.train_corpus = value;
      else if (key == "test_corpus") c.test_corpus = value;
      else if (key == "tokenizer_file") c.tokenizer_file = value;
      else if (key == "cache_dir") c.cache_dir = value;
      else if (key == "batch_size") c.batch_size = to_int(value, line_no);
      else
        fail(line_no, "unknown key '" + key + "' in [data]");
    } else {  // run
      if (key == "name") c.name = value;
      else if (key == "seed") c.seed = to_u64(value, line_no);
      else if (key == "output_dir") c.output_dir = value;
      else if (key == "log_stride") c.log_stride = to_int(value, line_no);
      else if (key == "checkpoint_stride")
        c.checkpoint_stride = to_int(value, line_no);
      else
        fail(line_no, "unknown key '" + key + "' in [run]");
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out.precision(17);
  out << "[model]\n";
  out << "layer_count = " << model.variant.layer_count << "\n";
  out << "width_multiple = " << model.variant.width_multiple << "\n";
  out << "n_blocks = " << model.n_blocks << "\n";
  out << "d_model = " << model.d_model << "\n";
  out << "n_heads = " << model.n_heads << "\n";
  out << "vocab_size = " << model.vocab_size << "\n";
  out << "seq_len = " << model.seq_len << "\n";
  out << "dropout_p = " << model.dropout_p << "\n";
  out << "\n[schedule]\n";
  out << "max_lr = " << schedule.max_lr << "\n";
  out << "warmup_steps = " << schedule.warmup_steps << "\n";
  out << "beta1 = " << schedule.beta1 << "\n";
  out << "beta2 = " << schedule.beta2 << "\n";
  out << "eps = " << schedule.eps << "\n";
  out << "weight_decay = " << schedule.weight_decay << "\n";
  out << "grad_clip = " << schedule.grad_clip << "\n";
  out << "\n[data]\n";
  if (!train_corpus.empty()) out << "train_corpus = " << train_corpus << "\n";
  if (!test_corpus.empty()) out << "test_corpus = " << test_corpus << "\n";
  if (!tokenizer_file.empty())
    out << "tokenizer_file = " << tokenizer_file << "\n";
  if (!cache_dir.empty()) out << "cache_dir = " << cache_dir << "\n";
  out << "batch_size = " << batch_size << "\n";
  out << "\n[run]\n";
  out << "name = " << name << "\n";
  out << "seed = " << seed << "\n";
  out << "output_dir = " << output_dir << "\n";
  out << "log_stride = " << log_stride << "\n";
  out << "checkpoint_stride = " << checkpoint_stride << "\n";
  return out.str();
}

namespace {

PresetEntry make_preset(const std::string& name, const std::string& table,
                        int layers, int width_multiple, int blocks,
                        int d_model, long long published_millions) {
  PresetEntry e;
  e.config.name = name;
  e.config.model.variant.layer_count = layers;
  e.config.model.variant.width_multiple = width_multiple;
  e.config.model.n_blocks = blocks;
  e.config.model.d_model = d_model;
  e.table = table;
  e.published_params_millions = published_millions;
  return e;
}

}  // namespace

std::vector<PresetEntry> experiment_matrix() {
  std::vector<PresetEntry> m;
  m.push_back(make_preset("3L-24-1024", "table1", 3, 4, 24, 1024, 726));
  m.push_back(make_preset("3L-24-672", "table1", 3, 4, 24, 672, 318));
  m.push_back(make_preset("3L-10-1024", "table1", 3, 4, 10, 1024, 314));
  m.push_back(make_preset("baseline", "table1", 2, 4, 24, 1024, 323));
  m.push_back(make_preset("1L-24-1024", "table1", 1, 4, 24, 1024, 147));
  m.push_back(make_preset("1L-24-1568", "table1", 1, 4, 24, 1568, 327));
  m.push_back(make_preset("1L-57-1024", "table1", 1, 4, 57, 1024, 320));
  m.push_back(make_preset("0L-24-1024", "table1", 0, 4, 24, 1024, 121));
  m.push_back(make_preset("0L-24-1728", "table1", 0, 4, 24, 1728, 322));
  m.push_back(make_preset("0L-72-1024", "table1", 0, 4, 72, 1024, 322));
  m.push_back(make_preset("2L-4d-24-1024", "table3", 2, 4, 24, 1024, 323));
  m.push_back(make_preset("2L-4d-24-672", "table3", 2, 4, 24, 672, 144));
  m.push_back(make_preset("2L-4d-10-1024", "table3", 2, 4, 10, 1024, 147));
  m.push_back(make_preset("2L-2d-24-1024", "table3", 2, 2, 24, 1024, 222));
  m.push_back(make_preset("2L-2d-24-1248", "table3", 2, 2, 24, 1248, 324));
  for (auto& e : m) {
    long long total = param_count(e.config.model).total;
    double published = 1e6 * static_cast<double>(e.published_params_millions);
    if (std::fabs(total - published) > 0.01 * published)
      throw std::logic_error("preset " + e.config.name +
                             " deviates from the published parameter count");
  }
  return m;
}

const PresetEntry* find_preset(const std::vector<PresetEntry>& matrix,
                               const std::string& name) {
  for (auto& e : matrix)
    if (e.config.name == name) return &e;
  return nullptr;
}

}  // namespace ffnlab
