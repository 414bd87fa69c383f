#include "duplex/runconfig.hpp"

#include <sstream>

#include "duplex/errors.hpp"
#include "duplex/io.hpp"

namespace duplex {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  for (const auto& raw : read_lines(path)) {
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    cfg.set_assignment(line);
  }
  return cfg;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw DataError("config: expected key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "profile") {
    if (value == "desk") {
      profile = "desk";
      const RunConfig d{};
      layers = d.layers;
      dim = d.dim;
      heads = d.heads;
      dec_heads = d.dec_heads;
      max_len = d.max_len;
      ffn_dim = d.ffn_dim;
      dense_dim = d.dense_dim;
      sparse_k = d.sparse_k;
      vocab_max = d.vocab_max;
    } else if (value == "paper") {
      profile = "paper";
      const ModelConfig p = ModelConfig::paper();
      layers = p.n_layers;
      dim = p.dim;
      heads = p.n_heads;
      dec_heads = p.dec_heads;
      max_len = p.max_len;
      ffn_dim = p.ffn_dim;
      dense_dim = p.dense_dim;
      sparse_k = 384;
      vocab_max = p.vocab_size;
    } else {
      throw DataError("config key 'profile': expected desk or paper, got '" + value + "'");
    }
  } else if (key == "layers") layers = parse_int(key, value);
  else if (key == "dim") dim = parse_int(key, value);
  else if (key == "heads") heads = parse_int(key, value);
  else if (key == "dec_heads") dec_heads = parse_int(key, value);
  else if (key == "max_len") max_len = parse_int(key, value);
  else if (key == "ffn_dim") ffn_dim = parse_int(key, value);
  else if (key == "vocab_max") vocab_max = parse_int(key, value);
  else if (key == "enc_mask_ratio") enc_mask_ratio = parse_double(key, value);
  else if (key == "dec_mask_ratio") dec_mask_ratio = parse_double(key, value);
  else if (key == "n_visible") n_visible = parse_int(key, value);
  else if (key == "dense_dim") dense_dim = parse_int(key, value);
  else if (key == "sparse_k") sparse_k = parse_int(key, value);
  else if (key == "sparsify_query") sparsify_query = parse_bool(key, value);
  else if (key == "precision") precision = parse_int(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "steps") steps = parse_int(key, value);
  else if (key == "batch") batch = parse_int(key, value);
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "temperature") temperature = parse_double(key, value);
  else if (key == "w_mlm") w_mlm = parse_double(key, value);
  else if (key == "w_dec") w_dec = parse_double(key, value);
  else if (key == "w_bow") w_bow = parse_double(key, value);
  else if (key == "mine_n") mine_n = parse_int(key, value);
  else if (key == "teacher_sharpness") teacher_sharpness = parse_double(key, value);
  else if (key == "eval_every") eval_every = parse_int(key, value);
  else if (key == "topn") topn = parse_int(key, value);
  else throw DataError("unknown config key '" + key + "'");
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  os << "batch = " << batch << "\n"
     << "dec_heads = " << dec_heads << "\n"
     << "dec_mask_ratio = " << dec_mask_ratio << "\n"
     << "dense_dim = " << dense_dim << "\n"
     << "dim = " << dim << "\n"
     << "enc_mask_ratio = " << enc_mask_ratio << "\n"
     << "eval_every = " << eval_every << "\n"
     << "ffn_dim = " << ffn_dim << "\n"
     << "heads = " << heads << "\n"
     << "layers = " << layers << "\n"
     << "lr = " << lr << "\n"
     << "max_len = " << max_len << "\n"
     << "mine_n = " << mine_n << "\n"
     << "n_visible = " << n_visible << "\n"
     << "precision = " << precision << "\n"
     << "profile = " << profile << "\n"
     << "seed = " << seed << "\n"
     << "sparse_k = " << sparse_k << "\n"
     << "sparsify_query = " << (sparsify_query ? "true" : "false") << "\n"
     << "steps = " << steps << "\n"
     << "teacher_sharpness = " << teacher_sharpness << "\n"
     << "temperature = " << temperature << "\n"
     << "topn = " << topn << "\n"
     << "vocab_max = " << vocab_max << "\n"
     << "w_bow = " << w_bow << "\n"
     << "w_dec = " << w_dec << "\n"
     << "w_mlm = " << w_mlm << "\n";
  return os.str();
}

ModelConfig RunConfig::model_config(int vocab_size) const {
  ModelConfig c;
  c.n_layers = layers;
  c.dim = dim;
  c.n_heads = heads;
  c.dec_heads = dec_heads;
  c.max_len = max_len;
  c.ffn_dim = ffn_dim;
  c.vocab_size = vocab_size;
  c.dense_dim = dense_dim;
  return c;
}

ReprConfig RunConfig::repr_config(int vocab_size) const {
  ReprConfig rc;
  rc.dense_dim = dense_dim;
  rc.sparse_k = sparse_k;
  rc.vocab_size = vocab_size;
  rc.sparsify_query = sparsify_query;
  return rc;
}

void RunConfig::validate() const {
  if (precision != 32 && precision != 64) {
    throw DataError("config key 'precision': must be 32 or 64");
  }
  if (enc_mask_ratio < 0.0 || enc_mask_ratio >= 1.0 || dec_mask_ratio < 0.0 ||
      dec_mask_ratio >= 1.0) {
    throw DataError("config: mask ratios must lie in [0, 1)");
  }
  if (temperature <= 0.0) throw DataError("config key 'temperature': must be positive");
}

}  // namespace duplex
