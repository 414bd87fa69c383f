#pragma once

#include <cstdint>
#include <string>

#include "duplex/model.hpp"
#include "duplex/represent.hpp"

namespace duplex {

// Flat key = value run configuration. File values are applied first, CLI
// overrides second. `echo()` renders the effective configuration for
// provenance.
struct RunConfig {
  // model
  std::string profile = "desk";
  int layers = 2;
  int dim = 32;
  int heads = 4;
  int dec_heads = 1;
  int max_len = 128;
  int ffn_dim = 0;
  // text pipeline
  int vocab_max = 2000;
  double enc_mask_ratio = 0.3;
  double dec_mask_ratio = 0.5;
  int n_visible = 0;  // 0 -> derived per sequence
  // representation
  int dense_dim = 16;
  int sparse_k = 16;
  bool sparsify_query = true;
  // training
  int precision = 32;  // 32 or 64
  uint64_t seed = 1;
  int steps = 1000;
  int batch = 8;
  double lr = 2e-3;
  double temperature = 1.0;
  double w_mlm = 1.0;
  double w_dec = 1.0;
  double w_bow = 1.0;
  // fine-tuning
  int mine_n = 4;
  double teacher_sharpness = 5.0;
  int eval_every = 0;
  // search
  int topn = 10;

  static RunConfig from_file(const std::string& path);

  // Applies one key=value assignment; unknown keys and unparsable values are
  // data errors naming the key. Setting profile=paper loads the full-scale
  // dimensions immediately, so later keys can still override them.
  void set(const std::string& key, const std::string& value);

  void set_assignment(const std::string& assignment);  // "key=value"

  std::string echo() const;

  ModelConfig model_config(int vocab_size) const;
  ReprConfig repr_config(int vocab_size) const;
  void validate() const;
};

}  // namespace duplex
