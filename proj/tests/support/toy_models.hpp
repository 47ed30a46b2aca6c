#pragma once

// Random toy models and data for tests and benchmarks.

#include <cstdint>
#include <filesystem>
#include <string>

#include "ilmfuse/container.hpp"
#include "ilmfuse/utterance_set.hpp"

namespace ilmfuse::testing {

/// "<sos>", "<eos>", then `size - 2` word pieces alternating between
/// word-initial ("▁a") and continuation ("b") forms.
Vocabulary toy_vocabulary(int size);

struct RnntShape {
  int vocab = 5;
  int feature_dim = 3;
  int enc_layers = 1;
  int enc_hidden = 4;
  int enc_out_dim = 3;
  bool layer_norm = false;
  int embed_dim = 3;
  int pred_layers = 1;
  int pred_hidden = 4;
  int pred_out_dim = 0;
  int joint_dim = 5;
  std::string activation = "tanh";
  float scale = 1.0f;
};

struct AedShape {
  int vocab = 4;
  int feature_dim = 3;
  int enc_layers = 1;
  int enc_hidden = 3;
  int enc_dim = 4;
  bool layer_norm = false;
  int dec_layers = 1;
  int dec_hidden = 4;
  int att_dim = 3;
  float scale = 1.0f;
};

struct LmShape {
  int vocab = 5;
  int embed_dim = 3;
  int layers = 1;
  int hidden = 4;
  int proj_dim = 0;
  bool tied_embeddings = false;
  float scale = 1.0f;
};

ModelContainer random_rnnt(const RnntShape& shape, std::uint64_t seed);
ModelContainer random_aed(const AedShape& shape, std::uint64_t seed);
ModelContainer random_lm(const LmShape& shape, std::uint64_t seed);

/// Same structure as `random_lm` with every weight zero, so each step is
/// exactly uniform over the vocabulary.
ModelContainer uniform_lm(int vocab);

/// Fills every tensor the container's hyperparameters require.
void fill_random(ModelContainer& c, std::uint64_t seed, float scale);

Tensor random_features(int frames, int dim, std::uint64_t seed);

/// `count` utterances with random references (1..max_ref tokens drawn from
/// the regular non-special ids) and random features of 2..max_frames rows.
UtteranceSet synthetic_set(int count, const Vocabulary& vocab, int feature_dim,
                           std::uint64_t seed, int max_ref = 4, int max_frames = 6);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace ilmfuse::testing
