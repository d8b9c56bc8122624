#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nn.hpp"
#include "tensor.hpp"
#include "types.hpp"

namespace quiz {

struct ModelConfig {
  int64_t input_size = 64;   // cube side of both model inputs
  int64_t channels = 64;     // C of the merged feature map
  std::vector<int> encoder_blocks{1, 1, 1};  // residual blocks per stage
  int64_t tf_layers = 4;
  int64_t tf_heads = 4;
  int64_t tf_dim = 128;
  int64_t mlp_hidden = 256;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Merged C x Dc x Hc x Wc encoder output; Wc spans both inputs.
struct FeatureMap {
  Tensor tensor;
  std::string provenance;
};

namespace detail {

// conv -> IN -> ReLU -> conv -> IN, plus projection skip when the shape
// changes; ReLU after the sum.
struct ResBlock {
  ResBlock(const std::string& name, int64_t in_c, int64_t out_c, int64_t stride);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void init(Rng& rng);
  void collect(std::vector<nn::Param*>& out);

  nn::Conv3d conv1, conv2;
  nn::InstanceNorm3d norm1, norm2;
  nn::ReLU relu1, relu2;
  std::unique_ptr<nn::Conv3d> skip_conv;
  std::unique_ptr<nn::InstanceNorm3d> skip_norm;
};

struct QuizzerLayer {
  QuizzerLayer(const std::string& name, int64_t dim, int64_t mem_dim, int64_t heads,
               int64_t hidden);

  Tensor forward(const Tensor& x, const Tensor& mem);
  Tensor backward(const Tensor& grad_out, Tensor& grad_mem);
  void init(Rng& rng);
  void collect(std::vector<nn::Param*>& out);

  nn::CrossAttention attn;
  nn::LayerNorm ln1, ln2;
  nn::Linear ff1, ff2;
  nn::ReLU ffrelu;
};

}  // namespace detail

// The trainable core: shared-weight encoder, feature merge, transformer
// quizzer, bounded displacement head.
class QuizModel {
public:
  QuizModel(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();

  // --- inference -----------------------------------------------------------

  // Both inputs [s, s, s], normalized to [0,1]. Throws on shape mismatch.
  FeatureMap encode(const Tensor& reference, const Tensor& search);
  // Query coordinates in model-grid voxels; returns per-point displacement
  // predictions in voxel units, order preserved.
  std::vector<Vec3> quiz(const FeatureMap& fm, const std::vector<Vec3>& queries);

  // --- training graph pieces (used by the trainer) --------------------------

  // x: [M, 1, s, s, s] -> [M, C, s/8, s/8, s/8]
  Tensor encoder_forward(const Tensor& x);
  Tensor encoder_backward(const Tensor& grad_out);
  // Concatenate two encoder outputs of one pair along W.
  Tensor merge_features(const Tensor& enc_out, int64_t ref_index, int64_t search_index) const;
  // Flattened merged map with additive positional encoding: [S, C].
  Tensor tokens_from_merged(const Tensor& merged) const;
  // Displacements [N, 3] for one pair; caches for quizzer_backward.
  Tensor quizzer_forward(const Tensor& mem, const std::vector<Vec3>& queries);
  // grad_d: [N, 3]; accumulates grad into grad_mem [S, C].
  void quizzer_backward(const Tensor& grad_d, Tensor& grad_mem);
  // Inverse of merge+flatten for gradients.
  void scatter_token_grad(const Tensor& grad_mem, Tensor& grad_enc_out, int64_t ref_index,
                          int64_t search_index) const;

  double output_scale() const { return double(cfg_.input_size) / 2.0; }

  void save(const std::string& path) const;
  static QuizModel load(const std::string& path);

private:
  Tensor query_tokens(const std::vector<Vec3>& queries) const;

  ModelConfig cfg_;
  // encoder
  nn::Conv3d stem_;
  nn::InstanceNorm3d stem_norm_;
  nn::ReLU stem_relu_;
  std::vector<detail::ResBlock> blocks_;
  // quizzer
  nn::Linear lift_;
  std::vector<detail::QuizzerLayer> layers_;
  nn::Linear head1_, head2_;
  nn::ReLU head_relu_;
  Tensor mem_pe_;  // [S, C]
  // caches for the head backward
  Tensor head_tanh_;
  Tensor lift_pe_in_;
};

// Component-wise arithmetic mean of per-point displacements.
Vec3 reduce_mean_displacement(const std::vector<Vec3>& displacements);

// out(v) = vol(v + t): applies the predicted mean displacement as a
// differentiable correction of the search tensor ([D,H,W]); equivalent to
// warp_translate with the negated shift.
Tensor position_reset(const Tensor& search, const Vec3& t);
// dL/dt given dL/d out and the same inputs.
Vec3 position_reset_shift_grad(const Tensor& search, const Vec3& t, const Tensor& grad_out);

}  // namespace quiz
