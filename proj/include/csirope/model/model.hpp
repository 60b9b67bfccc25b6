#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "csirope/autodiff/tensor.hpp"
#include "csirope/channel/channel.hpp"
#include "csirope/posenc/posenc.hpp"
#include "csirope/tokenizer/tokenizer.hpp"
#include "csirope/util/kv.hpp"

namespace csirope::model {

struct ModelConfig {
  std::size_t enc_depth = 4, enc_dim = 64, enc_heads = 4;
  std::size_t dec_depth = 2, dec_dim = 32, dec_heads = 2;
  posenc::PeVariant pe_variant = posenc::PeVariant::kRopeAdaptive;
  tokenizer::PatchSpec patch;
  std::size_t mlp_ratio = 4;
  double rope_base = 10000.0;
  posenc::BankInit bank_init = posenc::BankInit::kRandomDirection;

  void validate() const;
  std::size_t enc_head_dim() const { return enc_dim / enc_heads; }
  std::size_t dec_head_dim() const { return dec_dim / dec_heads; }

  util::KeyValues to_kv() const;
  static ModelConfig from_kv(const util::KeyValues& kv);
};

struct Parameter {
  std::string name;
  ad::Shape shape;
  std::vector<double> value;
  bool decay = false;  // receives decoupled weight decay
};

/// Named parameters in declaration order.
class ParameterStore {
 public:
  std::size_t add(std::string name, ad::Shape shape, std::vector<double> value, bool decay);
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const;

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter& at(const std::string& name) { return params_[index(name)]; }
  const Parameter& at(const std::string& name) const { return params_[index(name)]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Leaf tensors for one forward pass. Gradients of every sample that uses the
/// same binding accumulate on its leaves.
struct Binding {
  std::vector<ad::Tensor> leaves;
  const ad::Tensor& operator[](std::size_t i) const { return leaves[i]; }
};

/// Masked encoder-decoder over CSI patch tokens.
///
/// The encoder sees only visible tokens. The decoder sees the full token
/// order, with a shared learned mask embedding at masked slots, and a linear
/// head maps each decoder token back to a patch vector. Positional
/// information enters per the configured variant: additive tables at the
/// encoder and decoder inputs, or rotations of q/k in every attention block
/// from a per-stage frequency set.
class MaskedAutoencoder {
 public:
  MaskedAutoencoder(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  Binding bind(bool requires_grad) const;

  /// Predicted patch vectors for every token, [L, token_dim].
  ad::Tensor forward(const tokenizer::TokenGrid& grid, const tokenizer::MaskSpec& mask,
                     const Binding& binding) const;

  /// Per-sample adapted (or static) frequencies used by a stage, [3, H*d/2].
  /// Empty for additive variants.
  std::vector<double> stage_frequencies(const tokenizer::TokenGrid& grid,
                                        const tokenizer::MaskSpec& mask,
                                        posenc::Stage stage) const;

  channel::CsiArray predict(const channel::CsiArray& csi, const tokenizer::MaskSpec& mask) const;

  /// Fixed-variant bank of a stage (meaningful for all rotary variants).
  const posenc::FrequencyBank& fixed_bank(posenc::Stage stage) const;

 private:
  struct Block {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  struct StageParams {
    std::vector<Block> blocks;
    std::size_t norm_g = 0, norm_b = 0;
    std::ptrdiff_t bank = -1;
    std::ptrdiff_t ctrl_ws = -1, ctrl_bs = -1, ctrl_wb = -1, ctrl_bb = -1;
    std::size_t dim = 0, heads = 0;
    posenc::FrequencyBank fixed;
  };

  void declare_stage(StageParams& st, const std::string& prefix, std::size_t depth,
                     std::size_t dim, std::size_t heads, posenc::Stage stage, std::uint64_t seed);
  void add_linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed,
                  std::size_t& w, std::size_t& b);

  ad::Tensor stage_omega(const StageParams& st, const ad::Tensor& x, const Binding& bd) const;
  ad::Tensor run_stage(const StageParams& st, ad::Tensor x, const ad::Tensor& theta,
                       const Binding& bd) const;
  ad::Tensor attention(const StageParams& st, const Block& blk, const ad::Tensor& x,
                       const ad::Tensor& theta, const Binding& bd) const;

  // Embedded encoder input for the visible tokens (before any stage).
  ad::Tensor encoder_input(const tokenizer::TokenGrid& grid, const tokenizer::MaskSpec& mask,
                           const Binding& bd) const;
  ad::Tensor decoder_input(const tokenizer::TokenGrid& grid, const tokenizer::MaskSpec& mask,
                           const ad::Tensor& encoded, const Binding& bd) const;

  ModelConfig config_;
  ParameterStore params_;
  std::size_t embed_w_ = 0, embed_b_ = 0, dec_embed_w_ = 0, dec_embed_b_ = 0, mask_token_ = 0,
              head_w_ = 0, head_b_ = 0;
  StageParams enc_, dec_;
};

}  // namespace csirope::model
