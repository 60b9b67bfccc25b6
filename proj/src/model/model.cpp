#include "csirope/model/model.hpp"

#include <cmath>

#include "csirope/autodiff/ops.hpp"
#include "csirope/errors.hpp"
#include "csirope/util/rng.hpp"

namespace csirope::model {

using ad::Tensor;
namespace ops = csirope::ad;

void ModelConfig::validate() const {
  patch.validate();
  if (enc_depth < 1) throw ConfigError("enc_depth", "must be >= 1");
  if (dec_depth < 1) throw ConfigError("dec_depth", "must be >= 1");
  if (enc_heads < 1 || enc_dim % enc_heads != 0) throw ConfigError("enc_heads", "must divide enc_dim");
  if (dec_heads < 1 || dec_dim % dec_heads != 0) throw ConfigError("dec_heads", "must divide dec_dim");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio", "must be >= 1");
  if (posenc::is_rotary(pe_variant)) {
    if (enc_head_dim() % 2 != 0) throw ConfigError("enc_dim", "rotary variants need an even head dimension");
    if (dec_head_dim() % 2 != 0) throw ConfigError("dec_dim", "rotary variants need an even head dimension");
    if (!(rope_base > 1.0)) throw ConfigError("rope_base", "must exceed 1");
  }
}

util::KeyValues ModelConfig::to_kv() const {
  return {{"enc_depth", std::to_string(enc_depth)},
          {"enc_dim", std::to_string(enc_dim)},
          {"enc_heads", std::to_string(enc_heads)},
          {"dec_depth", std::to_string(dec_depth)},
          {"dec_dim", std::to_string(dec_dim)},
          {"dec_heads", std::to_string(dec_heads)},
          {"pe_variant", std::string(posenc::variant_name(pe_variant))},
          {"patch_t", std::to_string(patch.p_t)},
          {"patch_k", std::to_string(patch.p_k)},
          {"patch_u", std::to_string(patch.p_u)},
          {"mlp_ratio", std::to_string(mlp_ratio)},
          {"rope_base", util::format_double(rope_base)},
          {"bank_init", std::string(posenc::bank_init_name(bank_init))}};
}

ModelConfig ModelConfig::from_kv(const util::KeyValues& kv) {
  ModelConfig c;
  c.enc_depth = util::get_size(kv, "enc_depth", c.enc_depth);
  c.enc_dim = util::get_size(kv, "enc_dim", c.enc_dim);
  c.enc_heads = util::get_size(kv, "enc_heads", c.enc_heads);
  c.dec_depth = util::get_size(kv, "dec_depth", c.dec_depth);
  c.dec_dim = util::get_size(kv, "dec_dim", c.dec_dim);
  c.dec_heads = util::get_size(kv, "dec_heads", c.dec_heads);
  if (kv.count("pe_variant")) c.pe_variant = posenc::parse_variant(kv.at("pe_variant"));
  c.patch.p_t = util::get_size(kv, "patch_t", c.patch.p_t);
  c.patch.p_k = util::get_size(kv, "patch_k", c.patch.p_k);
  c.patch.p_u = util::get_size(kv, "patch_u", c.patch.p_u);
  c.mlp_ratio = util::get_size(kv, "mlp_ratio", c.mlp_ratio);
  c.rope_base = util::get_double(kv, "rope_base", c.rope_base);
  if (kv.count("bank_init")) c.bank_init = posenc::parse_bank_init(kv.at("bank_init"));
  c.validate();
  return c;
}

std::size_t ParameterStore::add(std::string name, ad::Shape shape, std::vector<double> value,
                                bool decay) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  if (ad::numel(shape) != value.size()) throw ShapeError("parameter " + name + " has inconsistent shape");
  params_.push_back({std::move(name), std::move(shape), std::move(value), decay});
  return params_.size() - 1;
}

std::size_t ParameterStore::index(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ContractError("no parameter named " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> xavier(std::size_t in, std::size_t out, std::uint64_t seed) {
  Rng rng(seed);
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-a, a);
  return w;
}

}  // namespace

void MaskedAutoencoder::add_linear(const std::string& name, std::size_t in, std::size_t out,
                                   std::uint64_t seed, std::size_t& w, std::size_t& b) {
  w = params_.add(name + ".w", {in, out}, xavier(in, out, derive_seed(seed, name_hash(name + ".w"))),
                  true);
  b = params_.add(name + ".b", {out}, std::vector<double>(out, 0.0), false);
}

void MaskedAutoencoder::declare_stage(StageParams& st, const std::string& prefix,
                                      std::size_t depth, std::size_t dim, std::size_t heads,
                                      posenc::Stage stage, std::uint64_t seed) {
  st.dim = dim;
  st.heads = heads;
  const std::size_t hidden = dim * config_.mlp_ratio;
  auto norm = [&](const std::string& name, std::size_t& g, std::size_t& b) {
    g = params_.add(name + ".g", {dim}, std::vector<double>(dim, 1.0), false);
    b = params_.add(name + ".b", {dim}, std::vector<double>(dim, 0.0), false);
  };
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    Block blk{};
    norm(p + ".ln1", blk.ln1_g, blk.ln1_b);
    add_linear(p + ".qkv", dim, 3 * dim, seed, blk.qkv_w, blk.qkv_b);
    add_linear(p + ".proj", dim, dim, seed, blk.proj_w, blk.proj_b);
    norm(p + ".ln2", blk.ln2_g, blk.ln2_b);
    add_linear(p + ".fc1", dim, hidden, seed, blk.fc1_w, blk.fc1_b);
    add_linear(p + ".fc2", hidden, dim, seed, blk.fc2_w, blk.fc2_b);
    st.blocks.push_back(blk);
  }
  norm(prefix + ".norm", st.norm_g, st.norm_b);

  const std::size_t head_dim = dim / heads;
  const auto variant = config_.pe_variant;
  if (!posenc::is_rotary(variant)) return;
  st.fixed = posenc::fixed_bank(head_dim, heads, config_.rope_base, stage);
  if (variant == posenc::PeVariant::kRopeFixed) return;

  auto bank = posenc::init_bank(head_dim, heads, config_.rope_base, seed, stage, config_.bank_init);
  st.bank = static_cast<std::ptrdiff_t>(
      params_.add(prefix + ".bank", {posenc::kAxes, bank.columns()}, bank.omega, false));
  if (variant != posenc::PeVariant::kRopeAdaptive) return;

  const auto ctrl = posenc::zero_controller(dim, heads, head_dim);
  const ad::Shape w_shape{ctrl.context_dim(), ctrl.output_dim()};
  const ad::Shape b_shape{ctrl.output_dim()};
  st.ctrl_ws = static_cast<std::ptrdiff_t>(params_.add(prefix + ".ctrl.scale.w", w_shape, ctrl.w_scale, true));
  st.ctrl_bs = static_cast<std::ptrdiff_t>(params_.add(prefix + ".ctrl.scale.b", b_shape, ctrl.b_scale, false));
  st.ctrl_wb = static_cast<std::ptrdiff_t>(params_.add(prefix + ".ctrl.shift.w", w_shape, ctrl.w_shift, true));
  st.ctrl_bb = static_cast<std::ptrdiff_t>(params_.add(prefix + ".ctrl.shift.b", b_shape, ctrl.b_shift, false));
}

MaskedAutoencoder::MaskedAutoencoder(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  const std::size_t in_dim = config_.patch.token_dim();
  add_linear("embed", in_dim, config_.enc_dim, seed, embed_w_, embed_b_);
  declare_stage(enc_, "enc", config_.enc_depth, config_.enc_dim, config_.enc_heads,
                posenc::Stage::kEncoder, seed);
  add_linear("dec.embed", config_.enc_dim, config_.dec_dim, seed, dec_embed_w_, dec_embed_b_);
  {
    Rng rng(derive_seed(seed, name_hash("dec.mask_token")));
    std::vector<double> tok(config_.dec_dim);
    for (auto& v : tok) v = 0.02 * rng.normal();
    mask_token_ = params_.add("dec.mask_token", {1, config_.dec_dim}, std::move(tok), false);
  }
  declare_stage(dec_, "dec", config_.dec_depth, config_.dec_dim, config_.dec_heads,
                posenc::Stage::kDecoder, seed);
  add_linear("head", config_.dec_dim, in_dim, seed, head_w_, head_b_);
}

Binding MaskedAutoencoder::bind(bool requires_grad) const {
  Binding b;
  b.leaves.reserve(params_.size());
  for (const auto& p : params_) {
    b.leaves.push_back(requires_grad ? Tensor::parameter(p.shape, p.value)
                                     : Tensor::constant(p.shape, p.value));
  }
  return b;
}

const posenc::FrequencyBank& MaskedAutoencoder::fixed_bank(posenc::Stage stage) const {
  return stage == posenc::Stage::kEncoder ? enc_.fixed : dec_.fixed;
}

Tensor MaskedAutoencoder::stage_omega(const StageParams& st, const Tensor& x,
                                      const Binding& bd) const {
  switch (config_.pe_variant) {
    case posenc::PeVariant::kRopeFixed:
      return st.fixed.as_tensor(false);
    case posenc::PeVariant::kRopeLearnable:
      return bd[static_cast<std::size_t>(st.bank)];
    case posenc::PeVariant::kRopeAdaptive: {
      const auto& base = bd[static_cast<std::size_t>(st.bank)];
      auto ctx = posenc::context_vector(x);
      auto out = posenc::controller_forward(ctx, bd[static_cast<std::size_t>(st.ctrl_ws)],
                                            bd[static_cast<std::size_t>(st.ctrl_bs)],
                                            bd[static_cast<std::size_t>(st.ctrl_wb)],
                                            bd[static_cast<std::size_t>(st.ctrl_bb)],
                                            base.dim(1));
      return posenc::modulate(base, out.delta_scale, out.delta_shift);
    }
    default:
      return {};
  }
}

Tensor MaskedAutoencoder::attention(const StageParams& st, const Block& blk, const Tensor& x,
                                    const Tensor& theta, const Binding& bd) const {
  const std::size_t dim = st.dim, heads = st.heads, hd = dim / heads;
  auto qkv = ops::add(ops::matmul(x, bd[blk.qkv_w]), bd[blk.qkv_b]);
  auto q = ops::slice_cols(qkv, 0, dim);
  auto k = ops::slice_cols(qkv, dim, dim);
  auto v = ops::slice_cols(qkv, 2 * dim, dim);
  if (theta.defined()) {
    q = posenc::apply_rotary(q, theta);
    k = posenc::apply_rotary(k, theta);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = ops::slice_cols(q, h * hd, hd);
    auto kh = ops::slice_cols(k, h * hd, hd);
    auto vh = ops::slice_cols(v, h * hd, hd);
    auto p = ops::softmax_lastaxis(ops::scale(ops::matmul_nt(qh, kh), scale));
    outs.push_back(ops::matmul(p, vh));
  }
  auto o = heads == 1 ? outs[0] : ops::concat_cols(outs);
  return ops::add(ops::matmul(o, bd[blk.proj_w]), bd[blk.proj_b]);
}

Tensor MaskedAutoencoder::run_stage(const StageParams& st, Tensor x, const Tensor& theta,
                                    const Binding& bd) const {
  for (const auto& blk : st.blocks) {
    x = ops::add(x, attention(st, blk, ops::layernorm(x, bd[blk.ln1_g], bd[blk.ln1_b]), theta, bd));
    auto h = ops::layernorm(x, bd[blk.ln2_g], bd[blk.ln2_b]);
    h = ops::gelu(ops::add(ops::matmul(h, bd[blk.fc1_w]), bd[blk.fc1_b]));
    x = ops::add(x, ops::add(ops::matmul(h, bd[blk.fc2_w]), bd[blk.fc2_b]));
  }
  return ops::layernorm(x, bd[st.norm_g], bd[st.norm_b]);
}

namespace {

std::vector<tokenizer::Coord> select_coords(const tokenizer::TokenGrid& grid,
                                            const std::vector<std::size_t>& ids) {
  std::vector<tokenizer::Coord> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(grid.coords[i]);
  return out;
}

}  // namespace

Tensor MaskedAutoencoder::encoder_input(const tokenizer::TokenGrid& grid,
                                        const tokenizer::MaskSpec& mask, const Binding& bd) const {
  const std::size_t D = grid.token_dim();
  if (D != config_.patch.token_dim() || grid.patch.p_t != config_.patch.p_t ||
      grid.patch.p_k != config_.patch.p_k || grid.patch.p_u != config_.patch.p_u) {
    throw ConfigError("patch", "token grid patch size does not match the model");
  }
  const auto& vis = mask.visible_ids;
  std::vector<double> rows(vis.size() * D);
  for (std::size_t i = 0; i < vis.size(); ++i) {
    if (vis[i] >= grid.length()) throw ContractError("mask refers to a token outside the grid");
    std::copy_n(grid.tokens.begin() + static_cast<std::ptrdiff_t>(vis[i] * D), D,
                rows.begin() + static_cast<std::ptrdiff_t>(i * D));
  }
  auto x = Tensor::constant({vis.size(), D}, std::move(rows));
  return ops::add(ops::matmul(x, bd[embed_w_]), bd[embed_b_]);
}

Tensor MaskedAutoencoder::decoder_input(const tokenizer::TokenGrid& grid,
                                        const tokenizer::MaskSpec& mask, const Tensor& encoded,
                                        const Binding& bd) const {
  const std::size_t L = grid.length();
  auto z = ops::add(ops::matmul(encoded, bd[dec_embed_w_]), bd[dec_embed_b_]);
  const Tensor parts[] = {z, bd[mask_token_]};
  auto pool = ops::concat_rows(parts);
  const std::size_t mask_row = mask.visible_ids.size();
  std::vector<std::size_t> index(L, mask_row);
  for (std::size_t i = 0; i < mask.visible_ids.size(); ++i) index[mask.visible_ids[i]] = i;
  return ops::gather_rows(pool, index);
}

Tensor MaskedAutoencoder::forward(const tokenizer::TokenGrid& grid, const tokenizer::MaskSpec& mask,
                                  const Binding& bd) const {
  if (mask.visible_ids.size() + mask.masked_ids.size() != grid.length()) {
    throw ContractError("mask does not partition the token grid");
  }
  const auto variant = config_.pe_variant;
  const bool rotary = posenc::is_rotary(variant);
  const auto ape_kind =
      variant == posenc::PeVariant::kApe1d ? posenc::ApeKind::kApe1d : posenc::ApeKind::kApe3d;
  const auto vis_coords = select_coords(grid, mask.visible_ids);

  auto x = encoder_input(grid, mask, bd);
  Tensor theta;
  if (rotary) {
    theta = posenc::phases(stage_omega(enc_, x, bd), posenc::coordinate_matrix(vis_coords));
  } else {
    x = ops::add(x, Tensor::constant(x.shape(), posenc::ape_embeddings(ape_kind, vis_coords,
                                                                       grid.grid, config_.enc_dim)));
  }
  auto encoded = run_stage(enc_, x, theta, bd);

  auto y = decoder_input(grid, mask, encoded, bd);
  Tensor dec_theta;
  if (rotary) {
    dec_theta = posenc::phases(stage_omega(dec_, y, bd), posenc::coordinate_matrix(grid.coords));
  } else {
    y = ops::add(y, Tensor::constant(y.shape(), posenc::ape_embeddings(ape_kind, grid.coords,
                                                                       grid.grid, config_.dec_dim)));
  }
  auto decoded = run_stage(dec_, y, dec_theta, bd);
  return ops::add(ops::matmul(decoded, bd[head_w_]), bd[head_b_]);
}

std::vector<double> MaskedAutoencoder::stage_frequencies(const tokenizer::TokenGrid& grid,
                                                         const tokenizer::MaskSpec& mask,
                                                         posenc::Stage stage) const {
  if (!posenc::is_rotary(config_.pe_variant)) return {};
  auto bd = bind(false);
  auto x = encoder_input(grid, mask, bd);
  if (stage == posenc::Stage::kEncoder) {
    auto w = stage_omega(enc_, x, bd);
    return {w.data().begin(), w.data().end()};
  }
  auto theta = posenc::phases(stage_omega(enc_, x, bd),
                              posenc::coordinate_matrix(select_coords(grid, mask.visible_ids)));
  auto y = decoder_input(grid, mask, run_stage(enc_, x, theta, bd), bd);
  auto w = stage_omega(dec_, y, bd);
  return {w.data().begin(), w.data().end()};
}

channel::CsiArray MaskedAutoencoder::predict(const channel::CsiArray& csi,
                                             const tokenizer::MaskSpec& mask) const {
  auto grid = tokenizer::tokenize(csi, config_.patch);
  auto out = forward(grid, mask, bind(false));
  auto arr = tokenizer::detokenize({out.data().begin(), out.data().end()}, grid);
  arr.config = csi.config;
  arr.sample_index = csi.sample_index;
  return arr;
}

}  // namespace csirope::model
