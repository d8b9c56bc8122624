#include "model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "volume.hpp"

namespace quiz {

void ModelConfig::validate() const {
  if (input_size < 8 || input_size % 8 != 0)
    throw_invalid("input_size must be a positive multiple of 8");
  if (channels < 4 || channels % 4 != 0)
    throw_invalid("channels must be a multiple of 4");
  if (encoder_blocks.size() != 3) throw_invalid("encoder_blocks must list 3 stages");
  for (int b : encoder_blocks)
    if (b < 1) throw_invalid("each encoder stage needs at least one block");
  if (tf_layers < 1 || tf_heads < 1 || tf_dim < tf_heads || mlp_hidden < 1)
    throw_invalid("bad transformer configuration");
  if (tf_dim % tf_heads != 0) throw_invalid("tf_dim must be divisible by tf_heads");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["input_size"] = input_size;
  j["channels"] = channels;
  j["encoder_blocks"] = encoder_blocks;
  j["tf_layers"] = tf_layers;
  j["tf_heads"] = tf_heads;
  j["tf_dim"] = tf_dim;
  j["mlp_hidden"] = mlp_hidden;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig cfg;
  try {
    auto j = nlohmann::json::parse(text);
    cfg.input_size = j.value("input_size", cfg.input_size);
    cfg.channels = j.value("channels", cfg.channels);
    if (j.contains("encoder_blocks"))
      cfg.encoder_blocks = j.at("encoder_blocks").get<std::vector<int>>();
    cfg.tf_layers = j.value("tf_layers", cfg.tf_layers);
    cfg.tf_heads = j.value("tf_heads", cfg.tf_heads);
    cfg.tf_dim = j.value("tf_dim", cfg.tf_dim);
    cfg.mlp_hidden = j.value("mlp_hidden", cfg.mlp_hidden);
  } catch (const nlohmann::json::exception& e) {
    throw_format(std::string("invalid model config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// ResBlock

namespace detail {

ResBlock::ResBlock(const std::string& name, int64_t in_c, int64_t out_c, int64_t stride)
    : conv1(name + ".conv1", in_c, out_c, 3, stride, 1),
      conv2(name + ".conv2", out_c, out_c, 3, 1, 1),
      norm1(name + ".norm1", out_c), norm2(name + ".norm2", out_c) {
  if (stride != 1 || in_c != out_c) {
    skip_conv = std::make_unique<nn::Conv3d>(name + ".skip", in_c, out_c, 1, stride, 0);
    skip_norm = std::make_unique<nn::InstanceNorm3d>(name + ".skip_norm", out_c);
  }
}

void ResBlock::init(Rng& rng) {
  conv1.init(rng);
  conv2.init(rng);
  if (skip_conv) skip_conv->init(rng);
}

void ResBlock::collect(std::vector<nn::Param*>& out) {
  out.push_back(&conv1.weight);
  out.push_back(&norm1.gamma);
  out.push_back(&norm1.beta);
  out.push_back(&conv2.weight);
  out.push_back(&norm2.gamma);
  out.push_back(&norm2.beta);
  if (skip_conv) {
    out.push_back(&skip_conv->weight);
    out.push_back(&skip_norm->gamma);
    out.push_back(&skip_norm->beta);
  }
}

Tensor ResBlock::forward(const Tensor& x) {
  Tensor idn = skip_conv ? skip_norm->forward(skip_conv->forward(x)) : x;
  Tensor y = norm2.forward(conv2.forward(relu1.forward(norm1.forward(conv1.forward(x)))));
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += idn[i];
  return relu2.forward(y);
}

Tensor ResBlock::backward(const Tensor& grad_out) {
  Tensor dsum = relu2.backward(grad_out);
  Tensor dx = conv1.backward(
      norm1.backward(relu1.backward(conv2.backward(norm2.backward(dsum)))));
  if (skip_conv) {
    Tensor dskip = skip_conv->backward(skip_norm->backward(dsum));
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += dskip[i];
  } else {
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += dsum[i];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// QuizzerLayer

QuizzerLayer::QuizzerLayer(const std::string& name, int64_t dim, int64_t mem_dim,
                           int64_t heads, int64_t hidden)
    : attn(name + ".attn", dim, mem_dim, heads),
      ln1(name + ".ln1", dim), ln2(name + ".ln2", dim),
      ff1(name + ".ff1", dim, hidden), ff2(name + ".ff2", hidden, dim) {}

void QuizzerLayer::init(Rng& rng) {
  attn.init(rng);
  ff1.init_trunc_normal(rng);
  ff2.init_trunc_normal(rng);
}

void QuizzerLayer::collect(std::vector<nn::Param*>& out) {
  out.push_back(&attn.wq.weight);
  out.push_back(&attn.wq.bias);
  out.push_back(&attn.wk.weight);
  out.push_back(&attn.wv.weight);
  out.push_back(&attn.wv.bias);
  out.push_back(&attn.wo.weight);
  out.push_back(&attn.wo.bias);
  out.push_back(&ln1.gamma);
  out.push_back(&ln1.beta);
  out.push_back(&ff1.weight);
  out.push_back(&ff1.bias);
  out.push_back(&ff2.weight);
  out.push_back(&ff2.bias);
  out.push_back(&ln2.gamma);
  out.push_back(&ln2.beta);
}

Tensor QuizzerLayer::forward(const Tensor& x, const Tensor& mem) {
  Tensor a = attn.forward(x, mem);
  for (int64_t i = 0; i < a.numel(); ++i) a[i] += x[i];
  Tensor h = ln1.forward(a);
  Tensor f = ff2.forward(ffrelu.forward(ff1.forward(h)));
  for (int64_t i = 0; i < f.numel(); ++i) f[i] += h[i];
  return ln2.forward(f);
}

Tensor QuizzerLayer::backward(const Tensor& grad_out, Tensor& grad_mem) {
  Tensor df = ln2.backward(grad_out);
  Tensor dh = ff1.backward(ffrelu.backward(ff2.backward(df)));
  for (int64_t i = 0; i < dh.numel(); ++i) dh[i] += df[i];
  Tensor da = ln1.backward(dh);
  Tensor dx = attn.backward(da, grad_mem);
  for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += da[i];
  return dx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// QuizModel

namespace {

Tensor feature_grid_pe(const ModelConfig& cfg) {
  int64_t fd = cfg.input_size / 8;
  int64_t Dc = fd, Hc = fd, Wc = 2 * fd;
  Tensor coords({Dc * Hc * Wc, 3});
  auto norm = [](int64_t i, int64_t n) {
    return n > 1 ? double(i) / double(n - 1) : 0.0;
  };
  int64_t t = 0;
  for (int64_t z = 0; z < Dc; ++z)
    for (int64_t y = 0; y < Hc; ++y)
      for (int64_t x = 0; x < Wc; ++x, ++t) {
        coords[t * 3 + 0] = float(norm(x, Wc));
        coords[t * 3 + 1] = float(norm(y, Hc));
        coords[t * 3 + 2] = float(norm(z, Dc));
      }
  return nn::positional_encoding_3d(coords, cfg.channels);
}

}  // namespace

QuizModel::QuizModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      stem_("encoder.stem", 1, cfg.channels / 4, 3, 2, 1),
      stem_norm_("encoder.stem_norm", cfg.channels / 4),
      lift_("quizzer.lift", cfg.channels, cfg.tf_dim),
      head1_("quizzer.head1", cfg.tf_dim, cfg.mlp_hidden),
      head2_("quizzer.head2", cfg.mlp_hidden, 3) {
  const int64_t w[4] = {cfg.channels / 4, cfg.channels / 4, cfg.channels / 2, cfg.channels};
  const int64_t strides[3] = {2, 2, 1};
  for (int stage = 0; stage < 3; ++stage) {
    for (int b = 0; b < cfg.encoder_blocks[size_t(stage)]; ++b) {
      int64_t in_c = b == 0 ? w[stage] : w[stage + 1];
      int64_t stride = b == 0 ? strides[stage] : 1;
      blocks_.emplace_back("encoder.stage" + std::to_string(stage + 1) + ".block" +
                               std::to_string(b),
                           in_c, w[stage + 1], stride);
    }
  }
  for (int64_t l = 0; l < cfg.tf_layers; ++l)
    layers_.emplace_back("quizzer.layer" + std::to_string(l), cfg.tf_dim, cfg.channels,
                         cfg.tf_heads, cfg.mlp_hidden);

  Rng rng(seed);
  stem_.init(rng);
  for (auto& b : blocks_) b.init(rng);
  lift_.init_trunc_normal(rng);
  for (auto& l : layers_) l.init(rng);
  head1_.init_trunc_normal(rng);
  head2_.init_zero();  // untrained model predicts zero displacement

  mem_pe_ = feature_grid_pe(cfg_);
}

std::vector<nn::Param*> QuizModel::params() {
  std::vector<nn::Param*> out;
  out.push_back(&stem_.weight);
  out.push_back(&stem_norm_.gamma);
  out.push_back(&stem_norm_.beta);
  for (auto& b : blocks_) b.collect(out);
  out.push_back(&lift_.weight);
  out.push_back(&lift_.bias);
  for (auto& l : layers_) l.collect(out);
  out.push_back(&head1_.weight);
  out.push_back(&head1_.bias);
  out.push_back(&head2_.weight);
  out.push_back(&head2_.bias);
  return out;
}

Tensor QuizModel::encoder_forward(const Tensor& x) {
  if (x.ndim() != 5 || x.dim(1) != 1 || x.dim(2) != cfg_.input_size ||
      x.dim(3) != cfg_.input_size || x.dim(4) != cfg_.input_size)
    throw_invalid("encoder input must be [M,1,s,s,s] with s == input_size");
  Tensor h = stem_relu_.forward(stem_norm_.forward(stem_.forward(x)));
  for (auto& b : blocks_) h = b.forward(h);
  return h;
}

Tensor QuizModel::encoder_backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  return stem_.backward(stem_norm_.backward(stem_relu_.backward(g)));
}

Tensor QuizModel::merge_features(const Tensor& enc_out, int64_t ref_index,
                                 int64_t search_index) const {
  int64_t C = cfg_.channels, fd = cfg_.input_size / 8;
  int64_t V = fd * fd * fd;
  Tensor merged({C, fd, fd, 2 * fd});
  const float* fr = enc_out.data() + ref_index * C * V;
  const float* fs = enc_out.data() + search_index * C * V;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t z = 0; z < fd; ++z)
      for (int64_t y = 0; y < fd; ++y) {
        float* dst = merged.data() + ((c * fd + z) * fd + y) * 2 * fd;
        const float* sr = fr + ((c * fd + z) * fd + y) * fd;
        const float* ss = fs + ((c * fd + z) * fd + y) * fd;
        std::memcpy(dst, sr, size_t(fd) * sizeof(float));
        std::memcpy(dst + fd, ss, size_t(fd) * sizeof(float));
      }
  return merged;
}

Tensor QuizModel::tokens_from_merged(const Tensor& merged) const {
  int64_t C = merged.dim(0);
  int64_t S = merged.dim(1) * merged.dim(2) * merged.dim(3);
  Tensor mem({S, C});
  for (int64_t c = 0; c < C; ++c) {
    const float* src = merged.data() + c * S;
    for (int64_t t = 0; t < S; ++t) mem[t * C + c] = src[t] + mem_pe_[t * C + c];
  }
  return mem;
}

void QuizModel::scatter_token_grad(const Tensor& grad_mem, Tensor& grad_enc_out,
                                   int64_t ref_index, int64_t search_index) const {
  int64_t C = cfg_.channels, fd = cfg_.input_size / 8;
  int64_t V = fd * fd * fd;
  float* gr = grad_enc_out.data() + ref_index * C * V;
  float* gs = grad_enc_out.data() + search_index * C * V;
  int64_t Wc = 2 * fd;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t z = 0; z < fd; ++z)
      for (int64_t y = 0; y < fd; ++y)
        for (int64_t x = 0; x < Wc; ++x) {
          int64_t t = (z * fd + y) * Wc + x;
          float g = grad_mem[t * C + c];
          if (x < fd)
            gr[((c * fd + z) * fd + y) * fd + x] += g;
          else
            gs[((c * fd + z) * fd + y) * fd + (x - fd)] += g;
        }
}

Tensor QuizModel::query_tokens(const std::vector<Vec3>& queries) const {
  if (queries.empty()) throw_invalid("quiz: empty query set");
  int64_t N = int64_t(queries.size());
  Tensor coords({N, 3});
  double denom = double(cfg_.input_size - 1);
  for (int64_t i = 0; i < N; ++i) {
    const Vec3& p = queries[size_t(i)];
    if (!p.finite()) throw_invalid("quiz: non-finite query coordinate");
    coords[i * 3 + 0] = float(p.x / denom);
    coords[i * 3 + 1] = float(p.y / denom);
    coords[i * 3 + 2] = float(p.z / denom);
  }
  return nn::positional_encoding_3d(coords, cfg_.channels);
}

Tensor QuizModel::quizzer_forward(const Tensor& mem, const std::vector<Vec3>& queries) {
  lift_pe_in_ = query_tokens(queries);
  Tensor x = lift_.forward(lift_pe_in_);
  for (auto& l : layers_) x = l.forward(x, mem);
  Tensor raw = head2_.forward(head_relu_.forward(head1_.forward(x)));
  head_tanh_ = Tensor(raw.shape());
  double scale = output_scale();
  Tensor d(raw.shape());
  for (int64_t i = 0; i < raw.numel(); ++i) {
    float th = float(std::tanh(double(raw[i])));
    head_tanh_[i] = th;
    d[i] = float(scale * th);
  }
  return d;
}

void QuizModel::quizzer_backward(const Tensor& grad_d, Tensor& grad_mem) {
  double scale = output_scale();
  Tensor draw(grad_d.shape());
  for (int64_t i = 0; i < draw.numel(); ++i) {
    double th = head_tanh_[i];
    draw[i] = float(double(grad_d[i]) * scale * (1.0 - th * th));
  }
  Tensor g = head1_.backward(head_relu_.backward(head2_.backward(draw)));
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g, grad_mem);
  lift_.backward(g);  // query token gradient is not propagated further
}

FeatureMap QuizModel::encode(const Tensor& reference, const Tensor& search) {
  if (!reference.same_shape(search)) throw_invalid("encode: input shape mismatch");
  int64_t s = cfg_.input_size;
  if (reference.ndim() != 3 || reference.dim(0) != s || reference.dim(1) != s ||
      reference.dim(2) != s)
    throw_invalid("encode: inputs must be [s,s,s] with s == input_size");
  Tensor batch({2, 1, s, s, s});
  std::memcpy(batch.data(), reference.data(), size_t(reference.numel()) * sizeof(float));
  std::memcpy(batch.data() + reference.numel(), search.data(),
              size_t(search.numel()) * sizeof(float));
  for (int64_t i = 0; i < batch.numel(); ++i)
    if (!std::isfinite(batch[i])) throw_invalid("encode: non-finite input");
  Tensor enc = encoder_forward(batch);
  FeatureMap fm;
  fm.tensor = merge_features(enc, 0, 1);
  return fm;
}

std::vector<Vec3> QuizModel::quiz(const FeatureMap& fm, const std::vector<Vec3>& queries) {
  Tensor mem = tokens_from_merged(fm.tensor);
  Tensor d = quizzer_forward(mem, queries);
  std::vector<Vec3> out(queries.size());
  for (size_t i = 0; i < queries.size(); ++i)
    out[i] = {double(d[int64_t(i) * 3 + 0]), double(d[int64_t(i) * 3 + 1]),
              double(d[int64_t(i) * 3 + 2])};
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: "QZCK1\n" + u64 header length + header JSON + raw f32 payload.

void QuizModel::save(const std::string& path) const {
  auto* self = const_cast<QuizModel*>(this);
  std::vector<nn::Param*> ps = self->params();

  nlohmann::json header;
  header["config"] = nlohmann::json::parse(cfg_.to_json());
  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (const nn::Param* p : ps) {
    nlohmann::json t;
    t["name"] = p->name;
    t["shape"] = p->value.shape();
    t["offset"] = offset;
    tensors.push_back(t);
    offset += uint64_t(p->value.numel()) * 4;
  }
  header["tensors"] = tensors;
  std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot open checkpoint for writing: " + path);
  out.write("QZCK1\n", 6);
  uint64_t hlen = htext.size();
  uint8_t lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = uint8_t(hlen >> (8 * i));
  out.write(reinterpret_cast<const char*>(lenbuf), 8);
  out.write(htext.data(), std::streamsize(htext.size()));
  for (const nn::Param* p : ps)
    out.write(reinterpret_cast<const char*>(p->value.data()),
              std::streamsize(p->value.numel() * 4));
  out.close();
  if (!out) throw_io("checkpoint write failed: " + path);
}

QuizModel QuizModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open checkpoint: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "QZCK1\n", 6) != 0)
    throw_format("not a QZCK checkpoint: " + path);
  uint8_t lenbuf[8];
  in.read(reinterpret_cast<char*>(lenbuf), 8);
  uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= uint64_t(lenbuf[i]) << (8 * i);
  std::string htext(hlen, '\0');
  in.read(htext.data(), std::streamsize(hlen));
  if (!in) throw_format("truncated checkpoint header: " + path);

  nlohmann::json header;
  ModelConfig cfg;
  try {
    header = nlohmann::json::parse(htext);
    cfg = ModelConfig::from_json(header.at("config").dump());
  } catch (const nlohmann::json::exception& e) {
    throw_format("invalid checkpoint header " + path + ": " + e.what());
  }

  QuizModel model(cfg, 0);
  std::vector<nn::Param*> ps = model.params();
  auto tensors = header.at("tensors");
  if (tensors.size() != ps.size())
    throw_format("checkpoint tensor count mismatch in " + path);
  for (size_t i = 0; i < ps.size(); ++i) {
    auto& t = tensors.at(i);
    if (t.at("name").get<std::string>() != ps[i]->name)
      throw_format("checkpoint tensor name mismatch: expected " + ps[i]->name);
    auto shape = t.at("shape").get<std::vector<int64_t>>();
    if (shape != ps[i]->value.shape())
      throw_format("checkpoint tensor shape mismatch for " + ps[i]->name);
    in.read(reinterpret_cast<char*>(ps[i]->value.data()),
            std::streamsize(ps[i]->value.numel() * 4));
    if (!in) throw_format("truncated checkpoint payload: " + path);
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (nn::Param* p : ps)
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        uint32_t u = std::bit_cast<uint32_t>(p->value[i]);
        u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
        p->value[i] = std::bit_cast<float>(u);
      }
  }
  return model;
}

// ---------------------------------------------------------------------------

Vec3 reduce_mean_displacement(const std::vector<Vec3>& displacements) {
  if (displacements.empty()) throw_invalid("reduce_mean_displacement: empty set");
  Vec3 acc;
  for (const Vec3& d : displacements) acc = acc + d;
  return acc / double(displacements.size());
}

Tensor position_reset(const Tensor& search, const Vec3& t) {
  if (search.ndim() != 3) throw_invalid("position_reset expects a [D,H,W] tensor");
  if (!t.finite()) throw_invalid("position_reset: non-finite shift");
  if (t.x == 0.0 && t.y == 0.0 && t.z == 0.0) return search;
  Dims3 d{search.dim(2), search.dim(1), search.dim(0)};
  Tensor out(search.shape());
  const float* src = search.data();
  float* dst = out.data();
#pragma omp parallel for schedule(static)
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x)
        dst[(z * d.y + y) * d.x + x] =
            trilinear_raw(src, d, {double(x) + t.x, double(y) + t.y, double(z) + t.z});
  return out;
}

Vec3 position_reset_shift_grad(const Tensor& search, const Vec3& t, const Tensor& grad_out) {
  Dims3 d{search.dim(2), search.dim(1), search.dim(0)};
  const float* src = search.data();
  const float* g = grad_out.data();
  // per-slab partials summed serially, so the result does not depend on the
  // thread count
  std::vector<Vec3> partial(size_t(d.z));
#pragma omp parallel for schedule(static)
  for (int64_t z = 0; z < d.z; ++z) {
    double ax = 0, ay = 0, az = 0;
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) {
        Vec3 grad;
        trilinear_raw_grad(src, d, {double(x) + t.x, double(y) + t.y, double(z) + t.z},
                           &grad);
        double go = g[(z * d.y + y) * d.x + x];
        ax += go * grad.x;
        ay += go * grad.y;
        az += go * grad.z;
      }
    partial[size_t(z)] = {ax, ay, az};
  }
  Vec3 acc;
  for (const Vec3& p : partial) acc = acc + p;
  return acc;
}

}  // namespace quiz
