#include "ugcn/model.hpp"

#include <stdexcept>

namespace ugcn {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gcn: return "gcn";
    case ModelKind::gat: return "gat";
    case ModelKind::sugcn: return "sugcn";
    case ModelKind::gugcn: return "gugcn";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "gcn") return ModelKind::gcn;
  if (name == "gat") return ModelKind::gat;
  if (name == "sugcn") return ModelKind::sugcn;
  if (name == "gugcn") return ModelKind::gugcn;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

NormLayer::NormLayer(std::size_t channels)
    : gamma(Matrix(1, channels, 1.0), true), beta(Matrix(1, channels, 0.0), true), state(channels) {}

namespace {

std::size_t head_width(const BlockOptions& o) {
  if (o.heads < 1 || o.out_width % static_cast<std::size_t>(o.heads) != 0) {
    throw std::invalid_argument("block width " + std::to_string(o.out_width) +
                                " is not divisible by " + std::to_string(o.heads) + " heads");
  }
  return o.out_width / static_cast<std::size_t>(o.heads);
}

void append(std::vector<Tensor>& out, const std::vector<Tensor>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

class GcBlock final : public Block {
 public:
  GcBlock(const BlockOptions& o, std::mt19937_64& rng)
      : conv_(GcParams::init(o.in_width, o.out_width, rng)), norm_(o.out_width) {}

  Tensor forward(const GraphBatch& batch, const Tensor& x, Mode mode) override {
    return activation(norm_.forward(gc_forward(batch.adjacency, x, conv_), mode), Activation::relu());
  }
  std::vector<Tensor> parameters() const override {
    return {conv_.weight, norm_.gamma, norm_.beta};
  }
  std::size_t num_conv_parameters() const override { return conv_.num_parameters(); }
  std::size_t out_width() const override { return conv_.weight.cols(); }

 private:
  GcParams conv_;
  NormLayer norm_;
};

class GatBlock final : public Block {
 public:
  GatBlock(const BlockOptions& o, std::mt19937_64& rng)
      : negative_slope_(o.attention.negative_slope), width_(o.out_width), norm_(o.out_width) {
    const std::size_t per_head = head_width(o);
    for (int h = 0; h < o.heads; ++h) heads_.push_back(GatParams::init(o.in_width, per_head, rng));
  }

  Tensor forward(const GraphBatch& batch, const Tensor& x, Mode mode) override {
    const Tensor z = gat_forward(batch.index(), x, heads_, negative_slope_);
    return activation(norm_.forward(z, mode), Activation::relu());
  }
  std::vector<Tensor> parameters() const override {
    std::vector<Tensor> out;
    for (const auto& h : heads_) append(out, h.tensors());
    append(out, {norm_.gamma, norm_.beta});
    return out;
  }
  std::size_t num_conv_parameters() const override {
    std::size_t n = 0;
    for (const auto& h : heads_) n += h.num_parameters();
    return n;
  }
  std::size_t out_width() const override { return width_; }

 private:
  double negative_slope_;
  std::size_t width_;
  std::vector<GatParams> heads_;
  NormLayer norm_;
};

class SugcBlock final : public Block {
 public:
  SugcBlock(const BlockOptions& o, std::mt19937_64& rng)
      : attention_(o.attention), width_(o.out_width), point_norm_(o.out_width) {
    const std::size_t per_head = head_width(o);
    for (int h = 0; h < o.heads; ++h) {
      heads_.push_back(SugcParams::init(o.in_width, per_head, rng));
      depth_norms_.emplace_back(o.in_width);
    }
  }

  Tensor forward(const GraphBatch& batch, const Tensor& x, Mode mode) override {
    std::vector<Tensor> outs;
    outs.reserve(heads_.size());
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      const SugcParams& p = heads_[h];
      Tensor y = sugc_dconv(x, batch.index(), p.theta_self, p.theta_neighbor, attention_);
      y = activation(depth_norms_[h].forward(y, mode), Activation::relu());
      outs.push_back(matmul(y, p.weight));
    }
    const Tensor z = outs.size() == 1 ? outs.front() : concat_cols(outs);
    return activation(point_norm_.forward(z, mode), Activation::relu());
  }
  std::vector<Tensor> parameters() const override {
    std::vector<Tensor> out;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      append(out, heads_[h].tensors());
      append(out, {depth_norms_[h].gamma, depth_norms_[h].beta});
    }
    append(out, {point_norm_.gamma, point_norm_.beta});
    return out;
  }
  std::size_t num_conv_parameters() const override {
    std::size_t n = 0;
    for (const auto& h : heads_) n += h.num_parameters();
    return n;
  }
  std::size_t out_width() const override { return width_; }

 private:
  AttentionOptions attention_;
  std::size_t width_;
  std::vector<SugcParams> heads_;
  std::vector<NormLayer> depth_norms_;
  NormLayer point_norm_;
};

class GugcBlock final : public Block {
 public:
  GugcBlock(const BlockOptions& o, std::mt19937_64& rng)
      : attention_(o.attention), conv_(GugcParams::init(o.in_width, o.out_width, rng)),
        norm_(o.out_width) {}

  Tensor forward(const GraphBatch& batch, const Tensor& x, Mode mode) override {
    const Tensor z = gugc_forward(batch.index(), x, conv_, attention_);
    return activation(norm_.forward(z, mode), Activation::relu());
  }
  std::vector<Tensor> parameters() const override {
    return {conv_.theta_self, conv_.theta_neighbor, norm_.gamma, norm_.beta};
  }
  std::size_t num_conv_parameters() const override { return conv_.num_parameters(); }
  std::size_t out_width() const override { return conv_.theta_self.rows(); }

 private:
  AttentionOptions attention_;
  GugcParams conv_;
  NormLayer norm_;
};

}  // namespace

std::unique_ptr<Block> make_block(const BlockOptions& options, std::mt19937_64& rng) {
  if (options.in_width == 0 || options.out_width == 0) {
    throw std::invalid_argument("make_block: widths must be positive");
  }
  switch (options.kind) {
    case ModelKind::gcn: return std::make_unique<GcBlock>(options, rng);
    case ModelKind::gat: return std::make_unique<GatBlock>(options, rng);
    case ModelKind::sugcn: return std::make_unique<SugcBlock>(options, rng);
    case ModelKind::gugcn: return std::make_unique<GugcBlock>(options, rng);
  }
  throw std::invalid_argument("make_block: unknown kind");
}

Ugcn::Ugcn(const UgcnConfig& config, std::uint64_t seed) : config_(config) {
  if (config.blocks < 1) throw std::invalid_argument("Ugcn: at least one block required");
  if (config.hidden < 1) throw std::invalid_argument("Ugcn: hidden size must be positive");
  if (config.num_classes < 1 || config.in_channels < 1) {
    throw std::invalid_argument("Ugcn: in_channels and num_classes must be positive");
  }
  std::mt19937_64 rng(seed);
  const auto hidden = static_cast<std::size_t>(config.hidden);
  int heads = 1;
  if (config.kind == ModelKind::sugcn) heads = config.heads;
  if (config.kind == ModelKind::gat) heads = config.gat_heads;
  for (int b = 0; b < config.blocks; ++b) {
    BlockOptions o;
    o.kind = config.kind;
    o.in_width = b == 0 ? config.in_channels : hidden;
    o.out_width = hidden;
    o.heads = heads;
    o.attention.normalize = config.normalize_attention;
    blocks_.push_back(make_block(o, rng));
  }
  classifier_weight_ = glorot_uniform(hidden, config.num_classes, hidden, config.num_classes, rng);
  classifier_bias_ = Tensor(Matrix(1, config.num_classes), true);
}

Tensor Ugcn::node_embeddings(const GraphBatch& batch, Mode mode) {
  if (batch.node_features.cols != config_.in_channels) {
    throw std::invalid_argument("Ugcn: batch has " + std::to_string(batch.node_features.cols) +
                                " channels, model expects " + std::to_string(config_.in_channels));
  }
  Tensor x(batch.node_features);
  Tensor total;
  for (auto& block : blocks_) {
    x = block->forward(batch, x, mode);
    if (config_.skip_sum) {
      if (total.defined() && total.cols() != x.cols()) {
        throw std::invalid_argument("Ugcn: block widths differ; outputs cannot be summed");
      }
      total = total.defined() ? add(total, x) : x;
    }
  }
  return config_.skip_sum ? total : x;
}

Tensor Ugcn::forward(const GraphBatch& batch, Mode mode, std::mt19937_64& dropout_rng) {
  const Tensor h = node_embeddings(batch, mode);
  Tensor pooled = segment_sum(h, batch.graph_indicator, static_cast<std::size_t>(batch.num_graphs()));
  pooled = dropout(pooled, config_.dropout, mode, dropout_rng);
  return add_row(matmul(pooled, classifier_weight_), classifier_bias_);
}

std::vector<Tensor> Ugcn::parameters() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks_) append(out, b->parameters());
  out.push_back(classifier_weight_);
  out.push_back(classifier_bias_);
  return out;
}

std::size_t Ugcn::num_parameters() const {
  std::size_t n = 0;
  for (const Tensor& t : parameters()) n += t.size();
  return n;
}

}  // namespace ugcn
