#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ugcn/graph.hpp"
#include "ugcn/layers.hpp"
#include "ugcn/tensor.hpp"

namespace ugcn {

enum class ModelKind { gcn, gat, sugcn, gugcn };

std::string to_string(ModelKind kind);
/// Accepts "gcn", "gat", "sugcn", "gugcn"; throws std::invalid_argument otherwise.
ModelKind parse_model_kind(std::string_view name);

/// Learnable affine batch normalization with its running statistics.
struct NormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;

  explicit NormLayer(std::size_t channels = 0);
  Tensor forward(const Tensor& x, Mode mode) { return batch_norm(x, gamma, beta, state, mode); }
};

struct BlockOptions {
  ModelKind kind = ModelKind::sugcn;
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  /// Heads are concatenated, each producing out_width / heads columns.
  int heads = 1;
  AttentionOptions attention{};
};

/// One convolution stage followed by BatchNorm and ReLU. The S-UGC block normalizes and
/// rectifies after its depthwise step and again after its pointwise step.
class Block {
 public:
  virtual ~Block() = default;
  virtual Tensor forward(const GraphBatch& batch, const Tensor& x, Mode mode) = 0;
  virtual std::vector<Tensor> parameters() const = 0;
  /// Learnable values of the convolution alone (BatchNorm affine terms excluded).
  virtual std::size_t num_conv_parameters() const = 0;
  virtual std::size_t out_width() const = 0;
};

std::unique_ptr<Block> make_block(const BlockOptions& options, std::mt19937_64& rng);

struct UgcnConfig {
  ModelKind kind = ModelKind::sugcn;
  std::size_t in_channels = 1;
  std::size_t num_classes = 2;
  int hidden = 32;
  int blocks = 5;
  /// S-UGC heads.
  int heads = 4;
  /// GAT heads; single-head unless asked.
  int gat_heads = 1;
  double dropout = 0.5;
  bool normalize_attention = true;
  /// Sum all block outputs before readout; otherwise only the last block is read out.
  bool skip_sum = true;
};

/// Stack of blocks, element-wise sum over block outputs, per-graph sum readout, dropout,
/// and one dense classifier.
class Ugcn {
 public:
  Ugcn(const UgcnConfig& config, std::uint64_t seed);

  /// Logits, num_graphs x num_classes.
  Tensor forward(const GraphBatch& batch, Mode mode, std::mt19937_64& dropout_rng);
  /// Node embeddings fed to the readout.
  Tensor node_embeddings(const GraphBatch& batch, Mode mode);

  std::vector<Tensor> parameters() const;
  std::size_t num_parameters() const;
  const UgcnConfig& config() const { return config_; }
  const std::vector<std::unique_ptr<Block>>& blocks() const { return blocks_; }

 private:
  UgcnConfig config_;
  std::vector<std::unique_ptr<Block>> blocks_;
  Tensor classifier_weight_;
  Tensor classifier_bias_;
};

}  // namespace ugcn
