#include <doctest.h>

#include <cmath>

#include "properties.hpp"

using namespace ugcn;
using namespace ugcn::testing;

namespace {

const AttentionOptions kRaw{false, 0.2};
const AttentionOptions kSoft{true, 0.2};

GraphBatch single(const Graph& g) { return batch_graphs(std::span<const Graph>(&g, 1)); }

double leaky(double s, double slope) { return s >= 0.0 ? s : slope * s; }

/// alpha over 𝒩(p) for one channel from scalar loops.
std::vector<double> loop_alpha(const Matrix& x, const EdgeIndex& e, int p, std::size_t c, double ts, double tn,
                               const AttentionOptions& o) {
  std::vector<double> a;
  for (int q : e.neighbors(p)) a.push_back(ts * x(p, c) + tn * x(q, c));
  if (!o.normalize) return a;
  double peak = -1e300, total = 0.0;
  for (double& v : a) {
    v = leaky(v, o.negative_slope);
    peak = std::max(peak, v);
  }
  for (double& v : a) total += (v = std::exp(v - peak));
  for (double& v : a) v /= total;
  return a;
}

Matrix sugc_dconv_loop(const Matrix& x, const EdgeIndex& e, const Matrix& ts, const Matrix& tn,
                       const AttentionOptions& o) {
  Matrix y(x.rows, x.cols);
  for (int p = 0; p < e.num_nodes; ++p) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      const auto a = loop_alpha(x, e, p, c, ts(0, c), tn(0, c), o);
      const auto nb = e.neighbors(p);
      for (std::size_t i = 0; i < nb.size(); ++i) y(p, c) += a[i] * x(nb[i], c);
    }
  }
  return y;
}

Matrix gugc_loop(const Matrix& x, const EdgeIndex& e, const Matrix& ts, const Matrix& tn, const AttentionOptions& o) {
  Matrix z(x.rows, ts.rows);
  for (int p = 0; p < e.num_nodes; ++p) {
    for (std::size_t d = 0; d < ts.rows; ++d) {
      for (std::size_t c = 0; c < x.cols; ++c) {
        const auto a = loop_alpha(x, e, p, c, ts(d, c), tn(d, c), o);
        const auto nb = e.neighbors(p);
        for (std::size_t i = 0; i < nb.size(); ++i) z(p, d) += a[i] * x(nb[i], c);
      }
    }
  }
  return z;
}

}  // namespace

TEST_CASE("gc_forward examples") {
  const Graph one = Graph::undirected(1, {}, Matrix::from_rows({{1.7}}));
  GcParams p{Tensor(Matrix::from_rows({{-0.6}}))};
  const GraphBatch b1 = single(one);
  CHECK(gc_forward(b1.adjacency, Tensor(b1.node_features), p).item() == doctest::Approx(1.7 * -0.6));

  const Graph path = Graph::undirected(2, std::vector<Edge>{{0, 1}}, Matrix::from_rows({{1}, {0}}));
  const GraphBatch b2 = single(path);
  p.weight = Tensor(Matrix::from_rows({{1}}));
  const Matrix z = gc_forward(b2.adjacency, Tensor(b2.node_features), p).value();
  CHECK(z(0, 0) == doctest::Approx(0.5));
  CHECK(z(1, 0) == doctest::Approx(0.5));

  std::mt19937_64 rng(30);
  CHECK_THROWS_AS(gc_forward(b2.adjacency, Tensor(Matrix(2, 3)), p), std::invalid_argument);
}

TEST_CASE("gat attention and forward examples") {
  std::mt19937_64 rng(31);
  const Graph g = random_graph(rng, 8, 3);
  const GraphBatch b = single(g);
  GatParams p = GatParams::init(3, 2, rng);
  p.attention_self = Tensor(Matrix(2, 1));
  p.attention_neighbor = Tensor(Matrix(2, 1));
  const Matrix alpha = gat_attention(Tensor(b.node_features), b.index(), p).value();
  for (int v = 0; v < g.num_nodes; ++v) {
    const auto nb = b.index().neighbors(v);
    for (std::size_t e = b.index().offsets[v]; e < b.index().offsets[v + 1]; ++e) {
      CHECK(alpha(e, 0) == doctest::Approx(1.0 / static_cast<double>(nb.size())));
    }
  }
  // Zero attention: neighborhood mean then W.
  const Matrix z = gat_forward(b.index(), Tensor(b.node_features), p).value();
  const Matrix xw = matmul(Tensor(b.node_features), p.weight).value();
  for (int v = 0; v < g.num_nodes; ++v) {
    const auto nb = b.index().neighbors(v);
    for (std::size_t d = 0; d < 2; ++d) {
      double mean = 0.0;
      for (int q : nb) mean += xw(q, d) / static_cast<double>(nb.size());
      CHECK(std::abs(z(v, d) - mean) <= 1e-12);
    }
  }

  const Graph one = Graph::undirected(1, {}, random_matrix(1, 3, rng));
  const GraphBatch b1 = single(one);
  const GatParams q = GatParams::init(3, 2, rng);
  CHECK(gat_attention(Tensor(b1.node_features), b1.index(), q).item() == 1.0);
  CHECK(max_abs_diff(gat_forward(b1.index(), Tensor(b1.node_features), q).value(),
                     matmul(Tensor(b1.node_features), q.weight).value()) <= 1e-15);
}

TEST_CASE("sugc_dconv examples and loop reference") {
  std::mt19937_64 rng(32);
  const Graph g = random_graph(rng, 9, 4);
  const GraphBatch b = single(g);
  const Tensor x(b.node_features);
  const Tensor zero(Matrix(1, 4));
  const Matrix mean = sugc_dconv(x, b.index(), zero, zero, kSoft).value();
  for (int v = 0; v < g.num_nodes; ++v) {
    const auto nb = b.index().neighbors(v);
    for (std::size_t c = 0; c < 4; ++c) {
      double m = 0.0;
      for (int q : nb) m += x.at(q, c) / static_cast<double>(nb.size());
      CHECK(std::abs(mean(v, c) - m) <= 1e-12);
    }
  }

  const Graph one = Graph::undirected(1, {}, random_matrix(1, 4, rng));
  const GraphBatch b1 = single(one);
  const SugcParams p1 = SugcParams::init(4, 2, rng);
  CHECK(max_abs_diff(sugc_dconv(Tensor(b1.node_features), b1.index(), p1.theta_self, p1.theta_neighbor, kSoft).value(),
                     b1.node_features) <= 1e-15);

  for (int t = 0; t < 20; ++t) {
    const Graph r = random_graph(rng, random_int(rng, 1, 15), static_cast<std::size_t>(random_int(rng, 1, 6)));
    const GraphBatch br = single(r);
    const SugcParams p = SugcParams::init(r.num_channels(), 3, rng);
    for (const AttentionOptions& o : {kRaw, kSoft}) {
      const Matrix fused = sugc_dconv(Tensor(br.node_features), br.index(), p.theta_self, p.theta_neighbor, o).value();
      const Matrix loop = sugc_dconv_loop(br.node_features, br.index(), p.theta_self.value(), p.theta_neighbor.value(), o);
      CHECK(max_abs_diff(fused, loop) <= 1e-12);
      // The composite per-edge path agrees with the fused kernel.
      const Tensor xr(br.node_features);
      const Matrix composite =
          segment_sum(mul(sugc_attention(xr, br.index(), p.theta_self, p.theta_neighbor, o), gather_rows(xr, br.index().neighbor)),
                      br.index().node, static_cast<std::size_t>(r.num_nodes))
              .value();
      CHECK(max_abs_diff(fused, composite) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(sugc_dconv(x, b.index(), Tensor(Matrix(1, 3)), Tensor(Matrix(1, 3)), kSoft), std::invalid_argument);
}

TEST_CASE("sugc_forward examples") {
  std::mt19937_64 rng(33);
  const Graph g = random_graph(rng, 7, 3);
  const GraphBatch b = single(g);
  const Tensor x(b.node_features);
  SugcParams p = SugcParams::init(3, 2, rng);
  p.theta_self = Tensor(Matrix(1, 3));
  p.theta_neighbor = Tensor(Matrix(1, 3));
  const Matrix z = sugc_forward(b.index(), x, std::vector<SugcParams>{p}, kSoft).value();
  // Uniform weights: mean aggregation then W.
  Matrix mean(7, 3);
  for (int v = 0; v < 7; ++v) {
    const auto nb = b.index().neighbors(v);
    for (int q : nb) {
      for (std::size_t c = 0; c < 3; ++c) mean(v, c) += x.at(q, c) / static_cast<double>(nb.size());
    }
  }
  CHECK(max_abs_diff(z, matmul(Tensor(mean), p.weight).value()) <= 1e-12);

  // C = 1: S-UGC equals a G-UGC whose filters share theta, scaled per output by W.
  const Graph g1 = random_graph(rng, 6, 1);
  const GraphBatch b1 = single(g1);
  const SugcParams s1 = SugcParams::init(1, 3, rng);
  const Matrix zs = sugc_forward(b1.index(), Tensor(b1.node_features), std::vector<SugcParams>{s1}, kSoft).value();
  const Matrix zg = gugc_loop(b1.node_features, b1.index(), Matrix(3, 1, s1.theta_self.at(0, 0)),
                              Matrix(3, 1, s1.theta_neighbor.at(0, 0)), kSoft);
  for (int v = 0; v < 6; ++v) {
    for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(zs(v, d) - zg(v, d) * s1.weight.at(0, d)) <= 1e-12);
  }

  const Matrix two = sugc_forward(b.index(), x, std::vector<SugcParams>{p, p}, kSoft).value();
  REQUIRE(two.cols == 4);
  for (int v = 0; v < 7; ++v) {
    CHECK(two(v, 0) == two(v, 2));
    CHECK(two(v, 1) == two(v, 3));
  }
}

TEST_CASE("gugc_forward examples and loop reference") {
  std::mt19937_64 rng(34);
  const Graph g = random_graph(rng, 8, 3);
  const GraphBatch b = single(g);
  GugcParams zero{Tensor(Matrix(4, 3)), Tensor(Matrix(4, 3))};
  const Matrix z = gugc_forward(b.index(), Tensor(b.node_features), zero, kSoft).value();
  for (int v = 0; v < 8; ++v) {
    const auto nb = b.index().neighbors(v);
    double expected = 0.0;
    for (int q : nb) {
      for (std::size_t c = 0; c < 3; ++c) expected += b.node_features(q, c) / static_cast<double>(nb.size());
    }
    for (std::size_t d = 0; d < 4; ++d) CHECK(std::abs(z(v, d) - expected) <= 1e-12);
  }

  const Graph one = Graph::undirected(1, {}, random_matrix(1, 3, rng));
  const GraphBatch b1 = single(one);
  const GugcParams p1 = GugcParams::init(3, 5, rng);
  const Matrix z1 = gugc_forward(b1.index(), Tensor(b1.node_features), p1, kSoft).value();
  const double row_sum = b1.node_features(0, 0) + b1.node_features(0, 1) + b1.node_features(0, 2);
  for (std::size_t d = 0; d < 5; ++d) CHECK(std::abs(z1(0, d) - row_sum) <= 1e-14);

  for (int t = 0; t < 20; ++t) {
    const Graph r = random_graph(rng, random_int(rng, 1, 12), static_cast<std::size_t>(random_int(rng, 1, 5)));
    const GraphBatch br = single(r);
    const GugcParams p = GugcParams::init(r.num_channels(), static_cast<std::size_t>(random_int(rng, 1, 4)), rng);
    for (const AttentionOptions& o : {kRaw, kSoft}) {
      CHECK(max_abs_diff(gugc_forward(br.index(), Tensor(br.node_features), p, o).value(),
                         gugc_loop(br.node_features, br.index(), p.theta_self.value(), p.theta_neighbor.value(), o)) <=
            1e-12);
    }
  }
}

TEST_CASE("channel-sharing degeneracy of S-UGC") {
  std::mt19937_64 rng(35);
  const Graph base = random_graph(rng, 10, 1);
  Matrix copies(10, 4);
  for (int v = 0; v < 10; ++v) {
    for (std::size_t c = 0; c < 4; ++c) copies(v, c) = base.node_features(v, 0);
  }
  const Graph g = Graph::undirected(10, base.edges, copies);
  const GraphBatch b = single(g);
  const Tensor shared(Matrix(1, 4, 0.8)), shared_n(Matrix(1, 4, -1.3));
  const Matrix y = sugc_dconv(Tensor(b.node_features), b.index(), shared, shared_n, kSoft).value();
  for (int v = 0; v < 10; ++v) {
    for (std::size_t c = 1; c < 4; ++c) CHECK(y(v, c) == y(v, 0));
  }
  const Tensor distinct(Matrix::from_rows({{0.8, -2.0, 1.5, 0.1}}));
  const Matrix y2 = sugc_dconv(Tensor(b.node_features), b.index(), distinct, shared_n, kSoft).value();
  double spread = 0.0;
  for (int v = 0; v < 10; ++v) spread = std::max(spread, std::abs(y2(v, 1) - y2(v, 0)));
  CHECK(spread > 1e-6);
}

TEST_CASE("node relabeling permutes every layer's output") {
  std::mt19937_64 rng(36);
  for (int t = 0; t < 10; ++t) {
    const int n = random_int(rng, 2, 12);
    const Graph g = random_graph(rng, n, 3);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Graph h = permute_graph(g, perm);
    const GraphBatch bg = single(g), bh = single(h);
    const GcParams gc = GcParams::init(3, 2, rng);
    const GatParams gat = GatParams::init(3, 2, rng);
    const SugcParams su = SugcParams::init(3, 2, rng);
    const GugcParams gu = GugcParams::init(3, 2, rng);
    auto outputs = [&](const GraphBatch& b) {
      const Tensor x(b.node_features);
      return std::vector<Matrix>{gc_forward(b.adjacency, x, gc).value(), gat_forward(b.index(), x, gat).value(),
                                 sugc_forward(b.index(), x, std::vector<SugcParams>{su}, kRaw).value(),
                                 gugc_forward(b.index(), x, gu, kSoft).value()};
    };
    const auto og = outputs(bg), oh = outputs(bh);
    for (std::size_t k = 0; k < og.size(); ++k) {
      for (int v = 0; v < n; ++v) {
        for (std::size_t d = 0; d < og[k].cols; ++d) CHECK(std::abs(og[k](v, d) - oh[k](perm[v], d)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("parameter counts") {
  for (const auto& c : parameter_counts()) {
    INFO(c.layer);
    CHECK(c.got == c.expected);
  }
}

TEST_CASE("attention sums to one with Softmax enabled") {
  const SuiteResult s = attention_normalization_suite(100);
  CHECK(s.instances == 100);
  CHECK(s.worst <= 1e-12);
}

TEST_CASE("gradient suite") {
  for (const SuiteResult& s : gradient_suite(20)) {
    INFO(s.name, " worst relative error ", s.worst, " over ", s.checked, " entries, ", s.skipped, " at kinks");
    CHECK(s.instances == 20);
    CHECK(s.worst <= 1e-4);
  }
}

TEST_CASE("blocks") {
  std::mt19937_64 rng(37);
  const Graph g = Graph::undirected(5, std::vector<Edge>{{0, 1}, {1, 2}, {3, 4}}, Matrix(5, 2, 1.0));
  const GraphBatch b = single(g);
  for (ModelKind kind : {ModelKind::gcn, ModelKind::gat, ModelKind::sugcn, ModelKind::gugcn}) {
    BlockOptions o;
    o.kind = kind;
    o.in_width = 2;
    o.out_width = 4;
    o.heads = kind == ModelKind::sugcn ? 2 : 1;
    const auto block = make_block(o, rng);
    INFO(to_string(kind));
    // Constant input with unit-gamma BN gives zeros after ReLU.
    if (kind != ModelKind::gcn) {
      const Matrix out = block->forward(b, Tensor(b.node_features), Mode::train).value();
      for (double v : out.data) CHECK(v == 0.0);
    }
    const Tensor x(random_matrix(5, 2, rng));
    CHECK(block->forward(b, x, Mode::eval).value() == block->forward(b, x, Mode::eval).value());
  }
  BlockOptions bad;
  bad.kind = ModelKind::sugcn;
  bad.in_width = 2;
  bad.out_width = 5;
  bad.heads = 2;
  CHECK_THROWS_AS(make_block(bad, rng), std::invalid_argument);
}

TEST_CASE("Ugcn model") {
  std::mt19937_64 rng(38);
  std::vector<Graph> graphs;
  for (int i = 0; i < 4; ++i) graphs.push_back(random_graph(rng, random_int(rng, 2, 9), 3, 0.4, i % 2));
  UgcnConfig cfg;
  cfg.in_channels = 3;
  cfg.num_classes = 2;
  cfg.hidden = 8;
  cfg.heads = 2;
  std::mt19937_64 unused(0);

  SUBCASE("duplicated graph duplicates its logit row") {
    for (ModelKind kind : {ModelKind::gcn, ModelKind::gat, ModelKind::sugcn, ModelKind::gugcn}) {
      cfg.kind = kind;
      Ugcn model(cfg, 1);
      const std::vector<Graph> dup{graphs[0], graphs[1], graphs[0]};
      const Matrix l = model.forward(batch_graphs(dup), Mode::eval, unused).value();
      CHECK(l.row(0)[0] == l.row(2)[0]);
      CHECK(l.row(0)[1] == l.row(2)[1]);
    }
  }
  SUBCASE("single block equals block, readout and classifier") {
    cfg.kind = ModelKind::gcn;
    cfg.blocks = 1;
    cfg.dropout = 0.0;
    Ugcn model(cfg, 2);
    const GraphBatch b = batch_graphs(graphs);
    const Tensor h = model.blocks().front()->forward(b, Tensor(b.node_features), Mode::eval);
    const auto params = model.parameters();
    const Tensor pooled = segment_sum(h, b.graph_indicator, 4);
    const Matrix expected = add_row(matmul(pooled, params[params.size() - 2]), params.back()).value();
    CHECK(max_abs_diff(model.forward(b, Mode::eval, unused).value(), expected) <= 1e-12);
  }
  SUBCASE("skip-sum adds every block output") {
    cfg.kind = ModelKind::sugcn;
    cfg.blocks = 3;
    Ugcn model(cfg, 3);
    const GraphBatch b = batch_graphs(graphs);
    Tensor x(b.node_features);
    Matrix total(static_cast<std::size_t>(b.num_nodes()), 8);
    for (const auto& block : model.blocks()) {
      x = block->forward(b, x, Mode::eval);
      for (std::size_t i = 0; i < total.size(); ++i) total.data[i] += x.value().data[i];
    }
    CHECK(max_abs_diff(model.node_embeddings(b, Mode::eval).value(), total) <= 1e-12);
  }
  SUBCASE("permutation invariance") {
    const SuiteResult s = permutation_suite(12);
    CHECK(s.worst <= 1e-10);
  }
  SUBCASE("input width mismatch") {
    cfg.in_channels = 4;
    Ugcn model(cfg, 4);
    CHECK_THROWS_AS(model.forward(batch_graphs(graphs), Mode::eval, unused), std::invalid_argument);
  }
}
