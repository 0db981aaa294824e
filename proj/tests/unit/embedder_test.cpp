#include <gtest/gtest.h>

#include "../common/gradcheck.hpp"
#include "posefeat/descriptors.hpp"
#include "posefeat/embedder.hpp"
#include "test_support.hpp"

using namespace posefeat;

namespace {

DenseLayer layer(std::initializer_list<std::initializer_list<double>> w, std::initializer_list<double> b) {
  DenseLayer l;
  l.weight.resize(static_cast<Eigen::Index>(w.size()), static_cast<Eigen::Index>(w.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : w) {
    Eigen::Index c = 0;
    for (double v : row) l.weight(r, c++) = v;
    ++r;
  }
  l.bias.resize(static_cast<Eigen::Index>(b.size()));
  Eigen::Index k = 0;
  for (double v : b) l.bias(k++) = v;
  return l;
}

FeatureMatrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  FeatureMatrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng, 1.0);
  return m;
}

}  // namespace

TEST(Descriptors, PlaneHasNoThirdEigenvalue) {
  Rng rng(1);
  PointCloud c;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) c.positions.emplace_back(i, j, 0.0);
  const DescriptorSet d = compute_descriptors(c, {3.0, 8.0});
  for (Eigen::Index r = 0; r < d.values.rows(); ++r) {
    const Vec3& p = c.positions[static_cast<std::size_t>(r)];
    if (p.x() < 10 || p.x() > 30 || p.y() < 10 || p.y() > 30) continue;
    EXPECT_LT(std::abs(d.values(r, 8)), 1e-6);
    EXPECT_LT(std::abs(d.values(r, 11)), 1e-6);
    EXPECT_NEAR(d.values(r, 5), 1.0, 1e-9);  // normal (0,0,1)
    EXPECT_EQ(d.valid[static_cast<std::size_t>(r)], 1);
  }
}

TEST(Descriptors, UniformBallIsIsotropic) {
  Rng rng(2);
  PointCloud c;
  while (c.size() < 20000) {
    const Vec3 p(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    if (p.norm() <= 1.0) c.positions.push_back(100.0 * p);
  }
  c.positions.push_back(Vec3::Zero());
  const NeighborIndex index(c.positions);
  const std::vector<std::size_t> rows{c.size() - 1};
  const DescriptorSet d = compute_descriptors(c, index, {50.0, 100.0}, {}, rows);
  for (int k = 9; k < 12; ++k) EXPECT_NEAR(d.values(0, k), 1.0 / 3.0, 0.05);
  for (int k = 6; k < 9; ++k) EXPECT_NEAR(d.values(0, k), 1.0 / 3.0, 0.05);
  EXPECT_GE(d.values(0, 9), d.values(0, 10));
  EXPECT_GE(d.values(0, 10), d.values(0, 11));
}

TEST(Descriptors, RigidInvariantEntries) {
  Rng rng(3);
  const PointCloud c = test::random_cloud(800, rng, 30.0, true);
  const PointCloud moved = transform_cloud(c, test::random_pose(rng));
  const DescriptorSet a = compute_descriptors(c, {6.0, 15.0});
  const DescriptorSet b = compute_descriptors(moved, {6.0, 15.0});
  for (Eigen::Index r = 0; r < a.values.rows(); ++r) {
    for (int k : {0, 1, 2, 6, 7, 8, 9, 10, 11}) EXPECT_NEAR(a.values(r, k), b.values(r, k), 1e-6);
    EXPECT_EQ(a.valid[static_cast<std::size_t>(r)], b.valid[static_cast<std::size_t>(r)]);
  }
}

TEST(Descriptors, SparseNeighbourhoodsAreZeroedAndFlagged) {
  PointCloud c;
  for (int i = 0; i < 12; ++i) c.positions.emplace_back(100.0 * i, 0, 0);
  const DescriptorSet d = compute_descriptors(c, {1.0, 2.0});
  for (Eigen::Index r = 0; r < d.values.rows(); ++r) {
    EXPECT_EQ(d.valid[static_cast<std::size_t>(r)], 0);
    EXPECT_EQ(d.values.row(r).norm(), 0.0);
  }
}

TEST(Descriptors, ColorToggle) {
  Rng rng(4);
  const PointCloud c = test::random_cloud(100, rng, 10.0, true);
  DescriptorOptions off;
  off.use_color = false;
  const DescriptorSet a = compute_descriptors(c, {3.0, 6.0});
  const DescriptorSet b = compute_descriptors(c, {3.0, 6.0}, off);
  EXPECT_EQ(a.values(0, 0), c.colors[0].x());
  for (Eigen::Index r = 0; r < b.values.rows(); ++r) EXPECT_EQ(b.values.row(r).head(3).norm(), 0.0);
  EXPECT_EQ(a.values.rightCols(11), b.values.rightCols(11));
}

TEST(Descriptors, Errors) {
  Rng rng(5);
  const PointCloud small = test::random_cloud(5, rng);
  EXPECT_THROW(compute_descriptors(small, {1.0, 2.0}), InvalidArgument);
  const PointCloud c = test::random_cloud(50, rng);
  EXPECT_THROW(compute_descriptors(c, {3.0, 3.0}), InvalidArgument);
}

TEST(Embedder, ZeroModelGivesZeroFeatures) {
  std::vector<DenseLayer> layers{layer({{0, 0}, {0, 0}}, {0, 0}), layer({{0, 0}}, {0})};
  const EmbeddingModel m = EmbeddingModel::from_layers(layers);
  Rng rng(1);
  const EmbedResult r = embed_forward(m, random_matrix(5, 2, rng));
  EXPECT_EQ(r.features.norm(), 0.0);
}

TEST(Embedder, HandEvaluatedForward) {
  // x=(1,2): z = (1*1 - 1*2 + 0.5, 2*2 + 0) = (-0.5, 4); out = 3*sp(-0.5) - sp(4) + 0.25
  std::vector<DenseLayer> layers{layer({{1, -1}, {0, 2}}, {0.5, 0}), layer({{3, -1}}, {0.25})};
  const EmbeddingModel m = EmbeddingModel::from_layers(layers);
  FeatureMatrix x(1, 2);
  x << 1, 2;
  const double want = 3 * std::log1p(std::exp(-0.5)) - std::log1p(std::exp(4.0)) + 0.25;
  EXPECT_NEAR(embed_forward(m, x).features(0, 0), want, 1e-14);
}

TEST(Embedder, RowsAreIndependent) {
  Rng rng(2);
  const EmbeddingModel m(14, 8, 3, 16);
  const FeatureMatrix x = random_matrix(300, 14, rng);
  const FeatureMatrix f = embed_forward(m, x).features;
  for (Eigen::Index r : {0, 127, 128, 299}) {
    const FeatureMatrix one = embed_forward(m, x.middleRows(r, 1)).features;
    EXPECT_LT((f.row(r) - one.row(0)).norm(), 1e-12);
  }
}

TEST(Embedder, DeterministicAcrossJobs) {
  Rng rng(3);
  const EmbeddingModel m(14, 8, 4, 16);
  const FeatureMatrix x = random_matrix(1000, 14, rng);
  const EmbedResult a = embed_forward(m, x, 1);
  const EmbedResult b = embed_forward(m, x, 4);
  EXPECT_EQ(a.features, b.features);
  const FeatureMatrix g = random_matrix(1000, 8, rng);
  ModelGradients ga = embed_backward(m, a.cache, g, 1);
  ModelGradients gb = embed_backward(m, b.cache, g, 3);
  for (std::size_t l = 0; l < ga.layers.size(); ++l) {
    EXPECT_EQ(ga.layers[l].weight, gb.layers[l].weight);
    EXPECT_EQ(ga.layers[l].bias, gb.layers[l].bias);
  }
}

TEST(Embedder, BackwardZeroAndLinear) {
  Rng rng(4);
  const EmbeddingModel m(6, 4, 5, 8);
  const FeatureMatrix x = random_matrix(20, 6, rng);
  const EmbedResult r = embed_forward(m, x);
  ModelGradients z = embed_backward(m, r.cache, FeatureMatrix::Zero(20, 4));
  for (auto& b : z.blocks())
    for (double v : b.values) EXPECT_EQ(v, 0.0);
  const FeatureMatrix g = random_matrix(20, 4, rng);
  ModelGradients g1 = embed_backward(m, r.cache, g);
  ModelGradients g2 = embed_backward(m, r.cache, 2.0 * g);
  auto b1 = g1.blocks(), b2 = g2.blocks();
  for (std::size_t k = 0; k < b1.size(); ++k)
    for (std::size_t i = 0; i < b1[k].values.size(); ++i) EXPECT_EQ(b2[k].values[i], 2.0 * b1[k].values[i]);
}

TEST(Embedder, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  EmbeddingModel m(std::vector<int>{5, 7, 6, 3}, 9);
  const FeatureMatrix x = random_matrix(10, 5, rng);
  const FeatureMatrix g = random_matrix(10, 3, rng);
  const EmbedResult r = embed_forward(m, x);
  ModelGradients grads = embed_backward(m, r.cache, g);
  const auto objective = [&]() { return embed_forward(m, x).features.cwiseProduct(g).sum(); };
  const double h = 1e-5;
  auto gb = grads.blocks();
  for (std::size_t b = 0; b < gb.size(); ++b) {
    for (std::size_t i = 0; i < gb[b].values.size(); ++i) {
      double& p = m.parameter_blocks()[b].values[i];
      const double v = p;
      p = v + h;
      const double up = objective();
      p = v - h;
      const double dn = objective();
      p = v;
      EXPECT_LT(test::relative_error(gb[b].values[i], (up - dn) / (2 * h)), 1e-5) << gb[b].name << " " << i;
    }
  }
}

TEST(Embedder, StaleCacheRejected) {
  Rng rng(6);
  EmbeddingModel m(4, 2, 1, 4);
  const EmbedResult r = embed_forward(m, random_matrix(3, 4, rng));
  m.mutable_layers()[0].bias(0) += 1.0;
  EXPECT_THROW(embed_backward(m, r.cache, FeatureMatrix::Zero(3, 2)), InvalidArgument);
  EmbeddingModel other(4, 2, 1, 4);
  EXPECT_THROW(embed_backward(other, r.cache, FeatureMatrix::Zero(3, 2)), InvalidArgument);
}

TEST(Embedder, IndependentParameterStorage) {
  EmbeddingModel a(14, 8, 1, 16);
  EmbeddingModel b = a;
  const auto before = b.layers()[0].weight;
  a.mutable_layers()[0].weight(0, 0) += 5.0;
  EXPECT_EQ(b.layers()[0].weight, before);
  EXPECT_NE(a.id(), b.id());
}

TEST(Embedder, SeededGlorotInit) {
  const EmbeddingModel a(14, 32, 7), b(14, 32, 7), c(14, 32, 8);
  EXPECT_EQ(a.layers()[1].weight, b.layers()[1].weight);
  EXPECT_NE(a.layers()[1].weight, c.layers()[1].weight);
  const double bound = std::sqrt(6.0 / (14 + 64));
  EXPECT_LE(a.layers()[0].weight.cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(a.layers()[0].bias.norm(), 0.0);
  EXPECT_EQ(a.widths(), (std::vector<int>{14, 64, 64, 32}));
}

TEST(Embedder, WidthMismatch) {
  const EmbeddingModel m(14, 8, 1, 16);
  EXPECT_THROW(embed_forward(m, FeatureMatrix::Zero(3, 5)), InvalidArgument);
  EXPECT_THROW(EmbeddingModel(std::vector<int>{3}, 0), InvalidArgument);
}
