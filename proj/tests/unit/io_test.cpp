#include <gtest/gtest.h>

#include "../common/bop_golden.hpp"

#include <fstream>

#include "posefeat/dataset.hpp"
#include "posefeat/io/bop.hpp"
#include "posefeat/io/depth.hpp"
#include "posefeat/io/image.hpp"
#include "posefeat/io/mesh.hpp"
#include "posefeat/io/ply.hpp"
#include "posefeat/io/synthetic.hpp"
#include "posefeat/mining.hpp"
#include "test_support.hpp"

using namespace posefeat;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

const char* kTriangleAscii =
    "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
    "property uchar red\nproperty uchar green\nproperty uchar blue\n"
    "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
    "0 0 0 255 0 0\n1 0 0 255 0 0\n0 1 0 255 0 0\n3 0 1 2\n";

TexturedMesh single_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
  TexturedMesh m;
  m.vertices = {a, b, c};
  m.colors = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  m.triangles = {{0, 1, 2}};
  return m;
}

ParseError::Kind parse_kind(const fs::path& p) {
  try {
    read_ply_model(p);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no ParseError for " << p;
  return ParseError::Kind::kMissing;
}

}  // namespace

TEST(Ply, MinimalAsciiTriangle) {
  const auto dir = test::temp_dir("ply_min");
  write_file(dir / "t.ply", kTriangleAscii);
  const TexturedMesh m = read_ply_model(dir / "t.ply");
  ASSERT_EQ(m.vertices.size(), 3u);
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_EQ(m.triangles[0], (std::array<std::uint32_t, 3>{0, 1, 2}));
  EXPECT_EQ(m.colors[0], Vec3(1, 0, 0));
}

TEST(Ply, BinaryRoundTrip100Vertices) {
  const auto dir = test::temp_dir("ply_rt");
  Rng rng(1);
  TexturedMesh m;
  for (int i = 0; i < 100; ++i) {
    m.vertices.emplace_back(uniform(rng, -50, 50), uniform(rng, -50, 50), uniform(rng, -50, 50));
    m.colors.emplace_back(uniform_index(rng, 256) / 255.0, uniform_index(rng, 256) / 255.0, uniform_index(rng, 256) / 255.0);
  }
  for (std::uint32_t i = 0; i + 2 < 100; ++i) m.triangles.push_back({i, i + 1, i + 2});
  for (bool binary : {true, false}) {
    write_ply_model(dir / "m.ply", m, binary);
    const TexturedMesh r = read_ply_model(dir / "m.ply");
    ASSERT_EQ(r.vertices.size(), m.vertices.size());
    EXPECT_EQ(r.triangles, m.triangles);
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
      for (int k = 0; k < 3; ++k) EXPECT_EQ(r.vertices[i](k), static_cast<double>(static_cast<float>(m.vertices[i](k))));
      EXPECT_LT((r.colors[i] - m.colors[i]).norm(), 1e-12);
    }
  }
}

TEST(Ply, CloudRoundTripIsLossless) {
  const auto dir = test::temp_dir("ply_cloud");
  Rng rng(2);
  const PointCloud c = test::random_cloud(200, rng, 80.0, true);
  std::vector<PixelCoord> px;
  for (std::size_t i = 0; i < c.size(); ++i) px.push_back({static_cast<int>(i), static_cast<int>(2 * i)});
  write_ply_cloud(dir / "c.ply", c, &px);
  const PlyCloud r = read_ply_cloud(dir / "c.ply");
  EXPECT_EQ(r.cloud.positions, c.positions);
  EXPECT_EQ(r.cloud.colors, c.colors);
  EXPECT_EQ(r.pixels, px);
}

TEST(Ply, ErrorsAreDistinct) {
  const auto dir = test::temp_dir("ply_err");
  write_file(dir / "magic.ply", "plx\nformat ascii 1.0\nend_header\n");
  EXPECT_EQ(parse_kind(dir / "magic.ply"), ParseError::Kind::kMalformedHeader);
  write_file(dir / "noend.ply", "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n");
  EXPECT_EQ(parse_kind(dir / "noend.ply"), ParseError::Kind::kMalformedHeader);
  write_file(dir / "be.ply", "ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n");
  EXPECT_EQ(parse_kind(dir / "be.ply"), ParseError::Kind::kUnsupported);
  std::string truncated = kTriangleAscii;
  truncated.resize(truncated.size() - 8);
  write_file(dir / "trunc.ply", truncated);
  EXPECT_EQ(parse_kind(dir / "trunc.ply"), ParseError::Kind::kTruncated);
  TexturedMesh m = single_triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  write_ply_model(dir / "bin.ply", m, true);
  std::ifstream in(dir / "bin.ply", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  write_file(dir / "bintrunc.ply", bytes.substr(0, bytes.size() - 5));
  EXPECT_EQ(parse_kind(dir / "bintrunc.ply"), ParseError::Kind::kTruncated);
  EXPECT_THROW(read_ply_model(dir / "missing.ply"), DataError);
}

TEST(MeshSampling, PointsStayOnTriangle) {
  const TexturedMesh m = single_triangle({0, 0, 0}, {30, 0, 10}, {0, 20, 5});
  const PointCloud c = sample_mesh_surface(m, 1000, 3);
  ASSERT_EQ(c.size(), 1000u);
  const Vec3 n = (m.vertices[1] - m.vertices[0]).cross(m.vertices[2] - m.vertices[0]).normalized();
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_LT(std::abs(n.dot(c.positions[i] - m.vertices[0])), 1e-9);
    const Vec3& col = c.colors[i];
    EXPECT_NEAR(col.sum(), 1.0, 1e-9);  // barycentric weights
    EXPECT_GE(col.minCoeff(), -1e-12);
  }
}

TEST(MeshSampling, AreaProportionalSplit) {
  TexturedMesh m;
  m.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {10, 0, 0}, {16, 0, 0}, {10, 1, 0}};
  m.colors.assign(6, Vec3::Zero());
  m.triangles = {{0, 1, 2}, {3, 4, 5}};  // areas 1 and 3
  const std::size_t n = 20000;
  const PointCloud c = sample_mesh_surface(m, n, 4);
  std::size_t first = 0;
  for (const Vec3& p : c.positions) first += p.x() < 5.0 ? 1 : 0;
  const double expected = 0.25 * n, sigma = std::sqrt(n * 0.25 * 0.75);
  EXPECT_LT(std::abs(static_cast<double>(first) - expected), 3.0 * sigma);
}

TEST(MeshSampling, SeedDeterminism) {
  const TexturedMesh m = single_triangle({0, 0, 0}, {30, 0, 10}, {0, 20, 5});
  EXPECT_EQ(sample_mesh_surface(m, 50, 9).positions, sample_mesh_surface(m, 50, 9).positions);
  EXPECT_NE(sample_mesh_surface(m, 50, 9).positions, sample_mesh_surface(m, 50, 10).positions);
}

TEST(MeshSampling, Errors) {
  const TexturedMesh flat = single_triangle({0, 0, 0}, {1, 0, 0}, {2, 0, 0});
  EXPECT_THROW(sample_mesh_surface(flat, 10, 1), InvalidArgument);
  const TexturedMesh ok = single_triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  EXPECT_THROW(sample_mesh_surface(ok, 0, 1), InvalidArgument);
}

TEST(LiftDepth, PrincipalPoint) {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 500;
  intr.cx = 2;
  intr.cy = 1;
  DepthImage d(4, 3, 0.0);
  d.at(2, 1) = 1000;
  const LiftedCloud c = lift_depth_image(d, {}, intr);
  ASSERT_EQ(c.cloud.size(), 1u);
  EXPECT_EQ(c.cloud.positions[0], Vec3(0, 0, 1000));
  EXPECT_EQ(c.pixels[0], (PixelCoord{2, 1}));
}

TEST(LiftDepth, AnalyticPinhole) {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 500;
  intr.depth_scale = 0.5;
  DepthImage d(501, 1, 0.0);
  d.at(500, 0) = 2000;
  const LiftedCloud c = lift_depth_image(d, ColorImage(501, 1, Vec3(0.2, 0.4, 0.6)), intr);
  ASSERT_EQ(c.cloud.size(), 1u);
  EXPECT_EQ(c.cloud.positions[0], Vec3(1000, 0, 1000));
  EXPECT_EQ(c.cloud.colors[0], Vec3(0.2, 0.4, 0.6));
}

TEST(LiftDepth, PlaneAndProjectionRoundTrip) {
  CameraIntrinsics intr;
  intr.fx = 520;
  intr.fy = 515;
  intr.cx = 31.5;
  intr.cy = 24.5;
  // Plane n.x = c rendered analytically: depth z at pixel solves n.(ray * z) = c.
  const Vec3 n = Vec3(0.1, -0.2, 1.0).normalized();
  const double c0 = 800.0;
  DepthImage d(64, 48, 0.0);
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 64; ++u) {
      const Vec3 ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      d.at(u, v) = c0 / n.dot(ray);
    }
  d.at(5, 5) = 0.0;
  const LiftedCloud c = lift_depth_image(d, {}, intr);
  EXPECT_EQ(c.cloud.size(), 64u * 48u - 1u);
  for (std::size_t i = 0; i < c.cloud.size(); ++i) {
    EXPECT_LT(std::abs(n.dot(c.cloud.positions[i]) - c0), 1e-6);
    const auto uv = project_point(intr, c.cloud.positions[i]);
    EXPECT_NEAR(uv[0], c.pixels[i][0], 1e-9);
    EXPECT_NEAR(uv[1], c.pixels[i][1], 1e-9);
  }
}

TEST(LiftDepth, SizeMismatch) {
  CameraIntrinsics intr;
  EXPECT_THROW(lift_depth_image(DepthImage(2, 2, 1.0), ColorImage(3, 2), intr), InvalidArgument);
  intr.fx = 0;
  EXPECT_THROW(lift_depth_image(DepthImage(2, 2, 1.0), {}, intr), InvalidArgument);
}

TEST(HoleFill, SinglePixel) {
  DepthImage d(3, 3, 100.0);
  d.at(1, 1) = 0;
  EXPECT_EQ(fill_depth_holes(d, 1).at(1, 1), 100.0);
}

TEST(HoleFill, ValidImageUnchanged) {
  DepthImage d(4, 4, 0.0);
  for (int i = 0; i < 16; ++i) d.data[i] = 10 + i;
  EXPECT_EQ(fill_depth_holes(d, 5).data, d.data);
}

TEST(HoleFill, DilationDepth) {
  // One 8-neighbour ring is filled per iteration: a w-wide square hole needs
  // ceil(w / 2) iterations to reach its centre.
  for (int w : {3, 5}) {
    DepthImage d(w + 4, w + 4, 100.0);
    for (int v = 2; v < 2 + w; ++v)
      for (int u = 2; u < 2 + w; ++u) d.at(u, v) = 0;
    const int c = 2 + w / 2;
    const int needed = (w + 1) / 2;
    EXPECT_EQ(fill_depth_holes(d, needed - 1).at(c, c), 0.0) << "w=" << w;
    EXPECT_EQ(fill_depth_holes(d, needed).at(c, c), 100.0) << "w=" << w;
  }
}

TEST(HoleFill, MedianOfNeighbours) {
  DepthImage d(3, 1, 0.0);
  d.at(0, 0) = 10;
  d.at(2, 0) = 30;
  EXPECT_EQ(fill_depth_holes(d, 1).at(1, 0), 20.0);
  DepthImage e(3, 3, 0.0);
  e.at(0, 0) = 1;
  e.at(1, 0) = 5;
  e.at(2, 0) = 9;
  EXPECT_EQ(fill_depth_holes(e, 1).at(1, 1), 5.0);
}

TEST(Png, DepthAndColorRoundTrip) {
  const auto dir = test::temp_dir("png");
  DepthImage d(5, 3, 0.0);
  for (int i = 0; i < 15; ++i) d.data[i] = i * 4000;
  write_depth_png(dir / "d.png", d);
  EXPECT_EQ(read_depth_png(dir / "d.png").data, d.data);
  ColorImage c(2, 2);
  c.data = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(51 / 255.0, 102 / 255.0, 1)};
  write_color_png(dir / "c.png", c);
  const ColorImage r = read_color_png(dir / "c.png");
  for (int i = 0; i < 4; ++i) EXPECT_LT((r.data[i] - c.data[i]).norm(), 1e-12);
  write_file(dir / "bad.png", "not a png");
  EXPECT_THROW(read_depth_png(dir / "bad.png"), ParseError);
}

TEST(Bop, GoldenFixture) {
  const auto errors = test::check_bop_golden(test::data_dir() / "bop_fixture");
  for (const auto& e : errors) ADD_FAILURE() << e;
}

TEST(Bop, IdentityPose) {
  const auto gt = read_bop_gt(test::data_dir() / "bop_fixture/test/000001", 0);
  ASSERT_EQ(gt.size(), 1u);
  EXPECT_EQ(gt[0].pose.rotation, Mat3::Identity());
  EXPECT_EQ(gt[0].pose.translation, Vec3::Zero());
}

TEST(Bop, CorruptJsonNamesFile) {
  const auto dir = test::temp_dir("bop_bad");
  write_file(dir / "scene_camera.json", "{\"0\": {\"cam_K\": [1, 2,");
  try {
    read_bop_camera(dir, 0);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("scene_camera.json"), std::string::npos);
  }
  write_file(dir / "scene_camera.json", "{\"1\": {\"cam_K\": [1, 0, 0, 0, 1, 0, 0, 0, 1]}}");
  try {
    read_bop_camera(dir, 0);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::kMissing);
  }
  EXPECT_THROW(read_bop_gt(dir, 0), ParseError);  // file missing
}

TEST(Bop, RotationTolerance) {
  std::vector<double> r{1, 0, 0, 0, 1, 0, 0, 0, 1};
  r[1] = 5e-4;
  const Mat3 snapped = bop_rotation(r, "x");
  EXPECT_TRUE((RigidPose{snapped, Vec3::Zero()}.is_valid(1e-9)));
  r[1] = 5e-3;
  EXPECT_THROW(bop_rotation(r, "x"), DataError);
  std::vector<double> reflect{-1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_THROW(bop_rotation(reflect, "x"), DataError);
}

TEST(Detections, ReadWriteRoundTrip) {
  const auto dir = test::temp_dir("det");
  write_file(dir / "d.json",
             R"([{"image_id": 3, "obj_id": 1, "bbox": [10, 20, 30, 40], "score": 0.75},
                 {"image_id": 4, "obj_id": 2, "bbox": [0, 0, 5, 5], "score": 1.0, "scene_id": 2}])");
  const auto d = read_detections(dir / "d.json");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].x_min, 10);
  EXPECT_EQ(d[0].y_max, 60);
  EXPECT_EQ(d[0].confidence, 0.75);
  EXPECT_EQ(d[0].scene_id, -1);
  EXPECT_EQ(d[1].scene_id, 2);
  write_detections(dir / "e.json", d);
  const auto e = read_detections(dir / "e.json");
  EXPECT_EQ(e[0].x_max, d[0].x_max);
  EXPECT_EQ(e[1].object_id, 2);
  write_file(dir / "bad.json", R"([{"image_id": 3, "obj_id": 1, "bbox": [10, 20, -1, 4], "score": 1}])");
  EXPECT_THROW(read_detections(dir / "bad.json"), ParseError);
  write_file(dir / "obj.json", R"({"image_id": 3})");
  EXPECT_THROW(read_detections(dir / "obj.json"), ParseError);
}

namespace {
struct PixelScene {
  PointCloud cloud;
  std::vector<PixelCoord> pixels;
};
PixelScene pixel_grid(int w, int h) {
  PixelScene s;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      s.cloud.positions.emplace_back(u, v, 500);
      s.pixels.push_back({u, v});
    }
  return s;
}
}  // namespace

TEST(Crop, FullImageKeepsAll) {
  const PixelScene s = pixel_grid(20, 10);
  Detection d;
  d.x_max = 20;
  d.y_max = 10;
  EXPECT_EQ(crop_by_detection(s.cloud, s.pixels, d, 0).size(), s.cloud.size());
}

TEST(Crop, LeftHalfNoMargin) {
  const PixelScene s = pixel_grid(20, 10);
  Detection d;
  d.x_max = 10;
  d.y_max = 10;
  const PointCloud c = crop_by_detection(s.cloud, s.pixels, d, 0);
  EXPECT_EQ(c.size(), 100u);
  for (const Vec3& p : c.positions) EXPECT_LT(p.x(), 10);
}

TEST(Crop, MarginMatchesPixelFilter) {
  const PixelScene s = pixel_grid(60, 40);
  Detection d;
  d.x_min = 22;
  d.y_min = 15;
  d.x_max = 31;
  d.y_max = 20;
  const auto keep = crop_indices(s.pixels, d, 10);
  std::vector<std::size_t> want;
  for (std::size_t i = 0; i < s.pixels.size(); ++i) {
    const auto [u, v] = s.pixels[i];
    if (u >= 12 && u < 41 && v >= 5 && v < 30) want.push_back(i);
  }
  EXPECT_EQ(keep, want);
}

TEST(Crop, EmptyResultIsError) {
  const PixelScene s = pixel_grid(5, 5);
  Detection d;
  d.x_min = 100;
  d.y_min = 100;
  d.x_max = 110;
  d.y_max = 110;
  EXPECT_THROW(crop_by_detection(s.cloud, s.pixels, d, 0), DataError);
  d.x_max = 50;  // invalid box
  EXPECT_THROW(crop_by_detection(s.cloud, s.pixels, d, 0), InvalidArgument);
}

namespace {
ShapeSpec box_spec() { return standard_object_classes().front(); }
}  // namespace

TEST(Synthetic, NoiseFreeObjectIsInScene) {
  const ScenePair p = generate_synthetic_pair(box_spec(), {}, {}, 0.0, 0.0, 11);
  const NeighborIndex index(p.scene_cloud.positions);
  for (const Vec3& x : p.object_cloud.positions) EXPECT_LT(index.nearest(p.gt_pose.apply(x)).distance, 1e-6);
  EXPECT_NEAR(p.object_diameter, cloud_diameter(p.object_cloud), 1e-6 * p.object_diameter);
  EXPECT_TRUE(p.gt_pose.is_valid());
}

TEST(Synthetic, SeedDeterminism) {
  const ScenePair a = generate_synthetic_pair(box_spec(), {}, {}, 0.2, 1.0, 12);
  const ScenePair b = generate_synthetic_pair(box_spec(), {}, {}, 0.2, 1.0, 12);
  EXPECT_EQ(a.scene_cloud.positions, b.scene_cloud.positions);
  EXPECT_EQ(a.scene_cloud.colors, b.scene_cloud.colors);
  EXPECT_EQ(a.gt_pose.rotation, b.gt_pose.rotation);
  EXPECT_EQ(a.scene_pixels, b.scene_pixels);
  const ScenePair c = generate_synthetic_pair(box_spec(), {}, {}, 0.2, 1.0, 13);
  EXPECT_NE(a.scene_cloud.positions, c.scene_cloud.positions);
}

TEST(Synthetic, OcclusionCount) {
  for (const ShapeSpec& s : standard_object_classes()) {
    const ScenePair p = generate_synthetic_pair(s, {}, {}, 0.3, 1.0, 14);
    const double want = 0.7 * static_cast<double>(s.surface_points);
    EXPECT_NEAR(static_cast<double>(p.visible_object_points), want, 0.02 * want) << s.name;
    std::size_t mask = 0;
    for (auto m : p.object_mask) mask += m;
    EXPECT_EQ(mask, p.visible_object_points);
  }
}

TEST(Synthetic, MiningRecoversObjectWithoutNoise) {
  for (const ShapeSpec& s : standard_object_classes()) {
    const ScenePair p = generate_synthetic_pair(s, {}, {}, 0.0, 0.0, 15);
    const CorrespondenceSet c = mine_positives(p.object_cloud, p.scene_cloud, p.gt_pose, 4.0, kUnlimitedPairs, 1);
    EXPECT_GE(static_cast<double>(c.size()), 0.99 * static_cast<double>(p.object_cloud.size())) << s.name;
  }
}

TEST(Synthetic, Errors) {
  EXPECT_THROW(generate_synthetic_pair(box_spec(), {}, {}, 1.0, 0.0, 1), InvalidArgument);
  EXPECT_THROW(generate_synthetic_pair(box_spec(), {}, {}, -0.1, 0.0, 1), InvalidArgument);
  EXPECT_THROW(shape_kind_from_string("sphere"), InvalidArgument);
}

TEST(Synthetic, ColoursAreTextured) {
  // Per-face colour bands: an untextured object would have a single colour.
  const ScenePair p = generate_synthetic_pair(box_spec(), {}, {}, 0.0, 0.0, 16);
  Vec3 lo = p.object_cloud.colors.front(), hi = lo;
  for (const Vec3& c : p.object_cloud.colors) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
    EXPECT_GE(c.minCoeff(), 0.0);
    EXPECT_LE(c.maxCoeff(), 1.0);
  }
  EXPECT_GT((hi - lo).maxCoeff(), 0.3);
}

TEST(Synthetic, DetectionCoversVisibleObject) {
  const ScenePair p = generate_synthetic_pair(box_spec(), {}, {}, 0.3, 1.0, 17);
  const Detection d = synthetic_detection(p, 1, 0);
  for (std::size_t i = 0; i < p.scene_pixels.size(); ++i)
    if (p.object_mask[i]) {
      EXPECT_TRUE(inside_expanded_bbox(p.scene_pixels[i], d, 0));
    }
}
