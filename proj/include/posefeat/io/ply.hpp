#pragma once

// PLY reader/writer for meshes and coloured clouds. Supports `ascii` and
// `binary_little_endian`; big-endian payloads are rejected.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"

namespace posefeat {

/// Triangle mesh with per-vertex colours in [0, 1].
struct TexturedMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3> colors;

  void validate() const {
    if (triangles.empty()) throw InvalidArgument("mesh has no triangles");
    if (colors.size() != vertices.size()) throw InvalidArgument("mesh colour count differs from vertex count");
    for (const auto& t : triangles)
      for (std::uint32_t v : t)
        if (v >= vertices.size()) throw InvalidArgument("mesh triangle index out of range");
  }
};

/// Optional per-vertex integer pixel coordinates stored as `u`/`v` properties.
struct PlyCloud {
  PointCloud cloud;
  std::vector<std::array<int, 2>> pixels;
};

namespace ply_detail {

enum class Scalar { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

inline Scalar parse_scalar(const std::string& name, const std::string& path) {
  if (name == "char" || name == "int8") return Scalar::kInt8;
  if (name == "uchar" || name == "uint8") return Scalar::kUInt8;
  if (name == "short" || name == "int16") return Scalar::kInt16;
  if (name == "ushort" || name == "uint16") return Scalar::kUInt16;
  if (name == "int" || name == "int32") return Scalar::kInt32;
  if (name == "uint" || name == "uint32") return Scalar::kUInt32;
  if (name == "float" || name == "float32") return Scalar::kFloat32;
  if (name == "double" || name == "float64") return Scalar::kFloat64;
  throw ParseError(ParseError::Kind::kMalformedHeader, path + ": unknown PLY scalar type '" + name + "'");
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::kInt8:
    case Scalar::kUInt8: return 1;
    case Scalar::kInt16:
    case Scalar::kUInt16: return 2;
    case Scalar::kInt32:
    case Scalar::kUInt32:
    case Scalar::kFloat32: return 4;
    case Scalar::kFloat64: return 8;
  }
  return 0;
}

inline bool is_integer(Scalar s) { return s != Scalar::kFloat32 && s != Scalar::kFloat64; }

struct Property {
  std::string name;
  Scalar type = Scalar::kFloat32;
  bool is_list = false;
  Scalar count_type = Scalar::kUInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
};

inline Header read_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw ParseError(ParseError::Kind::kMalformedHeader, path + ": missing 'ply' magic");
  Header header;
  bool have_format = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word.empty() || word == "comment" || word == "obj_info") continue;
    if (word == "end_header") {
      if (!have_format) throw ParseError(ParseError::Kind::kMalformedHeader, path + ": missing format line");
      return header;
    }
    if (word == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii") {
        header.binary = false;
      } else if (fmt == "binary_little_endian") {
        header.binary = true;
      } else if (fmt == "binary_big_endian") {
        throw ParseError(ParseError::Kind::kUnsupported, path + ": big-endian PLY is not supported");
      } else {
        throw ParseError(ParseError::Kind::kMalformedHeader, path + ": unknown format '" + fmt + "'");
      }
      have_format = true;
    } else if (word == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0)
        throw ParseError(ParseError::Kind::kMalformedHeader, path + ": bad element line '" + line + "'");
      e.count = static_cast<std::size_t>(count);
      header.elements.push_back(std::move(e));
    } else if (word == "property") {
      if (header.elements.empty())
        throw ParseError(ParseError::Kind::kMalformedHeader, path + ": property before any element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_scalar(count_type, path);
        p.type = parse_scalar(item_type, path);
      } else {
        p.type = parse_scalar(type, path);
        ls >> p.name;
      }
      if (p.name.empty()) throw ParseError(ParseError::Kind::kMalformedHeader, path + ": property without a name");
      header.elements.back().properties.push_back(std::move(p));
    } else {
      throw ParseError(ParseError::Kind::kMalformedHeader, path + ": unexpected header line '" + line + "'");
    }
  }
  throw ParseError(ParseError::Kind::kMalformedHeader, path + ": header not terminated by end_header");
}

/// Pulls scalar values from either an ASCII token stream or a binary buffer.
class ValueReader {
 public:
  ValueReader(std::istream& in, bool binary, std::string path) : in_(in), binary_(binary), path_(std::move(path)) {}

  double read(Scalar s) {
    if (!binary_) {
      std::string token;
      if (!(in_ >> token)) truncated();
      try {
        const double v = std::stod(token);
        return s == Scalar::kFloat32 ? static_cast<double>(static_cast<float>(v)) : v;
      } catch (const std::exception&) {
        throw ParseError(ParseError::Kind::kInvalidValue, path_ + ": invalid number '" + token + "'");
      }
    }
    unsigned char buf[8];
    const std::size_t n = scalar_size(s);
    if (!in_.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n))) truncated();
    static_assert(std::endian::native == std::endian::little, "binary PLY decoding assumes a little-endian host");
    switch (s) {
      case Scalar::kInt8: return static_cast<double>(static_cast<std::int8_t>(buf[0]));
      case Scalar::kUInt8: return static_cast<double>(buf[0]);
      case Scalar::kInt16: return static_cast<double>(load<std::int16_t>(buf));
      case Scalar::kUInt16: return static_cast<double>(load<std::uint16_t>(buf));
      case Scalar::kInt32: return static_cast<double>(load<std::int32_t>(buf));
      case Scalar::kUInt32: return static_cast<double>(load<std::uint32_t>(buf));
      case Scalar::kFloat32: return static_cast<double>(load<float>(buf));
      case Scalar::kFloat64: return load<double>(buf);
    }
    return 0.0;
  }

  [[noreturn]] void truncated() const {
    throw ParseError(ParseError::Kind::kTruncated, path_ + ": payload ends before all elements were read");
  }

 private:
  template <typename T>
  static T load(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
  }

  std::istream& in_;
  bool binary_;
  std::string path_;
};

struct VertexData {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  std::vector<std::array<int, 2>> pixels;
  std::vector<std::array<std::uint32_t, 3>> triangles;
};

inline VertexData read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open PLY file " + path.string());
  const std::string p = path.string();
  const Header header = read_header(in, p);
  ValueReader reader(in, header.binary, p);
  VertexData data;

  for (const Element& e : header.elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, iu = -1, iv = -1;
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        const std::string& n = e.properties[k].name;
        const int ki = static_cast<int>(k);
        if (n == "x") ix = ki;
        if (n == "y") iy = ki;
        if (n == "z") iz = ki;
        if (n == "red" || n == "r") ir = ki;
        if (n == "green" || n == "g") ig = ki;
        if (n == "blue" || n == "b") ib = ki;
        if (n == "u") iu = ki;
        if (n == "v") iv = ki;
      }
      if (ix < 0 || iy < 0 || iz < 0)
        throw ParseError(ParseError::Kind::kMalformedHeader, p + ": vertex element lacks x/y/z");
      const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
      const bool has_pixels = iu >= 0 && iv >= 0 && is_integer(e.properties[iu].type);
      std::vector<double> row(e.properties.size());
      data.positions.reserve(e.count);
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const Property& prop = e.properties[k];
          if (prop.is_list) {
            const auto n = static_cast<std::size_t>(reader.read(prop.count_type));
            for (std::size_t m = 0; m < n; ++m) reader.read(prop.type);
            row[k] = 0.0;
          } else {
            row[k] = reader.read(prop.type);
          }
        }
        data.positions.emplace_back(row[ix], row[iy], row[iz]);
        if (has_color) {
          Vec3 c(row[ir], row[ig], row[ib]);
          if (is_integer(e.properties[ir].type)) c /= 255.0;
          data.colors.push_back(c);
        }
        if (has_pixels) data.pixels.push_back({static_cast<int>(row[iu]), static_cast<int>(row[iv])});
      }
    } else if (e.name == "face") {
      int index_prop = -1;
      for (std::size_t k = 0; k < e.properties.size(); ++k)
        if (e.properties[k].is_list &&
            (e.properties[k].name == "vertex_indices" || e.properties[k].name == "vertex_index"))
          index_prop = static_cast<int>(k);
      if (index_prop < 0)
        throw ParseError(ParseError::Kind::kMalformedHeader, p + ": face element lacks vertex_indices");
      std::vector<std::uint32_t> poly;
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const Property& prop = e.properties[k];
          if (!prop.is_list) {
            reader.read(prop.type);
            continue;
          }
          const auto n = static_cast<std::size_t>(reader.read(prop.count_type));
          poly.clear();
          for (std::size_t m = 0; m < n; ++m) poly.push_back(static_cast<std::uint32_t>(reader.read(prop.type)));
          if (static_cast<int>(k) != index_prop) continue;
          for (std::size_t m = 1; m + 1 < poly.size(); ++m) data.triangles.push_back({poly[0], poly[m], poly[m + 1]});
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i)
        for (const Property& prop : e.properties) {
          if (prop.is_list) {
            const auto n = static_cast<std::size_t>(reader.read(prop.count_type));
            for (std::size_t m = 0; m < n; ++m) reader.read(prop.type);
          } else {
            reader.read(prop.type);
          }
        }
    }
  }
  return data;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace ply_detail

/// Reads a BOP-style model. Vertices without colour get a neutral grey (0.5).
inline TexturedMesh read_ply_model(const std::filesystem::path& path) {
  ply_detail::VertexData data = ply_detail::read_ply(path);
  TexturedMesh mesh;
  mesh.vertices = std::move(data.positions);
  mesh.triangles = std::move(data.triangles);
  mesh.colors = data.colors.empty() ? std::vector<Vec3>(mesh.vertices.size(), Vec3::Constant(0.5)) : std::move(data.colors);
  for (const auto& t : mesh.triangles)
    for (std::uint32_t v : t)
      if (v >= mesh.vertices.size())
        throw ParseError(ParseError::Kind::kInvalidValue, path.string() + ": face index out of range");
  if (mesh.triangles.empty()) throw ParseError(ParseError::Kind::kMissing, path.string() + ": mesh has no faces");
  return mesh;
}

/// Reads vertices only (clouds written by write_ply_cloud or any vertex-only PLY).
inline PlyCloud read_ply_cloud(const std::filesystem::path& path) {
  ply_detail::VertexData data = ply_detail::read_ply(path);
  PlyCloud out;
  out.cloud.positions = std::move(data.positions);
  out.cloud.colors = std::move(data.colors);
  out.pixels = std::move(data.pixels);
  return out;
}

/// Writes a mesh with float positions and uchar colours.
inline void write_ply_model(const std::filesystem::path& path, const TexturedMesh& mesh, bool binary = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write PLY file " + path.string());
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "element face " << mesh.triangles.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  auto byte = [](double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    const Vec3 c = i < mesh.colors.size() ? mesh.colors[i] : Vec3::Constant(0.5);
    if (binary) {
      for (int k = 0; k < 3; ++k) ply_detail::put(out, static_cast<float>(v(k)));
      for (int k = 0; k < 3; ++k) ply_detail::put(out, byte(c(k)));
    } else {
      out.precision(9);
      out << static_cast<float>(v.x()) << ' ' << static_cast<float>(v.y()) << ' ' << static_cast<float>(v.z()) << ' '
          << int{byte(c.x())} << ' ' << int{byte(c.y())} << ' ' << int{byte(c.z())} << '\n';
    }
  }
  for (const auto& t : mesh.triangles) {
    if (binary) {
      ply_detail::put(out, std::uint8_t{3});
      for (std::uint32_t v : t) ply_detail::put(out, static_cast<std::int32_t>(v));
    } else {
      out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
  }
  if (!out) throw DataError("failed writing PLY file " + path.string());
}

/// Binary cloud with double positions/colours, so a write/read cycle is lossless.
inline void write_ply_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                            const std::vector<std::array<int, 2>>* pixels = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write PLY file " + path.string());
  const bool with_pixels = pixels != nullptr && pixels->size() == cloud.size();
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_colors()) out << "property double red\nproperty double green\nproperty double blue\n";
  if (with_pixels) out << "property int u\nproperty int v\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) ply_detail::put(out, cloud.positions[i](k));
    if (cloud.has_colors())
      for (int k = 0; k < 3; ++k) ply_detail::put(out, cloud.colors[i](k));
    if (with_pixels) {
      ply_detail::put(out, static_cast<std::int32_t>((*pixels)[i][0]));
      ply_detail::put(out, static_cast<std::int32_t>((*pixels)[i][1]));
    }
  }
  if (!out) throw DataError("failed writing PLY file " + path.string());
}

}  // namespace posefeat
