#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spc/error.hpp"
#include "spc/pointset.hpp"

namespace spc {

namespace {

  enum class ScalarType
  {
    kInt8,
    kUint8,
    kInt16,
    kUint16,
    kInt32,
    kUint32,
    kFloat32,
    kFloat64,
  };

  std::optional<ScalarType>
  parse_type(const std::string& s)
  {
    if (s == "char" || s == "int8")
      return ScalarType::kInt8;
    if (s == "uchar" || s == "uint8")
      return ScalarType::kUint8;
    if (s == "short" || s == "int16")
      return ScalarType::kInt16;
    if (s == "ushort" || s == "uint16")
      return ScalarType::kUint16;
    if (s == "int" || s == "int32")
      return ScalarType::kInt32;
    if (s == "uint" || s == "uint32")
      return ScalarType::kUint32;
    if (s == "float" || s == "float32")
      return ScalarType::kFloat32;
    if (s == "double" || s == "float64")
      return ScalarType::kFloat64;
    return std::nullopt;
  }

  size_t
  type_size(ScalarType t)
  {
    switch (t) {
    case ScalarType::kInt8:
    case ScalarType::kUint8: return 1;
    case ScalarType::kInt16:
    case ScalarType::kUint16: return 2;
    case ScalarType::kInt32:
    case ScalarType::kUint32:
    case ScalarType::kFloat32: return 4;
    case ScalarType::kFloat64: return 8;
    }
    return 0;
  }

  bool
  is_integral(ScalarType t)
  {
    return t != ScalarType::kFloat32 && t != ScalarType::kFloat64;
  }

  template<typename T>
  T
  load_le(const unsigned char* p)
  {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      auto* b = reinterpret_cast<unsigned char*>(&v);
      std::reverse(b, b + sizeof(T));
    }
    return v;
  }

  double
  decode_scalar(ScalarType t, const unsigned char* p)
  {
    switch (t) {
    case ScalarType::kInt8: return load_le<int8_t>(p);
    case ScalarType::kUint8: return load_le<uint8_t>(p);
    case ScalarType::kInt16: return load_le<int16_t>(p);
    case ScalarType::kUint16: return load_le<uint16_t>(p);
    case ScalarType::kInt32: return load_le<int32_t>(p);
    case ScalarType::kUint32: return load_le<uint32_t>(p);
    case ScalarType::kFloat32: return load_le<float>(p);
    case ScalarType::kFloat64: return load_le<double>(p);
    }
    return 0;
  }

  template<typename T>
  void
  store_le(std::string& out, T v)
  {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1)
      std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
  }

  struct Property {
    std::string name;
    ScalarType type;
    bool is_list = false;
    ScalarType count_type = ScalarType::kUint8;
  };

  struct Element {
    std::string name;
    size_t count = 0;
    std::vector<Property> props;
  };

  struct Header {
    bool binary = false;
    std::vector<Element> elements;
    int lines = 0;
  };

  [[noreturn]] void
  header_error(const std::string& msg, int line)
  {
    throw Error(
      Errc::kParseError, "PLY header line " + std::to_string(line) + ": " + msg,
      line);
  }

  Header
  parse_header(std::istream& in)
  {
    Header h;
    std::string line;
    int n = 0;
    bool saw_format = false;
    while (std::getline(in, line)) {
      ++n;
      if (!line.empty() && line.back() == '\r')
        line.pop_back();
      std::istringstream ss(line);
      std::string kw;
      ss >> kw;
      if (n == 1) {
        if (kw != "ply")
          header_error("missing 'ply' magic", n);
        continue;
      }
      if (kw.empty() || kw == "comment" || kw == "obj_info")
        continue;
      if (kw == "format") {
        std::string fmt, ver;
        ss >> fmt >> ver;
        if (fmt == "ascii")
          h.binary = false;
        else if (fmt == "binary_little_endian")
          h.binary = true;
        else
          header_error("unsupported format '" + fmt + "'", n);
        if (ver != "1.0")
          header_error("unsupported version '" + ver + "'", n);
        saw_format = true;
      } else if (kw == "element") {
        Element e;
        long long count = -1;
        ss >> e.name >> count;
        if (e.name.empty() || count < 0 || ss.fail())
          header_error("malformed element declaration", n);
        e.count = size_t(count);
        h.elements.push_back(std::move(e));
      } else if (kw == "property") {
        if (h.elements.empty())
          header_error("property before any element", n);
        std::string type;
        ss >> type;
        Property p;
        if (type == "list") {
          std::string ct, it;
          ss >> ct >> it >> p.name;
          auto c = parse_type(ct);
          auto i = parse_type(it);
          if (!c || !i || !is_integral(*c) || p.name.empty())
            header_error("malformed list property", n);
          p.is_list = true;
          p.count_type = *c;
          p.type = *i;
        } else {
          auto t = parse_type(type);
          ss >> p.name;
          if (!t || p.name.empty())
            header_error("malformed property '" + line + "'", n);
          p.type = *t;
        }
        h.elements.back().props.push_back(std::move(p));
      } else if (kw == "end_header") {
        if (!saw_format)
          header_error("missing format line", n);
        h.lines = n;
        return h;
      } else {
        header_error("unknown keyword '" + kw + "'", n);
      }
    }
    if (n == 0)
      header_error("empty file", 1);
    header_error("missing end_header", n + 1);
  }

  struct VertexLayout {
    int x = -1, y = -1, z = -1;
    int r = -1, g = -1, b = -1;
  };

  VertexLayout
  find_layout(const Element& v, int header_lines)
  {
    VertexLayout l;
    for (int i = 0; i < int(v.props.size()); ++i) {
      const auto& p = v.props[i];
      if (p.is_list)
        continue;
      if (p.name == "x") l.x = i;
      else if (p.name == "y") l.y = i;
      else if (p.name == "z") l.z = i;
      else if (p.name == "red" || p.name == "r") l.r = i;
      else if (p.name == "green" || p.name == "g") l.g = i;
      else if (p.name == "blue" || p.name == "b") l.b = i;
    }
    if (l.x < 0 || l.y < 0 || l.z < 0)
      header_error("vertex element lacks x, y, z", header_lines);
    return l;
  }

  double
  color_value(ScalarType t, double raw)
  {
    if (t == ScalarType::kUint8 || t == ScalarType::kInt8)
      return std::clamp(raw / 255.0, 0.0, 1.0);
    if (t == ScalarType::kUint16 || t == ScalarType::kInt16)
      return std::clamp(raw / 65535.0, 0.0, 1.0);
    return std::clamp(raw, 0.0, 1.0);
  }

  [[noreturn]] void
  body_error(const std::string& msg, int line = -1)
  {
    throw Error(Errc::kParseError, "PLY body: " + msg, line);
  }

}  // namespace

PlyReadResult
read_ply(std::istream& in)
{
  Header h = parse_header(in);

  int vertex_el = -1;
  for (int i = 0; i < int(h.elements.size()); ++i)
    if (h.elements[i].name == "vertex") {
      vertex_el = i;
      break;
    }
  if (vertex_el < 0)
    header_error("no vertex element", h.lines);

  const Element& ve = h.elements[vertex_el];
  VertexLayout lay = find_layout(ve, h.lines);
  bool has_color = lay.r >= 0 && lay.g >= 0 && lay.b >= 0;

  const size_t n = ve.count;
  Mat pos(n, 3), col(n, 3, 1.0);
  std::vector<double> vals(ve.props.size());

  auto store = [&](size_t i) {
    pos(i, 0) = vals[lay.x];
    pos(i, 1) = vals[lay.y];
    pos(i, 2) = vals[lay.z];
    if (has_color) {
      col(i, 0) = color_value(ve.props[lay.r].type, vals[lay.r]);
      col(i, 1) = color_value(ve.props[lay.g].type, vals[lay.g]);
      col(i, 2) = color_value(ve.props[lay.b].type, vals[lay.b]);
    }
  };

  if (!h.binary) {
    int line_no = h.lines;
    std::string line;
    auto next_line = [&]() -> bool {
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          return true;
      }
      return false;
    };
    for (int e = 0; e < vertex_el; ++e)
      for (size_t i = 0; i < h.elements[e].count; ++i)
        if (!next_line())
          body_error("unexpected end of file", line_no + 1);
    for (size_t i = 0; i < n; ++i) {
      if (!next_line())
        body_error(
          "expected " + std::to_string(n) + " vertices, found " +
            std::to_string(i),
          line_no + 1);
      std::istringstream ss(line);
      for (size_t p = 0; p < ve.props.size(); ++p) {
        if (ve.props[p].is_list) {
          size_t cnt = 0;
          ss >> cnt;
          double skip;
          for (size_t c = 0; c < cnt; ++c)
            ss >> skip;
          vals[p] = 0;
        } else {
          ss >> vals[p];
        }
        if (ss.fail())
          body_error("malformed vertex", line_no);
      }
      store(i);
    }
  } else {
    for (int e = 0; e < vertex_el; ++e) {
      for (const auto& p : h.elements[e].props)
        if (p.is_list)
          body_error("list properties before the vertex element are unsupported");
      size_t stride = 0;
      for (const auto& p : h.elements[e].props)
        stride += type_size(p.type);
      in.ignore(std::streamsize(stride * h.elements[e].count));
    }
    size_t stride = 0;
    bool has_list = false;
    for (const auto& p : ve.props) {
      stride += type_size(p.type);
      has_list |= p.is_list;
    }
    std::vector<unsigned char> buf(std::max<size_t>(stride, 8));
    for (size_t i = 0; i < n; ++i) {
      if (!has_list) {
        if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(stride)))
          body_error(
            "expected " + std::to_string(n) + " vertices, found " +
            std::to_string(i));
        size_t off = 0;
        for (size_t p = 0; p < ve.props.size(); ++p) {
          vals[p] = decode_scalar(ve.props[p].type, buf.data() + off);
          off += type_size(ve.props[p].type);
        }
      } else {
        for (size_t p = 0; p < ve.props.size(); ++p) {
          const auto& pr = ve.props[p];
          if (pr.is_list) {
            size_t cs = type_size(pr.count_type);
            if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(cs)))
              body_error("truncated vertex list");
            size_t cnt = size_t(decode_scalar(pr.count_type, buf.data()));
            in.ignore(std::streamsize(cnt * type_size(pr.type)));
            vals[p] = 0;
          } else {
            size_t ts = type_size(pr.type);
            if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(ts)))
              body_error(
                "expected " + std::to_string(n) + " vertices, found " +
                std::to_string(i));
            vals[p] = decode_scalar(pr.type, buf.data());
          }
        }
      }
      store(i);
    }
  }

  PlyReadResult res;
  res.cloud = PointCloud(std::move(pos), std::move(col));
  res.colors_missing = !has_color;
  return res;
}

PlyReadResult
load_ply(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(Errc::kIoError, "cannot open " + path.string());
  return read_ply(in);
}

void
write_ply(const PointCloud& cloud, std::ostream& out, PlyFormat format)
{
  const bool binary = format == PlyFormat::kBinaryLittleEndian;
  std::string s;
  s += "ply\n";
  s += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  s += "element vertex " + std::to_string(cloud.size()) + "\n";
  s += "property float x\nproperty float y\nproperty float z\n";
  s += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  s += "end_header\n";

  const Mat& p = cloud.positions();
  const Mat& c = cloud.colors();
  if (binary) {
    s.reserve(s.size() + cloud.size() * 15);
    for (size_t i = 0; i < cloud.size(); ++i) {
      for (int k = 0; k < 3; ++k)
        store_le<float>(s, float(p(i, k)));
      for (int k = 0; k < 3; ++k)
        s.push_back(char(to_u8(c(i, k))));
    }
    out.write(s.data(), std::streamsize(s.size()));
  } else {
    out << s;
    out << std::setprecision(9);
    for (size_t i = 0; i < cloud.size(); ++i) {
      out << float(p(i, 0)) << ' ' << float(p(i, 1)) << ' ' << float(p(i, 2));
      for (int k = 0; k < 3; ++k)
        out << ' ' << int(to_u8(c(i, k)));
      out << '\n';
    }
  }
}

void
save_ply(
  const PointCloud& cloud, const std::filesystem::path& path, PlyFormat format)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(Errc::kIoError, "cannot write " + path.string());
  write_ply(cloud, out, format);
  if (!out)
    throw Error(Errc::kIoError, "write failed for " + path.string());
}

}  // namespace spc
