#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <atomic>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "arbor/io.hpp"

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace arbor::io {

namespace {

[[noreturn]] void io_fail(const fs::path& path, const std::string& what) {
  throw Error(Errc::Io, path.string() + ": " + what);
}

[[noreturn]] void parse_fail(const std::string& what) { throw Error(Errc::Parse, what); }

template <typename T>
void put(Bytes& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const Bytes& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) parse_fail("unexpected end of data");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

Bytes read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail(path, "cannot open");
  Bytes out((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail(path, "cannot open");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_atomic(const fs::path& path, std::string_view data) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) io_fail(tmp, std::strerror(errno));
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      ::close(fd);
      ::unlink(tmp.c_str());
      io_fail(tmp, why);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    ::unlink(tmp.c_str());
    io_fail(tmp, "cannot flush");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    ::unlink(tmp.c_str());
    io_fail(path, ec.message());
  }
}

void write_atomic(const fs::path& path, const Bytes& data) {
  write_atomic(path, std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::Io, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw Error(Errc::Parse, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_atomic(path, j.dump(2) + "\n"); }

namespace {

Image<std::uint8_t> from_mat(const cv::Mat& m, const std::string& what) {
  if (m.empty()) throw Error(Errc::Io, what + ": cannot decode image");
  if (m.depth() != CV_8U) throw Error(Errc::Io, what + ": only 8-bit images are supported");
  cv::Mat src;
  switch (m.channels()) {
    case 1: src = m; break;
    case 3: cv::cvtColor(m, src, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(m, src, cv::COLOR_BGRA2RGB); break;
    default: throw Error(Errc::Io, what + ": unsupported channel count");
  }
  Image<std::uint8_t> img(src.cols, src.rows, src.channels());
  for (int y = 0; y < src.rows; ++y)
    std::memcpy(&img.at(0, y), src.ptr(y), static_cast<std::size_t>(src.cols) * src.channels());
  return img;
}

}  // namespace

Image<std::uint8_t> read_image(const fs::path& path) {
  if (!fs::exists(path)) io_fail(path, "no such file");
  return from_mat(cv::imread(path.string(), cv::IMREAD_UNCHANGED), path.string());
}

Image<std::uint8_t> decode_image(const Bytes& data) {
  const cv::Mat buf(1, static_cast<int>(data.size()), CV_8U, const_cast<std::uint8_t*>(data.data()));
  return from_mat(cv::imdecode(buf, cv::IMREAD_UNCHANGED), "image data");
}

Bytes encode_png(const Image<std::uint8_t>& img) {
  if (img.channels != 1 && img.channels != 3) throw Error(Errc::InvalidParams, "PNG needs 1 or 3 channels");
  cv::Mat m(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3,
            const_cast<std::uint8_t*>(img.data.data()));
  cv::Mat bgr;
  if (img.channels == 3) cv::cvtColor(m, bgr, cv::COLOR_RGB2BGR);
  else bgr = m;
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", bgr, out)) throw Error(Errc::Io, "PNG encoding failed");
  return out;
}

void write_png(const fs::path& path, const Image<std::uint8_t>& img) { write_atomic(path, encode_png(img)); }

Bytes encode_flow(const flow::FlowField& f) {
  Bytes out;
  out.reserve(16 + f.count.size() * 9);
  for (char c : {'F', 'F', 'L', 'D'}) out.push_back(static_cast<std::uint8_t>(c));
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.height));
  for (std::size_t i = 0; i < f.count.size(); ++i) {
    out.push_back(f.count[i]);
    for (int k = 0; k < f.count[i]; ++k) {
      put<float>(out, f.dirs[i][k].x());
      put<float>(out, f.dirs[i][k].y());
    }
  }
  return out;
}

flow::FlowField decode_flow(const Bytes& data) {
  if (data.size() < 16 || std::memcmp(data.data(), "FFLD", 4) != 0) parse_fail("not a flow-field file");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(data, pos);
  if (version != 1) parse_fail("unsupported flow-field version " + std::to_string(version));
  const auto w = get<std::uint32_t>(data, pos), h = get<std::uint32_t>(data, pos);
  if (w > (1u << 16) || h > (1u << 16)) parse_fail("flow-field dimensions out of range");
  flow::FlowField f(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < f.count.size(); ++i) {
    const auto n = get<std::uint8_t>(data, pos);
    if (n > 2) parse_fail("pixel with more than two directions");
    f.count[i] = n;
    for (int k = 0; k < n; ++k) {
      const float dx = get<float>(data, pos), dy = get<float>(data, pos);
      f.dirs[i][k] = {dx, dy};
    }
  }
  if (pos != data.size()) parse_fail("trailing bytes after flow field");
  return f;
}

namespace {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

PlyType ply_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  parse_fail("unknown PLY type " + s);
}

double ply_read(const Bytes& in, std::size_t& pos, PlyType t) {
  switch (t) {
    case PlyType::I8: return get<std::int8_t>(in, pos);
    case PlyType::U8: return get<std::uint8_t>(in, pos);
    case PlyType::I16: return get<std::int16_t>(in, pos);
    case PlyType::U16: return get<std::uint16_t>(in, pos);
    case PlyType::I32: return get<std::int32_t>(in, pos);
    case PlyType::U32: return get<std::uint32_t>(in, pos);
    case PlyType::F32: return get<float>(in, pos);
    case PlyType::F64: return get<double>(in, pos);
  }
  return 0;
}

std::uint8_t color_channel(double v, PlyType t) {
  if (t == PlyType::F32 || t == PlyType::F64) v *= 255.0;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

tree::PointCloud read_ply(const fs::path& path) {
  const Bytes data = read_bytes(path);
  std::size_t pos = 0;
  const auto next_line = [&]() {
    std::string line;
    while (pos < data.size() && data[pos] != '\n') line += static_cast<char>(data[pos++]);
    if (pos >= data.size()) parse_fail(path.string() + ": truncated PLY header");
    ++pos;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next_line() != "ply") parse_fail(path.string() + ": not a PLY file");
  bool ascii = false, in_vertex = false, seen_vertex = false;
  std::size_t count = 0;
  struct Prop {
    std::string name;
    PlyType type;
  };
  std::vector<Prop> props;
  for (std::string line = next_line(); line != "end_header"; line = next_line()) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") ascii = true;
      else if (fmt != "binary_little_endian") parse_fail(path.string() + ": unsupported PLY format " + fmt);
    } else if (word == "element") {
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      if (name == "vertex") {
        in_vertex = seen_vertex = true;
        count = n;
      } else {
        if (!seen_vertex) parse_fail(path.string() + ": vertex element must come first");
        in_vertex = false;
      }
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") parse_fail(path.string() + ": list properties on vertices are not supported");
      ls >> name;
      props.push_back({name, ply_type(type)});
    }
  }
  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (int i = 0; i < static_cast<int>(props.size()); ++i) {
    const auto& n = props[i].name;
    if (n == "x") ix = i;
    else if (n == "y") iy = i;
    else if (n == "z") iz = i;
    else if (n == "red" || n == "r") ir = i;
    else if (n == "green" || n == "g") ig = i;
    else if (n == "blue" || n == "b") ib = i;
  }
  if (ix < 0 || iy < 0 || iz < 0) parse_fail(path.string() + ": PLY vertices need x, y, z");

  tree::PointCloud cloud;
  cloud.points.reserve(count);
  cloud.colors.reserve(count);
  std::vector<double> v(props.size());
  std::istringstream text;
  if (ascii) text.str(std::string(data.begin() + static_cast<long>(pos), data.end()));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < props.size(); ++k) {
      if (ascii) {
        if (!(text >> v[k])) parse_fail(path.string() + ": truncated PLY body");
      } else {
        v[k] = ply_read(data, pos, props[k].type);
      }
    }
    cloud.points.emplace_back(v[ix], v[iy], v[iz]);
    tree::Rgb c{0, 0, 0};
    if (ir >= 0) c[0] = color_channel(v[ir], props[ir].type);
    if (ig >= 0) c[1] = color_channel(v[ig], props[ig].type);
    if (ib >= 0) c[2] = color_channel(v[ib], props[ib].type);
    cloud.colors.push_back(c);
  }
  return cloud;
}

Bytes encode_ply(const tree::PointCloud& cloud) {
  if (cloud.colors.size() != cloud.points.size()) throw Error(Errc::DimensionMismatch, "cloud colors do not match points");
  const std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(cloud.size()) +
                             "\nproperty float x\nproperty float y\nproperty float z\n"
                             "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + cloud.size() * 15);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) put<float>(out, static_cast<float>(cloud.points[i][k]));
    for (int k = 0; k < 3; ++k) out.push_back(cloud.colors[i][k]);
  }
  return out;
}

void write_ply(const fs::path& path, const tree::PointCloud& cloud) { write_atomic(path, encode_ply(cloud)); }

std::string encode_obj(const tree::Mesh& mesh) {
  std::string out = "# arbor mesh: v x y z r g b (colors in [0, 1])\n";
  char buf[256];
  const bool colored = mesh.colors.size() == mesh.size();
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const Vec3& p = mesh.positions[i];
    if (colored) {
      const auto& c = mesh.colors[i];
      std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g %.6g %.6g %.6g\n", p.x(), p.y(), p.z(), c[0] / 255.0,
                    c[1] / 255.0, c[2] / 255.0);
    } else {
      std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    }
    out += buf;
  }
  const bool normals = mesh.normals.size() == mesh.size();
  if (normals) {
    for (const Vec3& n : mesh.normals) {
      std::snprintf(buf, sizeof buf, "vn %.9g %.9g %.9g\n", n.x(), n.y(), n.z());
      out += buf;
    }
  }
  for (const auto& t : mesh.triangles) {
    if (normals) std::snprintf(buf, sizeof buf, "f %d//%d %d//%d %d//%d\n", t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1, t[2] + 1, t[2] + 1);
    else std::snprintf(buf, sizeof buf, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += buf;
  }
  return out;
}

void write_obj(const fs::path& path, const tree::Mesh& mesh) { write_atomic(path, encode_obj(mesh)); }

tree::Mesh read_obj(const fs::path& path) {
  std::istringstream in(read_text(path));
  tree::Mesh m;
  std::vector<Vec3> vn;
  std::vector<int> normal_of;  // per vertex, index into vn or -1
  std::string line;
  int lineno = 0;
  const auto index = [&](long i, std::size_t n) {
    const long k = i < 0 ? static_cast<long>(n) + i : i - 1;
    if (k < 0 || k >= static_cast<long>(n)) parse_fail(path.string() + ":" + std::to_string(lineno) + ": index out of range");
    return static_cast<int>(k);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::vector<double> v;
      for (double x; ls >> x;) v.push_back(x);
      if (v.size() != 3 && v.size() != 6) parse_fail(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      m.positions.emplace_back(v[0], v[1], v[2]);
      tree::Rgb c{0, 0, 0};
      if (v.size() == 6)
        for (int k = 0; k < 3; ++k) c[k] = static_cast<std::uint8_t>(std::clamp(std::lround(v[3 + k] * 255), 0L, 255L));
      m.colors.push_back(c);
      normal_of.push_back(-1);
    } else if (tag == "vn") {
      Vec3 n;
      if (!(ls >> n.x() >> n.y() >> n.z())) parse_fail(path.string() + ":" + std::to_string(lineno) + ": bad normal");
      vn.push_back(n);
    } else if (tag == "f") {
      std::vector<int> face;
      for (std::string tok; ls >> tok;) {
        const auto s1 = tok.find('/');
        const int v = index(std::stol(tok.substr(0, s1)), m.positions.size());
        if (s1 != std::string::npos) {
          const auto s2 = tok.find('/', s1 + 1);
          if (s2 != std::string::npos && s2 + 1 < tok.size()) normal_of[v] = index(std::stol(tok.substr(s2 + 1)), vn.size());
        }
        face.push_back(v);
      }
      if (face.size() < 3) parse_fail(path.string() + ":" + std::to_string(lineno) + ": face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < face.size(); ++k) m.triangles.push_back({face[0], face[k], face[k + 1]});
    }
  }
  m.normals.assign(m.size(), Vec3::Zero());
  bool missing = false;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (normal_of[i] >= 0) m.normals[i] = vn[normal_of[i]];
    else missing = true;
  }
  if (missing) tree::recompute_normals(m);
  return m;
}

}  // namespace arbor::io
