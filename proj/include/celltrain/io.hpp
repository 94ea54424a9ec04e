#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "celltrain/dataset.hpp"
#include "celltrain/errors.hpp"
#include "celltrain/footprint.hpp"
#include "celltrain/geometry.hpp"
#include "celltrain/net.hpp"
#include "celltrain/partition.hpp"
#include "celltrain/reach.hpp"

namespace celltrain {

using json = nlohmann::json;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

inline json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path, std::string("invalid JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Workspace file: {"outer": [[x,y],...] CCW, "holes": [...], "robot": [...]}

namespace detail_io {

inline Polygon parse_ring(const json& arr, const std::string& where) {
  if (!arr.is_array())
    throw ValidationError(where, "expected an array of [x, y] pairs");
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& p = arr[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() ||
        !p[1].is_number())
      throw ValidationError(where + "[" + std::to_string(i) + "]",
                            "expected a numeric [x, y] pair");
    pts.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return Polygon(std::move(pts));
}

inline json ring_to_json(const Polygon& poly) {
  json arr = json::array();
  for (std::size_t i = 0; i < poly.size(); ++i)
    arr.push_back({poly[i].x, poly[i].y});
  return arr;
}

}  // namespace detail_io

struct WorkspaceFile {
  Workspace workspace;
  RobotBody robot;
};

inline WorkspaceFile load_workspace_file(const std::string& path) {
  json j = parse_json_file(path);
  if (!j.contains("outer"))
    throw ValidationError(path + ": outer", "missing field");
  if (!j.contains("robot"))
    throw ValidationError(path + ": robot", "missing field");
  Polygon outer = detail_io::parse_ring(j["outer"], "outer");
  std::vector<Polygon> holes;
  if (j.contains("holes")) {
    if (!j["holes"].is_array())
      throw ValidationError("holes", "expected an array of rings");
    for (std::size_t k = 0; k < j["holes"].size(); ++k)
      holes.push_back(detail_io::parse_ring(j["holes"][k],
                                            "holes[" + std::to_string(k) + "]"));
  }
  WorkspaceFile out{Workspace(std::move(outer), std::move(holes)),
                    RobotBody(detail_io::parse_ring(j["robot"], "robot"))};
  return out;
}

inline void save_workspace_file(const std::string& path, const Workspace& ws,
                                const RobotBody& robot) {
  json j;
  j["outer"] = detail_io::ring_to_json(ws.outer());
  j["holes"] = json::array();
  for (const auto& h : ws.holes())
    j["holes"].push_back(detail_io::ring_to_json(h));
  j["robot"] = detail_io::ring_to_json(robot.footprint());
  write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Model file: arch, per-layer row-major weights, bias, activation, seed, meta.

inline void save_model(const std::string& path, const Mlp& net,
                       std::uint64_t seed = 0, const json& meta = json::object()) {
  json j;
  j["arch"] = net.arch();
  j["layers"] = json::array();
  for (const auto& l : net.layers()) {
    json lj;
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.W.size()));
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) w.push_back(l.W(r, c));
    lj["weights"] = w;
    lj["bias"] = std::vector<double>(l.b.data(), l.b.data() + l.b.size());
    lj["activation"] = l.act == Activation::kTanh ? "tanh" : "identity";
    j["layers"].push_back(std::move(lj));
  }
  j["seed"] = seed;
  j["meta"] = meta;
  write_text_file(path, j.dump(2) + "\n");
}

inline Mlp load_model(const std::string& path) {
  json j = parse_json_file(path);
  if (!j.contains("arch") || !j.contains("layers"))
    throw ValidationError(path, "model needs arch and layers");
  std::vector<int> arch = j["arch"].get<std::vector<int>>();
  if (arch.size() < 2) throw ValidationError("arch", "needs >= 2 sizes");
  std::vector<Layer> layers;
  const json& ls = j["layers"];
  if (ls.size() + 1 != arch.size())
    throw ValidationError("layers", "layer count does not match arch");
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const std::string where = "layers[" + std::to_string(i) + "]";
    Layer l;
    int rows = arch[i + 1], cols = arch[i];
    auto w = ls[i].at("weights").get<std::vector<double>>();
    auto b = ls[i].at("bias").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(rows * cols))
      throw ValidationError(where + ".weights", "size mismatch with arch");
    if (b.size() != static_cast<std::size_t>(rows))
      throw ValidationError(where + ".bias", "size mismatch with arch");
    l.W.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        l.W(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    l.b = Eigen::Map<Eigen::VectorXd>(b.data(), rows);
    std::string act = ls[i].at("activation").get<std::string>();
    if (act == "tanh")
      l.act = Activation::kTanh;
    else if (act == "identity")
      l.act = Activation::kIdentity;
    else
      throw ValidationError(where + ".activation", "unknown activation " + act);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

// ---------------------------------------------------------------------------
// Partition file.

inline void save_partition(const std::string& path, const PartitionTree& tree) {
  json j;
  j["eps"] = {tree.eps().x, tree.eps().y, tree.eps().theta};
  json qlo = json::array(), qhi = json::array();
  for (std::size_t i = 0; i < tree.q().dim(); ++i) {
    qlo.push_back(tree.q()[i].lo);
    qhi.push_back(tree.q()[i].hi);
  }
  j["Q"] = {{"lo", qlo}, {"hi", qhi}};
  j["cells"] = json::array();
  for (const Cell& c : tree.cells()) {
    json cj;
    cj["id"] = c.id;
    json lo = {c.box.cfg.x.lo, c.box.cfg.y.lo, c.box.cfg.theta.lo};
    json hi = {c.box.cfg.x.hi, c.box.cfg.y.hi, c.box.cfg.theta.hi};
    for (std::size_t i = 0; i < c.box.misc.dim(); ++i) {
      lo.push_back(c.box.misc[i].lo);
      hi.push_back(c.box.misc[i].hi);
    }
    cj["box"] = {{"lo", lo}, {"hi", hi}};
    cj["label"] = c.label == CellLabel::kSafe ? "safe" : "mixed";
    cj["parent"] = c.parent >= 0 ? json(c.parent) : json(nullptr);
    cj["sibling"] = c.sibling >= 0 ? json(c.sibling) : json(nullptr);
    cj["children"] = (c.child0 >= 0 && c.child1 >= 0)
                         ? json::array({c.child0, c.child1})
                         : json(nullptr);
    cj["leaf"] = c.leaf;
    j["cells"].push_back(std::move(cj));
  }
  write_text_file(path, j.dump() + "\n");
}

inline PartitionTree load_partition(const std::string& path) {
  json j = parse_json_file(path);
  auto eps = j.at("eps").get<std::vector<double>>();
  if (eps.size() != 3) throw ValidationError("eps", "expected 3 thresholds");
  auto qlo = j.at("Q").at("lo").get<std::vector<double>>();
  auto qhi = j.at("Q").at("hi").get<std::vector<double>>();
  PartitionTree tree({eps[0], eps[1], eps[2]}, Box(qlo, qhi));
  const json& cells = j.at("cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const json& cj = cells[i];
    if (cj.at("id").get<std::size_t>() != i)
      throw ValidationError("cells[" + std::to_string(i) + "].id",
                            "ids must be dense and ordered");
    auto lo = cj.at("box").at("lo").get<std::vector<double>>();
    auto hi = cj.at("box").at("hi").get<std::vector<double>>();
    if (lo.size() < 3 || lo.size() != hi.size())
      throw ValidationError("cells[" + std::to_string(i) + "].box",
                            "needs >= 3 matching dims");
    StateBox box;
    box.cfg = {{lo[0], hi[0]}, {lo[1], hi[1]}, {lo[2], hi[2]}};
    box.misc = Box(std::vector<double>(lo.begin() + 3, lo.end()),
                   std::vector<double>(hi.begin() + 3, hi.end()));
    std::string label = cj.at("label").get<std::string>();
    std::uint32_t id = tree.add_cell(
        box, label == "safe" ? CellLabel::kSafe : CellLabel::kMixed, -1);
    Cell& c = tree.cell(id);
    c.parent = cj.at("parent").is_null() ? -1 : cj.at("parent").get<std::int32_t>();
    c.sibling =
        cj.at("sibling").is_null() ? -1 : cj.at("sibling").get<std::int32_t>();
    if (!cj.at("children").is_null()) {
      c.child0 = cj.at("children")[0].get<std::int32_t>();
      c.child1 = cj.at("children")[1].get<std::int32_t>();
    }
    c.leaf = cj.at("leaf").get<bool>();
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Dataset: CSV of samples plus a JSON sidecar with the generation metadata.

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void save_dataset(const std::string& path, const Dataset& d) {
  std::ostringstream csv;
  csv << "x,y,theta,ux,uy,utheta\n";
  for (Eigen::Index i = 0; i < d.states.cols(); ++i) {
    csv << format_double(d.states(0, i)) << ',' << format_double(d.states(1, i))
        << ',' << format_double(d.states(2, i)) << ','
        << format_double(d.controls(0, i)) << ','
        << format_double(d.controls(1, i)) << ','
        << format_double(d.controls(2, i)) << '\n';
  }
  write_text_file(path, csv.str());

  json side;
  side["goal"] = {d.goal[0], d.goal[1], d.goal[2]};
  side["K"] = d.gain;
  side["u_max"] = d.u_max;
  side["count"] = d.size();
  side["seed"] = d.seed;
  side["mode"] = d.mode;
  side["trajectories_requested"] = d.trajectories_requested;
  side["trajectories_completed"] = d.trajectories_completed;
  write_text_file(path + ".meta.json", side.dump(2) + "\n");
}

inline Dataset load_dataset(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,y,theta", 0) != 0)
    throw ValidationError(path, "expected CSV header x,y,theta,ux,uy,utheta");
  std::vector<std::array<double, 6>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 6> row{};
    std::stringstream ss(line);
    std::string field;
    for (int k = 0; k < 6; ++k) {
      if (!std::getline(ss, field, ','))
        throw ValidationError(path + ":" + std::to_string(lineno),
                              "expected 6 comma-separated values");
      try {
        row[static_cast<std::size_t>(k)] = std::stod(field);
      } catch (...) {
        throw ValidationError(path + ":" + std::to_string(lineno),
                              "not a number: " + field);
      }
    }
    rows.push_back(row);
  }
  Dataset d;
  d.states.resize(3, static_cast<Eigen::Index>(rows.size()));
  d.controls.resize(3, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      d.states(k, static_cast<Eigen::Index>(i)) = rows[i][static_cast<std::size_t>(k)];
      d.controls(k, static_cast<Eigen::Index>(i)) =
          rows[i][static_cast<std::size_t>(k + 3)];
    }
  }
  std::string meta_path = path + ".meta.json";
  if (std::filesystem::exists(meta_path)) {
    json side = parse_json_file(meta_path);
    auto g = side.at("goal").get<std::vector<double>>();
    d.goal = {g.at(0), g.at(1), g.at(2)};
    d.gain = side.at("K").get<double>();
    d.u_max = side.value("u_max", 50.0);
    d.seed = side.value("seed", 0ULL);
    d.mode = side.value("mode", "saturating");
    d.trajectories_requested = side.value("trajectories_requested", 0ULL);
    d.trajectories_completed = side.value("trajectories_completed", 0ULL);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Per-epoch report lines (JSON lines, one per epoch).

inline json report_to_json(const ViolationReport& r) {
  return json{{"epoch", r.epoch},
              {"J", r.J},
              {"J_S", r.J_S},
              {"lambda_S", r.lambda_S},
              {"violation_volume", r.total_outside_volume},
              {"active_cells", r.active_cell_count},
              {"residual_unsafe_volume", r.residual_unsafe_volume},
              {"leaf_count", r.leaf_count},
              {"wall_time_s", r.wall_time_s}};
}

inline void save_reports(const std::string& path,
                         const std::vector<ViolationReport>& history) {
  std::ostringstream out;
  for (const auto& r : history) out << report_to_json(r).dump() << '\n';
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// SHA-256 (for the reproducibility manifest).

class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    h_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
          0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    len_ = 0;
    buf_.clear();
  }

  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + n);
    len_ += n;
    while (buf_.size() >= 64) {
      block(buf_.data());
      buf_.erase(buf_.begin(), buf_.begin() + 64);
    }
  }

  std::string hex_digest() {
    std::vector<unsigned char> pad = buf_;
    std::uint64_t bits = len_ * 8;
    pad.push_back(0x80);
    while (pad.size() % 64 != 56) pad.push_back(0);
    for (int i = 7; i >= 0; --i)
      pad.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
    for (std::size_t off = 0; off < pad.size(); off += 64) block(&pad[off]);

    static const char* kHex = "0123456789abcdef";
    std::string out;
    for (std::uint32_t v : h_) {
      for (int i = 3; i >= 0; --i) {
        unsigned char byte = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        out.push_back(kHex[byte >> 4]);
        out.push_back(kHex[byte & 0xf]);
      }
    }
    return out;
  }

 private:
  static std::uint32_t rotr(std::uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
  }

  void block(const unsigned char* p) {
    static const std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b,
        0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01,
        0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7,
        0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc,
        0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152,
        0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
        0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
        0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08,
        0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f,
        0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
        0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto a = h_[0], b = h_[1], c = h_[2], d = h_[3];
    auto e = h_[4], f = h_[5], g = h_[6], h = h_[7];
    for (int i = 0; i < 64; ++i) {
      std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      std::uint32_t ch = (e & f) ^ (~e & g);
      std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
      std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      std::uint32_t mj = (a & b) ^ (a & c) ^ (b & c);
      std::uint32_t t2 = s0 + mj;
      h = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    h_[0] += a; h_[1] += b; h_[2] += c; h_[3] += d;
    h_[4] += e; h_[5] += f; h_[6] += g; h_[7] += h;
  }

  std::array<std::uint32_t, 8> h_;
  std::uint64_t len_ = 0;
  std::vector<unsigned char> buf_;
};

inline std::string sha256_hex(const std::string& text) {
  Sha256 s;
  s.update(text.data(), text.size());
  return s.hex_digest();
}

inline std::string sha256_file(const std::string& path) {
  return sha256_hex(read_text_file(path));
}

}  // namespace celltrain
