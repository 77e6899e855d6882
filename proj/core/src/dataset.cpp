#include "ddmc/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "ddmc/config.hpp"
#include "ddmc/errors.hpp"
#include "ddmc/rng.hpp"

namespace ddmc {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void check_spec(const GeneratorSpec& spec, int max_t, const char* who) {
  if (spec.t1 < 2 || spec.t1 > max_t || spec.t2 < 2 || spec.t2 > max_t)
    throw ConfigError(std::string(who) + ": factor counts (" +
                      std::to_string(spec.t1) + "," + std::to_string(spec.t2) +
                      ") outside [2," + std::to_string(max_t) + "]");
  if (spec.per_combo < 1)
    throw ConfigError(std::string(who) + ": samples per combination must be >= 1");
  if (spec.noise < 0.0 || spec.noise > 0.2)
    throw ConfigError(std::string(who) + ": noise level " +
                      std::to_string(spec.noise) + " outside [0, 0.2]");
}

// Stamp a 1px line onto a grayscale canvas, inclusive endpoints.
void draw_line(std::vector<double>& img, int w, int y0, int x0, int y1, int x1) {
  int steps = std::max(std::abs(y1 - y0), std::abs(x1 - x0)) + 1;
  for (int s = 0; s < steps; ++s) {
    double t = steps == 1 ? 0.0 : double(s) / double(steps - 1);
    int y = int(std::lround(y0 + t * (y1 - y0)));
    int x = int(std::lround(x0 + t * (x1 - x0)));
    img[std::size_t(y * w + x)] = 1.0;
  }
}

// 20x20 pose templates. Shared head and torso; arms attach at (5,10), legs
// at (11,10).
std::vector<double> stickfig_template(int upper, int lower) {
  const int H = 20, W = 20;
  std::vector<double> img(std::size_t(H * W), 0.0);
  for (int y = 1; y <= 3; ++y)
    for (int x = 9; x <= 11; ++x) img[std::size_t(y * W + x)] = 1.0;
  draw_line(img, W, 4, 10, 11, 10);

  switch (upper) {
    case 0:  // arms up
      draw_line(img, W, 5, 10, 1, 6);
      draw_line(img, W, 5, 10, 1, 14);
      break;
    case 1:  // arms level
      draw_line(img, W, 5, 4, 5, 16);
      break;
    default:  // arms down
      draw_line(img, W, 5, 10, 10, 5);
      draw_line(img, W, 5, 10, 10, 15);
      break;
  }

  switch (lower) {
    case 0:  // legs together
      draw_line(img, W, 11, 9, 18, 9);
      draw_line(img, W, 11, 11, 18, 11);
      break;
    case 1:  // legs apart
      draw_line(img, W, 11, 10, 18, 4);
      draw_line(img, W, 11, 10, 18, 16);
      break;
    default:  // legs bent at the knee
      draw_line(img, W, 11, 10, 14, 6);
      draw_line(img, W, 14, 6, 18, 8);
      draw_line(img, W, 11, 10, 14, 14);
      draw_line(img, W, 14, 14, 18, 12);
      break;
  }
  return img;
}

// 16x16 boolean masks.
std::vector<bool> shape_mask(int shape) {
  const int H = 16, W = 16;
  std::vector<bool> m(std::size_t(H * W), false);
  const double cy = 7.5, cx = 7.5;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      bool in = false;
      switch (shape) {
        case 0: {  // circle
          double dy = y - cy, dx = x - cx;
          in = dy * dy + dx * dx <= 6.0 * 6.0;
          break;
        }
        case 1:  // square
          in = y >= 4 && y <= 11 && x >= 4 && x <= 11;
          break;
        case 2: {  // triangle, apex on top
          if (y >= 2 && y <= 13) {
            double half = (y - 2) / 11.0 * 6.0;
            in = std::fabs(x - cx) <= half;
          }
          break;
        }
        default:  // cross
          in = (x >= 6 && x <= 9 && y >= 2 && y <= 13) ||
               (y >= 6 && y <= 9 && x >= 2 && x <= 13);
          break;
      }
      m[std::size_t(y * W + x)] = in;
    }
  }
  return m;
}

constexpr double kColors[4][3] = {
    {1.0, 1.0, 0.0},  // yellow
    {1.0, 0.0, 0.0},  // red
    {0.0, 1.0, 0.0},  // green
    {0.0, 0.0, 1.0},  // blue
};

// Noise is applied per pixel and the result is quantized to float so the
// on-disk container reproduces values exactly.
void add_noise_and_quantize(std::vector<double>& pixels, double level, Rng& rng) {
  for (auto& v : pixels) {
    if (level > 0.0) v += rng.uniform(-level, level);
    v = std::min(1.0, std::max(0.0, v));
    v = double(float(v));
  }
}

MultiClusteringDataset assemble(const GeneratorSpec& spec, std::int64_t h,
                                std::int64_t w, std::int64_t c,
                                const char* name1, const char* name2,
                                const std::vector<std::vector<double>>& cells) {
  MultiClusteringDataset ds;
  ds.h = h;
  ds.w = w;
  ds.c = c;
  ds.n = std::int64_t(spec.t1) * spec.t2 * spec.per_combo;
  ds.images.reserve(std::size_t(ds.n * ds.dim()));
  ds.clustering_names = {name1, name2};
  ds.cluster_counts = {spec.t1, spec.t2};
  ds.labelings.assign(2, {});

  Rng rng(spec.seed);
  for (int f1 = 0; f1 < spec.t1; ++f1) {
    for (int f2 = 0; f2 < spec.t2; ++f2) {
      const auto& base = cells[std::size_t(f1 * spec.t2 + f2)];
      for (int s = 0; s < spec.per_combo; ++s) {
        std::vector<double> img = base;
        add_noise_and_quantize(img, spec.noise, rng);
        ds.images.insert(ds.images.end(), img.begin(), img.end());
        ds.labelings[0].push_back(f1);
        ds.labelings[1].push_back(f2);
      }
    }
  }
  return ds;
}

}  // namespace

MultiClusteringDataset generate_stickfig(const GeneratorSpec& spec) {
  check_spec(spec, 3, "generate_stickfig");
  std::vector<std::vector<double>> cells;
  for (int f1 = 0; f1 < spec.t1; ++f1)
    for (int f2 = 0; f2 < spec.t2; ++f2)
      cells.push_back(stickfig_template(f1, f2));
  return assemble(spec, 20, 20, 1, "upper", "lower", cells);
}

MultiClusteringDataset generate_colored_shapes(const GeneratorSpec& spec) {
  check_spec(spec, 4, "generate_colored_shapes");
  const int H = 16, W = 16, C = 3;
  std::vector<std::vector<double>> cells;
  for (int f1 = 0; f1 < spec.t1; ++f1) {
    std::vector<bool> mask = shape_mask(f1);
    for (int f2 = 0; f2 < spec.t2; ++f2) {
      std::vector<double> img(std::size_t(H * W * C), 0.0);
      for (int p = 0; p < H * W; ++p) {
        if (!mask[std::size_t(p)]) continue;
        for (int ch = 0; ch < C; ++ch)
          img[std::size_t(p * C + ch)] = kColors[f2][ch];
      }
      cells.push_back(std::move(img));
    }
  }
  return assemble(spec, H, W, C, "shape", "color", cells);
}

// ---- container ------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Cursor {
  const unsigned char* p;
  std::size_t size;
  std::size_t off = 0;

  void need(std::size_t n, const char* what) const {
    if (off + n > size)
      throw ParseError(std::string("dataset: truncated while reading ") + what +
                       " at byte offset " + std::to_string(off));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = std::uint32_t(p[off]) | (std::uint32_t(p[off + 1]) << 8) |
                      (std::uint32_t(p[off + 2]) << 16) |
                      (std::uint32_t(p[off + 3]) << 24);
    off += 4;
    return v;
  }
  float f32(const char* what) {
    std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace

void save_dataset(const MultiClusteringDataset& ds, const std::string& path) {
  const std::size_t m = ds.clustering_names.size();
  if (m == 0 || ds.cluster_counts.size() != m || ds.labelings.size() != m)
    throw ConfigError("save_dataset: inconsistent labeling metadata");

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, std::uint32_t(ds.n));
  put_u32(out, std::uint32_t(ds.h));
  put_u32(out, std::uint32_t(ds.w));
  put_u32(out, std::uint32_t(ds.c));
  put_u32(out, std::uint32_t(m));
  for (std::size_t i = 0; i < m; ++i) {
    put_u32(out, std::uint32_t(ds.clustering_names[i].size()));
    out += ds.clustering_names[i];
    put_u32(out, std::uint32_t(ds.cluster_counts[i]));
  }
  for (double v : ds.images) put_f32(out, float(v));
  for (std::size_t i = 0; i < m; ++i) {
    if (std::int64_t(ds.labelings[i].size()) != ds.n)
      throw ConfigError("save_dataset: labeling " + std::to_string(i) +
                        " has wrong length");
    for (int v : ds.labelings[i]) put_u32(out, std::uint32_t(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_dataset: cannot open " + path + " for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("save_dataset: write failed for " + path);
}

MultiClusteringDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_dataset: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());

  Cursor cur{reinterpret_cast<const unsigned char*>(bytes.data()),
             bytes.size()};
  cur.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError("dataset: magic mismatch at byte offset 0 (expected MCDS)");
  cur.off = 4;

  std::uint32_t version = cur.u32("version");
  if (version != kVersion)
    throw ParseError("dataset: unsupported version " + std::to_string(version) +
                     " at byte offset 4");

  MultiClusteringDataset ds;
  ds.n = cur.u32("sample count");
  ds.h = cur.u32("height");
  ds.w = cur.u32("width");
  ds.c = cur.u32("channel count");
  std::uint32_t m = cur.u32("labeling count");
  if (ds.n == 0 || ds.h == 0 || ds.w == 0 || ds.c == 0)
    throw ParseError("dataset: zero dimension in header at byte offset 8");
  if (m == 0)
    throw ParseError("dataset: labeling count M is 0 at byte offset 24");

  for (std::uint32_t i = 0; i < m; ++i) {
    std::uint32_t name_len = cur.u32("labeling name length");
    if (name_len > 4096)
      throw ParseError("dataset: implausible name length " +
                       std::to_string(name_len) + " at byte offset " +
                       std::to_string(cur.off - 4));
    cur.need(name_len, "labeling name");
    ds.clustering_names.emplace_back(bytes.data() + cur.off, name_len);
    cur.off += name_len;
    std::uint32_t tm = cur.u32("cluster count");
    if (tm == 0)
      throw ParseError("dataset: labeling " + std::to_string(i) +
                       " has zero clusters at byte offset " +
                       std::to_string(cur.off - 4));
    ds.cluster_counts.push_back(int(tm));
  }

  const std::int64_t total = ds.n * ds.dim();
  ds.images.resize(std::size_t(total));
  for (std::int64_t i = 0; i < total; ++i)
    ds.images[std::size_t(i)] = double(cur.f32("pixel data"));

  ds.labelings.assign(m, {});
  for (std::uint32_t i = 0; i < m; ++i) {
    ds.labelings[i].reserve(std::size_t(ds.n));
    for (std::int64_t s = 0; s < ds.n; ++s) {
      std::uint32_t v = cur.u32("label");
      if (v >= std::uint32_t(ds.cluster_counts[i]))
        throw ParseError("dataset: label " + std::to_string(v) +
                         " outside [0," +
                         std::to_string(ds.cluster_counts[i]) +
                         ") at byte offset " + std::to_string(cur.off - 4));
      ds.labelings[i].push_back(int(v));
    }
  }

  if (cur.off != bytes.size())
    throw ParseError("dataset: " + std::to_string(bytes.size() - cur.off) +
                     " trailing bytes at byte offset " +
                     std::to_string(cur.off));
  return ds;
}

MultiClusteringDataset dataset_from_config(const RunConfig& cfg) {
  if (!cfg.data.empty()) return load_dataset(cfg.data);
  GeneratorSpec spec;
  spec.t1 = cfg.t1 > 0 ? cfg.t1 : cfg.t;
  spec.t2 = cfg.t2 > 0 ? cfg.t2 : cfg.t;
  spec.per_combo = int(cfg.per_combo);
  spec.noise = cfg.noise;
  spec.seed = cfg.seed;
  if (cfg.dataset == "stickfig") return generate_stickfig(spec);
  if (cfg.dataset == "colored_shapes") return generate_colored_shapes(spec);
  throw ConfigError("dataset: unknown generator '" + cfg.dataset + "'");
}

}  // namespace ddmc
