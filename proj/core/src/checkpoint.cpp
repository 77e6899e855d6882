#include "ddmc/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "ddmc/errors.hpp"
#include "ddmc/hash.hpp"

namespace ddmc {
namespace {

constexpr char kMagic[4] = {'D', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_array(std::string& out, const std::string& name,
               const std::vector<std::int64_t>& dims,
               const std::vector<double>& data) {
  put_u32(out, std::uint32_t(name.size()));
  out += name;
  put_u32(out, std::uint32_t(dims.size()));
  std::size_t numel = 1;
  for (auto d : dims) {
    put_u32(out, std::uint32_t(d));
    numel *= std::size_t(d);
  }
  if (numel != data.size())
    throw DimensionError("checkpoint: array '" + name +
                         "' data does not match its dims");
  for (double v : data) put_f64(out, v);
}

class Reader {
 public:
  Reader(std::string bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size())
      throw ParseError(path_ + ": truncated " + what + " at byte " +
                       std::to_string(pos_));
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(std::uint8_t(bytes_[pos_ + std::size_t(i)])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= std::uint64_t(std::uint8_t(bytes_[pos_ + std::size_t(i)])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<double> data;
};

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const DdmcModel& model, const ClusterState& clusters) {
  const std::string text = serialize_config(cfg);

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, fnv1a64(text));
  put_u32(out, std::uint32_t(text.size()));
  out += text;

  // Gather arrays first so the count prefix is exact.
  const auto named = model.named_parameters();
  std::uint32_t count = std::uint32_t(named.size());
  if (clusters.initialized) count += std::uint32_t(clusters.centers.size());
  put_u32(out, count);

  for (auto& [name, p] : named) put_array(out, name, p.shape(), p.data());
  if (clusters.initialized)
    for (std::size_t k = 0; k < clusters.centers.size(); ++k)
      put_array(out, "cluster.centers." + std::to_string(k),
                {clusters.t, clusters.d_z}, clusters.centers[k]);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), std::streamsize(out.size()));
  f.flush();
  if (!f) throw IoError("checkpoint: failed writing '" + path + "'");
}

RestoredRun load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str(), path);

  const std::string magic = r.str(4, "magic");
  if (magic != std::string(kMagic, 4))
    throw ParseError(path + ": bad magic at byte 0");
  const auto version = r.u32("version");
  if (version != kVersion)
    throw ParseError(path + ": unsupported version " + std::to_string(version) +
                     " at byte 4");

  const auto stored_hash = r.u64("config hash");
  const auto text_len = r.u32("config length");
  const std::string text = r.str(text_len, "config text");
  if (fnv1a64(text) != stored_hash)
    throw ParseError(path + ": config text does not match its stored hash");

  // Re-parse through the normal key parser so a stale or hand-edited text
  // fails with the usual diagnostics.
  RunConfig cfg;
  {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ParseError(path + ": malformed embedded config line '" + line + "'");
      set_config_key(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
  }
  validate_config(cfg);

  const auto array_count = r.u32("array count");
  std::vector<NamedArray> arrays;
  arrays.reserve(array_count);
  for (std::uint32_t i = 0; i < array_count; ++i) {
    NamedArray a;
    const auto name_len = r.u32("array name length");
    a.name = r.str(name_len, "array name");
    const auto rank = r.u32("array rank");
    if (rank == 0 || rank > 8)
      throw ParseError(path + ": array '" + a.name + "' has rank " +
                       std::to_string(rank) + " at byte " +
                       std::to_string(r.offset() - 4));
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.u32("array dim");
      if (dim == 0)
        throw ParseError(path + ": array '" + a.name + "' has a zero dim");
      a.dims.push_back(std::int64_t(dim));
      numel *= dim;
    }
    a.data.reserve(numel);
    for (std::size_t j = 0; j < numel; ++j) a.data.push_back(r.f64("array data"));
    arrays.push_back(std::move(a));
  }
  if (!r.done())
    throw ParseError(path + ": trailing bytes at " + std::to_string(r.offset()));

  auto find = [&](const std::string& name) -> const NamedArray* {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  };

  // The input width is not a config field; recover it from the first
  // encoder weight.
  const NamedArray* w0 = find("encoder.w0");
  if (!w0 || w0->dims.size() != 2)
    throw ParseError(path + ": missing or malformed encoder.w0");

  ModelShape shape{w0->dims[0], cfg.d_z, cfg.hidden, cfg.k,
                   cfg.m,       cfg.tau, cfg.sigma0};
  RestoredRun run{cfg, make_model(shape, 0), ClusterState{}};

  std::size_t used = 0;
  for (auto& [name, p] : run.model.named_parameters()) {
    const NamedArray* a = find(name);
    if (!a) throw ParseError(path + ": missing parameter '" + name + "'");
    if (a->dims != p.shape())
      throw ParseError(path + ": parameter '" + name + "' has wrong shape");
    p.mutable_data() = a->data;
    ++used;
  }

  run.clusters.t = cfg.t;
  run.clusters.d_z = cfg.d_z;
  for (int k = 0; k < cfg.k; ++k) {
    const NamedArray* a = find("cluster.centers." + std::to_string(k));
    if (!a) break;
    if (a->dims != std::vector<std::int64_t>{cfg.t, cfg.d_z})
      throw ParseError(path + ": cluster centers " + std::to_string(k) +
                       " have wrong shape");
    run.clusters.centers.push_back(a->data);
    ++used;
  }
  if (!run.clusters.centers.empty()) {
    if (int(run.clusters.centers.size()) != cfg.k)
      throw ParseError(path + ": expected " + std::to_string(cfg.k) +
                       " center blocks, found " +
                       std::to_string(run.clusters.centers.size()));
    run.clusters.initialized = true;
    run.clusters.m_steps_done = 1;
  }
  if (used != arrays.size())
    throw ParseError(path + ": file contains unrecognized arrays");

  return run;
}

}  // namespace ddmc
