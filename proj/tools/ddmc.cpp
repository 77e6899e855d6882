// Command-line front end: dataset generation, training, evaluation of saved
// runs, and K/T grid sweeps. Exit codes: 0 success, 2 usage or input error,
// 3 numerical failure during computation.
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddmc/checkpoint.hpp"
#include "ddmc/config.hpp"
#include "ddmc/dataset.hpp"
#include "ddmc/errors.hpp"
#include "ddmc/hash.hpp"
#include "ddmc/metrics.hpp"
#include "ddmc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ddmc;

namespace {

// Flags shared by every subcommand; values stay as strings so the config
// key parser is the single authority on syntax and ranges.
struct CommonFlags {
  std::string config_path;
  std::string out;
  std::string seed, epochs, k, t, tau, lr, delta;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value run configuration");
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--seed", seed, "override: master seed");
    cmd->add_option("--epochs", epochs, "override: gradient epochs");
    cmd->add_option("--k", k, "override: representation count");
    cmd->add_option("--t", t, "override: clusters per representation");
    cmd->add_option("--tau", tau, "override: gumbel-softmax temperature");
    cmd->add_option("--lr", lr, "override: learning rate");
    cmd->add_option("--delta", delta, "override: stopping threshold");
  }

  RunConfig resolve() const {
    RunConfig cfg =
        config_path.empty() ? RunConfig{} : load_config(config_path);
    auto apply = [&](const char* key, const std::string& v) {
      if (!v.empty()) set_config_key(cfg, key, v);
    };
    apply("seed", seed);
    apply("epochs", epochs);
    apply("k", k);
    apply("t", t);
    apply("tau", tau);
    apply("lr", lr);
    apply("delta", delta);
    validate_config(cfg);
    return cfg;
  }
};

std::string iso_utc_now() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t dataset_fingerprint(const MultiClusteringDataset& ds) {
  std::uint64_t h = fnv1a64(
      reinterpret_cast<const char*>(ds.images.data()),
      ds.images.size() * sizeof(double));
  for (const auto& l : ds.labelings)
    h = fnv1a64(reinterpret_cast<const char*>(l.data()),
                l.size() * sizeof(int), h);
  return h;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), std::streamsize(content.size()));
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

MatchReport score_clusters(const ClusterState& clusters,
                           const MultiClusteringDataset& ds) {
  std::vector<Partition> predicted;
  for (const auto& labels : clusters.assignments)
    predicted.push_back(Partition::of(labels, int(clusters.t)));
  std::vector<Partition> reference;
  for (std::size_t m = 0; m < ds.labelings.size(); ++m)
    reference.push_back(Partition::of(ds.labelings[m], ds.cluster_counts[m]));
  return match_report(predicted, reference);
}

json log_record_json(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["phase"] = std::string(1, r.phase);
  j["coarse"] = r.coarse;
  j["recon"] = r.recon;
  j["kl_z"] = r.kl_z;
  j["kl_c"] = r.kl_c;
  j["beta"] = r.beta_k;
  j["cluster"] = r.cluster;
  j["u_z"] = r.u_z;
  j["u_c"] = r.u_c;
  j["stop_value"] = r.stop_value;
  j["stopped"] = r.stopped;
  j["wall_ms"] = r.wall_ms;
  return j;
}

// Fills in clusters for runs that never reached an M-step (epochs below
// warmup is legitimate): one fresh k-means on the final latents, matching
// what the trainer itself does at the end of a nonzero-epoch run.
void ensure_clusters(const RunConfig& cfg, const MultiClusteringDataset& ds,
                     const DdmcModel& model, ClusterState& clusters) {
  if (clusters.initialized) return;
  std::vector<std::vector<double>> cache;
  if (cfg.coarse_enabled)
    cache = build_aug_cache(ds, sample_pipelines(cfg.k, cfg.aug_seed));
  const auto lat = compute_latent_means(cfg, ds, model, cache);
  clusters.t = cfg.t;
  clusters.d_z = cfg.d_z;
  clusters.centers.clear();
  clusters.assignments.clear();
  for (int k = 0; k < cfg.k; ++k) {
    clusters.centers.push_back(kmeans_init(lat[std::size_t(k)], ds.n, cfg.d_z,
                                           cfg.t,
                                           derive_seed(cfg.seed, 103 + std::uint64_t(k))));
    clusters.assignments.push_back(assign(lat[std::size_t(k)], ds.n, cfg.d_z,
                                          clusters.centers.back(), cfg.t));
  }
  clusters.initialized = true;
  clusters.m_steps_done = 1;
}

struct TrainResult {
  MatchReport report;
  std::vector<std::string> names;
};

TrainResult run_training(const RunConfig& cfg, const fs::path& out) {
  const std::string started = iso_utc_now();
  fs::create_directories(out);

  const auto ds = dataset_from_config(cfg);
  Trainer trainer(cfg, ds);
  const auto pipeline_list = trainer.pipelines();
  auto art = trainer.run();
  ensure_clusters(cfg, ds, art.model, art.clusters);

  save_checkpoint((out / "checkpoint.dmck").string(), cfg, art.model,
                  art.clusters);

  std::string log_text;
  for (const auto& r : art.log) log_text += log_record_json(r).dump() + "\n";
  write_text_file(out / "log.jsonl", log_text);

  const auto report = score_clusters(art.clusters, ds);
  write_text_file(out / "metrics.csv", metrics_csv(report, ds.clustering_names));

  json manifest;
  manifest["kind"] = "train";
  manifest["config"] = {{"text", serialize_config(cfg)},
                        {"hash", hex64(config_hash(cfg))}};
  manifest["dataset"] = {{"n", ds.n},
                         {"h", ds.h},
                         {"w", ds.w},
                         {"c", ds.c},
                         {"hash", hex64(dataset_fingerprint(ds))},
                         {"clusterings", ds.clustering_names},
                         {"cluster_counts", ds.cluster_counts}};
  json pl = json::array();
  for (const auto& p : pipeline_list) pl.push_back(p.describe());
  manifest["pipelines"] = pl;
  manifest["seed"] = cfg.seed;
  manifest["aug_seed"] = cfg.aug_seed;
  manifest["epochs_run"] = art.epochs_run;
  manifest["stopped_early"] = art.stopped_early;
  manifest["started"] = started;
  manifest["finished"] = iso_utc_now();
  manifest["artifacts"] = {{"checkpoint", "checkpoint.dmck"},
                           {"log", "log.jsonl"},
                           {"metrics", "metrics.csv"}};
  // The manifest lands last so its presence marks a complete run.
  write_text_file(out / "manifest.json", manifest.dump(2) + "\n");

  return {report, ds.clustering_names};
}

int cmd_gen(const CommonFlags& flags) {
  const RunConfig cfg = flags.resolve();
  const fs::path out(flags.out);
  fs::create_directories(out);
  const auto ds = dataset_from_config(cfg);
  const auto path = out / "dataset.mcds";
  save_dataset(ds, path.string());
  std::cout << "wrote " << path.string() << " (" << ds.n << " images, "
            << ds.h << "x" << ds.w << "x" << ds.c << ", hash "
            << hex64(dataset_fingerprint(ds)) << ")\n";
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  const RunConfig cfg = flags.resolve();
  const auto result = run_training(cfg, fs::path(flags.out));
  for (std::size_t m = 0; m < result.names.size(); ++m) {
    const int k = result.report.best_representation[m];
    const auto& cell = result.report.grid[std::size_t(k)][m];
    std::cout << result.names[m] << ": representation " << k << " nmi "
              << cell.nmi << " ri " << cell.ri << "\n";
  }
  std::cout << "artifacts in " << flags.out << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& ckpt_path) {
  auto run = load_checkpoint(ckpt_path);
  // Command-line overrides that change the architecture would contradict
  // the stored arrays; only seed-free scoring knobs make sense here, so the
  // embedded config wins wholesale.
  const auto& cfg = run.cfg;
  const auto ds = dataset_from_config(cfg);

  std::vector<std::vector<double>> cache;
  if (cfg.coarse_enabled)
    cache = build_aug_cache(ds, sample_pipelines(cfg.k, cfg.aug_seed));
  const auto lat = compute_latent_means(cfg, ds, run.model, cache);

  ensure_clusters(cfg, ds, run.model, run.clusters);
  run.clusters.assignments.clear();
  for (int k = 0; k < cfg.k; ++k)
    run.clusters.assignments.push_back(
        assign(lat[std::size_t(k)], ds.n, cfg.d_z,
               run.clusters.centers[std::size_t(k)], cfg.t));

  const fs::path out(flags.out);
  fs::create_directories(out);

  const auto report = score_clusters(run.clusters, ds);
  write_text_file(out / "metrics.csv", metrics_csv(report, ds.clustering_names));

  std::string emb = "representation,row,cluster";
  for (std::int64_t j = 0; j < cfg.d_z; ++j)
    emb += ",z" + std::to_string(j);
  emb += "\n";
  char num[40];
  for (int k = 0; k < cfg.k; ++k)
    for (std::int64_t i = 0; i < ds.n; ++i) {
      emb += std::to_string(k) + "," + std::to_string(i) + "," +
             std::to_string(run.clusters.assignments[std::size_t(k)][std::size_t(i)]);
      for (std::int64_t j = 0; j < cfg.d_z; ++j) {
        std::snprintf(num, sizeof num, "%.12g",
                      lat[std::size_t(k)][std::size_t(i * cfg.d_z + j)]);
        emb += ",";
        emb += num;
      }
      emb += "\n";
    }
  write_text_file(out / "embeddings.csv", emb);

  std::cout << "wrote " << (out / "metrics.csv").string() << " and "
            << (out / "embeddings.csv").string() << "\n";
  return 0;
}

std::vector<int> parse_grid(const std::string& what, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      if (v < 2)
        throw ConfigError("sweep: " + what + " values must be at least 2");
      out.push_back(v);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("sweep: bad " + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("sweep: empty " + what);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Summary rows sit at the tail of metrics.csv, one per reference
// clustering, already formatted; reuse them verbatim for the sweep table.
std::vector<std::array<std::string, 3>> summary_rows(const fs::path& csv,
                                                     std::size_t m_count) {
  std::ifstream in(csv);
  if (!in) throw IoError("sweep: cannot read '" + csv.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  if (lines.size() < 1 + m_count)
    throw ParseError("sweep: '" + csv.string() + "' is too short");
  std::vector<std::array<std::string, 3>> rows;
  for (std::size_t i = lines.size() - m_count; i < lines.size(); ++i) {
    const auto& l = lines[i];
    const auto c1 = l.find(',');
    const auto c2 = l.find(',', c1 + 1);
    const auto c3 = l.find(',', c2 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        c3 == std::string::npos)
      throw ParseError("sweep: malformed metrics row '" + l + "'");
    rows.push_back({l.substr(0, c1), l.substr(c2 + 1, c3 - c2 - 1),
                    l.substr(c3 + 1)});
  }
  return rows;
}

int spawn_train(const std::string& exe, const fs::path& cfg_path,
                const fs::path& out_dir) {
  const pid_t pid = fork();
  if (pid < 0) throw IoError("sweep: fork failed");
  if (pid == 0) {
    const std::string cfg_s = cfg_path.string();
    const std::string out_s = out_dir.string();
    const char* argv[] = {exe.c_str(), "train",  "--config", cfg_s.c_str(),
                          "--out",     out_s.c_str(), nullptr};
    execv(exe.c_str(), const_cast<char**>(argv));
    std::perror("execv");
    _exit(127);
  }
  return pid;
}

int cmd_sweep(const CommonFlags& flags, const std::string& k_grid_s,
              const std::string& t_grid_s, int jobs) {
  const RunConfig base = flags.resolve();
  const auto k_grid = parse_grid("k grid", k_grid_s);
  const auto t_grid = parse_grid("t grid", t_grid_s);
  if (jobs < 1) throw ConfigError("sweep: jobs must be positive");

  const fs::path out(flags.out);
  fs::create_directories(out);

  struct Cell {
    int k, t;
    fs::path dir;
  };
  std::vector<Cell> cells;
  for (int k : k_grid)
    for (int t : t_grid) {
      RunConfig cfg = base;
      cfg.k = k;
      cfg.t = t;
      validate_config(cfg);
      cells.push_back(
          {k, t, out / ("k" + std::to_string(k) + "_t" + std::to_string(t))});
    }

  if (jobs == 1) {
    for (const auto& cell : cells) {
      RunConfig cfg = base;
      cfg.k = cell.k;
      cfg.t = cell.t;
      std::cout << "running k=" << cell.k << " t=" << cell.t << "\n";
      run_training(cfg, cell.dir);
    }
  } else {
    char exe_buf[4096];
    const ssize_t len = readlink("/proc/self/exe", exe_buf, sizeof exe_buf - 1);
    if (len <= 0) throw IoError("sweep: cannot resolve own executable");
    exe_buf[len] = '\0';
    const std::string exe(exe_buf);

    std::vector<std::pair<int, Cell>> running;  // pid, cell
    int failure = 0;
    auto reap_one = [&] {
      int status = 0;
      const pid_t pid = waitpid(-1, &status, 0);
      const int code =
          WIFEXITED(status) ? WEXITSTATUS(status) : 3;
      for (std::size_t i = 0; i < running.size(); ++i)
        if (running[i].first == pid) {
          if (code != 0) {
            std::cerr << "sweep: k=" << running[i].second.k
                      << " t=" << running[i].second.t << " exited with "
                      << code << "\n";
            if (!failure) failure = code;
          }
          running.erase(running.begin() + std::ptrdiff_t(i));
          return;
        }
    };

    for (const auto& cell : cells) {
      while (int(running.size()) >= jobs) reap_one();
      RunConfig cfg = base;
      cfg.k = cell.k;
      cfg.t = cell.t;
      fs::create_directories(cell.dir);
      const fs::path cfg_path = cell.dir / "config.ddmc";
      write_text_file(cfg_path, serialize_config(cfg));
      std::cout << "spawning k=" << cell.k << " t=" << cell.t << "\n";
      running.push_back({spawn_train(exe, cfg_path, cell.dir), cell});
    }
    while (!running.empty()) reap_one();
    if (failure) return failure;
  }

  // One aggregated row per (k, t, clustering), taken verbatim from each
  // run's summary rows so the numbers match the per-run files exactly.
  const auto probe = dataset_from_config(base);
  const std::size_t m_count = probe.clustering_names.size();
  struct Row {
    int k, t;
    std::string name, nmi, ri;
  };
  std::vector<Row> rows;
  for (const auto& cell : cells)
    for (const auto& r : summary_rows(cell.dir / "metrics.csv", m_count))
      rows.push_back({cell.k, cell.t, r[0], r[1], r[2]});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.k != b.k) return a.k < b.k;
    if (a.t != b.t) return a.t < b.t;
    return a.name < b.name;
  });
  std::string csv = "k,t,clustering,nmi,ri\n";
  for (const auto& r : rows)
    csv += std::to_string(r.k) + "," + std::to_string(r.t) + "," + r.name +
           "," + r.nmi + "," + r.ri + "\n";
  write_text_file(out / "sweep.csv", csv);
  std::cout << "wrote " << (out / "sweep.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-disentangled deep multiple clustering"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, sweep_flags;
  auto* gen = app.add_subcommand("gen", "generate a dataset container");
  gen_flags.attach(gen);
  auto* train = app.add_subcommand("train", "train and write run artifacts");
  train_flags.attach(train);
  auto* eval = app.add_subcommand("eval", "score a saved checkpoint");
  eval_flags.attach(eval);
  std::string ckpt_path;
  eval->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();
  auto* sweep = app.add_subcommand("sweep", "train a grid of k and t values");
  sweep_flags.attach(sweep);
  std::string k_grid = "2,3";
  std::string t_grid = "2,3";
  int jobs = 1;
  sweep->add_option("--k-grid", k_grid, "comma list of representation counts");
  sweep->add_option("--t-grid", t_grid, "comma list of cluster counts");
  sweep->add_option("--jobs", jobs, "concurrent child runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_flags);
    if (train->parsed()) return cmd_train(train_flags);
    if (eval->parsed()) return cmd_eval(eval_flags, ckpt_path);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, k_grid, t_grid, jobs);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
