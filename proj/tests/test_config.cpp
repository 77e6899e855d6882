#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "ddmc/config.hpp"
#include "ddmc/errors.hpp"

using namespace ddmc;

namespace {

std::string write_temp(const std::string& text) {
  static int counter = 0;
  const std::string path =
      "/tmp/ddmc_config_test_" + std::to_string(counter++) + ".cfg";
  std::ofstream out(path);
  out << text;
  return path;
}

}  // namespace

TEST_CASE("defaults validate and round-trip through the parser") {
  RunConfig def;
  validate_config(def);
  const auto text = serialize_config(def);
  const auto path = write_temp(text);
  const auto back = load_config(path);
  CHECK(serialize_config(back) == text);
  CHECK(config_hash(back) == config_hash(def));
  std::remove(path.c_str());
}

TEST_CASE("non-default values survive serialization exactly") {
  RunConfig cfg;
  cfg.k = 4;
  cfg.t = 5;
  cfg.m = 3;
  cfg.hidden = {64, 32, 16};
  cfg.tau = 0.37;
  cfg.lr = 3e-4;
  cfg.delta = 0.0005;
  cfg.dataset = "colored_shapes";
  cfg.data = "/tmp/some.mcds";
  cfg.seed = 18446744073709551615ull;  // maximum u64 must not lose digits
  cfg.coarse_enabled = false;
  cfg.resample_aug = true;
  const auto path = write_temp(serialize_config(cfg));
  const auto back = load_config(path);
  CHECK(back.k == 4);
  CHECK(back.hidden == std::vector<std::int64_t>{64, 32, 16});
  CHECK(back.tau == 0.37);
  CHECK(back.lr == 3e-4);
  CHECK(back.delta == 0.0005);
  CHECK(back.data == "/tmp/some.mcds");
  CHECK(back.seed == 18446744073709551615ull);
  CHECK(back.coarse_enabled == false);
  CHECK(back.resample_aug == true);
  CHECK(serialize_config(back) == serialize_config(cfg));
  std::remove(path.c_str());
}

TEST_CASE("config files allow comments, blanks and spacing") {
  const auto path = write_temp(
      "# a run\n"
      "\n"
      "  k = 3   # trailing comment\n"
      "\tepochs=7\n"
      "hidden = 10 , 20\n");
  const auto cfg = load_config(path);
  CHECK(cfg.k == 3);
  CHECK(cfg.epochs == 7);
  CHECK(cfg.hidden == std::vector<std::int64_t>{10, 20});
  std::remove(path.c_str());
}

TEST_CASE("parser reports the offending line and key") {
  {
    const auto path = write_temp("k=2\nthis is not an assignment\n");
    CHECK_THROWS_WITH_AS(load_config(path),
                         doctest::Contains("line 2"), ConfigError);
    std::remove(path.c_str());
  }
  {
    const auto path = write_temp("k=banana\n");
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("'banana'"),
                         ConfigError);
    std::remove(path.c_str());
  }
  CHECK_THROWS_AS(load_config("/nonexistent/nowhere.cfg"), IoError);
}

TEST_CASE("key setter rejects bad values per type") {
  RunConfig cfg;
  CHECK_THROWS_AS(set_config_key(cfg, "mystery", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "lr", ""), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "lr", "0.1x"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "epochs", "1.5"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "seed", "-1"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "coarse_enabled", "maybe"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "hidden", ""), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "hidden", "64,,32"), ConfigError);

  set_config_key(cfg, "coarse_enabled", "0");
  CHECK(cfg.coarse_enabled == false);
  set_config_key(cfg, "coarse_enabled", "true");
  CHECK(cfg.coarse_enabled == true);
  set_config_key(cfg, "tau", "1.5");
  CHECK(cfg.tau == 1.5);
}

TEST_CASE("validation guards each constraint") {
  auto bad = [](auto mutate) {
    RunConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  };
  bad([](RunConfig& c) { c.m = 0; });
  bad([](RunConfig& c) { c.k = 1; });  // below m = 2
  bad([](RunConfig& c) { c.t = 1; });
  bad([](RunConfig& c) { c.tau = 0.0; });
  bad([](RunConfig& c) { c.tau = 2.5; });
  bad([](RunConfig& c) { c.delta = 0.0; });
  bad([](RunConfig& c) { c.delta = 1.0; });
  bad([](RunConfig& c) { c.d_z = 0; });
  bad([](RunConfig& c) { c.hidden = {}; });
  bad([](RunConfig& c) { c.hidden = {8, 0}; });
  bad([](RunConfig& c) { c.sigma0 = 0.0; });
  bad([](RunConfig& c) { c.beta = 0.0; });
  bad([](RunConfig& c) { c.lr = 0.0; });
  bad([](RunConfig& c) { c.weight_decay = -0.1; });
  bad([](RunConfig& c) { c.epochs = -1; });
  bad([](RunConfig& c) { c.batch_size = 1; });
  bad([](RunConfig& c) { c.e_steps_per_m = 0; });
  bad([](RunConfig& c) { c.warmup_epochs = -1; });
  bad([](RunConfig& c) { c.u_z_max = -1.0; });
  bad([](RunConfig& c) { c.capacity_ramp_frac = 1.5; });
  bad([](RunConfig& c) { c.dataset = "mnist"; });
  bad([](RunConfig& c) { c.t1 = 1; });
  bad([](RunConfig& c) { c.per_combo = 0; });
  bad([](RunConfig& c) { c.noise = 0.3; });

  RunConfig ok;
  ok.tau = 2.0;  // inclusive upper bound
  ok.u_c_max = -1.0;
  validate_config(ok);
}

TEST_CASE("hash separates configs that differ in one field") {
  RunConfig a, b;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.mixing_enabled = false;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.hidden = {256, 129};
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("capacity schedules resolve from the config") {
  RunConfig cfg;
  cfg.epochs = 100;
  cfg.capacity_ramp_frac = 0.5;
  cfg.u_z_max = 20.0;
  cfg.m = 2;
  cfg.u_c_max = -1.0;

  const auto uz = z_capacity(cfg);
  CHECK(uz.current(0) == 0.0);
  CHECK(uz.current(25) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(uz.current(50) == 20.0);
  CHECK(uz.current(999) == 20.0);

  const auto uc = c_capacity(cfg);
  CHECK(uc.current(50) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  cfg.u_c_max = 0.25;  // explicit value wins over the log(m) default
  CHECK(resolved_u_c_max(cfg) == 0.25);
  CHECK(c_capacity(cfg).current(50) == 0.25);

  cfg.capacity_ramp_frac = 0.0;  // jump straight to the ceiling
  const auto jump = z_capacity(cfg);
  CHECK(jump.current(0) == 0.0);
  CHECK(jump.current(1) == 20.0);
}
