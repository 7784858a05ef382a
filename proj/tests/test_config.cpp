// Copyright 2026 The diloco-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <fstream>

#include "config.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "test_util.hpp"

using namespace diloco;

namespace {

std::string config_error(const ConfigMap& m) {
  try {
    m.resolve();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    return e.what();
  }
  return "";
}

std::string set_error(ConfigMap m, const std::string& key,
                      const std::string& value) {
  try {
    m.set(key, value);
  } catch (const Error& e) {
    return e.what();
  }
  return config_error(m);
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults resolve to the desk-scale setup") {
  const RunConfig c = ConfigMap().resolve();
  CHECK(c.k == 4);
  CHECK(c.H == 50);
  CHECK(c.T == 40);
  CHECK(c.pretrain_steps == 500);
  CHECK(c.regime == DataRegime::kNonIid);
  CHECK(c.outer.kind == OuterKind::kNesterov);
  CHECK(c.outer.lr == 0.7);
  CHECK(c.outer.momentum == 0.9);
  CHECK(c.inner.kind == InnerKind::kAdamW);
  CHECK(c.inner.weight_decay == 0.1);
  CHECK(c.model.param_count() == 106880);
  CHECK(c.model.seed == c.master_seed);
  CHECK(c.transport == TransportKind::kSim);
}

TEST_CASE("outer learning rate follows the optimizer unless set") {
  ConfigMap m;
  for (auto [name, lr] : {std::pair{"sgd", 0.5}, {"sgdm", 0.3},
                          {"nesterov", 0.7}, {"adam", 0.3}}) {
    m.set("outer_opt", name);
    CHECK(m.resolve().outer.lr == lr);
  }
  m.set("outer_lr", "0.25");
  CHECK(m.resolve().outer.lr == 0.25);
}

TEST_CASE("presets differ from the defaults only in their documented keys") {
  const ConfigMap base;
  const std::map<std::string, std::vector<std::string>> documented = {
      {"default", {}},
      {"diloco-default", {"k"}},
      {"diloco-k1", {"k"}},
      {"baseline", {"k", "H", "T", "outer_opt", "outer_lr"}},
      {"baseline-8x-batch", {"k", "H", "T", "outer_opt", "outer_lr", "batch_size"}},
      {"baseline-8x-updates", {"k", "H", "T", "outer_opt", "outer_lr"}},
      {"adaptive-doubling", {"data_regime", "replica_schedule"}},
      {"adaptive-halving", {"data_regime", "replica_schedule"}},
      {"adaptive-ramp-up", {"data_regime", "replica_schedule"}},
      {"adaptive-ramp-down", {"data_regime", "replica_schedule"}},
  };
  CHECK(preset_names().size() == documented.size());
  for (const auto& name : preset_names()) {
    REQUIRE(documented.count(name) == 1);
    const ConfigMap p = ConfigMap::preset(name);
    std::vector<std::string> diff;
    for (const auto& [k, v] : p.values()) {
      if (base.get(k) != v) diff.push_back(k);
    }
    auto want = documented.at(name);
    std::sort(want.begin(), want.end());
    CHECK_MESSAGE(diff == want, name);
    CHECK_NOTHROW(p.resolve());
  }
  CHECK(ConfigMap::preset("diloco-default").resolve().k == 8);
  const RunConfig b = ConfigMap::preset("baseline").resolve();
  CHECK(b.k == 1);
  CHECK(b.T == 1);
  CHECK(b.outer.kind == OuterKind::kSgd);
  CHECK(b.outer.lr == 1.0);
  CHECK(b.total_inner_compute() == 2000);
  CHECK(ConfigMap::preset("baseline-8x-batch").resolve().batch_size == 256);
  CHECK_THROWS_AS(ConfigMap::preset("nope"), Error);
}

TEST_CASE("replica schedules") {
  const RunConfig d = ConfigMap::preset("adaptive-doubling").resolve();
  CHECK(d.k == 8);
  CHECK(d.k_at(1) == 4);
  CHECK(d.k_at(20) == 4);
  CHECK(d.k_at(21) == 8);
  CHECK(d.total_inner_compute() == (20 * 4 + 20 * 8) * 50);
  const RunConfig up = ConfigMap::preset("adaptive-ramp-up").resolve();
  const RunConfig down = ConfigMap::preset("adaptive-ramp-down").resolve();
  CHECK(up.total_inner_compute() == down.total_inner_compute());
  CHECK(up.total_inner_compute() == 5 * 50 * (1 + 2 + 3 + 4 + 5 + 6 + 7 + 8));
  ConfigMap m;
  m.set("replica_schedule", "1:2,x");
  CHECK(config_error(m).find("replica_schedule") != std::string::npos);
  m.set("replica_schedule", "2:2");
  CHECK_FALSE(config_error(m).empty());
}

TEST_CASE("errors name the offending key") {
  const ConfigMap m;
  CHECK(set_error(m, "foo", "1").find("'foo'") != std::string::npos);
  CHECK(set_error(m, "k", "abc").find("'k'") != std::string::npos);
  CHECK(set_error(m, "k", "-1").find("'k'") != std::string::npos);
  CHECK(set_error(m, "drop_prob", "nan").find("drop_prob") != std::string::npos);
  CHECK(set_error(m, "drop_prob", "2").find("drop_prob") != std::string::npos);
  CHECK(set_error(m, "outer_opt", "lion").find("outer_opt") != std::string::npos);
  CHECK(set_error(m, "data_regime", "mixed").find("data_regime") != std::string::npos);
  CHECK(set_error(m, "restart_warmup", "maybe").find("restart_warmup") != std::string::npos);
  CHECK_FALSE(set_error(m, "H", "0").empty());
}

TEST_CASE("text configs") {
  ConfigMap m;
  m.merge_text("# comment\nk = 2\n\nH=7  # trailing\nrun_id = \"quoted name\"\n");
  CHECK(m.get("k") == "2");
  CHECK(m.get("H") == "7");
  CHECK(m.get("run_id") == "quoted name");
  try {
    m.merge_text("k = 2\nbogus = 1\n", "my.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string what = e.what();
    CHECK(what.find("my.cfg:2") != std::string::npos);
    CHECK(what.find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(m.merge_text("no equals sign\n"), Error);
}

TEST_CASE("canonical text round-trips") {
  ConfigMap m = ConfigMap::preset("adaptive-halving");
  m.set("drop_prob", "0.3");
  m.set("seed", "42");
  const RunConfig c = m.resolve();
  ConfigMap back;
  back.merge_text(m.to_text());
  CHECK(back.values() == m.values());
  const ConfigMap canon = ConfigMap::from_run_config(c);
  CHECK(config_hash(canon.resolve()) == config_hash(c));
  ConfigMap again;
  again.merge_text(canon.to_text());
  CHECK(again.values() == canon.values());
}

TEST_CASE("json configs") {
  ConfigMap m;
  m.merge_json(R"({"run_id": "x", "config": {"k": "3", "H": 9}})");
  CHECK(m.get("k") == "3");
  CHECK(m.get("H") == "9");
  CHECK(m.get("run_id") == "run");
  ConfigMap flat;
  flat.merge_json(R"({"T": 5, "restart_warmup": false})");
  CHECK(flat.get("T") == "5");
  CHECK(flat.resolve().restart_warmup == false);
  CHECK_THROWS_AS(flat.merge_json("{not json"), Error);
  CHECK_THROWS_AS(flat.merge_json(R"({"nokey": 1})"), Error);

  const std::string dir = testing::temp_dir("cfgjson");
  std::ofstream(dir + "/a.json") << R"({"config": {"k": "6"}})";
  std::ofstream(dir + "/a.cfg") << "k = 5\n";
  ConfigMap f;
  f.merge_file(dir + "/a.json");
  CHECK(f.get("k") == "6");
  f.merge_file(dir + "/a.cfg");
  CHECK(f.get("k") == "5");
  CHECK_THROWS_AS(f.merge_file(dir + "/missing.cfg"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config hash covers exactly the keys that change the math") {
  const RunConfig base = ConfigMap().resolve();
  const std::uint64_t h = config_hash(base);
  for (const auto& key : config_keys()) {
    ConfigMap m;
    std::string v = key.default_value;
    if (key.name == "run_id") v = "other";
    else if (key.name == "corpus_path") v = "elsewhere.txt";
    else if (key.name == "transport") v = "tcp";
    else if (key.name == "data_regime") v = "iid";
    else if (key.name == "replica_schedule") v = "1:2";
    else if (key.name == "inner_opt") v = "sgd";
    else if (key.name == "inner_schedule") v = "constant";
    else if (key.name == "outer_opt") v = "adam";
    else if (key.name == "outer_lr") v = "0.123";
    else if (key.name == "restart_warmup" || key.name == "wire_f32") {
      v = v == "true" ? "false" : "true";
    } else if (key.name == "drop_prob" || key.name == "prune_frac") v = "0.25";
    else if (key.name == "val_frac") v = "0.2";
    else if (key.name.find("beta") != std::string::npos ||
             key.name == "outer_momentum") {
      v = "0.5";
    }
    else if (v.find_first_of(".e") != std::string::npos) {
      v = format_double(std::stod(v) * 1.5);
    } else {
      v = std::to_string(std::stoll(v) + 1);
    }
    m.set(key.name, v);
    const RunConfig c = m.resolve();
    CHECK_MESSAGE((config_hash(c) != h) == key.hashed, key.name);
  }
}

}  // TEST_SUITE
