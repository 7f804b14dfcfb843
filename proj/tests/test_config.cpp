#include <functional>
#include <string>

#include "doctest.h"
#include "gdiff/config.hpp"

using namespace gdiff;

namespace {

std::string caught_field(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.field;
  }
  return "<no throw>";
}

}  // namespace

TEST_CASE("ini parsing handles sections, comments, and spacing") {
  Ini ini = parse_ini(
      "# leading comment\n"
      "[train]\n"
      "lr = 0.001   ; trailing note\n"
      "precision=f32\n"
      "\n"
      "[dataset]\n"
      "  kind  =  community_small  \n"
      "path = /tmp/with spaces/file.txt\n"
      "[eval]\n");
  CHECK(ini.sections.size() == 3);
  CHECK(ini.get_str("train", "lr", "") == "0.001");
  CHECK(ini.get_str("train", "precision", "") == "f32");
  CHECK(ini.get_str("dataset", "kind", "") == "community_small");
  // inner spaces survive, outer ones don't
  CHECK(ini.get_str("dataset", "path", "") == "/tmp/with spaces/file.txt");
  CHECK(ini.sections.at("eval").empty());
  CHECK(ini.has("train", "lr"));
  CHECK(!ini.has("train", "batch_size"));
  CHECK(!ini.has("sample", "steps"));
}

TEST_CASE("ini parse errors carry line numbers") {
  CHECK(caught_field([] { parse_ini("[train\nlr=1\n"); }) == "line 1");
  CHECK(caught_field([] { parse_ini("[train]\nnonsense line\n"); }) == "line 2");
  CHECK(caught_field([] { parse_ini("lr = 1\n"); }) == "line 1");
  CHECK(caught_field([] { parse_ini("[]\n"); }) == "line 1");
  CHECK(caught_field([] { parse_ini("[t]\n = 3\n"); }) == "line 2");
  CHECK(caught_field([] { parse_ini("[train]\nlr=1\nlr=2\n"); }) == "train.lr");
}

TEST_CASE("typed getters convert or reject") {
  Ini ini = parse_ini(
      "[train]\n"
      "batch_size = 64\n"
      "lr = 2.5e-4\n"
      "neg = -3\n"
      "flag_a = true\n"
      "flag_b = 0\n"
      "flag_c = yes\n"
      "junk = 12monkeys\n");
  CHECK(ini.get_int("train", "batch_size", -1) == 64);
  CHECK(ini.get_int("train", "neg", 0) == -3);
  CHECK(ini.get_int("train", "absent", 7) == 7);
  CHECK(ini.get_double("train", "lr", 0.0) == doctest::Approx(2.5e-4));
  CHECK(ini.get_double("train", "batch_size", 0.0) == 64.0);
  CHECK(ini.get_bool("train", "flag_a", false));
  CHECK(!ini.get_bool("train", "flag_b", true));
  CHECK(ini.get_bool("train", "flag_c", false));
  CHECK(ini.get_bool("train", "absent", true));
  CHECK(caught_field([&] { ini.get_int("train", "junk", 0); }) == "train.junk");
  CHECK(caught_field([&] { ini.get_int("train", "lr", 0); }) == "train.lr");
  CHECK(caught_field([&] { ini.get_double("train", "junk", 0); }) == "train.junk");
  CHECK(caught_field([&] { ini.get_bool("train", "junk", false); }) == "train.junk");
}

TEST_CASE("check_ini rejects unknown sections and strict-section keys") {
  Ini ini = parse_ini("[train]\nlr = 1e-3\n[sample]\nsteps = 100\n");
  CHECK_NOTHROW(check_ini(ini, {"train"}));
  CHECK_NOTHROW(check_ini(ini, {"train", "sample"}));

  Ini bad_sec = parse_ini("[training]\nlr = 1e-3\n");
  CHECK(caught_field([&] { check_ini(bad_sec, {}); }) == "training");

  Ini bad_key = parse_ini("[train]\nlearning_rate = 1e-3\n");
  // only strict sections get their keys vetted
  CHECK_NOTHROW(check_ini(bad_key, {"dataset"}));
  CHECK(caught_field([&] { check_ini(bad_key, {"train"}); }) ==
        "train.learning_rate");
}

TEST_CASE("section readers apply defaults and validate") {
  Ini ini = parse_ini(
      "[dataset]\n"
      "kind = community_small\n"
      "count = 100\n"
      "seed = 11\n"
      "[schedule]\n"
      "beta_min = 0.2\n"
      "[denoiser]\n"
      "num_blocks = 3\n"
      "hidden_dim = 48\n"
      "num_heads = 8\n"
      "[train]\n"
      "batch_size = 16\n"
      "lr = 4e-4\n"
      "precision = f32\n");

  DatasetSpec ds = dataset_from_ini(ini);
  CHECK(ds.kind == "community_small");
  CHECK(ds.count == 100);
  CHECK(ds.seed == 11);
  CHECK(ds.split_ratio == 0.8);

  NoiseSchedule sched = schedule_from_ini(ini);
  CHECK(sched.beta_min == 0.2);
  CHECK(sched.beta_max == 20.0);

  DenoiserConfig dc = denoiser_from_ini(ini);
  CHECK(dc.num_blocks == 3);
  CHECK(dc.hidden_dim == 48);
  CHECK(dc.num_heads == 8);
  CHECK(dc.rw_steps == DenoiserConfig{}.rw_steps);

  TrainConfig tc = train_from_ini(ini);
  CHECK(tc.batch_size == 16);
  CHECK(tc.lr == 4e-4);
  CHECK(tc.precision == "f32");
  CHECK(tc.ema_decay == TrainConfig{}.ema_decay);
}

TEST_CASE("section readers report dotted field paths") {
  Ini bad_den = parse_ini("[denoiser]\nhidden_dim = 50\nnum_heads = 8\n");
  CHECK(caught_field([&] { denoiser_from_ini(bad_den); }) == "denoiser.hidden_dim");

  Ini bad_train = parse_ini("[train]\nema_decay = 1.5\n");
  CHECK(caught_field([&] { train_from_ini(bad_train); }) == "train.ema_decay");
  try {
    train_from_ini(bad_train);
    CHECK(false);
  } catch (const ConfigError& e) {
    // no stacked prefixes from the re-wrap
    std::string w = e.what();
    CHECK(w == "config field 'train.ema_decay': must lie in (0,1)");
  }

  Ini bad_ds = parse_ini("[dataset]\nkind = nope\n");
  CHECK(caught_field([&] { dataset_from_ini(bad_ds); }) == "dataset");

  Ini bad_sched = parse_ini("[schedule]\nbeta_min = -1\n");
  CHECK(caught_field([&] { schedule_from_ini(bad_sched); }) == "schedule");
}

TEST_CASE("missing sections fall back to defaults entirely") {
  Ini ini = parse_ini("[train]\nlr = 1e-3\n");
  NoiseSchedule sched = schedule_from_ini(ini);
  CHECK(sched.beta_min == 0.1);
  CHECK(sched.beta_max == 20.0);
  DenoiserConfig dc = denoiser_from_ini(ini);
  CHECK(dc.num_blocks == DenoiserConfig{}.num_blocks);
}

TEST_CASE("fnv1a matches published vectors") {
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 12638187200555641996ull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
  CHECK(fnv1a("x") != fnv1a("y"));
}
