#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "secad/config.hpp"
#include "secad/io.hpp"
#include "secad/prefgen.hpp"
#include "test_util.hpp"

using namespace secad;
namespace fs = std::filesystem;

namespace {

fs::path cli_binary() {
  if (const char* env = std::getenv("SECAD_BIN")) return env;
  return fs::path("build") / "tools" / "secad";
}

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Each invocation gets its own working directory so run.json and outputs
// never collide across cases.
CmdResult run_cli(const std::string& args, const fs::path& workdir,
                  const std::string& env_prefix = {}) {
  fs::create_directories(workdir);
  const std::string cmd = "cd '" + workdir.string() + "' && " + env_prefix +
                          " '" + cli_binary().string() + "' " + args +
                          " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  CmdResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp_file(workdir / "stdout.txt");
  result.err = slurp_file(workdir / "stderr.txt");
  return result;
}

fs::path scratch_root() {
  static const fs::path root =
      fs::temp_directory_path() /
      ("secad_cli_" + std::to_string(::getpid()));
  fs::create_directories(root);
  return root;
}

std::string trimmed(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' '))
    s.pop_back();
  return s;
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("kv config parses sections, comments, and quoted values") {
  const KvConfig config = KvConfig::parse(R"(
# top comment
top_level = 7
[model]
dim = 96          # trailing comment
name = "a b c"
[train]
lr = 1e-3
vf_only = true
)");
  CHECK(config.get_int("", "top_level", 0) == 7);
  CHECK(config.get_int("model", "dim", 0) == 96);
  CHECK(config.get_string("model", "name") == "a b c");
  CHECK(config.get_double("train", "lr", 0.0) == 1e-3);
  CHECK(config.get_bool("train", "vf_only", false));
  CHECK(config.get_int("model", "missing", 41) == 41);
  CHECK(!config.has("model", "missing"));

  const auto flat = config.flat();
  CHECK(flat.at("model.dim") == "96");
  CHECK(flat.at("top_level") == "7");

  CHECK_THROWS_AS((void)KvConfig::parse("[unclosed\nx = 1"), ConfigError);
  CHECK_THROWS_AS((void)KvConfig::parse("just a bare line"), ConfigError);
  CHECK_THROWS_AS((void)KvConfig::parse("a = 1\na = 2"), ConfigError);
  CHECK_THROWS_AS((void)config.get_int("model", "name", 0), ConfigError);
  CHECK_THROWS_AS((void)config.get_bool("model", "dim", false), ConfigError);
  CHECK_THROWS_AS((void)config.get_double("model", "name", 0.0), ConfigError);
}

TEST_CASE("parse accepts goldens, rejects mutations, reports I/O failures") {
  const fs::path golden = test::fixture_dir() / "golden" / "square_prism.sem";
  const std::string canonical = trimmed(slurp_file(golden));

  const CmdResult ok = run_cli("parse '" + golden.string() + "'",
                               scratch_root() / "parse_ok");
  CHECK(ok.exit_code == 0);
  CHECK(trimmed(ok.out) == canonical);
  // filter-style invocation: no provenance sidecar unless --out is given
  CHECK(!fs::exists(scratch_root() / "parse_ok" / "run.json"));
  const CmdResult with_out =
      run_cli("parse '" + golden.string() + "' --out prov",
              scratch_root() / "parse_ok");
  CHECK(with_out.exit_code == 0);
  CHECK(fs::exists(scratch_root() / "parse_ok" / "prov" / "run.json"));

  // cut mid-sketch: the stream ends before the first <curve_end>
  const fs::path cut = scratch_root() / "truncated.sem";
  write_file(cut, canonical.substr(0, canonical.find("<curve_end>") - 1));
  const CmdResult bad =
      run_cli("parse '" + cut.string() + "'", scratch_root() / "parse_bad");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("TruncatedSequence") != std::string::npos);

  // dropping the final token leaves a short extrusion record
  const fs::path short_ext = scratch_root() / "short_ext.sem";
  write_file(short_ext, canonical.substr(0, canonical.rfind(' ')));
  const CmdResult short_r = run_cli("parse '" + short_ext.string() + "'",
                                    scratch_root() / "parse_short");
  CHECK(short_r.exit_code == 1);
  CHECK(short_r.err.find("BadExtrusionRecord") != std::string::npos);

  const CmdResult gone = run_cli("parse /definitely/not/here.sem",
                                 scratch_root() / "parse_gone");
  CHECK(gone.exit_code == 2);

  const CmdResult stdin_ok = run_cli("parse - < '" + golden.string() + "'",
                                     scratch_root() / "parse_stdin");
  CHECK(stdin_ok.exit_code == 0);
  CHECK(trimmed(stdin_ok.out) == canonical);

  const CmdResult json = run_cli("parse --json '" + golden.string() + "'",
                                 scratch_root() / "parse_json");
  CHECK(json.exit_code == 0);
  const auto j = nlohmann::json::parse(json.out);
  CHECK(j.at("schema") == "secad.parse/1");
  CHECK(j.at("valid") == true);
  CHECK(j.at("canonical") == canonical);

  const CmdResult flag = run_cli("parse --no-such-flag",
                                 scratch_root() / "parse_flag");
  CHECK(flag.exit_code == 1);  // unknown flags rejected
}

TEST_CASE("render writes cloud, voxels, snapshot, and provenance") {
  const fs::path golden = test::fixture_dir() / "golden" / "square_prism.sem";
  const fs::path dir = scratch_root() / "render";
  const CmdResult r = run_cli(
      "render '" + golden.string() + "' --res 64 --points 2048 --out out", dir);
  REQUIRE(r.exit_code == 0);
  const fs::path base = dir / "out" / "square_prism";
  CHECK(count_lines(fs::path(base.string() + ".xyz")) == 2048);
  CHECK(fs::file_size(base.string() + ".rle") > 0);
  CHECK(slurp_file(base.string() + ".pgm").substr(0, 2) == "P5");

  const auto run = nlohmann::json::parse(slurp_file(dir / "out" / "run.json"));
  CHECK(run.at("command") == "render");
  CHECK(run.at("outputs").size() == 3);
  CHECK(run.at("seed") == 42);

  // determinism: same seed, same bytes; fresh seed, fresh cloud
  const CmdResult again = run_cli(
      "render '" + golden.string() + "' --res 64 --points 2048 --out out2",
      dir);
  REQUIRE(again.exit_code == 0);
  CHECK(slurp_file(base.string() + ".xyz") ==
        slurp_file(dir / "out2" / "square_prism.xyz"));
  const CmdResult reseeded = run_cli(
      "render '" + golden.string() +
          "' --res 64 --points 2048 --seed 7 --out out3",
      dir);
  REQUIRE(reseeded.exit_code == 0);
  CHECK(slurp_file(base.string() + ".xyz") !=
        slurp_file(dir / "out3" / "square_prism.xyz"));
}

TEST_CASE("render surfaces empty solids as invalid input") {
  const std::string square =
      "line 8 8 <curve_end> line 56 8 <curve_end> line 56 56 <curve_end> "
      "line 8 56 <curve_end> <loop_end> <face_end> <sketch_end> ";
  const std::string ext = "48 16 32 32 32 63 32 32 32 63 32 32 32 63 31 32 32";
  const fs::path seq = scratch_root() / "self_cut.sem";
  write_file(seq, square + "add " + ext + " " + square + "cut " + ext);

  const CmdResult r =
      run_cli("render '" + seq.string() + "'", scratch_root() / "render_empty");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("EmptySolid") != std::string::npos);
}

TEST_CASE("eval reproduces the self-evaluation identities") {
  std::vector<DatasetRecord> records;
  for (const char* name : {"square_prism", "cylinder", "plate_with_hole",
                           "block_with_cut", "two_faces", "l_profile"}) {
    DatasetRecord r;
    r.text = name;
    r.sequence = trimmed(
        slurp_file(test::fixture_dir() / "golden" / (std::string(name) + ".sem")));
    records.push_back(std::move(r));
  }
  const fs::path dir = scratch_root() / "eval";
  fs::create_directories(dir);
  write_jsonl_dataset(dir / "ref.jsonl", records);
  write_jsonl_dataset(dir / "gen.jsonl", records);

  const CmdResult r = run_cli(
      "eval --gen gen.jsonl --ref ref.jsonl --points 256 --res 32 --out .",
      dir);
  REQUIRE(r.exit_code == 0);
  const auto j = nlohmann::json::parse(slurp_file(dir / "eval.json"));
  CHECK(j.at("schema") == "secad.eval/1");
  CHECK(j.at("total") == 6);
  CHECK(j.at("invalidity_ratio_pct") == 0.0);
  CHECK(j.at("f1_sketch") == 1.0);
  CHECK(j.at("f1_extrusion") == 1.0);
  CHECK(j.at("chamfer_mean") == 0.0);
  CHECK(j.at("coverage_pct") == 100.0);
  CHECK(j.at("mmd") == 0.0);
  CHECK(j.at("jsd") == 0.0);

  // one broken sequence out of six -> one-sixth invalid
  records[3].sequence = "cut 1 2";
  write_jsonl_dataset(dir / "gen_broken.jsonl", records);
  const CmdResult broken = run_cli(
      "eval --gen gen_broken.jsonl --ref ref.jsonl --points 256 --res 32",
      dir);
  REQUIRE(broken.exit_code == 0);
  const auto jb = nlohmann::json::parse(slurp_file(dir / "eval.json"));
  CHECK(jb.at("invalid") == 1);
  CHECK(jb.at("invalidity_ratio_pct") ==
        doctest::Approx(100.0 / 6.0).epsilon(1e-12));

  records.pop_back();
  write_jsonl_dataset(dir / "gen_short.jsonl", records);
  const CmdResult mismatch = run_cli(
      "eval --gen gen_short.jsonl --ref ref.jsonl", dir);
  CHECK(mismatch.exit_code == 1);
  CHECK(mismatch.err.find("RecordMismatch") != std::string::npos);

  write_file(dir / "gen_empty.jsonl", "");
  const CmdResult empty =
      run_cli("eval --gen gen_empty.jsonl --ref ref.jsonl", dir);
  CHECK(empty.exit_code == 1);

  const CmdResult no_file = run_cli("eval --gen missing.jsonl --ref ref.jsonl",
                                    dir / "nofile");
  CHECK(no_file.exit_code == 2);
}

TEST_CASE("pairs emits filtered preference data and guards the lvm path") {
  const fs::path dir = scratch_root() / "pairs";
  const CmdResult r = run_cli("pairs --seed 7 --out .", dir);
  REQUIRE(r.exit_code == 0);
  const std::vector<PreferencePair> pairs =
      read_pairs_jsonl((dir / "pairs.jsonl").string());
  CHECK(pairs.size() > 40);
  for (const PreferencePair& p : pairs) {
    CHECK(p.margin() >= 2.0);
    CHECK(p.chosen_score >= 5.0);
    const ParseResult chosen = parse_sequence(p.chosen);
    CHECK(chosen.ok());
  }

  const CmdResult no_key = run_cli("pairs --scorer lvm", dir / "lvm",
                                   "env -u LVM_API_KEY");
  CHECK(no_key.exit_code == 3);
  CHECK(no_key.err.find("LVM_API_KEY") != std::string::npos);
}

TEST_CASE("train honors config files, flag overrides, and rounds=0") {
  const fs::path dir = scratch_root() / "train";
  fs::create_directories(dir);
  write_file(dir / "cfg.toml", R"(
[model]
dim = 32
layers = 2
heads = 2
max_seq = 160

[train]
sl_epochs = 1
vf_epochs = 1
batch = 8
pair_batch = 4
probe_prompts = 4
abort_ir_pct = 101.0
seed = 5

[pairs]
k = 3
)");
  const CmdResult sl_only =
      run_cli("train --config cfg.toml --rounds 0 --out sl_only", dir);
  REQUIRE(sl_only.exit_code == 0);
  CHECK(sl_only.out.find("completed") != std::string::npos);
  CHECK(fs::exists(dir / "sl_only" / "sl_round_0.ckpt"));
  CHECK(!fs::exists(dir / "sl_only" / "vf_round_1.ckpt"));
  CHECK(fs::exists(dir / "sl_only" / "train_log.jsonl"));
  CHECK(fs::exists(dir / "sl_only" / "run.json"));

  const CmdResult round =
      run_cli("train --config cfg.toml --rounds 1 --out alt", dir);
  REQUIRE(round.exit_code == 0);
  CHECK(round.out.find("SL SNAP VF SL") != std::string::npos);
  CHECK(fs::exists(dir / "alt" / "vf_round_1.ckpt"));

  write_file(dir / "bad.toml", "[train]\nnot_a_key = 1\n");
  const CmdResult bad = run_cli("train --config bad.toml", dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("unknown config key") != std::string::npos);

  const CmdResult missing = run_cli("train --config nope.toml", dir);
  CHECK(missing.exit_code == 2);
}

TEST_CASE("decode-arrays round-trips fixtures and rejects mutations") {
  const fs::path arrays = test::fixture_dir() / "arrays";
  const auto fixture = nlohmann::json::parse(
      slurp_file(arrays / "01_single_square.json"));

  const CmdResult ok = run_cli(
      "decode-arrays '" + (arrays / "01_single_square.json").string() + "'",
      scratch_root() / "decode_ok");
  REQUIRE(ok.exit_code == 0);
  CHECK(trimmed(ok.out) == fixture.at("expected_sequence").get<std::string>());

  const CmdResult overrun = run_cli(
      "decode-arrays --json '" + (arrays / "09_skip_overrun.json").string() +
          "'",
      scratch_root() / "decode_overrun");
  CHECK(overrun.exit_code == 1);
  const auto j = nlohmann::json::parse(overrun.out);
  CHECK(j.at("valid") == false);

  const CmdResult gone = run_cli("decode-arrays missing.json",
                                 scratch_root() / "decode_gone");
  CHECK(gone.exit_code == 2);
}
