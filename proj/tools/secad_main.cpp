// secad: operator surface for the sketch-and-extrude pipeline.
// Subcommands: parse, render, eval, pairs, train, decode-arrays.
// Exit codes: 0 ok, 1 invalid input, 2 I/O failure, 3 missing credential.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "secad/config.hpp"
#include "secad/decoder.hpp"
#include "secad/io.hpp"
#include "secad/lvm_client.hpp"
#include "secad/metrics.hpp"
#include "secad/prefgen.hpp"
#include "secad/render.hpp"
#include "secad/sem.hpp"
#include "secad/synth.hpp"
#include "secad/trainkit.hpp"

namespace {

using namespace secad;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kIoFailure = 2;
constexpr int kNoCredential = 3;

struct IoFailureExit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_input(const std::string& path) {
  if (path == "-") {
    return std::string(std::istreambuf_iterator<char>(std::cin),
                       std::istreambuf_iterator<char>());
  }
  try {
    return slurp_file(path);
  } catch (const std::exception& e) {
    throw IoFailureExit(e.what());
  }
}

// Provenance sidecar: one per command invocation, enough to re-run the
// deterministic paths bit-identically.
struct Provenance {
  RunInfo info;
  fs::path dir;

  Provenance(std::string command, const std::vector<std::string>& args,
             std::uint64_t seed, fs::path out_dir)
      : dir(std::move(out_dir)) {
    info.command = std::move(command);
    info.args = args;
    info.seed = seed;
    std::string flat;
    for (const std::string& a : args) flat += a + '\n';
    info.config_hash = fnv1a_hex(flat);
    info.started_at = iso8601_utc_now();
  }

  void add_output(const fs::path& p) { info.outputs.push_back(p.string()); }

  void commit() {
    if (dir.empty()) return;  // filter-style run without --out: no sidecar
    info.finished_at = iso8601_utc_now();
    fs::create_directories(dir);
    write_run_json(dir, info);
  }
};

std::vector<std::string> effective_args(const CLI::App& cmd) {
  std::vector<std::string> out;
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_name().empty() || opt->count() == 0) continue;
    for (const std::string& v : opt->results())
      out.push_back(opt->get_name() + "=" + v);
  }
  return out;
}

void print_report(const ValidationReport& report, std::ostream& out) {
  for (const Issue& issue : report.issues)
    out << issue_code_name(issue.code) << " at " << issue.location << ": "
        << issue.message << "\n";
}

nlohmann::ordered_json report_json(const std::string& schema,
                                   const ValidationReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = schema;
  j["valid"] = report.is_valid();
  j["issues"] = report_to_json(report)["issues"];
  return j;
}

// --- parse -------------------------------------------------------------------

struct ParseArgs {
  std::string input = "-";
  std::string out_dir;  // empty: no provenance sidecar
  bool json = false;
};

int cmd_parse(const ParseArgs& args, const std::vector<std::string>& argv) {
  Provenance prov("parse", argv, 0, args.out_dir);
  const std::string text = read_input(args.input);
  const ParseResult parsed = parse_sequence(text);

  nlohmann::ordered_json j = report_json("secad.parse/1", parsed.report);
  if (parsed.ok()) {
    const std::string canonical = serialize(*parsed.model);
    if (args.json) {
      j["canonical"] = canonical;
      std::cout << j.dump(2) << "\n";
    } else {
      std::cout << canonical << "\n";
    }
    prov.commit();
    return kOk;
  }
  if (args.json)
    std::cout << j.dump(2) << "\n";
  else
    print_report(parsed.report, std::cerr);
  prov.commit();
  return kInvalid;
}

// --- render ------------------------------------------------------------------

struct RenderArgs {
  std::string input;
  std::string out_dir = ".";
  int resolution = kAssemblyRes;
  int points = 2048;
  std::uint64_t seed = 42;
};

int cmd_render(const RenderArgs& args, const std::vector<std::string>& argv) {
  Provenance prov("render", argv, args.seed, args.out_dir);
  const std::string text = read_input(args.input);
  const ParseResult parsed = parse_sequence(text);
  if (!parsed.ok()) {
    print_report(parsed.report, std::cerr);
    return kInvalid;
  }
  const AssembleResult assembled = assemble(*parsed.model, args.resolution);
  if (!assembled.ok()) {
    print_report(assembled.report, std::cerr);
    return kInvalid;
  }
  const PointCloud cloud =
      sample_points(assembled.solid, args.points, args.seed);

  const std::string stem =
      args.input == "-" ? "render" : fs::path(args.input).stem().string();
  const fs::path base = fs::path(args.out_dir) / stem;
  fs::create_directories(args.out_dir);
  try {
    write_xyz(base.string() + ".xyz", cloud);
    write_voxels_rle(base.string() + ".rle", assembled.solid);
    write_snapshot_pgm(base.string() + ".pgm", assembled.solid);
  } catch (const std::exception& e) {
    std::cerr << "write failed: " << e.what() << "\n";
    return kIoFailure;
  }
  for (const char* ext : {".xyz", ".rle", ".pgm"})
    prov.add_output(base.string() + ext);
  prov.commit();

  std::cout << "wrote " << base.string() << ".{xyz,rle,pgm}  res "
            << args.resolution << "  points " << args.points
            << "  filled voxels " << assembled.solid.occupied_count() << "\n";
  return kOk;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string gen_path;
  std::string ref_path;
  std::string out_dir = ".";
  int points = 1024;
  int resolution = 64;
  std::uint64_t seed = 17;
  int threads = 0;
};

int cmd_eval(const EvalArgs& args, const std::vector<std::string>& argv) {
  Provenance prov("eval", argv, args.seed, args.out_dir);
  std::vector<DatasetRecord> gen;
  std::vector<DatasetRecord> ref;
  try {
    gen = read_jsonl_dataset(args.gen_path);
    ref = read_jsonl_dataset(args.ref_path);
  } catch (const IoError& e) {
    throw IoFailureExit(e.what());
  }
  if (gen.empty()) {
    std::cerr << "RecordMismatch: generation set is empty\n";
    return kInvalid;
  }
  if (gen.size() != ref.size()) {
    std::cerr << "RecordMismatch: " << gen.size() << " generated vs "
              << ref.size() << " reference records\n";
    return kInvalid;
  }

  std::vector<std::string> gen_seqs;
  std::vector<std::string> ref_seqs;
  for (const DatasetRecord& r : gen) gen_seqs.push_back(r.sequence);
  for (const DatasetRecord& r : ref) ref_seqs.push_back(r.sequence);

  EvalOptions options;
  options.points = args.points;
  options.resolution = args.resolution;
  options.seed = args.seed;
  options.threads = args.threads;
  const EvalReport report = evaluate_corpus(gen_seqs, ref_seqs, options);

  nlohmann::ordered_json j =
      nlohmann::ordered_json::parse(eval_report_to_json(report));
  j["schema"] = "secad.eval/1";
  const fs::path out = fs::path(args.out_dir) / "eval.json";
  fs::create_directories(args.out_dir);
  write_file(out, j.dump(2) + "\n");
  prov.add_output(out);
  prov.commit();
  std::cout << j.dump(2) << "\n";
  return kOk;
}

// --- pairs -------------------------------------------------------------------

struct PairsArgs {
  std::string data_path;  // empty: toy corpus
  std::string checkpoint;
  std::string scorer = "oracle";
  std::string out_dir = ".";
  int k = 5;
  std::uint64_t seed = 42;
  double min_margin = 2.0;
  double min_chosen = 5.0;
};

int cmd_pairs(const PairsArgs& args, const std::vector<std::string>& argv) {
  Provenance prov("pairs", argv, args.seed, args.out_dir);
  std::vector<DatasetRecord> records;
  if (args.data_path.empty()) {
    records = toy_corpus();
  } else {
    try {
      records = read_jsonl_dataset(args.data_path);
    } catch (const IoError& e) {
      throw IoFailureExit(e.what());
    }
  }

  ScoreFn scorer;  // empty = geometric oracle
  std::shared_ptr<LvmClient> client;
  if (args.scorer == "lvm") {
    const LvmConfig config = lvm_config_from_env();
    client = std::make_shared<LvmClient>(config,
                                         http_transport(config.base_url));
    scorer = lvm_scorer(client);
  }

  std::optional<Decoder> model;
  CandidateSampler sampler;
  if (!args.checkpoint.empty()) {
    model.emplace(load_checkpoint(args.checkpoint));
    sampler = decoder_sampler(*model);
  } else {
    sampler = perturbation_sampler(records);
  }

  SamplingConfig sampling;
  sampling.k = args.k;
  PairFilter filter;
  filter.min_margin = args.min_margin;
  filter.min_chosen = args.min_chosen;
  const std::vector<PreferencePair> pairs =
      generate_pairs(records, sampler, sampling, args.seed, filter, scorer);

  const fs::path out = fs::path(args.out_dir) / "pairs.jsonl";
  fs::create_directories(args.out_dir);
  write_pairs_jsonl(out.string(), pairs);
  prov.add_output(out);
  prov.commit();
  std::cout << pairs.size() << " pairs from " << records.size()
            << " records -> " << out.string() << "\n";
  return kOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string scorer = "oracle";
  std::string out_dir = "train_out";
  bool fast = false;
  bool vf_only = false;
  int rounds = -1;               // <0: keep config/default
  std::int64_t seed = -1;        // <0: keep config/default
  int sl_epochs = -1;            // <0: keep config/default
};

void reject_unknown_keys(const KvConfig& config) {
  static const std::map<std::string, std::vector<std::string>> known = {
      {"data", {"source", "copies"}},
      {"model", {"dim", "layers", "heads", "max_seq"}},
      {"train",
       {"sl_epochs", "vf_epochs", "sl_refresh_epochs", "rounds", "batch",
        "pair_batch", "lr", "lr_vf", "beta", "weight_decay", "abort_ir_pct",
        "probe_prompts", "seed", "vf_only"}},
      {"pairs", {"k", "temperature", "top_p", "top_k", "min_margin",
                 "min_chosen", "augment"}},
  };
  for (const auto& [key, value] : config.flat()) {
    (void)value;
    const size_t dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    const auto it = known.find(section);
    if (it == known.end() ||
        std::find(it->second.begin(), it->second.end(), name) ==
            it->second.end())
      throw ConfigError("unknown config key: " + key);
  }
}

int cmd_train(const TrainArgs& args, const std::vector<std::string>& argv) {
  KvConfig config;
  if (!args.config_path.empty()) {
    try {
      config = KvConfig::load(args.config_path);
    } catch (const IoError& e) {
      throw IoFailureExit(e.what());
    }
    reject_unknown_keys(config);
  }

  std::vector<DatasetRecord> records;
  const std::string source = config.get_string("data", "source", "toy");
  if (source == "toy") {
    const int copies = config.get_int("data", "copies", 1);
    records = copies <= 1
                  ? toy_corpus()
                  : toy_training_set(copies,
                                     config.get_int("train", "seed", 1234));
  } else {
    try {
      records = read_jsonl_dataset(source);
    } catch (const IoError& e) {
      throw IoFailureExit(e.what());
    }
  }

  DecoderConfig model_config;
  model_config.dim = config.get_int("model", "dim", model_config.dim);
  model_config.layers = config.get_int("model", "layers", model_config.layers);
  model_config.heads = config.get_int("model", "heads", model_config.heads);
  model_config.max_seq =
      config.get_int("model", "max_seq", model_config.max_seq);

  TrainOptions options;
  options.sl_epochs = config.get_int("train", "sl_epochs", options.sl_epochs);
  options.vf_epochs = config.get_int("train", "vf_epochs", options.vf_epochs);
  options.sl_refresh_epochs =
      config.get_int("train", "sl_refresh_epochs", options.sl_refresh_epochs);
  options.rounds = config.get_int("train", "rounds", options.rounds);
  options.batch = config.get_int("train", "batch", options.batch);
  options.pair_batch =
      config.get_int("train", "pair_batch", options.pair_batch);
  options.lr = config.get_double("train", "lr", options.lr);
  options.lr_vf = config.get_double("train", "lr_vf", options.lr_vf);
  options.beta = config.get_double("train", "beta", options.beta);
  options.weight_decay =
      config.get_double("train", "weight_decay", options.weight_decay);
  options.abort_ir_pct =
      config.get_double("train", "abort_ir_pct", options.abort_ir_pct);
  options.probe_prompts =
      config.get_int("train", "probe_prompts", options.probe_prompts);
  options.seed = static_cast<std::uint64_t>(
      config.get_int("train", "seed", static_cast<int>(options.seed)));
  options.vf_only = config.get_bool("train", "vf_only", options.vf_only);

  // flags override file values
  if (args.fast) options.sl_epochs = 8;
  if (args.vf_only) options.vf_only = true;
  if (args.rounds >= 0) options.rounds = args.rounds;
  if (args.seed >= 0) options.seed = static_cast<std::uint64_t>(args.seed);
  if (args.sl_epochs >= 0) options.sl_epochs = args.sl_epochs;
  options.checkpoint_dir = args.out_dir;
  options.log_path = (fs::path(args.out_dir) / "train_log.jsonl").string();

  SamplingConfig sampling;
  sampling.k = config.get_int("pairs", "k", sampling.k);
  sampling.temperature =
      config.get_double("pairs", "temperature", sampling.temperature);
  sampling.top_p = config.get_double("pairs", "top_p", sampling.top_p);
  sampling.top_k = config.get_int("pairs", "top_k", sampling.top_k);
  PairFilter filter;
  filter.min_margin =
      config.get_double("pairs", "min_margin", filter.min_margin);
  filter.min_chosen =
      config.get_double("pairs", "min_chosen", filter.min_chosen);
  const bool augment = config.get_bool("pairs", "augment", true);

  ScoreFn scorer;
  std::shared_ptr<LvmClient> client;
  if (args.scorer == "lvm") {
    const LvmConfig lvm_config = lvm_config_from_env();
    client = std::make_shared<LvmClient>(lvm_config,
                                         http_transport(lvm_config.base_url));
    scorer = lvm_scorer(client);
  }

  Provenance prov("train", argv, options.seed, args.out_dir);
  fs::create_directories(args.out_dir);
  Decoder model(model_config, options.seed);
  Trainer trainer(model, records, options);

  // Per-round pairs are drawn from the current policy; with augment the
  // scripted perturbations of each reference join the candidate pool so a
  // weak early policy still yields scoreable contrast.
  const CandidateSampler perturb = perturbation_sampler(records);
  trainer.set_pair_source([&](const Decoder& current, int round) {
    const CandidateSampler from_policy = decoder_sampler(current);
    const CandidateSampler combined =
        [&](const std::string& prompt, int k, std::uint64_t seed) {
          std::vector<std::string> cands = from_policy(prompt, k, seed);
          if (augment) {
            const std::vector<std::string> extra = perturb(prompt, k, seed);
            cands.insert(cands.end(), extra.begin(), extra.end());
          }
          return cands;
        };
    return generate_pairs(records, combined, sampling,
                          Rng::mix(options.seed, 0xda7a + round), filter,
                          scorer);
  });

  const RunStatus status = trainer.run();
  prov.add_output(options.log_path);
  prov.commit();
  std::cout << (status == RunStatus::Completed ? "completed"
                                               : "aborted: high invalidity")
            << "  phases:";
  for (const std::string& phase : trainer.phase_trace())
    std::cout << " " << phase;
  std::cout << "\n";
  return kOk;
}

// --- decode-arrays -----------------------------------------------------------

struct DecodeArraysArgs {
  std::string input;
  std::string out_dir;  // empty: no provenance sidecar
  bool json = false;
};

int cmd_decode_arrays(const DecodeArraysArgs& args,
                      const std::vector<std::string>& argv) {
  Provenance prov("decode-arrays", argv, 0, args.out_dir);
  const std::string text = read_input(args.input);
  CommandArrays arrays;
  int pad_offset = 0;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    arrays.se_cmd = j.at("se_cmd").get<std::vector<int>>();
    for (const auto& xy : j.at("se_xy"))
      arrays.se_xy.push_back(
          {xy.at(0).get<int8_t>(), xy.at(1).get<int8_t>()});
    arrays.se_ext = j.at("se_ext").get<std::vector<int>>();
    pad_offset = j.value("pad_offset", 0);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "bad array file: " << e.what() << "\n";
    return kInvalid;
  }

  const DecodeResult decoded = decode_command_arrays(arrays, pad_offset);
  nlohmann::ordered_json j = report_json("secad.decode/1", decoded.report);
  if (decoded.ok()) {
    const std::string canonical = serialize(*decoded.model);
    if (args.json) {
      j["canonical"] = canonical;
      std::cout << j.dump(2) << "\n";
    } else {
      std::cout << canonical << "\n";
    }
    prov.commit();
    return kOk;
  }
  if (args.json)
    std::cout << j.dump(2) << "\n";
  else
    print_report(decoded.report, std::cerr);
  prov.commit();
  return kInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sketch-and-extrude text-to-CAD pipeline"};
  app.require_subcommand(1);

  ParseArgs parse_args;
  CLI::App* parse_cmd = app.add_subcommand("parse", "validate a sequence");
  parse_cmd->add_option("input", parse_args.input, "sequence file or - for stdin");
  parse_cmd->add_flag("--json", parse_args.json, "emit the report as JSON");
  parse_cmd->add_option("--out", parse_args.out_dir, "provenance directory");

  RenderArgs render_args;
  CLI::App* render_cmd = app.add_subcommand("render", "render to solid/cloud");
  render_cmd->add_option("input", render_args.input, "sequence file")
      ->required();
  render_cmd->add_option("--res", render_args.resolution, "voxel resolution");
  render_cmd->add_option("--points", render_args.points, "cloud size");
  render_cmd->add_option("--seed", render_args.seed, "sampling seed");
  render_cmd->add_option("--out", render_args.out_dir, "output directory");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "corpus metric report");
  eval_cmd->add_option("--gen", eval_args.gen_path, "generated JSONL")
      ->required();
  eval_cmd->add_option("--ref", eval_args.ref_path, "reference JSONL")
      ->required();
  eval_cmd->add_option("--points", eval_args.points, "cloud size");
  eval_cmd->add_option("--res", eval_args.resolution, "voxel resolution");
  eval_cmd->add_option("--seed", eval_args.seed, "sampling seed");
  eval_cmd->add_option("--threads", eval_args.threads, "worker threads");
  eval_cmd->add_option("--out", eval_args.out_dir, "output directory");

  PairsArgs pairs_args;
  CLI::App* pairs_cmd = app.add_subcommand("pairs", "preference pairs");
  pairs_cmd->add_option("--data", pairs_args.data_path,
                        "records JSONL (default: toy corpus)");
  pairs_cmd->add_option("--checkpoint", pairs_args.checkpoint,
                        "sample from this model instead of perturbations");
  pairs_cmd->add_option("--scorer", pairs_args.scorer, "oracle|lvm")
      ->check(CLI::IsMember({"oracle", "lvm"}));
  pairs_cmd->add_option("--k", pairs_args.k, "candidates per prompt");
  pairs_cmd->add_option("--seed", pairs_args.seed, "sampling seed");
  pairs_cmd->add_option("--min-margin", pairs_args.min_margin, "score gap");
  pairs_cmd->add_option("--min-chosen", pairs_args.min_chosen, "quality floor");
  pairs_cmd->add_option("--out", pairs_args.out_dir, "output directory");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "alternating schedule");
  train_cmd->add_option("--config", train_args.config_path, "config file");
  train_cmd->add_flag("--fast", train_args.fast, "8 supervised epochs");
  train_cmd->add_flag("--vf-only", train_args.vf_only,
                      "drop the supervised refresh");
  train_cmd->add_option("--scorer", train_args.scorer, "oracle|lvm")
      ->check(CLI::IsMember({"oracle", "lvm"}));
  train_cmd->add_option("--rounds", train_args.rounds, "preference rounds");
  train_cmd->add_option("--seed", train_args.seed, "training seed");
  train_cmd->add_option("--sl-epochs", train_args.sl_epochs,
                        "initial supervised epochs");
  train_cmd->add_option("--out", train_args.out_dir, "checkpoint directory");

  DecodeArraysArgs decode_args;
  CLI::App* decode_cmd =
      app.add_subcommand("decode-arrays", "decode command arrays");
  decode_cmd->add_option("input", decode_args.input, "JSON file or - for stdin");
  decode_cmd->add_flag("--json", decode_args.json, "emit the report as JSON");
  decode_cmd->add_option("--out", decode_args.out_dir, "provenance directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kInvalid;
  }

  try {
    if (parse_cmd->parsed())
      return cmd_parse(parse_args, effective_args(*parse_cmd));
    if (render_cmd->parsed())
      return cmd_render(render_args, effective_args(*render_cmd));
    if (eval_cmd->parsed())
      return cmd_eval(eval_args, effective_args(*eval_cmd));
    if (pairs_cmd->parsed())
      return cmd_pairs(pairs_args, effective_args(*pairs_cmd));
    if (train_cmd->parsed())
      return cmd_train(train_args, effective_args(*train_cmd));
    if (decode_cmd->parsed())
      return cmd_decode_arrays(decode_args, effective_args(*decode_cmd));
  } catch (const MissingCredential& e) {
    std::cerr << "missing credential: " << e.what() << "\n";
    return kNoCredential;
  } catch (const IoFailureExit& e) {
    std::cerr << "I/O failure: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kOk;
}
