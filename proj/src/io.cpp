#include "secad/io.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace secad {

using nlohmann::json;
using nlohmann::ordered_json;

std::string slurp_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::vector<DatasetRecord> read_jsonl_dataset(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<DatasetRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("text") || !j.contains("sequence"))
      throw IoError(p.string() + ":" + std::to_string(lineno) +
                    ": expected {\"text\", \"sequence\"}");
    out.push_back({j["text"].get<std::string>(),
                   j["sequence"].get<std::string>()});
  }
  return out;
}

void write_jsonl_dataset(const std::filesystem::path& p,
                         std::span<const DatasetRecord> records) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  for (const DatasetRecord& r : records) {
    ordered_json j;
    j["text"] = r.text;
    j["sequence"] = r.sequence;
    out << j.dump() << '\n';
  }
}

namespace {

const char* curve_kind_json(CurveKind k) {
  switch (k) {
    case CurveKind::Line: return "line";
    case CurveKind::Arc: return "arc";
    case CurveKind::Circle: return "circle";
  }
  return "?";
}

}  // namespace

ordered_json model_to_json(const CadModel& model) {
  ordered_json pairs = ordered_json::array();
  for (const CadPair& pair : model.pairs) {
    ordered_json faces = ordered_json::array();
    for (const Face& face : pair.sketch.faces) {
      ordered_json loops = ordered_json::array();
      for (const Loop& loop : face.loops) {
        ordered_json curves = ordered_json::array();
        for (const Curve& c : loop.curves) {
          ordered_json pts = ordered_json::array();
          for (const Point2D& p : c.points) pts.push_back({p.x, p.y});
          curves.push_back({{"kind", curve_kind_json(c.kind)},
                            {"points", std::move(pts)}});
        }
        loops.push_back({{"curves", std::move(curves)}});
      }
      faces.push_back({{"loops", std::move(loops)}});
    }
    const Extrusion& e = pair.extrusion;
    ordered_json ext{{"op", std::string(boolean_op_name(e.op))},
                     {"extent_top", e.extent_top},
                     {"extent_bottom", e.extent_bottom},
                     {"translation", e.translation},
                     {"rotation", e.rotation},
                     {"scale", e.scale},
                     {"scale_center", e.scale_center}};
    pairs.push_back({{"sketch", ordered_json{{"faces", std::move(faces)}}},
                     {"extrusion", std::move(ext)}});
  }
  return ordered_json{{"pairs", std::move(pairs)}};
}

ordered_json report_to_json(const ValidationReport& report) {
  ordered_json issues = ordered_json::array();
  for (const Issue& i : report.issues) {
    issues.push_back(
        {{"code", std::string(issue_code_name(i.code))},
         {"severity", i.severity == Severity::Error ? "error" : "warning"},
         {"location", i.location},
         {"message", i.message}});
  }
  return ordered_json{{"valid", report.is_valid()},
                      {"issues", std::move(issues)}};
}

uint64_t fnv1a(std::span<const uint8_t> bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a_hex(std::span<const uint8_t> bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string fnv1a_hex(std::string_view text) {
  return fnv1a_hex(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_run_json(const std::filesystem::path& dir, const RunInfo& info) {
  ordered_json j;
  j["schema_version"] = 1;
  j["tool"] = "secad";
  j["version"] = "0.1.0";
  j["command"] = info.command;
  j["args"] = info.args;
  j["seed"] = info.seed;
  j["config_hash"] = info.config_hash;
  j["started_at"] = info.started_at;
  j["finished_at"] = info.finished_at;
  j["outputs"] = info.outputs;
  write_file(dir / "run.json", j.dump(2) + "\n");
}

}  // namespace secad
