#include "rqlvc/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "rqlvc/errors.hpp"

namespace rqlvc {
namespace {

using nlohmann::json;

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ContractError(std::string("missing JSON field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("bad JSON field '") + key + "': " + e.what());
  }
}

template <typename T>
T get_field_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? get_field<T>(j, key) : fallback;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) parts.push_back(cur);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ContractError("trailing characters in number '" + s + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw ContractError("not a number: '" + s + "'");
  } catch (const std::out_of_range&) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    throw ContractError("number out of range: '" + s + "'");
  }
}

}  // namespace

std::string format_number(double value) { return fmt::format("{}", value); }

json to_json(const FrameProfile& f) {
  return {{"alpha", f.true_alpha},   {"beta", f.true_beta},        {"noise_sigma", f.noise_sigma},
          {"d0", f.d0},              {"decay_k", f.decay_k},       {"curvature", f.curvature},
          {"pixels", f.pixels}};
}

FrameProfile frame_profile_from_json(const json& j) {
  FrameProfile f;
  f.true_alpha = get_field<double>(j, "alpha");
  f.true_beta = get_field<double>(j, "beta");
  f.noise_sigma = get_field_or<double>(j, "noise_sigma", f.noise_sigma);
  f.d0 = get_field_or<double>(j, "d0", f.d0);
  f.decay_k = get_field_or<double>(j, "decay_k", f.decay_k);
  f.curvature = get_field_or<double>(j, "curvature", f.curvature);
  f.pixels = get_field_or<int>(j, "pixels", f.pixels);
  f.validate();
  return f;
}

json to_json(const SequenceProfile& p) {
  json frames = json::array();
  for (const auto& f : p.frames) frames.push_back(to_json(f));
  return {{"schema_version", kProfileSchemaVersion},
          {"name", p.name},
          {"gop_length", p.gop_length},
          {"frames", std::move(frames)}};
}

SequenceProfile sequence_profile_from_json(const json& j) {
  const int version = get_field<int>(j, "schema_version");
  if (version != kProfileSchemaVersion) {
    throw ContractError("unsupported sequence profile schema_version " + std::to_string(version));
  }
  SequenceProfile p;
  p.name = get_field<std::string>(j, "name");
  p.gop_length = get_field_or<int>(j, "gop_length", p.gop_length);
  for (const auto& f : get_field<json>(j, "frames")) p.frames.push_back(frame_profile_from_json(f));
  p.validate();
  return p;
}

json to_json(const RegressorPredictor& r) {
  json coefficients = json::array();
  for (const auto& row : r.coefficients()) coefficients.push_back(row);
  json features = json::array();
  for (const char* name : kRegressorFeatureNames) features.push_back(name);
  return {{"schema_version", kRegressorSchemaVersion},
          {"kind", "linear_log_rate_mae"},
          {"features", std::move(features)},
          {"grid", r.grid().levels},
          {"coefficients", std::move(coefficients)}};
}

RegressorPredictor regressor_from_json(const json& j) {
  if (get_field<int>(j, "schema_version") != kRegressorSchemaVersion) {
    throw ContractError("unsupported regressor schema_version");
  }
  const auto features = get_field<std::vector<std::string>>(j, "features");
  if (features.size() != kRegressorFeatureNames.size()) {
    throw ContractError("regressor feature list does not match");
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i] != kRegressorFeatureNames[i]) {
      throw ContractError("unexpected regressor feature '" + features[i] + "'");
    }
  }
  QualityGrid grid;
  grid.levels = get_field<std::array<double, kGridSize>>(j, "grid");
  const auto coefficients = get_field<RegressorPredictor::Coefficients>(j, "coefficients");
  return RegressorPredictor(grid, coefficients);
}

json to_json(const SequenceTrace& t) {
  json frames = json::array();
  for (const auto& f : t.frames) {
    frames.push_back({{"t", f.t},
                      {"r_target", f.r_target},
                      {"q_pred", f.q_pred},
                      {"r_enc", f.r_enc},
                      {"distortion", f.distortion},
                      {"psnr_db", f.psnr_db},
                      {"alpha", f.alpha},
                      {"beta", f.beta},
                      {"deviation_pct", f.deviation_pct},
                      {"fallback", f.fallback},
                      {"consumed_bits", f.consumed_bits}});
  }
  return {{"sequence", t.sequence},
          {"method", t.method},
          {"target", t.target},
          {"seed", t.seed},
          {"r_s", t.r_s},
          {"totals",
           {{"total_bits", t.total_bits()},
            {"mean_deviation_pct", t.mean_deviation_pct()},
            {"sequence_deviation_pct", t.sequence_deviation_pct()},
            {"mean_psnr_db", t.mean_psnr_db()}}},
          {"frames", std::move(frames)}};
}

SequenceTrace trace_from_json(const json& j) {
  SequenceTrace t;
  t.sequence = get_field<std::string>(j, "sequence");
  t.method = get_field<std::string>(j, "method");
  t.target = get_field<std::string>(j, "target");
  t.seed = get_field<std::uint64_t>(j, "seed");
  t.r_s = get_field_or<double>(j, "r_s", 0.0);
  for (const auto& f : get_field<json>(j, "frames")) {
    FrameRecord r;
    r.t = get_field<int>(f, "t");
    r.r_target = get_field<double>(f, "r_target");
    r.q_pred = get_field<double>(f, "q_pred");
    r.r_enc = get_field<double>(f, "r_enc");
    r.distortion = get_field_or<double>(f, "distortion", 0.0);
    r.psnr_db = get_field<double>(f, "psnr_db");
    r.alpha = get_field<double>(f, "alpha");
    r.beta = get_field<double>(f, "beta");
    r.deviation_pct = get_field<double>(f, "deviation_pct");
    r.fallback = get_field_or<bool>(f, "fallback", false);
    r.consumed_bits = get_field_or<double>(f, "consumed_bits", 0.0);
    t.frames.push_back(r);
  }
  return t;
}

void write_trace_csv(std::ostream& out, const SequenceTrace& trace) {
  out << kTraceCsvHeader << '\n';
  for (const auto& f : trace.frames) {
    out << f.t << ',' << format_number(f.r_target) << ',' << format_number(f.q_pred) << ','
        << format_number(f.r_enc) << ',' << format_number(f.psnr_db) << ','
        << format_number(f.alpha) << ',' << format_number(f.beta) << ','
        << format_number(f.deviation_pct) << '\n';
  }
}

SequenceTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kTraceCsvHeader) {
    throw ContractError("trace CSV header must be '" + std::string(kTraceCsvHeader) + "'");
  }
  SequenceTrace trace;
  double consumed = 0.0;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 8) throw ContractError("trace CSV row needs 8 columns: " + line);
    FrameRecord r;
    r.t = static_cast<int>(parse_double(cols[0]));
    r.r_target = parse_double(cols[1]);
    r.q_pred = parse_double(cols[2]);
    r.r_enc = parse_double(cols[3]);
    r.psnr_db = parse_double(cols[4]);
    r.alpha = parse_double(cols[5]);
    r.beta = parse_double(cols[6]);
    r.deviation_pct = parse_double(cols[7]);
    consumed += r.r_enc;
    r.consumed_bits = consumed;
    trace.frames.push_back(r);
  }
  return trace;
}

std::string trace_file_name(const SequenceTrace& trace) {
  return fmt::format("{}__{}__{}__s{}.csv", trace.sequence, trace.method, trace.target,
                     trace.seed);
}

SequenceTrace read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open trace file " + path.string());
  SequenceTrace trace = read_trace_csv(in);
  const std::string stem = path.stem().string();
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = stem.find("__", start);
    if (pos == std::string::npos) {
      parts.push_back(stem.substr(start));
      break;
    }
    parts.push_back(stem.substr(start, pos - start));
    start = pos + 2;
  }
  if (parts.size() != 4 || parts[3].size() < 2 || parts[3][0] != 's') {
    throw ContractError("trace file name must be <sequence>__<method>__<target>__s<seed>.csv: " +
                        path.filename().string());
  }
  trace.sequence = parts[0];
  trace.method = parts[1];
  trace.target = parts[2];
  trace.seed = std::stoull(parts[3].substr(1));
  return trace;
}

void write_summary_csv(std::ostream& out, const Summary& summary) {
  out << kSummaryCsvHeader << '\n';
  for (const auto& r : summary.rows) {
    out << r.sequence << ',' << r.method << ',' << r.target << ','
        << format_number(r.mean_deviation_pct) << ',' << format_number(r.bd_rate_pct) << '\n';
  }
}

std::vector<RdPoint> read_rd_curve_csv(std::istream& in) {
  std::vector<RdPoint> curve;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split(line, ',');
    if (cols.size() < 2) throw ContractError("RD curve row needs rate,psnr: " + line);
    if (first) {
      first = false;
      const std::string c0 = trim(cols[0]);
      if (!c0.empty() && (std::isalpha(static_cast<unsigned char>(c0[0])) != 0)) continue;
    }
    curve.push_back({parse_double(trim(cols[0])), parse_double(trim(cols[1]))});
  }
  return curve;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ContractError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out << text;
  if (!out) throw ContractError("failed writing " + path.string());
}

}  // namespace rqlvc
