#include "sseplab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace sseplab::harness {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail_line(int line, const std::string& message) {
  throw config_error("line " + std::to_string(line) + ": " + message);
}

double parse_double(const std::string& token, int line, const std::string& key) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    fail_line(line, "value for '" + key + "' is not a number: '" + token + "'");
  }
  if (used != token.size()) fail_line(line, "trailing characters after number for '" + key + "'");
  return value;
}

std::int64_t parse_int(const std::string& token, int line, const std::string& key) {
  std::size_t used = 0;
  std::int64_t value = 0;
  try {
    value = std::stoll(token, &used, 10);
  } catch (const std::exception&) {
    fail_line(line, "value for '" + key + "' is not an integer: '" + token + "'");
  }
  if (used != token.size()) fail_line(line, "trailing characters after integer for '" + key + "'");
  return value;
}

std::uint64_t parse_seed(const std::string& token, int line) {
  if (!token.empty() && token[0] == '-') fail_line(line, "seed must be nonnegative");
  std::size_t used = 0;
  std::uint64_t value = 0;
  try {
    value = std::stoull(token, &used, 0);  // base 0: decimal or 0x-prefixed hex
  } catch (const std::exception&) {
    fail_line(line, "value for 'seed' is not an unsigned integer: '" + token + "'");
  }
  if (used != token.size()) fail_line(line, "trailing characters after seed");
  return value;
}

bool parse_bool(const std::string& token, int line, const std::string& key) {
  if (token == "true" || token == "1") return true;
  if (token == "false" || token == "0") return false;
  fail_line(line, "value for '" + key + "' must be true/false: '" + token + "'");
}

Mode parse_mode(const std::string& token, int line) {
  if (token == "simulate") return Mode::simulate;
  if (token == "oracle") return Mode::oracle;
  if (token == "verify") return Mode::verify;
  if (token == "report") return Mode::report;
  fail_line(line, "unknown mode '" + token + "'");
}

std::vector<double> parse_grid(const std::string& token, int line) {
  std::vector<double> grid;
  std::size_t start = 0;
  while (start <= token.size()) {
    const std::size_t comma = token.find(',', start);
    const std::string part =
        trim(token.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (part.empty()) fail_line(line, "empty entry in t_grid");
    grid.push_back(parse_double(part, line, "t_grid"));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return grid;
}

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

}  // namespace

std::vector<double> ExperimentSpec::absolute_times() const {
  std::vector<double> times;
  times.reserve(t_grid.size());
  for (double t : t_grid) times.push_back(lambda * t);
  return times;
}

void ExperimentSpec::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw config_error("rho must lie in [0, 1]");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw config_error("lambda must be positive");
  if (t_grid.empty()) throw config_error("t_grid must not be empty");
  for (double t : t_grid) {
    if (!(t > 0.0 && t <= 1.0)) throw config_error("t_grid entries must lie in (0, 1]");
  }
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > t_grid[i - 1])) throw config_error("t_grid must be strictly increasing");
  }
  if (replicates < 1) throw config_error("replicates must be at least 1");
  if (!(window_delta > 0.0 && window_delta < 1.0)) {
    throw config_error("window_delta must lie in (0, 1)");
  }
  if (out.empty()) throw config_error("output directory must not be empty");
}

ExperimentSpec parse_spec(const std::string& text) {
  ExperimentSpec spec;
  bool seen_rho = false, seen_lambda = false, seen_seed = false;
  std::vector<std::string> seen_keys;

  std::istringstream stream(text);
  std::string raw;
  int line = 0;
  while (std::getline(stream, raw)) {
    ++line;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string entry = trim(raw);
    if (entry.empty()) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) fail_line(line, "expected 'key = value'");
    const std::string key = trim(entry.substr(0, eq));
    const std::string value = trim(entry.substr(eq + 1));
    if (key.empty()) fail_line(line, "missing key before '='");
    if (value.empty()) fail_line(line, "missing value for '" + key + "'");
    if (std::find(seen_keys.begin(), seen_keys.end(), key) != seen_keys.end()) {
      fail_line(line, "duplicate key '" + key + "'");
    }
    seen_keys.push_back(key);

    if (key == "mode") {
      spec.mode = parse_mode(value, line);
    } else if (key == "rho") {
      spec.rho = parse_double(value, line, key);
      if (!(spec.rho >= 0.0 && spec.rho <= 1.0)) fail_line(line, "rho must lie in [0, 1]");
      seen_rho = true;
    } else if (key == "lambda") {
      spec.lambda = parse_double(value, line, key);
      if (!(spec.lambda > 0.0)) fail_line(line, "lambda must be positive");
      seen_lambda = true;
    } else if (key == "t_grid") {
      spec.t_grid = parse_grid(value, line);
    } else if (key == "replicates") {
      spec.replicates = parse_int(value, line, key);
      if (spec.replicates < 1) fail_line(line, "replicates must be at least 1");
    } else if (key == "seed") {
      spec.seed = parse_seed(value, line);
      seen_seed = true;
    } else if (key == "window_delta") {
      spec.window_delta = parse_double(value, line, key);
      if (!(spec.window_delta > 0.0 && spec.window_delta < 1.0)) {
        fail_line(line, "window_delta must lie in (0, 1)");
      }
    } else if (key == "retain_paths") {
      spec.retain_paths = parse_bool(value, line, key);
    } else if (key == "out") {
      spec.out = value;
    } else {
      fail_line(line, "unknown key '" + key + "'");
    }
  }

  if (!seen_rho) throw config_error("missing required key 'rho'");
  if (!seen_lambda) throw config_error("missing required key 'lambda'");
  if (!seen_seed) throw config_error("missing required key 'seed'");
  spec.validate();
  return spec;
}

ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open spec file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_spec(text.str());
}

std::string rows_to_csv(std::vector<ResultRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.replicate != b.replicate) return a.replicate < b.replicate;
    return a.t < b.t;
  });
  std::string csv = "replicate,t,J,X,K,M,A,resampled\n";
  for (const ResultRow& row : rows) {
    csv += std::to_string(row.replicate);
    csv += ',';
    csv += format_double(row.t);
    csv += ',';
    csv += std::to_string(row.current);
    csv += ',';
    csv += std::to_string(row.tagged);
    csv += ',';
    csv += std::to_string(row.crossings);
    csv += ',';
    csv += format_double(row.martingale);
    csv += ',';
    csv += format_double(row.drift);
    csv += ',';
    csv += row.resampled ? '1' : '0';
    csv += '\n';
  }
  return csv;
}

void write_rows(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invariant_violation("cannot open '" + path + "' for writing");
  out << rows_to_csv(rows);
  out.flush();
  if (!out) throw invariant_violation("write failure on '" + path + "'");
}

std::vector<ResultRow> read_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open rows file '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw config_error("rows file '" + path + "' is empty");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != "replicate,t,J,X,K,M,A,resampled") {
    throw config_error("rows file '" + path + "' has an unexpected header");
  }
  std::vector<ResultRow> rows;
  std::string raw;
  int line = 1;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = raw.find(',', start);
      fields.push_back(raw.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 8) fail_line(line, "expected 8 comma-separated fields");
    ResultRow row;
    row.replicate = parse_int(fields[0], line, "replicate");
    row.t = parse_double(fields[1], line, "t");
    row.current = parse_int(fields[2], line, "J");
    row.tagged = parse_int(fields[3], line, "X");
    row.crossings = parse_int(fields[4], line, "K");
    row.martingale = parse_double(fields[5], line, "M");
    row.drift = parse_double(fields[6], line, "A");
    row.resampled = parse_bool(fields[7], line, "resampled");
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sseplab::harness
