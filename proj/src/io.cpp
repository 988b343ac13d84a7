#include "ecodrive/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace ecodrive {

std::string format_number(double value) {
  if (value == 0.0) return "0";  // drops the sign of -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const ProblemSpec& initial,
                          const std::vector<ScenarioEvent>& events) {
  for (std::size_t i = 0; i < kTrajectoryColumns.size(); ++i) out << (i ? "," : "") << kTrajectoryColumns[i];
  out << '\n';
  double cum = 0.0;
  double prev_rate = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.samples[i];
    const double rate = fuel_rate(s.u, std::max(0.0, s.v));
    if (i > 0) cum += 0.5 * (prev_rate + rate) * (s.t - traj.samples[i - 1].t);
    prev_rate = rate;
    const ProblemSpec env = events.empty() ? initial : environment_at(initial, events, s.t);
    out << format_number(s.t) << ',' << format_number(s.x) << ',' << format_number(s.v) << ','
        << format_number(s.u) << ',' << format_number(rate) << ',' << format_number(cum) << ','
        << format_number(env.trip.speed_limit_at(s.x)) << ',' << format_number(env.vehicle.grade.at(s.x)) << '\n';
  }
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_field(const std::string& text, std::size_t line, const std::string& column) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(value)) {
    throw CsvError("line " + std::to_string(line) + ": column '" + column + "' is not a finite number: '" + text +
                   "'");
  }
  return value;
}

}  // namespace

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError("trajectory CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  const char* wanted[4] = {"t_s", "x_m", "v_mps", "u"};
  std::size_t index[4];
  for (int k = 0; k < 4; ++k) {
    const auto it = std::find(header.begin(), header.end(), wanted[k]);
    if (it == header.end()) throw CsvError(std::string("trajectory CSV lacks the column '") + wanted[k] + "'");
    index[k] = static_cast<std::size_t>(it - header.begin());
  }
  Trajectory traj;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw CsvError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                     " fields, got " + std::to_string(fields.size()));
    }
    TrajectorySample s;
    s.t = parse_field(fields[index[0]], line_no, wanted[0]);
    s.x = parse_field(fields[index[1]], line_no, wanted[1]);
    s.v = parse_field(fields[index[2]], line_no, wanted[2]);
    s.u = parse_field(fields[index[3]], line_no, wanted[3]);
    traj.samples.push_back(s);
  }
  if (traj.empty()) throw CsvError("trajectory CSV has no data rows");
  traj.refresh_switching_times();
  return traj;
}

void write_value_slice_csv(std::ostream& out, const ValueField& field, std::size_t level) {
  const Grid& grid = field.grid();
  out << "x_m\\v_mps";
  for (std::size_t iv = 0; iv < grid.v.count; ++iv) out << ',' << format_number(grid.v.at(iv));
  out << '\n';
  for (std::size_t ix = 0; ix < grid.x.count; ++ix) {
    out << format_number(grid.x.at(ix));
    for (std::size_t iv = 0; iv < grid.v.count; ++iv) out << ',' << format_number(field.value(level, ix, iv));
    out << '\n';
  }
}

}  // namespace ecodrive
