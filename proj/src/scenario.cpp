#include "ecodrive/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ecodrive {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using Kind = ScenarioError::Kind;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string indexed(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// A well-formed document whose field has the wrong JSON type holds an invalid
// value; only a non-object document is a syntax problem.
[[noreturn]] void type_error(const std::string& path, const char* expected) {
  const Kind kind = path == "<document>" ? Kind::syntax : Kind::invalid_value;
  throw ScenarioError(kind, path, "'" + path + "' must be " + expected);
}

// Object view that remembers which keys were read; finish() rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) type_error(path_.empty() ? "<document>" : path_, "an object");
  }

  const json* child(const std::string& key) {
    used_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void number(const std::string& key, double& out) {
    if (const json* j = child(key)) {
      if (!j->is_number()) type_error(path(key), "a number");
      out = j->get<double>();
    }
  }

  void count(const std::string& key, std::size_t& out) {
    if (const json* j = child(key)) {
      if (!j->is_number_unsigned()) type_error(path(key), "a nonnegative integer");
      out = j->get<std::size_t>();
    }
  }

  void seed(const std::string& key, std::uint64_t& out) {
    if (const json* j = child(key)) {
      if (!j->is_number_unsigned()) type_error(path(key), "a nonnegative integer");
      out = j->get<std::uint64_t>();
    }
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!used_.contains(item.key())) {
        const std::string p = join(path_, item.key());
        throw ScenarioError(Kind::unknown_key, p, "unknown key '" + p + "'");
      }
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

const json& array_at(const json* j, const std::string& path) {
  if (!j->is_array()) type_error(path, "an array");
  return *j;
}

std::vector<double> numbers(const json& arr, const std::string& path) {
  std::vector<double> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) type_error(indexed(path, i), "a number");
    out.push_back(arr[i].get<double>());
  }
  return out;
}

std::string text(const json* j, const std::string& path) {
  if (!j->is_string()) type_error(path, "a string");
  return j->get<std::string>();
}

// Runs a domain validation and reports its failure against a field path.
template <class F>
void checked(const std::string& field, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(Kind::invalid_value, field, "invalid value in '" + field + "': " + e.what());
  } catch (const std::domain_error& e) {
    throw ScenarioError(Kind::invalid_value, field, "invalid value in '" + field + "': " + e.what());
  }
}

DavisCoefficients read_davis(const json& node, const std::string& path) {
  DavisCoefficients d;
  ObjectReader r(node, path);
  r.number("a", d.a);
  r.number("b", d.b);
  r.number("c", d.c);
  r.finish();
  return d;
}

void read_vehicle(const json& node, VehicleParams& vehicle) {
  ObjectReader r(node, "vehicle");
  if (const json* j = r.child("davis")) vehicle.davis = read_davis(*j, r.path("davis"));
  if (const json* j = r.child("grade")) {
    const std::string path = r.path("grade");
    const json& arr = array_at(j, path);
    std::vector<GradeBreakpoint> bps;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader item(arr[i], indexed(path, i));
      GradeBreakpoint bp;
      item.number("position", bp.position);
      item.number("accel", bp.accel);
      item.finish();
      bps.push_back(bp);
    }
    checked(path, [&] { vehicle.grade = GradeProfile(std::move(bps)); });
  }
  r.number("max_traction", vehicle.max_traction);
  if (const json* j = r.child("traction_model")) {
    if (text(j, r.path("traction_model")) != "affine") {
      throw ScenarioError(Kind::invalid_value, r.path("traction_model"),
                          "invalid value in 'vehicle.traction_model': only \"affine\" is supported");
    }
  }
  r.finish();
  checked("vehicle", [&] { vehicle.validate(); });
}

void read_trip(const json& node, TripSpec& trip) {
  ObjectReader r(node, "trip");
  r.number("length", trip.length);
  r.number("horizon", trip.horizon);
  r.number("v_start", trip.v_start);
  r.number("v_end", trip.v_end);
  if (const json* j = r.child("speed_limits")) {
    const std::string path = r.path("speed_limits");
    const json& arr = array_at(j, path);
    trip.speed_limits.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader item(arr[i], indexed(path, i));
      SpeedLimitSegment seg;
      item.number("end", seg.end);
      item.number("limit", seg.limit);
      item.finish();
      trip.speed_limits.push_back(seg);
    }
  } else {
    // One segment over the whole trip at the default limit.
    trip.speed_limits = {{trip.length, TripSpec{}.speed_limits.front().limit}};
  }
  r.finish();
  checked("trip", [&] { trip.validate(); });
}

EventKind event_kind(const std::string& name, const std::string& path) {
  for (EventKind k : {EventKind::speed_limit, EventKind::grade, EventKind::davis, EventKind::target_speed}) {
    if (name == to_string(k)) return k;
  }
  throw ScenarioError(Kind::invalid_value, path,
                      "invalid value in '" + path + "': unknown event kind \"" + name + "\"");
}

ScenarioEvent read_event(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  ScenarioEvent ev;
  const json* kind = r.child("kind");
  if (!kind) throw ScenarioError(Kind::invalid_value, r.path("kind"), "missing '" + r.path("kind") + "'");
  ev.kind = event_kind(text(kind, r.path("kind")), r.path("kind"));
  const json* ts = r.child("timestamp");
  if (!ts) throw ScenarioError(Kind::invalid_value, r.path("timestamp"), "missing '" + r.path("timestamp") + "'");
  r.number("timestamp", ev.timestamp);
  // Only the payload fields of the event's kind are part of the schema.
  switch (ev.kind) {
    case EventKind::speed_limit:
      r.count("segment", ev.segment);
      r.number("value", ev.value);
      if (r.child("segment_end")) {
        double end = 0.0;
        r.number("segment_end", end);
        ev.segment_end = end;
      }
      break;
    case EventKind::grade:
      r.count("segment", ev.segment);
      r.number("value", ev.value);
      break;
    case EventKind::davis:
      if (const json* j = r.child("davis")) ev.davis = read_davis(*j, r.path("davis"));
      break;
    case EventKind::target_speed:
      r.number("value", ev.value);
      break;
  }
  r.finish();
  return ev;
}

ordered_json davis_json(const DavisCoefficients& d) { return {{"a", d.a}, {"b", d.b}, {"c", d.c}}; }

ordered_json event_json(const ScenarioEvent& ev) {
  ordered_json j;
  j["timestamp"] = ev.timestamp;
  j["kind"] = to_string(ev.kind);
  switch (ev.kind) {
    case EventKind::speed_limit:
      j["segment"] = ev.segment;
      j["value"] = ev.value;
      if (ev.segment_end) j["segment_end"] = *ev.segment_end;
      break;
    case EventKind::grade:
      j["segment"] = ev.segment;
      j["value"] = ev.value;
      break;
    case EventKind::davis:
      j["davis"] = davis_json(ev.davis);
      break;
    case EventKind::target_speed:
      j["value"] = ev.value;
      break;
  }
  return j;
}

}  // namespace

void ScenarioFile::validate() const {
  checked("problem", [&] { problem.validate(); });
  if (grid.nx < 3 || grid.nv < 3 || grid.nt < 3) {
    throw ScenarioError(Kind::invalid_value, "grid", "invalid value in 'grid': nx, nv and nt must be >= 3");
  }
  checked("events", [&] { validate_events(events, problem); });
  if (!(update_interval > 0.0)) {
    throw ScenarioError(Kind::invalid_value, "sequential.update_interval",
                        "invalid value in 'sequential.update_interval': must be > 0");
  }
  if (!(noise.position_std >= 0.0) || !(noise.speed_std >= 0.0)) {
    throw ScenarioError(Kind::invalid_value, "sequential.noise",
                        "invalid value in 'sequential.noise': standard deviations must be >= 0");
  }
  if (oracle.nx < 3 || oracle.nv < 3) {
    throw ScenarioError(Kind::invalid_value, "oracle", "invalid value in 'oracle': nx and nv must be >= 3");
  }
  if (!(verify.pmp_tolerance > 0.0) || !(verify.kkt_tolerance > 0.0)) {
    throw ScenarioError(Kind::invalid_value, "verify", "invalid value in 'verify': tolerances must be > 0");
  }
  for (double t : value_slice_times) {
    if (!(t >= 0.0) || t > problem.trip.horizon) {
      throw ScenarioError(Kind::invalid_value, "solve.value_slice_times",
                          "invalid value in 'solve.value_slice_times': times must lie in [0, T]");
    }
  }
}

ScenarioFile parse_scenario_text(std::string_view text_view) {
  json doc;
  try {
    doc = json::parse(text_view.begin(), text_view.end());
  } catch (const json::parse_error& e) {
    throw ScenarioError(Kind::syntax, "<document>", std::string("malformed JSON: ") + e.what());
  }
  ScenarioFile s;
  ObjectReader r(doc, "");
  if (const json* j = r.child("vehicle")) read_vehicle(*j, s.problem.vehicle);
  if (const json* j = r.child("trip")) read_trip(*j, s.problem.trip);
  if (const json* j = r.child("controls")) {
    const auto settings = numbers(array_at(j, "controls"), "controls");
    checked("controls", [&] { s.problem.controls = ControlSet(settings); });
  }
  if (const json* j = r.child("objective")) {
    if (text(j, "objective") != "fuel") {
      throw ScenarioError(Kind::invalid_value, "objective", "invalid value in 'objective': only \"fuel\" is supported");
    }
  }
  if (const json* j = r.child("penalties")) {
    ObjectReader p(*j, "penalties");
    if (const json* k = p.child("terminal_kappa"); k && !k->is_null()) {
      if (!k->is_number()) type_error("penalties.terminal_kappa", "a number or null");
      s.problem.penalties.terminal_kappa = k->get<double>();
    }
    p.number("speed_rho", s.problem.penalties.speed_rho);
    p.finish();
  }
  r.number("integrator_dt", s.problem.integrator_dt);
  if (const json* j = r.child("grid")) {
    ObjectReader g(*j, "grid");
    g.count("nx", s.grid.nx);
    g.count("nv", s.grid.nv);
    g.count("nt", s.grid.nt);
    g.count("substeps", s.grid.substeps);
    g.finish();
  }
  if (const json* j = r.child("events")) {
    const json& arr = array_at(j, "events");
    for (std::size_t i = 0; i < arr.size(); ++i) s.events.push_back(read_event(arr[i], indexed("events", i)));
  }
  if (const json* j = r.child("sequential")) {
    ObjectReader q(*j, "sequential");
    q.number("update_interval", s.update_interval);
    if (const json* n = q.child("noise")) {
      ObjectReader nr(*n, "sequential.noise");
      nr.number("position_std", s.noise.position_std);
      nr.number("speed_std", s.noise.speed_std);
      nr.seed("seed", s.noise.seed);
      nr.finish();
    }
    q.finish();
  }
  if (const json* j = r.child("oracle")) {
    ObjectReader o(*j, "oracle");
    o.count("stages", s.oracle.stages);
    o.count("nx", s.oracle.nx);
    o.count("nv", s.oracle.nv);
    o.finish();
  }
  if (const json* j = r.child("verify")) {
    ObjectReader v(*j, "verify");
    v.number("pmp_tolerance", s.verify.pmp_tolerance);
    v.number("kkt_tolerance", s.verify.kkt_tolerance);
    v.finish();
  }
  if (const json* j = r.child("solve")) {
    ObjectReader v(*j, "solve");
    if (const json* t = v.child("value_slice_times")) {
      s.value_slice_times = numbers(array_at(t, "solve.value_slice_times"), "solve.value_slice_times");
    }
    v.finish();
  }
  r.finish();
  s.validate();
  return s;
}

ScenarioFile parse_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(Kind::missing_file, path, "cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str());
}

std::string serialize_scenario(const ScenarioFile& s) {
  const auto& p = s.problem;
  ordered_json doc;
  ordered_json grade = ordered_json::array();
  for (const auto& bp : p.vehicle.grade.breakpoints()) grade.push_back({{"position", bp.position}, {"accel", bp.accel}});
  doc["vehicle"] = {{"davis", davis_json(p.vehicle.davis)},
                    {"grade", grade},
                    {"max_traction", p.vehicle.max_traction},
                    {"traction_model", "affine"}};
  ordered_json limits = ordered_json::array();
  for (const auto& seg : p.trip.speed_limits) limits.push_back({{"end", seg.end}, {"limit", seg.limit}});
  doc["trip"] = {{"length", p.trip.length},
                 {"horizon", p.trip.horizon},
                 {"v_start", p.trip.v_start},
                 {"v_end", p.trip.v_end},
                 {"speed_limits", limits}};
  doc["controls"] = p.controls.settings();
  doc["objective"] = "fuel";
  doc["penalties"] = {{"terminal_kappa", p.penalties.terminal_kappa ? ordered_json(*p.penalties.terminal_kappa)
                                                                    : ordered_json(nullptr)},
                      {"speed_rho", p.penalties.speed_rho}};
  doc["integrator_dt"] = p.integrator_dt;
  doc["grid"] = {{"nx", s.grid.nx}, {"nv", s.grid.nv}, {"nt", s.grid.nt}, {"substeps", s.grid.substeps}};
  ordered_json events = ordered_json::array();
  for (const auto& ev : s.events) events.push_back(event_json(ev));
  doc["events"] = events;
  doc["sequential"] = {
      {"update_interval", s.update_interval},
      {"noise",
       {{"position_std", s.noise.position_std}, {"speed_std", s.noise.speed_std}, {"seed", s.noise.seed}}}};
  doc["oracle"] = {{"stages", s.oracle.stages}, {"nx", s.oracle.nx}, {"nv", s.oracle.nv}};
  doc["verify"] = {{"pmp_tolerance", s.verify.pmp_tolerance}, {"kkt_tolerance", s.verify.kkt_tolerance}};
  doc["solve"] = {{"value_slice_times", s.value_slice_times}};
  return doc.dump(2) + "\n";
}

}  // namespace ecodrive
