#include "ccpaloc/case_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ccpaloc {

using nlohmann::json;

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedCase: return "MalformedCase";
    case ErrorCode::NoSlack: return "NoSlack";
    case ErrorCode::MultipleSlack: return "MultipleSlack";
    case ErrorCode::NonpositiveReactance: return "NonpositiveReactance";
    case ErrorCode::DanglingBusReference: return "DanglingBusReference";
    case ErrorCode::DisconnectedGrid: return "DisconnectedGrid";
    case ErrorCode::SingularTopology: return "SingularTopology";
    case ErrorCode::IslandingOutage: return "IslandingOutage";
    case ErrorCode::InvalidOutage: return "InvalidOutage";
    case ErrorCode::UnbalancedInjections: return "UnbalancedInjections";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::ExhaustedResampling: return "ExhaustedResampling";
    case ErrorCode::InsufficientTaskData: return "InsufficientTaskData";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "UnknownError";
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// GridCase

int GridCase::slack_pos() const {
  int pos = -1;
  for (int i = 0; i < n_buses(); ++i) {
    if (buses[i].is_slack) {
      if (pos >= 0) fail(ErrorCode::MultipleSlack, "more than one slack bus");
      pos = i;
    }
  }
  if (pos < 0) fail(ErrorCode::NoSlack, "no slack bus");
  return pos;
}

int GridCase::bus_pos(int bus_id) const {
  for (int i = 0; i < n_buses(); ++i) {
    if (buses[i].id == bus_id) return i;
  }
  fail(ErrorCode::DanglingBusReference, "unknown bus id " + std::to_string(bus_id));
}

int GridCase::branch_pos(int index_1based) const {
  for (int i = 0; i < n_branches(); ++i) {
    if (branches[i].index == index_1based) return i;
  }
  fail(ErrorCode::InvalidOutage, "unknown branch index " + std::to_string(index_1based));
}

std::vector<int> GridCase::in_service_positions() const {
  std::vector<int> out;
  out.reserve(branches.size());
  for (int i = 0; i < n_branches(); ++i) {
    if (branches[i].in_service) out.push_back(i);
  }
  return out;
}

bool GridCase::connected_without(const std::vector<int>& excluded_positions) const {
  const int n = n_buses();
  if (n == 0) return false;
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n_branches(); ++i) {
    const Branch& b = branches[i];
    if (!b.in_service) continue;
    if (std::find(excluded_positions.begin(), excluded_positions.end(), i) != excluded_positions.end())
      continue;
    int u = bus_pos(b.from_bus);
    int v = bus_pos(b.to_bus);
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == n;
}

bool GridCase::connected() const { return connected_without({}); }

std::vector<int> GridCase::bridge_lines() const {
  std::vector<int> bridges;
  for (int i = 0; i < n_branches(); ++i) {
    if (!branches[i].in_service) continue;
    if (!connected_without({i})) bridges.push_back(branches[i].index);
  }
  return bridges;
}

void GridCase::validate() const {
  if (!(base_mva > 0) || !std::isfinite(base_mva))
    fail(ErrorCode::MalformedCase, "base_mva must be positive");
  if (buses.empty()) fail(ErrorCode::MalformedCase, "no buses");

  std::set<int> bus_ids;
  for (const Bus& b : buses) {
    if (!bus_ids.insert(b.id).second)
      fail(ErrorCode::MalformedCase, "duplicate bus id " + std::to_string(b.id));
    if (!std::isfinite(b.load_p)) fail(ErrorCode::MalformedCase, "non-finite load");
  }
  slack_pos();  // throws NoSlack / MultipleSlack

  std::set<int> branch_indices;
  for (const Branch& br : branches) {
    if (!branch_indices.insert(br.index).second)
      fail(ErrorCode::MalformedCase, "duplicate branch index " + std::to_string(br.index));
    if (!(br.reactance > 0) || !std::isfinite(br.reactance))
      fail(ErrorCode::NonpositiveReactance,
           "branch " + std::to_string(br.index) + " has reactance " + std::to_string(br.reactance));
    if (br.from_bus == br.to_bus)
      fail(ErrorCode::MalformedCase, "branch " + std::to_string(br.index) + " is a self-loop");
    if (!bus_ids.count(br.from_bus))
      fail(ErrorCode::DanglingBusReference,
           "branch " + std::to_string(br.index) + " references bus " + std::to_string(br.from_bus));
    if (!bus_ids.count(br.to_bus))
      fail(ErrorCode::DanglingBusReference,
           "branch " + std::to_string(br.index) + " references bus " + std::to_string(br.to_bus));
  }
  // Branch indices must be exactly 1..L so label vectors index by branch id.
  for (int want = 1; want <= n_branches(); ++want) {
    if (!branch_indices.count(want))
      fail(ErrorCode::MalformedCase, "branch indices must be contiguous 1..L; missing " + std::to_string(want));
  }
  for (const Gen& g : gens) {
    if (!bus_ids.count(g.bus))
      fail(ErrorCode::DanglingBusReference, "gen references bus " + std::to_string(g.bus));
    if (!std::isfinite(g.gen_p)) fail(ErrorCode::MalformedCase, "non-finite generation");
  }
  if (!connected()) fail(ErrorCode::DisconnectedGrid, "in-service branch graph is not connected");
}

std::string GridCase::fingerprint() const {
  std::string s;
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g,", v);
    s += buf;
  };
  put(base_mva);
  for (const Bus& b : buses) {
    s += "b" + std::to_string(b.id) + (b.is_slack ? "s" : "");
    put(b.load_p);
  }
  for (const Branch& br : branches) {
    s += "l" + std::to_string(br.index) + ":" + std::to_string(br.from_bus) + ">" +
         std::to_string(br.to_bus) + (br.in_service ? "" : "x");
    put(br.reactance);
  }
  for (const Gen& g : gens) {
    s += "g" + std::to_string(g.bus);
    put(g.gen_p);
  }
  return fnv1a_hex(s);
}

// ---------------------------------------------------------------------------
// MATPOWER parser (subset)

namespace {

std::string strip_comments(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  for (char c : text) {
    if (c == '%') in_comment = true;
    if (c == '\n') in_comment = false;
    if (!in_comment) out += c;
  }
  return out;
}

// Finds "mpc.<name>" and returns the bracketed matrix body after '='.
bool find_matrix(const std::string& text, const std::string& name, std::string& body) {
  const std::string key = "mpc." + name;
  std::size_t pos = text.find(key);
  if (pos == std::string::npos) return false;
  std::size_t open = text.find('[', pos);
  if (open == std::string::npos)
    fail(ErrorCode::MalformedCase, "expected '[' after " + key);
  std::size_t close = text.find(']', open);
  if (close == std::string::npos)
    fail(ErrorCode::MalformedCase, "unterminated matrix for " + key);
  body = text.substr(open + 1, close - open - 1);
  return true;
}

std::vector<std::vector<double>> parse_rows(const std::string& body, const std::string& what) {
  std::vector<std::vector<double>> rows;
  std::string row_text;
  auto flush = [&]() {
    std::istringstream iss(row_text);
    std::vector<double> row;
    double v;
    while (iss >> v) row.push_back(v);
    if (!iss.eof()) {
      std::string tail;
      iss.clear();
      iss >> tail;
      fail(ErrorCode::MalformedCase, "bad token '" + tail + "' in " + what + " row");
    }
    if (!row.empty()) rows.push_back(std::move(row));
    row_text.clear();
  };
  for (char c : body) {
    if (c == ';' || c == '\n') {
      flush();
    } else {
      row_text += c;
    }
  }
  flush();
  return rows;
}

double parse_scalar_field(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  std::size_t pos = text.find(key);
  if (pos == std::string::npos) fail(ErrorCode::MalformedCase, "missing " + key);
  std::size_t eq = text.find('=', pos);
  if (eq == std::string::npos) fail(ErrorCode::MalformedCase, "expected '=' after " + key);
  std::istringstream iss(text.substr(eq + 1));
  double v;
  if (!(iss >> v)) fail(ErrorCode::MalformedCase, "bad value for " + key);
  return v;
}

}  // namespace

GridCase parse_matpower(const std::string& raw) {
  const std::string text = strip_comments(raw);
  GridCase grid;
  grid.base_mva = parse_scalar_field(text, "baseMVA");

  std::string body;
  if (!find_matrix(text, "bus", body)) fail(ErrorCode::MalformedCase, "missing mpc.bus");
  for (const auto& row : parse_rows(body, "bus")) {
    if (row.size() < 3) fail(ErrorCode::MalformedCase, "bus row needs at least 3 columns");
    Bus b;
    b.id = static_cast<int>(row[0]);
    b.is_slack = static_cast<int>(row[1]) == 3;
    b.load_p = row[2] / grid.base_mva;  // Pd in MW
    grid.buses.push_back(b);
  }

  if (find_matrix(text, "gen", body)) {
    for (const auto& row : parse_rows(body, "gen")) {
      if (row.size() < 2) fail(ErrorCode::MalformedCase, "gen row needs at least 2 columns");
      const bool in_service = row.size() < 8 || row[7] > 0;  // status column when present
      if (!in_service) continue;
      grid.gens.push_back(Gen{static_cast<int>(row[0]), row[1] / grid.base_mva});
    }
  }

  if (!find_matrix(text, "branch", body)) fail(ErrorCode::MalformedCase, "missing mpc.branch");
  int index = 0;
  for (const auto& row : parse_rows(body, "branch")) {
    if (row.size() < 4) fail(ErrorCode::MalformedCase, "branch row needs at least 4 columns");
    Branch br;
    br.index = ++index;
    br.from_bus = static_cast<int>(row[0]);
    br.to_bus = static_cast<int>(row[1]);
    br.reactance = row[3];  // r (row[2]) and all AC columns are ignored
    br.in_service = row.size() < 11 || row[10] != 0;
    grid.branches.push_back(br);
  }

  grid.validate();
  return grid;
}

// ---------------------------------------------------------------------------
// Native JSON format

namespace {

void require_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  for (const char* k : keys) {
    if (!obj.contains(k)) fail(ErrorCode::MalformedCase, where + " missing key '" + k + "'");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(keys.begin(), keys.end(),
                     [&](const char* k) { return it.key() == k; }) == keys.end())
      fail(ErrorCode::MalformedCase, where + " has unknown key '" + it.key() + "'");
  }
}

}  // namespace

GridCase parse_native(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedCase, std::string("invalid JSON: ") + e.what());
  }
  try {
    require_keys(doc, {"base_mva", "buses", "branches", "gens"}, "case");
    GridCase grid;
    grid.base_mva = doc.at("base_mva").get<double>();
    for (const json& jb : doc.at("buses")) {
      require_keys(jb, {"id", "slack", "load_p"}, "bus");
      grid.buses.push_back(Bus{jb.at("id").get<int>(), jb.at("slack").get<bool>(),
                               jb.at("load_p").get<double>()});
    }
    for (const json& jb : doc.at("branches")) {
      require_keys(jb, {"index", "from", "to", "x", "in_service"}, "branch");
      grid.branches.push_back(Branch{jb.at("index").get<int>(), jb.at("from").get<int>(),
                                     jb.at("to").get<int>(), jb.at("x").get<double>(),
                                     jb.at("in_service").get<bool>()});
    }
    for (const json& jg : doc.at("gens")) {
      require_keys(jg, {"bus", "gen_p"}, "gen");
      grid.gens.push_back(Gen{jg.at("bus").get<int>(), jg.at("gen_p").get<double>()});
    }
    grid.validate();
    return grid;
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedCase, std::string("bad case schema: ") + e.what());
  }
}

std::string to_native(const GridCase& grid) {
  json doc;
  doc["base_mva"] = grid.base_mva;
  doc["buses"] = json::array();
  for (const Bus& b : grid.buses)
    doc["buses"].push_back({{"id", b.id}, {"slack", b.is_slack}, {"load_p", b.load_p}});
  doc["branches"] = json::array();
  for (const Branch& br : grid.branches)
    doc["branches"].push_back({{"index", br.index},
                               {"from", br.from_bus},
                               {"to", br.to_bus},
                               {"x", br.reactance},
                               {"in_service", br.in_service}});
  doc["gens"] = json::array();
  for (const Gen& g : grid.gens) doc["gens"].push_back({{"bus", g.bus}, {"gen_p", g.gen_p}});
  return doc.dump(2);
}

GridCase parse_case(const std::string& text) {
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (c == '{') return parse_native(text);
    break;
  }
  return parse_matpower(text);
}

GridCase load_case_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open case file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

// ---------------------------------------------------------------------------
// Incidence and measurement matrices

IncidencePair build_incidence(const GridCase& grid) {
  const int n = grid.n_buses();
  const std::vector<int> active = grid.in_service_positions();
  const int l = static_cast<int>(active.size());
  const int slack = grid.slack_pos();

  IncidencePair inc;
  inc.full = Eigen::MatrixXd::Zero(n, l);
  for (int c = 0; c < l; ++c) {
    const Branch& br = grid.branches[active[c]];
    inc.full(grid.bus_pos(br.from_bus), c) = 1.0;
    inc.full(grid.bus_pos(br.to_bus), c) = -1.0;
    inc.col_branch_indices.push_back(br.index);
  }
  for (const Bus& b : grid.buses) inc.row_bus_ids.push_back(b.id);

  inc.reduced = Eigen::MatrixXd::Zero(n - 1, l);
  int r = 0;
  for (int i = 0; i < n; ++i) {
    if (i == slack) continue;
    inc.reduced.row(r++) = inc.full.row(i);
  }
  return inc;
}

namespace {

// Incidence over all branches (columns for out-of-service branches keep their
// endpoint signs; their D entry is zero, which zeroes the matching H rows).
void structural_incidence(const GridCase& grid, Eigen::MatrixXd& full, Eigen::MatrixXd& reduced,
                          Eigen::VectorXd& d) {
  const int n = grid.n_buses();
  const int l = grid.n_branches();
  const int slack = grid.slack_pos();
  full = Eigen::MatrixXd::Zero(n, l);
  d = Eigen::VectorXd::Zero(l);
  for (int c = 0; c < l; ++c) {
    const Branch& br = grid.branches[c];
    full(grid.bus_pos(br.from_bus), c) = 1.0;
    full(grid.bus_pos(br.to_bus), c) = -1.0;
    d(c) = br.in_service ? 1.0 / br.reactance : 0.0;
  }
  reduced = Eigen::MatrixXd::Zero(n - 1, l);
  int r = 0;
  for (int i = 0; i < n; ++i) {
    if (i == slack) continue;
    reduced.row(r++) = full.row(i);
  }
}

}  // namespace

MeasurementModel build_measurement_model(const GridCase& grid, const Eigen::VectorXd& sigma) {
  if (!grid.connected()) fail(ErrorCode::SingularTopology, "grid is islanded");
  const int n_bus = grid.n_buses();
  const int n_line = grid.n_branches();
  const int m = n_bus + 2 * n_line;
  if (sigma.size() != m) fail(ErrorCode::ShapeMismatch, "sigma length must equal m");
  if (!(sigma.minCoeff() > 0) || !sigma.allFinite())
    fail(ErrorCode::InvalidConfig, "noise std must be positive");

  Eigen::MatrixXd a_full, a_red;
  Eigen::VectorXd d;
  structural_incidence(grid, a_full, a_red, d);

  // Flow block D A_r^T maps reduced angles to line flows; injections are the
  // full-incidence aggregation of those flows, so the slack row is kept and
  // m = N + 2L.
  Eigen::MatrixXd flow = d.asDiagonal() * a_red.transpose();  // L x (N-1)
  MeasurementModel model;
  model.n_buses = n_bus;
  model.n_lines = n_line;
  model.H.resize(m, n_bus - 1);
  model.H.topRows(n_bus) = a_full * flow;
  model.H.middleRows(n_bus, n_line) = flow;
  model.H.bottomRows(n_line) = -flow;
  model.sigma = sigma;
  model.weights = sigma.array().square().inverse();
  return model;
}

MeasurementModel build_measurement_model(const GridCase& grid, double sigma) {
  if (!(sigma > 0) || !std::isfinite(sigma))
    fail(ErrorCode::InvalidConfig, "noise std must be positive");
  const int m = grid.n_buses() + 2 * grid.n_branches();
  return build_measurement_model(grid, Eigen::VectorXd::Constant(m, sigma));
}

}  // namespace ccpaloc
