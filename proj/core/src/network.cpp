#include "opfdd/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <queue>
#include <sstream>

namespace opfdd {
namespace {

constexpr long double kPi = 3.141592653589793238462643383279502884L;
constexpr double kInf = std::numeric_limits<double>::infinity();

// ---- exactly invertible unit conversions -----------------------------------
// Values cross the SI<->per-unit boundary through long double so the rounding
// error stays far below one double ulp. The inverse direction additionally
// nudges its result until the forward map reproduces the input exactly; a
// preimage always exists when the input itself came through the forward map,
// which makes serialization round trips exact.

double si_to_pu(double si, double base) {
  return static_cast<double>(static_cast<long double>(si) /
                             static_cast<long double>(base));
}

double deg_to_rad(double deg) {
  return static_cast<double>(static_cast<long double>(deg) * kPi / 180.0L);
}

double cost2_to_pu(double c2, double base) {
  const long double b = base;
  return static_cast<double>(static_cast<long double>(c2) * b * b);
}

double cost1_to_pu(double c1, double base) {
  return static_cast<double>(static_cast<long double>(c1) *
                             static_cast<long double>(base));
}

template <class Forward>
double invert_exact(double target, Forward forward, double guess) {
  double y = guess;
  for (int i = 0; i < 8; ++i) {
    const double got = forward(y);
    if (got == target) return y;
    y = std::nextafter(y, got < target ? kInf : -kInf);
  }
  return guess;
}

double pu_to_si(double pu, double base) {
  const double guess = static_cast<double>(static_cast<long double>(pu) *
                                           static_cast<long double>(base));
  return invert_exact(pu, [base](double y) { return si_to_pu(y, base); },
                      guess);
}

double rad_to_deg(double rad) {
  const double guess =
      static_cast<double>(static_cast<long double>(rad) * 180.0L / kPi);
  return invert_exact(rad, [](double y) { return deg_to_rad(y); }, guess);
}

double cost2_to_si(double c2pu, double base) {
  const long double b = base;
  const double guess = static_cast<double>(static_cast<long double>(c2pu) /
                                           (b * b));
  return invert_exact(c2pu, [base](double y) { return cost2_to_pu(y, base); },
                      guess);
}

double cost1_to_si(double c1pu, double base) {
  const double guess = static_cast<double>(static_cast<long double>(c1pu) /
                                           static_cast<long double>(base));
  return invert_exact(c1pu, [base](double y) { return cost1_to_pu(y, base); },
                      guess);
}

// Angle windows: |bound| >= 360 degrees or a 0/0 pair mean "unconstrained";
// those become the +/-60 degree default and are serialized back as 0/0.
const double kDefaultAngle = deg_to_rad(60.0);

// ---- MATPOWER m-file tokenizer ----------------------------------------------

struct CaseBlocks {
  double base_mva = 0;
  bool have_base = false;
  std::vector<std::vector<double>> bus, gen, branch, gencost;
};

void strip_comments(std::string& text) {
  bool in_comment = false;
  for (char& ch : text) {
    if (ch == '%') in_comment = true;
    if (ch == '\n') in_comment = false;
    if (in_comment) ch = ' ';
  }
}

double parse_number(const std::string& tok, const std::string& where) {
  double value = 0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw MalformedCase("unparsable number '" + tok + "' in " + where);
  return value;
}

std::vector<std::vector<double>> parse_matrix(const std::string& body,
                                              const std::string& name) {
  std::vector<std::vector<double>> rows;
  std::vector<double> row;
  std::string tok;
  auto flush_tok = [&] {
    if (!tok.empty()) {
      row.push_back(parse_number(tok, "mpc." + name));
      tok.clear();
    }
  };
  auto flush_row = [&] {
    flush_tok();
    if (!row.empty()) {
      rows.push_back(row);
      row.clear();
    }
  };
  for (char ch : body) {
    if (ch == ';' || ch == '\n') {
      flush_row();
    } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == ',') {
      flush_tok();
    } else {
      tok += ch;
    }
  }
  flush_row();
  return rows;
}

CaseBlocks split_blocks(std::string text) {
  strip_comments(text);
  CaseBlocks blocks;
  size_t pos = 0;
  while ((pos = text.find("mpc.", pos)) != std::string::npos) {
    size_t name_begin = pos + 4;
    size_t name_end = name_begin;
    while (name_end < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[name_end])) ||
            text[name_end] == '_'))
      ++name_end;
    const std::string name = text.substr(name_begin, name_end - name_begin);
    size_t eq = text.find('=', name_end);
    if (eq == std::string::npos) break;
    size_t value_begin = eq + 1;
    while (value_begin < text.size() &&
           std::isspace(static_cast<unsigned char>(text[value_begin])))
      ++value_begin;
    if (value_begin < text.size() && text[value_begin] == '[') {
      size_t close = text.find(']', value_begin);
      if (close == std::string::npos)
        throw MalformedCase("unterminated matrix mpc." + name);
      const std::string body =
          text.substr(value_begin + 1, close - value_begin - 1);
      if (name == "bus")
        blocks.bus = parse_matrix(body, name);
      else if (name == "gen")
        blocks.gen = parse_matrix(body, name);
      else if (name == "branch")
        blocks.branch = parse_matrix(body, name);
      else if (name == "gencost")
        blocks.gencost = parse_matrix(body, name);
      pos = close + 1;
    } else {
      size_t semi = text.find(';', value_begin);
      if (semi == std::string::npos) semi = text.size();
      std::string value = text.substr(value_begin, semi - value_begin);
      value.erase(std::remove_if(value.begin(), value.end(),
                                 [](unsigned char c) {
                                   return std::isspace(c) || c == '\'';
                                 }),
                  value.end());
      if (name == "baseMVA") {
        blocks.base_mva = parse_number(value, "mpc.baseMVA");
        blocks.have_base = true;
      }
      pos = semi + 1;
    }
  }
  return blocks;
}

void require_uniform(const std::vector<std::vector<double>>& rows,
                     size_t min_cols, const std::string& name) {
  if (rows.empty()) throw MalformedCase("missing or empty block mpc." + name);
  const size_t width = rows.front().size();
  if (width < min_cols)
    throw MalformedCase("mpc." + name + " needs at least " +
                        std::to_string(min_cols) + " columns, got " +
                        std::to_string(width));
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i].size() != width)
      throw MalformedCase("ragged row " + std::to_string(i + 1) + " in mpc." +
                          name);
}

bool angles_defaulted(double amin_deg, double amax_deg) {
  return (amin_deg == 0 && amax_deg == 0) || std::abs(amin_deg) >= 360 ||
         std::abs(amax_deg) >= 360;
}

}  // namespace

// ---- BranchCoeffs -----------------------------------------------------------

BranchCoeffs branch_coeffs(const Branch& br) {
  if (br.tap == 0) throw ZeroTap("branch has tap ratio 0");
  const std::complex<double> y = br.series_admittance();
  const std::complex<double> yc = std::conj(y);
  const std::complex<double> t = std::polar(br.tap, br.shift);
  const std::complex<double> half_charge(0.0, br.b_ch / 2.0);
  const double tap2 = br.tap * br.tap;

  BranchCoeffs c;
  const std::complex<double> self_ff = (yc - half_charge) / tap2;
  const std::complex<double> mutual_ff = yc / t;
  const std::complex<double> self_tt = yc - half_charge;
  const std::complex<double> mutual_tt = yc / std::conj(t);
  c.g_c_ff = self_ff.real();
  c.b_c_ff = self_ff.imag();
  c.g_ff = mutual_ff.real();
  c.b_ff = mutual_ff.imag();
  c.g_c_tt = self_tt.real();
  c.b_c_tt = self_tt.imag();
  c.g_tt = mutual_tt.real();
  c.b_tt = mutual_tt.imag();
  return c;
}

// ---- Network index ----------------------------------------------------------

int Network::bus_index(int id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw DanglingReference("unknown bus id " + std::to_string(id));
  return it->second;
}

int Network::angle_defaulted_count() const {
  int n = 0;
  for (const Branch& br : branches) n += br.angle_defaulted ? 1 : 0;
  return n;
}

void Network::rebuild_index() {
  index_.clear();
  for (size_t i = 0; i < buses.size(); ++i) {
    if (!index_.emplace(buses[i].id, static_cast<int>(i)).second)
      throw MalformedCase("duplicate bus id " + std::to_string(buses[i].id));
  }
  bus_branch_ends.assign(buses.size(), {});
  bus_generators.assign(buses.size(), {});
  for (size_t l = 0; l < branches.size(); ++l) {
    const int f = bus_index(branches[l].from_bus);
    const int t = bus_index(branches[l].to_bus);
    bus_branch_ends[f].push_back({static_cast<int>(l), true});
    bus_branch_ends[t].push_back({static_cast<int>(l), false});
  }
  for (size_t g = 0; g < generators.size(); ++g)
    bus_generators[bus_index(generators[g].bus)].push_back(
        static_cast<int>(g));

  if (generators.empty()) throw MalformedCase("network has no generators");

  // Connectivity: every bus reachable from bus 0 over in-service branches.
  std::vector<char> seen(buses.size(), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  size_t reached = 1;
  while (!frontier.empty()) {
    const int b = frontier.front();
    frontier.pop();
    for (const BranchEnd& end : bus_branch_ends[b]) {
      const Branch& br = branches[end.branch];
      const int other = bus_index(end.at_from ? br.to_bus : br.from_bus);
      if (!seen[other]) {
        seen[other] = 1;
        ++reached;
        frontier.push(other);
      }
    }
  }
  if (reached != buses.size())
    throw MalformedCase("network is not connected (" +
                        std::to_string(buses.size() - reached) +
                        " unreachable buses)");
}

// ---- MATPOWER parser ---------------------------------------------------------

Network parse_matpower(const std::string& text) {
  const CaseBlocks blocks = split_blocks(text);
  if (!blocks.have_base) throw MalformedCase("missing mpc.baseMVA");
  if (blocks.base_mva <= 0) throw MalformedCase("baseMVA must be positive");
  require_uniform(blocks.bus, 13, "bus");
  require_uniform(blocks.gen, 10, "gen");
  require_uniform(blocks.branch, 13, "branch");
  if (blocks.gencost.empty()) throw MalformedCase("missing mpc.gencost");
  if (blocks.gencost.size() != blocks.gen.size() &&
      blocks.gencost.size() != 2 * blocks.gen.size())
    throw MalformedCase("mpc.gencost must have one row per generator");

  const double base = blocks.base_mva;
  Network net;
  net.base_mva = base;

  for (const auto& r : blocks.bus) {
    Bus b;
    b.id = static_cast<int>(r[0]);
    b.p_load = si_to_pu(r[2], base);
    b.q_load = si_to_pu(r[3], base);
    b.g_shunt = si_to_pu(r[4], base);
    b.b_shunt = si_to_pu(r[5], base);
    b.v_max = r[11];
    b.v_min = r[12];
    if (b.v_min > b.v_max || b.v_min <= 0)
      throw MalformedCase("bus " + std::to_string(b.id) +
                          " has invalid voltage bounds");
    net.buses.push_back(b);
  }

  for (size_t i = 0; i < blocks.gen.size(); ++i) {
    const auto& g = blocks.gen[i];
    const auto& c = blocks.gencost[i];
    if (g[7] <= 0) continue;  // out of service
    Generator gen;
    gen.id = static_cast<int>(i) + 1;
    gen.bus = static_cast<int>(g[0]);
    gen.q_max = si_to_pu(g[3], base);
    gen.q_min = si_to_pu(g[4], base);
    gen.p_max = si_to_pu(g[8], base);
    gen.p_min = si_to_pu(g[9], base);
    if (gen.p_min > gen.p_max || gen.q_min > gen.q_max)
      throw MalformedCase("generator " + std::to_string(gen.id) +
                          " has inverted dispatch bounds");

    const int model = static_cast<int>(c[0]);
    const int ncost = static_cast<int>(c[3]);
    if (model != 2)
      throw UnsupportedCostModel("generator " + std::to_string(gen.id) +
                                 ": only polynomial (model 2) costs are "
                                 "supported");
    if (ncost < 1 || ncost > 3)
      throw UnsupportedCostModel("generator " + std::to_string(gen.id) +
                                 ": polynomial degree must be at most 2");
    if (c.size() < static_cast<size_t>(4 + ncost))
      throw MalformedCase("gencost row " + std::to_string(i + 1) +
                          " is shorter than its ncost field claims");
    double c2 = 0, c1 = 0, c0 = 0;
    if (ncost == 3) {
      c2 = c[4];
      c1 = c[5];
      c0 = c[6];
    } else if (ncost == 2) {
      c1 = c[4];
      c0 = c[5];
    } else {
      c0 = c[4];
    }
    if (c2 < 0)
      throw NonconvexQuadratic("generator " + std::to_string(gen.id) +
                               " has negative quadratic cost coefficient");
    gen.c2 = cost2_to_pu(c2, base);
    gen.c1 = cost1_to_pu(c1, base);
    gen.c0 = c0;
    net.generators.push_back(gen);
  }

  for (size_t i = 0; i < blocks.branch.size(); ++i) {
    const auto& r = blocks.branch[i];
    if (r[10] <= 0) continue;  // out of service
    Branch br;
    br.from_bus = static_cast<int>(r[0]);
    br.to_bus = static_cast<int>(r[1]);
    br.r = r[2];
    br.x = r[3];
    br.b_ch = r[4];
    if (br.r == 0 && br.x == 0)
      throw MalformedCase("branch row " + std::to_string(i + 1) +
                          " has zero series impedance");
    br.s_max = si_to_pu(r[5], base);
    br.tap = r[8] == 0 ? 1.0 : r[8];
    if (br.tap < 0)
      throw MalformedCase("branch row " + std::to_string(i + 1) +
                          " has negative tap ratio");
    br.shift = deg_to_rad(r[9]);
    if (angles_defaulted(r[11], r[12])) {
      br.angle_min = -kDefaultAngle;
      br.angle_max = kDefaultAngle;
      br.angle_defaulted = true;
    } else {
      br.angle_min = deg_to_rad(r[11]);
      br.angle_max = deg_to_rad(r[12]);
      if (br.angle_min > br.angle_max)
        throw MalformedCase("branch row " + std::to_string(i + 1) +
                            " has inverted angle bounds");
    }
    net.branches.push_back(br);
  }

  net.rebuild_index();
  return net;
}

Network parse_matpower_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedCase("cannot open case file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_matpower(buf.str());
}

// ---- JSON wire format ---------------------------------------------------------

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const json& require_key(const json& obj, const char* key,
                        const std::string& path) {
  if (!obj.is_object())
    throw SchemaViolation(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end())
    throw SchemaViolation(path + "/" + key + ": missing");
  return *it;
}

double require_number(const json& obj, const char* key,
                      const std::string& path) {
  const json& v = require_key(obj, key, path);
  if (!v.is_number())
    throw SchemaViolation(path + "/" + key + ": expected a number");
  return v.get<double>();
}

int require_int(const json& obj, const char* key, const std::string& path) {
  const json& v = require_key(obj, key, path);
  if (!v.is_number_integer())
    throw SchemaViolation(path + "/" + key + ": expected an integer");
  return v.get<int>();
}

const json& require_array(const json& obj, const char* key,
                          const std::string& path) {
  const json& v = require_key(obj, key, path);
  if (!v.is_array())
    throw SchemaViolation(path + "/" + key + ": expected an array");
  return v;
}

}  // namespace

Network parse_json(const std::string& text) {
  const json root = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded()) throw SchemaViolation("/: not valid JSON");
  if (!root.is_object()) throw SchemaViolation("/: expected an object");

  const double base = require_number(root, "base_mva", "");
  if (base <= 0) throw SchemaViolation("/base_mva: must be positive");

  Network net;
  net.base_mva = base;

  const json& buses = require_array(root, "buses", "");
  if (buses.empty()) throw SchemaViolation("/buses: must be non-empty");
  for (size_t i = 0; i < buses.size(); ++i) {
    const std::string path = "/buses/" + std::to_string(i);
    const json& jb = buses[i];
    Bus b;
    b.id = require_int(jb, "id", path);
    b.v_min = require_number(jb, "v_min", path);
    b.v_max = require_number(jb, "v_max", path);
    b.g_shunt = si_to_pu(require_number(jb, "g_sh", path), base);
    b.b_shunt = si_to_pu(require_number(jb, "b_sh", path), base);
    b.p_load = si_to_pu(require_number(jb, "p_d", path), base);
    b.q_load = si_to_pu(require_number(jb, "q_d", path), base);
    if (b.v_min > b.v_max || b.v_min <= 0)
      throw SchemaViolation(path + "/v_min: invalid voltage bounds");
    for (const Bus& other : net.buses)
      if (other.id == b.id)
        throw SchemaViolation(path + "/id: duplicate bus id " +
                              std::to_string(b.id));
    net.buses.push_back(b);
  }

  const json& gens = require_array(root, "generators", "");
  for (size_t i = 0; i < gens.size(); ++i) {
    const std::string path = "/generators/" + std::to_string(i);
    const json& jg = gens[i];
    Generator g;
    g.id = require_int(jg, "id", path);
    g.bus = require_int(jg, "bus", path);
    g.p_min = si_to_pu(require_number(jg, "p_min", path), base);
    g.p_max = si_to_pu(require_number(jg, "p_max", path), base);
    g.q_min = si_to_pu(require_number(jg, "q_min", path), base);
    g.q_max = si_to_pu(require_number(jg, "q_max", path), base);
    const double c2 = require_number(jg, "c2", path);
    if (c2 < 0)
      throw NonconvexQuadratic("generator " + std::to_string(g.id) +
                               " has negative quadratic cost coefficient");
    g.c2 = cost2_to_pu(c2, base);
    g.c1 = cost1_to_pu(require_number(jg, "c1", path), base);
    g.c0 = require_number(jg, "c0", path);
    if (g.p_min > g.p_max || g.q_min > g.q_max)
      throw SchemaViolation(path + ": inverted dispatch bounds");
    net.generators.push_back(g);
  }

  const json& branches = require_array(root, "branches", "");
  for (size_t i = 0; i < branches.size(); ++i) {
    const std::string path = "/branches/" + std::to_string(i);
    const json& jl = branches[i];
    Branch br;
    br.from_bus = require_int(jl, "from", path);
    br.to_bus = require_int(jl, "to", path);
    br.r = require_number(jl, "r", path);
    br.x = require_number(jl, "x", path);
    if (br.r == 0 && br.x == 0)
      throw SchemaViolation(path + ": zero series impedance");
    br.b_ch = require_number(jl, "b_ch", path);
    br.tap = require_number(jl, "tap", path);
    br.shift = deg_to_rad(require_number(jl, "shift_deg", path));
    br.s_max = si_to_pu(require_number(jl, "s_max", path), base);
    const double amin = require_number(jl, "angle_min_deg", path);
    const double amax = require_number(jl, "angle_max_deg", path);
    if (angles_defaulted(amin, amax)) {
      br.angle_min = -kDefaultAngle;
      br.angle_max = kDefaultAngle;
      br.angle_defaulted = true;
    } else {
      br.angle_min = deg_to_rad(amin);
      br.angle_max = deg_to_rad(amax);
      if (br.angle_min > br.angle_max)
        throw SchemaViolation(path + ": inverted angle bounds");
    }
    net.branches.push_back(br);
  }

  net.rebuild_index();
  return net;
}

std::string emit_json(const Network& net) {
  const double base = net.base_mva;
  ordered_json root;
  root["base_mva"] = base;

  ordered_json buses = ordered_json::array();
  for (const Bus& b : net.buses) {
    ordered_json jb;
    jb["id"] = b.id;
    jb["v_min"] = b.v_min;
    jb["v_max"] = b.v_max;
    jb["g_sh"] = pu_to_si(b.g_shunt, base);
    jb["b_sh"] = pu_to_si(b.b_shunt, base);
    jb["p_d"] = pu_to_si(b.p_load, base);
    jb["q_d"] = pu_to_si(b.q_load, base);
    buses.push_back(std::move(jb));
  }
  root["buses"] = std::move(buses);

  ordered_json gens = ordered_json::array();
  for (const Generator& g : net.generators) {
    ordered_json jg;
    jg["id"] = g.id;
    jg["bus"] = g.bus;
    jg["p_min"] = pu_to_si(g.p_min, base);
    jg["p_max"] = pu_to_si(g.p_max, base);
    jg["q_min"] = pu_to_si(g.q_min, base);
    jg["q_max"] = pu_to_si(g.q_max, base);
    jg["c2"] = cost2_to_si(g.c2, base);
    jg["c1"] = cost1_to_si(g.c1, base);
    jg["c0"] = g.c0;
    gens.push_back(std::move(jg));
  }
  root["generators"] = std::move(gens);

  ordered_json branches = ordered_json::array();
  for (const Branch& br : net.branches) {
    ordered_json jl;
    jl["from"] = br.from_bus;
    jl["to"] = br.to_bus;
    jl["r"] = br.r;
    jl["x"] = br.x;
    jl["b_ch"] = br.b_ch;
    jl["tap"] = br.tap;
    jl["shift_deg"] = rad_to_deg(br.shift);
    jl["s_max"] = pu_to_si(br.s_max, base);
    if (br.angle_defaulted) {
      jl["angle_min_deg"] = 0.0;
      jl["angle_max_deg"] = 0.0;
    } else {
      jl["angle_min_deg"] = rad_to_deg(br.angle_min);
      jl["angle_max_deg"] = rad_to_deg(br.angle_max);
    }
    branches.push_back(std::move(jl));
  }
  root["branches"] = std::move(branches);

  return root.dump(2) + "\n";
}

}  // namespace opfdd
