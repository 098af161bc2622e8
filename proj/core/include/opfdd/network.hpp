// Network model: buses, generators, branches in per-unit quantities, plus
// readers/writers for the MATPOWER case format and a JSON wire format.
#pragma once

#include <complex>
#include <string>
#include <unordered_map>
#include <vector>

#include "opfdd/errors.hpp"

namespace opfdd {

struct Bus {
  int id = 0;          // external bus number (as in the case file)
  double p_load = 0;   // active demand  (p.u.)
  double q_load = 0;   // reactive demand (p.u.)
  double g_shunt = 0;  // shunt conductance (p.u. at v = 1)
  double b_shunt = 0;  // shunt susceptance  (p.u. at v = 1)
  double v_min = 0;    // voltage magnitude bounds (p.u.)
  double v_max = 0;

  bool operator==(const Bus&) const = default;
};

struct Generator {
  int id = 0;   // stable generator identifier (file order, 1-based)
  int bus = 0;  // external id of the bus it sits on
  double p_min = 0, p_max = 0;  // active dispatch bounds (p.u.)
  double q_min = 0, q_max = 0;  // reactive dispatch bounds (p.u.)
  // Cost c2*p^2 + c1*p + c0 with p in p.u.; coefficients are pre-scaled by
  // base MVA so the cost comes out in $/hr directly.
  double c2 = 0, c1 = 0, c0 = 0;

  bool operator==(const Generator&) const = default;
};

struct Branch {
  int from_bus = 0, to_bus = 0;  // external bus ids
  double r = 0, x = 0;   // series impedance (p.u.); admittance = 1/(r+jx)
  double b_ch = 0;       // total line charging susceptance (p.u.)
  double tap = 1.0;      // off-nominal turns ratio (from side)
  double shift = 0.0;    // phase shift angle (rad)
  double s_max = 0;      // apparent-power rating (p.u.); 0 = unlimited
  double angle_min = 0;  // bounds on th_f - th_t (rad)
  double angle_max = 0;
  bool angle_defaulted = false;  // true if the case omitted angle limits

  std::complex<double> series_admittance() const {
    return 1.0 / std::complex<double>(r, x);
  }
  bool thermally_limited() const { return s_max > 0; }

  bool operator==(const Branch&) const = default;
};

// One end of a branch as seen from a bus: which branch, and whether the bus
// is the from side.
struct BranchEnd {
  int branch = 0;
  bool at_from = false;

  bool operator==(const BranchEnd&) const = default;
};

struct Network {
  double base_mva = 100;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Branch> branches;
  // Adjacency, rebuilt by rebuild_index(): per bus (internal index), the
  // incident branch ends and the attached generator indices.
  std::vector<std::vector<BranchEnd>> bus_branch_ends;
  std::vector<std::vector<int>> bus_generators;

  // Internal index of an external bus id; throws DanglingReference if absent.
  int bus_index(int id) const;
  int angle_defaulted_count() const;

  // Rebuild the id -> index map and adjacency lists; validates uniqueness of
  // bus ids, endpoint references, and connectivity.
  void rebuild_index();

  bool operator==(const Network& o) const {
    return base_mva == o.base_mva && buses == o.buses &&
           generators == o.generators && branches == o.branches;
  }

 private:
  std::unordered_map<int, int> index_;
};

// Per-branch coefficients of the polar flow equations, with d = th_f - th_t,
// T = tap * e^{j shift}, Y the series admittance:
//   p_f = g_c_ff v_f^2 - g_ff v_f v_t cos(d)  + b_ff v_f v_t sin(d)
//   q_f = b_c_ff v_f^2 - b_ff v_f v_t cos(d)  - g_ff v_f v_t sin(d)
//   p_t = g_c_tt v_t^2 - g_tt v_t v_f cos(-d) + b_tt v_t v_f sin(-d)
//   q_t = b_c_tt v_t^2 - b_tt v_t v_f cos(-d) - g_tt v_t v_f sin(-d)
// where
//   g_c_ff + j b_c_ff = (conj(Y) - j b_ch/2) / |T|^2     (from-side self)
//   g_ff   + j b_ff   =  conj(Y) / T                     (from-side mutual)
//   g_c_tt + j b_c_tt =  conj(Y) - j b_ch/2              (to-side self)
//   g_tt   + j b_tt   =  conj(Y) / conj(T)               (to-side mutual)
struct BranchCoeffs {
  double g_c_ff = 0, b_c_ff = 0;
  double g_ff = 0, b_ff = 0;
  double g_c_tt = 0, b_c_tt = 0;
  double g_tt = 0, b_tt = 0;
};

// Raised by branch_coeffs when tap == 0.
class ZeroTap : public Error {
 public:
  using Error::Error;
};

BranchCoeffs branch_coeffs(const Branch& br);

// MATPOWER case readers. Accepts the mpc.baseMVA / mpc.bus / mpc.gen /
// mpc.branch / mpc.gencost blocks; out-of-service rows are dropped; all
// quantities are converted to per-unit. Throws MalformedCase or a subclass.
Network parse_matpower(const std::string& text);
Network parse_matpower_file(const std::string& path);

// JSON wire format (numbers in SI units: MW, MVAr, MVA, degrees; impedances
// stay per-unit as in the case files). Layout:
//   {"base_mva": 100,
//    "buses":      [{"id","v_min","v_max","g_sh","b_sh","p_d","q_d"}, ...],
//    "generators": [{"id","bus","p_min","p_max","q_min","q_max",
//                    "c2","c1","c0"}, ...],
//    "branches":   [{"from","to","r","x","b_ch","tap","shift_deg","s_max",
//                    "angle_min_deg","angle_max_deg"}, ...]}
// parse_json throws SchemaViolation with the JSON path of the offense.
Network parse_json(const std::string& text);
std::string emit_json(const Network& net);

}  // namespace opfdd
