#include "omsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

namespace omsim {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct Line {
  int number;
  std::string section;
  std::string key;
  std::string value;
};

struct Parser {
  std::vector<ParseError> errors;

  void fail(int line, std::string msg) { errors.push_back({line, std::move(msg)}); }

  bool to_double(const Line& l, double& out) {
    try {
      std::size_t pos = 0;
      out = std::stod(l.value, &pos);
      if (pos != l.value.size()) throw std::invalid_argument("");
      return true;
    } catch (...) {
      fail(l.number, "key '" + l.key + "': expected a number, got '" + l.value + "'");
      return false;
    }
  }

  bool to_size(const Line& l, std::size_t& out) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(l.value, &pos);
      if (pos != l.value.size() || v < 0) throw std::invalid_argument("");
      out = static_cast<std::size_t>(v);
      return true;
    } catch (...) {
      fail(l.number,
           "key '" + l.key + "': expected a nonnegative integer, got '" + l.value + "'");
      return false;
    }
  }

  bool to_u64(const Line& l, std::uint64_t& out) {
    try {
      std::size_t pos = 0;
      out = std::stoull(l.value, &pos);
      if (pos != l.value.size()) throw std::invalid_argument("");
      return true;
    } catch (...) {
      fail(l.number, "key '" + l.key + "': expected an integer, got '" + l.value + "'");
      return false;
    }
  }

  bool to_bool(const Line& l, bool& out) {
    std::string v = l.value;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1") {
      out = true;
      return true;
    }
    if (v == "false" || v == "0") {
      out = false;
      return true;
    }
    fail(l.number, "key '" + l.key + "': expected true/false, got '" + l.value + "'");
    return false;
  }

  bool to_double_list(const Line& l, std::vector<double>& out) {
    out.clear();
    std::stringstream ss(l.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        std::size_t pos = 0;
        out.push_back(std::stod(item, &pos));
        if (pos != item.size()) throw std::invalid_argument("");
      } catch (...) {
        fail(l.number, "key '" + l.key + "': bad list element '" + item + "'");
        return false;
      }
    }
    if (out.empty()) {
      fail(l.number, "key '" + l.key + "': empty list");
      return false;
    }
    return true;
  }
};

}  // namespace

ParseResult parse_config(const std::string& text) {
  Parser p;

  // Pass 1: tokenize into (section, key, value) triples.
  std::vector<Line> lines;
  std::string section;
  int section_line = 0;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  std::optional<std::string> scenario_name;
  int scenario_line = 0;

  // Section occurrences, in file order, for the repeatable mode sections.
  struct SectionBlock {
    std::string name;
    int line;
    std::vector<Line> entries;
  };
  std::vector<SectionBlock> blocks;

  static const std::vector<std::string> known_sections = {
      "run", "grid", "detection", "filter", "optical", "mechanical",
      "coupling", "modulation"};

  while (std::getline(in, raw)) {
    ++number;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        p.fail(number, "unterminated section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      section_line = number;
      if (std::find(known_sections.begin(), known_sections.end(), section) ==
          known_sections.end()) {
        p.fail(number, "unknown section [" + section + "]");
        section.clear();
        continue;
      }
      blocks.push_back({section, section_line, {}});
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      p.fail(number, "expected 'key = value', got '" + line + "'");
      continue;
    }
    Line l{number, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (l.key.empty()) {
      p.fail(number, "missing key before '='");
      continue;
    }
    if (section.empty()) {
      if (l.key == "scenario") {
        scenario_name = l.value;
        scenario_line = number;
      } else {
        p.fail(number, "key '" + l.key + "' outside any section");
      }
      continue;
    }
    blocks.back().entries.push_back(l);
  }

  RunConfig cfg;
  if (scenario_name) {
    try {
      cfg.scenario = preset(*scenario_name);
    } catch (const std::exception& e) {
      p.fail(scenario_line, e.what());
    }
  } else {
    cfg.scenario.name = "custom";
    cfg.scenario.grid = TimeGrid(1638.4, 0.1, 0.0125);
    cfg.scenario.theta_sweep = {0.0};
    cfg.scenario.ensemble_size = 100;
  }

  // Pass 2: apply blocks.  Mode sections replace the preset's lists the
  // first time each kind appears, further occurrences append.
  bool cleared_optical = false, cleared_mechanical = false,
       cleared_couplings = false;
  double span = cfg.scenario.grid.total_span;
  double coarse = cfg.scenario.grid.coarse_step;
  double fine = cfg.scenario.grid.fine_step;
  bool grid_touched = false;
  int grid_line = 0;

  for (const auto& blk : blocks) {
    if (blk.name == "optical") {
      if (!cleared_optical) cfg.scenario.system.optical.clear();
      cleared_optical = true;
      OpticalMode m;
      for (const auto& l : blk.entries) {
        if (l.key == "kappa") p.to_double(l, m.kappa);
        else if (l.key == "detuning") p.to_double(l, m.detuning);
        else if (l.key == "n_occ") p.to_double(l, m.n_occ);
        else p.fail(l.number, "unknown key '" + l.key + "' in [optical]");
      }
      cfg.scenario.system.optical.push_back(m);
    } else if (blk.name == "mechanical") {
      if (!cleared_mechanical) cfg.scenario.system.mechanical.clear();
      cleared_mechanical = true;
      MechanicalMode m;
      for (const auto& l : blk.entries) {
        if (l.key == "gamma") p.to_double(l, m.gamma);
        else if (l.key == "omega_m") p.to_double(l, m.omega_m);
        else if (l.key == "n_occ") p.to_double(l, m.n_occ);
        else p.fail(l.number, "unknown key '" + l.key + "' in [mechanical]");
      }
      cfg.scenario.system.mechanical.push_back(m);
    } else if (blk.name == "coupling") {
      if (!cleared_couplings) cfg.scenario.system.couplings.clear();
      cleared_couplings = true;
      Coupling c;
      for (const auto& l : blk.entries) {
        if (l.key == "optical_index") p.to_size(l, c.optical_index);
        else if (l.key == "mechanical_index") p.to_size(l, c.mechanical_index);
        else if (l.key == "g1") p.to_double(l, c.g1);
        else if (l.key == "g2") p.to_double(l, c.g2);
        else p.fail(l.number, "unknown key '" + l.key + "' in [coupling]");
      }
      cfg.scenario.system.couplings.push_back(c);
    } else if (blk.name == "modulation") {
      Modulation m = cfg.scenario.system.modulation.value_or(Modulation{});
      for (const auto& l : blk.entries) {
        if (l.key == "g_bar") p.to_double(l, m.g_bar);
        else if (l.key == "omega_d") p.to_double(l, m.omega_d);
        else if (l.key == "omega_2") p.to_double(l, m.omega_2);
        else if (l.key == "enabled") p.to_bool(l, m.enabled);
        else p.fail(l.number, "unknown key '" + l.key + "' in [modulation]");
      }
      cfg.scenario.system.modulation = m;
    } else if (blk.name == "grid") {
      grid_touched = true;
      grid_line = blk.line;
      for (const auto& l : blk.entries) {
        if (l.key == "total_span") p.to_double(l, span);
        else if (l.key == "coarse_step") p.to_double(l, coarse);
        else if (l.key == "fine_step") p.to_double(l, fine);
        else p.fail(l.number, "unknown key '" + l.key + "' in [grid]");
      }
    } else if (blk.name == "detection") {
      for (const auto& l : blk.entries) {
        if (l.key == "theta") p.to_double_list(l, cfg.scenario.theta_sweep);
        else if (l.key == "omega_het") p.to_double(l, cfg.scenario.omega_het);
        else p.fail(l.number, "unknown key '" + l.key + "' in [detection]");
      }
    } else if (blk.name == "filter") {
      for (const auto& l : blk.entries) {
        if (l.key == "kind") {
          if (l.value == "none") cfg.scenario.filter.kind = FilterKind::none;
          else if (l.value == "r-heterodyne") {
            cfg.scenario.filter.kind = FilterKind::r_heterodyne;
            cfg.use_filter = true;
          } else p.fail(l.number, "unknown filter kind '" + l.value + "'");
        } else if (l.key == "demod_phase")
          p.to_double(l, cfg.scenario.filter.demod_phase);
        else if (l.key == "lowpass_cutoff")
          p.to_double(l, cfg.scenario.filter.lowpass_cutoff);
        else p.fail(l.number, "unknown key '" + l.key + "' in [filter]");
      }
    } else if (blk.name == "run") {
      for (const auto& l : blk.entries) {
        if (l.key == "n_traj") p.to_size(l, cfg.n_traj);
        else if (l.key == "master_seed") p.to_u64(l, cfg.master_seed);
        else if (l.key == "workers") p.to_size(l, cfg.workers);
        else if (l.key == "outdir") cfg.outdir = l.value;
        else if (l.key == "qlt_compare") p.to_bool(l, cfg.qlt_compare);
        else if (l.key == "components") p.to_bool(l, cfg.components);
        else if (l.key == "mech_spectrum") p.to_bool(l, cfg.mech_spectrum);
        else if (l.key == "deterministic_reduce")
          p.to_bool(l, cfg.deterministic_reduce);
        else if (l.key == "welch_segments") p.to_size(l, cfg.welch_segments);
        else if (l.key == "hann_window") p.to_bool(l, cfg.hann);
        else if (l.key == "one_sided") p.to_bool(l, cfg.one_sided);
        else if (l.key == "readout_mode") p.to_size(l, cfg.scenario.readout_mode);
        else if (l.key == "reference_mech")
          p.to_size(l, cfg.scenario.reference_mech);
        else p.fail(l.number, "unknown key '" + l.key + "' in [run]");
      }
    }
  }

  if (grid_touched) {
    try {
      cfg.scenario.grid = TimeGrid(span, coarse, fine);
    } catch (const std::exception& e) {
      p.fail(grid_line, std::string("grid: ") + e.what());
    }
  }

  // Semantic validation.
  const auto violations = validate_spec(cfg.scenario.system);
  for (const auto& v : violations) p.fail(0, v.field + ": " + v.message);

  if (cfg.scenario.readout_mode >= cfg.scenario.system.optical.size())
    p.fail(0, "readout_mode: no such optical mode");
  if (!cfg.scenario.system.mechanical.empty() &&
      cfg.scenario.reference_mech >= cfg.scenario.system.mechanical.size())
    p.fail(0, "reference_mech: no such mechanical mode");
  if (cfg.scenario.omega_het < 0.0)
    p.fail(0, "omega_het: must be >= 0");
  if (cfg.scenario.omega_het > 0.0) {
    const double nyquist = std::numbers::pi / cfg.scenario.grid.coarse_step;
    if (cfg.scenario.omega_het >= nyquist)
      p.fail(0, "omega_het: must stay below pi/coarse_step");
  }
  if (cfg.use_filter) {
    if (!(cfg.scenario.omega_het > 0.0))
      p.fail(0, "filter: r-heterodyne requires omega_het > 0");
    else if (!(cfg.scenario.filter.lowpass_cutoff > 0.0) ||
             cfg.scenario.filter.lowpass_cutoff >= cfg.scenario.omega_het)
      p.fail(0, "filter.lowpass_cutoff: must satisfy 0 < cutoff < omega_het");
  }
  if (cfg.welch_segments == 0) p.fail(0, "welch_segments: must be >= 1");
  for (double th : cfg.scenario.theta_sweep)
    if (!std::isfinite(th)) p.fail(0, "theta: non-finite value");

  ParseResult res;
  res.errors = std::move(p.errors);
  if (res.errors.empty()) res.config = std::move(cfg);
  return res;
}

}  // namespace omsim
