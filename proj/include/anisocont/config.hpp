#pragma once

#include "anisocont/adapt_options.hpp"
#include "anisocont/continuation.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

namespace anisocont {

/// Config error carrying the offending line (0 when not line-specific).
class ConfigParseError : public ConfigError {
public:
  ConfigParseError(int line, const std::string& msg)
    : ConfigError(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line)
  {
  }
  ConfigParseError(const std::string& prefix, const ConfigParseError& inner)
    : ConfigError(prefix + inner.what()), line_(inner.line_)
  {
  }
  int line() const { return line_; }

private:
  int line_;
};

/// Evaluates arithmetic with + - * / ^, parentheses, unary signs and the
/// constant `pi`, e.g. "3*pi/2" or "-2*pi".
inline double eval_expression(const std::string& text)
{
  struct Parser {
    const std::string& s;
    std::size_t i = 0;

    void skip()
    {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])))
        ++i;
    }
    [[noreturn]] void fail(const std::string& what) const
    {
      throw std::invalid_argument(what + " in expression '" + s + "'");
    }
    double expr()
    {
      double v = term();
      for (;;) {
        skip();
        if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
          const char op = s[i++];
          const double r = term();
          v = op == '+' ? v + r : v - r;
        }
        else
          return v;
      }
    }
    double term()
    {
      double v = factor();
      for (;;) {
        skip();
        if (i < s.size() && (s[i] == '*' || s[i] == '/')) {
          const char op = s[i++];
          const double r = factor();
          v = op == '*' ? v * r : v / r;
        }
        else
          return v;
      }
    }
    double factor()
    {
      skip();
      if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
        const char op = s[i++];
        const double v = factor();
        return op == '-' ? -v : v;
      }
      const double b = atom();
      skip();
      if (i < s.size() && s[i] == '^') {
        ++i;
        return std::pow(b, factor());
      }
      return b;
    }
    double atom()
    {
      skip();
      if (i >= s.size())
        fail("unexpected end");
      if (s[i] == '(') {
        ++i;
        const double v = expr();
        skip();
        if (i >= s.size() || s[i] != ')')
          fail("missing ')'");
        ++i;
        return v;
      }
      if (s.compare(i, 2, "pi") == 0) {
        i += 2;
        return std::numbers::pi;
      }
      if (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(s.substr(i), &used);
        }
        catch (const std::exception&) {
          fail("bad number");
        }
        i += used;
        return v;
      }
      fail(std::string("unexpected '") + s[i] + "'");
    }
  };
  Parser p{text};
  const double v = p.expr();
  p.skip();
  if (p.i != text.size())
    p.fail("trailing characters");
  return v;
}

/// Sectioned key = value file. Comments start with '#' or ';'.
class IniDocument {
public:
  struct Entry {
    std::string value;
    int line = 0;
    mutable bool used = false;
  };

  static IniDocument parse(std::istream& is)
  {
    IniDocument doc;
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(is, raw)) {
      ++lineno;
      std::string line = raw.substr(0, raw.find_first_of("#;"));
      line = trim(line);
      if (line.empty())
        continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigParseError(lineno, "unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty())
          throw ConfigParseError(lineno, "empty section name");
        doc.sections_.insert(section);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigParseError(lineno, "expected 'key = value'");
      if (section.empty())
        throw ConfigParseError(lineno, "key outside of any section");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigParseError(lineno, "empty key");
      const std::string full = section + "." + key;
      if (doc.entries_.count(full))
        throw ConfigParseError(lineno, "duplicate key '" + key + "' in [" + section + "]");
      doc.entries_[full] = {value, lineno};
    }
    return doc;
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  bool has_section(const std::string& s) const { return sections_.count(s) > 0; }
  const Entry* find(const std::string& key) const
  {
    const auto it = entries_.find(key);
    if (it == entries_.end())
      return nullptr;
    it->second.used = true;
    return &it->second;
  }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::string str(const std::string& key, const std::string& def) const
  {
    const auto* e = find(key);
    return e ? e->value : def;
  }
  double num(const std::string& key, double def) const
  {
    const auto* e = find(key);
    if (!e)
      return def;
    try {
      return eval_expression(e->value);
    }
    catch (const std::invalid_argument& ex) {
      throw ConfigParseError(e->line, key + ": " + ex.what());
    }
  }
  int integer(const std::string& key, int def) const
  {
    const auto* e = find(key);
    if (!e)
      return def;
    const double v = num(key, def);
    if (v != std::round(v))
      throw ConfigParseError(e->line, key + ": expected an integer");
    return static_cast<int>(v);
  }
  bool boolean(const std::string& key, bool def) const
  {
    const auto* e = find(key);
    if (!e)
      return def;
    if (e->value == "true" || e->value == "1" || e->value == "yes" || e->value == "on")
      return true;
    if (e->value == "false" || e->value == "0" || e->value == "no" || e->value == "off")
      return false;
    throw ConfigParseError(e->line, key + ": expected a boolean");
  }
  int line_of(const std::string& key) const
  {
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  static std::string trim(const std::string& s)
  {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
      return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

private:
  std::map<std::string, Entry> entries_;
  std::set<std::string> sections_;
};

struct MeshSpec {
  int dim = 2;
  double lx = 1.0, ly = 1.0, lz = 1.0;
  int nx = 2, ny = 2, nz = 2;
};

struct OutputSpec {
  std::string directory = ".";
  std::string name = "run";
  int snapshot_stride = 10;  // 0: snapshots only at BPs
};

struct RunConfig {
  ProblemDef problem;
  MeshSpec mesh;
  AdaptOptions trop;
  CoarsenOptions trcop;
  ContinuationSettings cont;
  double direction = 1.0;
  bool initial_adapt = false;
  int switch_at = 0;      // 0: no branch switching, k: switch at the k-th BP
  int switch_steps = 0;   // steps on the bifurcating branch (0: cont.nsteps)
  OutputSpec output;
};

namespace detail {

inline void read_adapt_block(const IniDocument& doc, const std::string& sec, AdaptOptions& o)
{
  const auto key = [&sec](const char* k) { return sec + "." + k; };
  const std::string mode = doc.str(key("eta_mode"), o.eta_policy.mode == EtaPolicy::Mode::Constant ? "constant" : "linear");
  const double eta = doc.num(key("eta"), o.eta_policy.value);
  if (mode == "constant")
    o.eta_policy = EtaPolicy::constant(eta);
  else if (mode == "linear")
    o.eta_policy = EtaPolicy::linear_in_np(eta);
  else
    throw ConfigParseError(doc.line_of(key("eta_mode")), "eta_mode must be 'constant' or 'linear'");
  o.ppar = doc.num(key("ppar"), o.ppar);
  o.innerit = doc.integer(key("innerit"), o.innerit);
  o.l_low = doc.num(key("llow"), o.l_low);
  o.l_up = doc.num(key("lup"), o.l_up);
  o.qual_p = doc.num(key("qualp"), o.qual_p);
  o.sw = doc.integer(key("sw"), o.sw);
  if (o.sw < 0 || o.sw > 15)
    throw ConfigParseError(doc.line_of(key("sw")), "sw must be in 0..15");
  o.h_max_fraction = doc.num(key("h_max_fraction"), o.h_max_fraction);
  o.collapse_quality_floor = doc.num(key("collapse_quality_floor"), o.collapse_quality_floor);
  o.move_damping = doc.num(key("move_damping"), o.move_damping);
  const std::string field = doc.str(key("field"), "identity");
  if (field == "identity")
    o.field_selector = {};
  else if (field == "exp")
    o.field_selector = selectors::exponential();
  else
    throw ConfigParseError(doc.line_of(key("field")), "field must be 'identity' or 'exp'");
  try {
    o.check();
  }
  catch (const ConfigError& e) {
    throw ConfigParseError(0, "[" + sec + "] " + e.what());
  }
}

inline BoundaryCondition parse_bc(const std::string& text, int line)
{
  std::istringstream is(text);
  std::string kind, profile;
  is >> kind >> profile;
  if (kind == "neumann")
    return BoundaryCondition::neumann();
  if (kind == "dirichlet") {
    try {
      return BoundaryCondition::dirichlet(profile.empty() ? ProfileId::Zero : profile_from_string(profile));
    }
    catch (const ConfigError& e) {
      throw ConfigParseError(line, e.what());
    }
  }
  throw ConfigParseError(line, "boundary condition must be 'neumann' or 'dirichlet <profile>'");
}

} // namespace detail

inline RunConfig parse_run_config(std::istream& is)
{
  const IniDocument doc = IniDocument::parse(is);
  RunConfig cfg;

  auto& m = cfg.mesh;
  m.dim = doc.integer("mesh.dim", 2);
  if (m.dim != 2 && m.dim != 3)
    throw ConfigParseError(doc.line_of("mesh.dim"), "mesh.dim must be 2 or 3");
  m.lx = doc.num("mesh.lx", m.lx);
  m.ly = doc.num("mesh.ly", m.ly);
  m.lz = doc.num("mesh.lz", m.lz);
  m.nx = doc.integer("mesh.nx", m.nx);
  m.ny = doc.integer("mesh.ny", m.ny);
  m.nz = doc.integer("mesh.nz", m.nz);
  if (!(m.lx > 0 && m.ly > 0 && m.lz > 0))
    throw ConfigParseError(0, "[mesh] extents must be positive");
  if (m.nx < 2 || m.ny < 2 || (m.dim == 3 && m.nz < 2))
    throw ConfigParseError(0, "[mesh] node counts must be >= 2");

  auto& p = cfg.problem;
  p.c = doc.num("problem.c", p.c);
  p.lambda = doc.num("problem.lambda", p.lambda);
  p.gamma = doc.num("problem.gamma", p.gamma);
  p.aux["d"] = doc.num("problem.d", 0.0);
  p.aux["xi"] = doc.num("problem.xi", 0.0);
  p.active_param = doc.str("problem.active_param", "lambda");
  for (const auto& [key, entry] : doc.entries()) {
    if (key.rfind("bc.", 0) != 0)
      continue;
    entry.used = true;
    int id = 0;
    try {
      std::size_t pos = 0;
      id = std::stoi(key.substr(3), &pos);
      if (pos != key.size() - 3)
        throw std::invalid_argument(key);
    }
    catch (const std::exception&) {
      throw ConfigParseError(entry.line, "boundary key must be a segment number");
    }
    const int nseg = m.dim == 2 ? num_segments<2>() : num_segments<3>();
    if (id < 1 || id > nseg)
      throw ConfigParseError(entry.line, "segment " + std::to_string(id) + " is not valid in " + std::to_string(m.dim) + "D");
    p.bc[id] = detail::parse_bc(entry.value, entry.line);
  }
  try {
    if (m.dim == 2)
      p.check<2>();
    else
      p.check<3>();
  }
  catch (const ConfigParseError&) {
    throw;
  }
  catch (const ConfigError& e) {
    throw ConfigParseError(doc.line_of("problem.active_param"), e.what());
  }

  detail::read_adapt_block(doc, "trop", cfg.trop);
  cfg.trcop = CoarsenOptions(cfg.trop);
  detail::read_adapt_block(doc, "trcop", cfg.trcop);
  cfg.trcop.sw = doc.integer("trcop.sw", 5);
  cfg.trcop.npb = doc.integer("trcop.npb", 0);
  cfg.trcop.crmax = doc.integer("trcop.crmax", 10);
  try {
    cfg.trcop.check();
  }
  catch (const ConfigError& e) {
    throw ConfigParseError(0, std::string("[trcop] ") + e.what());
  }

  auto& c = cfg.cont;
  c.ds0 = doc.num("cont.ds0", c.ds0);
  c.ds_min = doc.num("cont.ds_min", c.ds_min);
  c.ds_max = doc.num("cont.ds_max", c.ds_max);
  c.newton_tol = doc.num("cont.newton_tol", c.newton_tol);
  c.newton_max_it = doc.integer("cont.newton_max_it", c.newton_max_it);
  c.amod = doc.integer("cont.amod", c.amod);
  c.ngen = doc.integer("cont.ngen", c.ngen);
  c.nsteps = doc.integer("cont.nsteps", c.nsteps);
  c.bif_detection = doc.boolean("cont.bif_detection", c.bif_detection);
  c.xi_w = doc.num("cont.xi_w", c.xi_w);
  c.param_min = doc.num("cont.param_min", c.param_min);
  c.param_max = doc.num("cont.param_max", c.param_max);
  c.bp_bracket = doc.num("cont.bp_bracket", c.bp_bracket);
  c.switch_delta = doc.num("cont.switch_delta", c.switch_delta);
  try {
    c.check();
  }
  catch (const ConfigError& e) {
    throw ConfigParseError(0, std::string("[cont] ") + e.what());
  }
  cfg.direction = doc.num("cont.direction", 1.0) >= 0.0 ? 1.0 : -1.0;
  cfg.initial_adapt = doc.boolean("cont.initial_adapt", false);
  cfg.switch_at = doc.integer("cont.switch_at", 0);
  cfg.switch_steps = doc.integer("cont.switch_steps", 0);

  cfg.output.directory = doc.str("output.directory", cfg.output.directory);
  cfg.output.name = doc.str("output.name", cfg.output.name);
  cfg.output.snapshot_stride = doc.integer("output.snapshot_stride", cfg.output.snapshot_stride);
  if (cfg.output.snapshot_stride < 0)
    throw ConfigParseError(doc.line_of("output.snapshot_stride"), "snapshot_stride must be >= 0");

  for (const auto& [key, entry] : doc.entries())
    if (!entry.used)
      throw ConfigParseError(entry.line, "unknown key '" + key + "'");
  return cfg;
}

inline RunConfig parse_run_config_string(const std::string& text)
{
  std::istringstream is(text);
  return parse_run_config(is);
}

inline RunConfig load_run_config(const std::string& path)
{
  std::ifstream is(path);
  if (!is)
    throw ConfigParseError(0, "cannot open config file '" + path + "'");
  try {
    return parse_run_config(is);
  }
  catch (const ConfigParseError& e) {
    throw ConfigParseError(path + ": ", e);
  }
}

} // namespace anisocont
