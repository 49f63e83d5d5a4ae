#pragma once

#include "anisocont/continuation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace anisocont {

class BranchFormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* branch_csv_header = "step,param_name,param_value,l2,min_u,max_u,np,n_neg,flag";

namespace detail {

inline std::string fmt_g17(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int digits = 3)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line)
{
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    }
    else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

} // namespace detail

inline std::string branch_csv_row(const BranchRecord& r)
{
  std::ostringstream os;
  os << r.step << ',' << r.param_name << ',' << detail::fmt_g17(r.param_value) << ',' << detail::fmt_g17(r.l2) << ','
     << detail::fmt_g17(r.min_u) << ',' << detail::fmt_g17(r.max_u) << ',' << r.np << ',' << r.n_neg << ',' << r.flag;
  return os.str();
}

inline void write_branch_csv(std::ostream& os, const std::vector<BranchRecord>& rows)
{
  os << branch_csv_header << '\n';
  for (const auto& r : rows)
    os << branch_csv_row(r) << '\n';
}

inline std::vector<BranchRecord> read_branch_csv(std::istream& is)
{
  std::string line;
  if (!std::getline(is, line))
    throw BranchFormatError("line 1: missing header");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (line != branch_csv_header)
    throw BranchFormatError("line 1: unexpected header '" + line + "'");
  std::vector<BranchRecord> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r")
      continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 9)
      throw BranchFormatError("line " + std::to_string(lineno) + ": expected 9 fields, got " + std::to_string(f.size()));
    BranchRecord r;
    try {
      std::size_t pos = 0;
      auto num = [&pos](const std::string& s) {
        const double v = std::stod(s, &pos);
        if (pos != s.size())
          throw std::invalid_argument(s);
        return v;
      };
      auto integer = [&pos](const std::string& s) {
        const int v = std::stoi(s, &pos);
        if (pos != s.size())
          throw std::invalid_argument(s);
        return v;
      };
      r.step = integer(f[0]);
      r.param_name = f[1];
      r.param_value = num(f[2]);
      r.l2 = num(f[3]);
      r.min_u = num(f[4]);
      r.max_u = num(f[5]);
      r.np = integer(f[6]);
      r.n_neg = integer(f[7]);
      r.flag = f[8];
    }
    catch (const std::exception&) {
      throw BranchFormatError("line " + std::to_string(lineno) + ": malformed number");
    }
    if (!(r.flag.empty() || r.flag == "BP" || r.flag == "FP" || r.flag == "ADAPT"))
      throw BranchFormatError("line " + std::to_string(lineno) + ": unknown flag '" + r.flag + "'");
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<BranchRecord> read_branch_csv_file(const std::string& path)
{
  std::ifstream is(path);
  if (!is)
    throw BranchFormatError("cannot open '" + path + "'");
  return read_branch_csv(is);
}

/// Fixed-viewport SVG of l2 against the parameter. BP rows get a circle,
/// FP rows a square. The output depends only on the rows.
inline std::string branch_svg(const std::vector<BranchRecord>& rows)
{
  constexpr double W = 640, H = 480, left = 70, right = 20, top = 20, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!rows.empty()) {
    xmin = xmax = rows.front().param_value;
    ymin = ymax = rows.front().l2;
    for (const auto& r : rows) {
      xmin = std::min(xmin, r.param_value);
      xmax = std::max(xmax, r.param_value);
      ymin = std::min(ymin, r.l2);
      ymax = std::max(ymax, r.l2);
    }
  }
  auto pad = [](double& lo, double& hi) {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    else {
      const double m = 0.05 * (hi - lo);
      lo -= m;
      hi += m;
    }
  };
  pad(xmin, xmax);
  pad(ymin, ymax);
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };
  using detail::fmt_fixed;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
  os << "</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    os << "<text x=\"" << fmt_fixed(sx(xv)) << "\" y=\"" << fmt_fixed(top + ph + 16) << "\" text-anchor=\"middle\">"
       << fmt_fixed(xv, 4) << "</text>\n";
    os << "<text x=\"" << fmt_fixed(left - 6) << "\" y=\"" << fmt_fixed(sy(yv) + 4) << "\" text-anchor=\"end\">"
       << fmt_fixed(yv, 4) << "</text>\n";
  }
  const std::string xlabel = rows.empty() ? "parameter" : rows.front().param_name;
  os << "<text x=\"" << fmt_fixed(left + pw / 2) << "\" y=\"" << fmt_fixed(H - 10) << "\" text-anchor=\"middle\">"
     << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << fmt_fixed(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << fmt_fixed(top + ph / 2) << ")\">L2 norm</text>\n";
  os << "</g>\n";
  if (rows.size() >= 2) {
    os << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < rows.size(); ++i)
      os << (i ? " " : "") << fmt_fixed(sx(rows[i].param_value)) << ',' << fmt_fixed(sy(rows[i].l2));
    os << "\"/>\n";
  }
  for (const auto& r : rows) {
    if (r.flag == "BP")
      os << "<circle class=\"BP\" cx=\"" << fmt_fixed(sx(r.param_value)) << "\" cy=\"" << fmt_fixed(sy(r.l2))
         << "\" r=\"4\" fill=\"#c0392b\"/>\n";
    else if (r.flag == "FP")
      os << "<rect class=\"FP\" x=\"" << fmt_fixed(sx(r.param_value) - 4) << "\" y=\"" << fmt_fixed(sy(r.l2) - 4)
         << "\" width=\"8\" height=\"8\" fill=\"#27ae60\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void plot_branch(const std::string& csv_path, const std::string& svg_path)
{
  const auto rows = read_branch_csv_file(csv_path);
  const std::string svg = branch_svg(rows);
  std::ofstream os(svg_path, std::ios::binary);
  if (!os)
    throw std::runtime_error("cannot write '" + svg_path + "'");
  os << svg;
}

} // namespace anisocont
