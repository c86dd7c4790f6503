#pragma once

// Distilled/original data weights per epoch and the learning-rate schedule.
//
//   x = t / (T - 1),  t = 0 .. T-1
//   simple_mix  w0 = 1 if t < T/2 else 0
//   sigmoid     w0 = 1 - 1 / (1 + exp(-k (x - 0.5)))
//   cosine      w0 = 0.5 (1 + cos(pi x))
//   power       w0 = 1 - x^n
//   w1 = 1 - w0, except all_blend where w0 = w1 = 1 (both datasets in full).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nerkd/error.hpp"

namespace nerkd {

enum class BlendKind { pure_distilled, pure_original, simple_mix, sigmoid, cosine, power, all_blend };

inline std::string to_string(BlendKind k) {
  switch (k) {
    case BlendKind::pure_distilled: return "pure_distilled";
    case BlendKind::pure_original: return "pure_original";
    case BlendKind::simple_mix: return "simple_mix";
    case BlendKind::sigmoid: return "sigmoid";
    case BlendKind::cosine: return "cosine";
    case BlendKind::power: return "power";
    case BlendKind::all_blend: return "all_blend";
  }
  return "?";
}

inline BlendKind blend_kind_from_string(std::string_view s) {
  for (auto k : {BlendKind::pure_distilled, BlendKind::pure_original,
                 BlendKind::simple_mix, BlendKind::sigmoid, BlendKind::cosine,
                 BlendKind::power, BlendKind::all_blend})
    if (s == to_string(k)) return k;
  if (s == "all" || s == "ALL") return BlendKind::all_blend;
  throw InvalidArgument("unknown schedule kind '" + std::string(s) + "'");
}

struct ScheduleSpec {
  BlendKind kind = BlendKind::simple_mix;
  double k = 0;  // sigmoid steepness
  double n = 0;  // power exponent
  int T = 20;    // total epochs

  friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

inline bool uses_ratio(BlendKind k) {
  return k == BlendKind::sigmoid || k == BlendKind::cosine || k == BlendKind::power;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// "k=32", "n=0.5" or "".
inline std::string params_string(const ScheduleSpec& s) {
  if (s.kind == BlendKind::sigmoid) return "k=" + format_number(s.k);
  if (s.kind == BlendKind::power) return "n=" + format_number(s.n);
  return "";
}

// Column label as used in reports, e.g. "sigmoid(k=32)".
inline std::string strategy_label(const ScheduleSpec& s) {
  auto p = params_string(s);
  return p.empty() ? to_string(s.kind) : to_string(s.kind) + "(" + p + ")";
}

inline void validate(const ScheduleSpec& s) {
  if (s.T < 1) throw InvalidArgument("schedule needs T >= 1");
  if (s.kind == BlendKind::sigmoid && !(s.k > 0))
    throw InvalidArgument("sigmoid schedule needs k > 0");
  if (s.kind == BlendKind::power && !(s.n > 0))
    throw InvalidArgument("power schedule needs n > 0");
  if (uses_ratio(s.kind) && s.T < 2)
    throw InvalidArgument(to_string(s.kind) + " schedule needs T >= 2");
}

namespace detail {

inline void check_epoch(const ScheduleSpec& s, int t) {
  validate(s);
  if (t < 0 || t >= s.T)
    throw InvalidArgument("epoch " + std::to_string(t) + " outside [0, " +
                          std::to_string(s.T) + ")");
}

// cos(pi x) for x in [0, 1], exact at 0, 1/2 and 1.
inline double cos_pi(double x) {
  if (x == 0.0) return 1.0;
  if (x == 0.5) return 0.0;
  if (x == 1.0) return -1.0;
  return std::cos(std::numbers::pi * x);
}

}  // namespace detail

inline double w0(const ScheduleSpec& s, int t) {
  detail::check_epoch(s, t);
  const double x = uses_ratio(s.kind) ? static_cast<double>(t) / (s.T - 1) : 0.0;
  switch (s.kind) {
    case BlendKind::pure_distilled: return 1.0;
    case BlendKind::pure_original: return 0.0;
    case BlendKind::simple_mix: return 2 * t < s.T ? 1.0 : 0.0;
    case BlendKind::sigmoid:
      // 1 - 1/(1+e^-z) rewritten as 1/(1+e^z), z = k(x - 1/2).
      return 1.0 / (1.0 + std::exp(s.k * (x - 0.5)));
    case BlendKind::cosine: return 0.5 * (1.0 + detail::cos_pi(x));
    case BlendKind::power: return 1.0 - std::pow(x, s.n);
    case BlendKind::all_blend: return 1.0;
  }
  return 0.0;
}

inline double w1(const ScheduleSpec& s, int t) {
  if (s.kind == BlendKind::all_blend) {
    detail::check_epoch(s, t);
    return 1.0;
  }
  return 1.0 - w0(s, t);
}

struct LrSpec {
  double base_lr = 1e-5;
  double decay_factor = 1.0;  // 1.0 = constant

  friend bool operator==(const LrSpec&, const LrSpec&) = default;
};

inline void validate(const LrSpec& lr) {
  if (!(lr.base_lr > 0)) throw InvalidArgument("base learning rate must be > 0");
  if (!(lr.decay_factor > 0 && lr.decay_factor <= 1))
    throw InvalidArgument("decay factor must be in (0, 1]");
}

inline double lr_at_epoch(const LrSpec& lr, int t) {
  validate(lr);
  if (t < 0) throw InvalidArgument("negative epoch");
  return lr.base_lr * std::pow(lr.decay_factor, t);
}

// 1 simple mix, sigmoids for k in {2,4,8,16,32}, 1 cosine, powers for n in
// {0.1,0.2,0.5,1,2,5,10}.
inline std::vector<ScheduleSpec> curve_family(int T = 20) {
  std::vector<ScheduleSpec> out{{BlendKind::simple_mix, 0, 0, T}};
  for (double k : {2.0, 4.0, 8.0, 16.0, 32.0}) out.push_back({BlendKind::sigmoid, k, 0, T});
  out.push_back({BlendKind::cosine, 0, 0, T});
  for (double n : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0})
    out.push_back({BlendKind::power, 0, n, T});
  return out;
}

struct CurvePoint {
  std::string strategy;
  std::string params;
  int t;
  double w0;
};

inline std::vector<CurvePoint> curve_points(const std::vector<ScheduleSpec>& specs) {
  std::vector<CurvePoint> out;
  for (const auto& s : specs)
    for (int t = 0; t < s.T; ++t)
      out.push_back({to_string(s.kind), params_string(s), t, w0(s, t)});
  return out;
}

// CSV header "strategy,params,t,w0"; weights printed with 17 significant
// digits so the file round-trips exactly.
inline void write_curves_csv(std::ostream& out, const std::vector<ScheduleSpec>& specs) {
  out << "strategy,params,t,w0\n";
  char buf[40];
  for (const auto& p : curve_points(specs)) {
    std::snprintf(buf, sizeof buf, "%.17g", p.w0);
    out << p.strategy << ',' << p.params << ',' << p.t << ',' << buf << '\n';
  }
}

inline std::vector<CurvePoint> read_curves_csv(std::istream& in) {
  std::vector<CurvePoint> out;
  std::string line;
  std::getline(in, line);
  if (line != "strategy,params,t,w0") throw ParseError("unexpected curve CSV header", 1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 4) throw ParseError("expected 4 fields", line_no);
    out.push_back({f[0], f[1], std::stoi(f[2]), std::stod(f[3])});
  }
  return out;
}

// Line plot of w0 against t, one polyline per schedule.
inline void write_curves_svg(std::ostream& out, const std::vector<ScheduleSpec>& specs) {
  constexpr double W = 640, H = 400, M = 50;
  static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                            "#bcbd22", "#17becf"};
  int max_t = 1;
  for (const auto& s : specs) max_t = std::max(max_t, s.T - 1);
  auto px = [&](int t) { return M + (W - 2 * M) * t / max_t; };
  auto py = [&](double w) { return H - M - (H - 2 * M) * w; };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
      << H + 20 * static_cast<double>(specs.size()) << "\">\n";
  out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\""
      << H - M << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 15 << "\">epoch t</text>\n";
  out << "<text x=\"5\" y=\"" << M - 10 << "\">w0</text>\n";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (int t = 0; t < specs[i].T; ++t)
      out << px(t) << ',' << py(w0(specs[i], t)) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << M << "\" y=\"" << H + 20 * static_cast<double>(i)
        << "\" fill=\"" << color << "\">" << strategy_label(specs[i]) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace nerkd
