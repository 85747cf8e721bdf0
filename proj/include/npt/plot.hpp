#pragma once

// Hand-written SVG 1.1 figures for sweep reports, and the sweep output
// directory writer.

#include "npt/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>

namespace npt {

struct ScatterPoint {
  double x = 0.0, y = 0.0;
  Method method = Method::Baseline;
  double tau = 1.0;
};

// A projected set of reps for one trained model.
struct ProjectionPanel {
  std::string title;
  Matrix text_2d;   // 2 x K
  Matrix image_2d;  // 2 x N
  Labels labels;
};

namespace svg {

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << x;
  return os.str();
}

inline std::string tick(double x) {
  std::ostringstream os;
  os << std::setprecision(3) << x;
  return os.str();
}

inline const char* method_color(Method m) { return m == Method::Npt ? "#d62728" : "#1f77b4"; }

inline const char* class_color(int k) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[static_cast<std::size_t>(k) % 10];
}

// Glyph drawn over a marker to tell tau values apart, centred at (cx, cy).
inline std::string tau_glyph(std::size_t tau_index, double cx, double cy, double r) {
  std::ostringstream d;
  switch (tau_index % 4) {
    case 0: return "";
    case 1: d << "M" << num(cx - r) << ' ' << num(cy) << "H" << num(cx + r); break;
    case 2:
      d << "M" << num(cx - r) << ' ' << num(cy) << "H" << num(cx + r) << "M" << num(cx) << ' ' << num(cy - r) << "V"
        << num(cy + r);
      break;
    default:
      d << "M" << num(cx - r) << ' ' << num(cy - r) << "L" << num(cx + r) << ' ' << num(cy + r) << "M" << num(cx - r)
        << ' ' << num(cy + r) << "L" << num(cx + r) << ' ' << num(cy - r);
  }
  return "<path d=\"" + d.str() + "\" stroke=\"#000\" stroke-width=\"1.2\" fill=\"none\"/>";
}

struct Range {
  double lo = 0.0, hi = 1.0;
};

inline constexpr double kDegenerateMargin = 0.05;

// Padded data range. A zero-width range is widened by a fixed margin.
inline Range padded_range(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  Range r{*lo, *hi};
  if (!(r.hi - r.lo > 1e-12)) return {r.lo - kDegenerateMargin, r.hi + kDegenerateMargin};
  const double pad = 0.05 * (r.hi - r.lo);
  return {r.lo - pad, r.hi + pad};
}

struct Frame {
  double width = 640, height = 480, left = 70, right = 170, top = 40, bottom = 60;
  Range x, y;
  double px(double v) const { return left + (v - x.lo) / (x.hi - x.lo) * (width - left - right); }
  double py(double v) const { return height - bottom - (v - y.lo) / (y.hi - y.lo) * (height - top - bottom); }
};

inline void open_document(std::ostream& os, double w, double h, const std::string& title) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<title>" << escape(title) << "</title>\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"#fff\"/>\n";
}

inline void axes(std::ostream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const double x0 = f.left, x1 = f.width - f.right, y0 = f.height - f.bottom, y1 = f.top;
  os << "<g stroke=\"#333\" fill=\"none\">\n"
     << "<path d=\"M" << x0 << ' ' << y1 << "V" << y0 << "H" << x1 << "\"/>\n</g>\n";
  os << "<g fill=\"#333\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double vx = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0, vy = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    os << "<text x=\"" << num(f.px(vx)) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"middle\">" << tick(vx)
       << "</text>\n";
    os << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(f.py(vy) + 4) << "\" text-anchor=\"end\">" << tick(vy)
       << "</text>\n";
  }
  os << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(f.height - 18) << "\" text-anchor=\"middle\">"
     << escape(xlabel) << "</text>\n";
  os << "<text transform=\"translate(18 " << num((y0 + y1) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(ylabel) << "</text>\n</g>\n";
}

}  // namespace svg

// One circle per point, coloured by method; tau is marked with an overlaid
// glyph. The legend uses rects and paths only, so the circle count equals the
// number of points.
inline std::string scatter_svg(const std::vector<ScatterPoint>& pts, const std::string& xlabel,
                               const std::string& ylabel, const std::string& title) {
  if (pts.empty()) throw ArgumentError("scatter_svg: no points to plot");
  std::vector<double> xs, ys, taus;
  for (const auto& p : pts) {
    xs.push_back(p.x);
    ys.push_back(p.y);
    if (std::find(taus.begin(), taus.end(), p.tau) == taus.end()) taus.push_back(p.tau);
  }
  std::sort(taus.rbegin(), taus.rend());
  svg::Frame f;
  f.x = svg::padded_range(xs);
  f.y = svg::padded_range(ys);
  std::ostringstream os;
  svg::open_document(os, f.width, f.height, title);
  os << "<text x=\"" << f.left << "\" y=\"22\" font-size=\"14\">" << svg::escape(title) << "</text>\n";
  svg::axes(os, f, xlabel, ylabel);
  os << "<g id=\"points\">\n";
  for (const auto& p : pts) {
    const double cx = f.px(p.x), cy = f.py(p.y);
    const std::size_t ti = static_cast<std::size_t>(std::find(taus.begin(), taus.end(), p.tau) - taus.begin());
    os << "<circle cx=\"" << svg::num(cx) << "\" cy=\"" << svg::num(cy) << "\" r=\"5\" fill=\""
       << svg::method_color(p.method) << "\" fill-opacity=\"0.6\" stroke=\"" << svg::method_color(p.method)
       << "\"/>" << svg::tau_glyph(ti, cx, cy, 4) << '\n';
  }
  os << "</g>\n<g id=\"legend\">\n";
  double ly = f.top + 10;
  const double lx = f.width - f.right + 20;
  for (Method m : {Method::Baseline, Method::Npt}) {
    os << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"" << svg::method_color(m)
       << "\"/><text x=\"" << lx + 16 << "\" y=\"" << ly << "\">" << to_string(m) << "</text>\n";
    ly += 18;
  }
  ly += 8;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    os << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"#ccc\"/>"
       << svg::tau_glyph(i, lx + 5, ly - 4, 4) << "<text x=\"" << lx + 16 << "\" y=\"" << ly << "\">tau = "
       << svg::tick(taus[i]) << "</text>\n";
    ly += 18;
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

// Top-2 principal directions of the (centred) text reps; both sets are
// centred on the text mean before projecting.
inline ProjectionPanel project_reps(const RepresentationSet& reps, const std::string& title) {
  ProjectionPanel p;
  p.title = title;
  p.labels = reps.labels;
  const Vector mean = reps.text.rowwise().mean();
  const Matrix centred = reps.text.colwise() - mean;
  Eigen::JacobiSVD<Matrix> svd(centred, Eigen::ComputeThinU);
  Matrix basis = svd.matrixU().leftCols(std::min<Index>(2, svd.matrixU().cols()));
  if (basis.cols() < 2) basis.conservativeResize(Eigen::NoChange, 2), basis.col(1).setZero();
  p.text_2d = basis.transpose() * centred;
  p.image_2d = basis.transpose() * (reps.image.colwise() - mean);
  return p;
}

inline std::string projection_svg(const std::vector<ProjectionPanel>& panels) {
  const double panel_w = 420, h = 460;
  const double w = panel_w * double(std::max<std::size_t>(panels.size(), 1));
  std::ostringstream os;
  svg::open_document(os, w, h, "novel-class reps, top-2 principal directions of the text reps");
  if (panels.empty()) {
    os << "<text x=\"20\" y=\"40\">no representation data (re-run with a config to render)</text>\n</svg>\n";
    return os.str();
  }
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const ProjectionPanel& pp = panels[i];
    std::vector<double> xs, ys;
    for (Index j = 0; j < pp.text_2d.cols(); ++j) xs.push_back(pp.text_2d(0, j)), ys.push_back(pp.text_2d(1, j));
    for (Index j = 0; j < pp.image_2d.cols(); ++j) xs.push_back(pp.image_2d(0, j)), ys.push_back(pp.image_2d(1, j));
    xs.push_back(0.0);
    ys.push_back(0.0);
    svg::Frame f;
    f.width = panel_w;
    f.height = h;
    f.right = 20;
    f.x = svg::padded_range(xs);
    f.y = svg::padded_range(ys);
    os << "<g transform=\"translate(" << panel_w * double(i) << " 0)\">\n";
    os << "<text x=\"" << f.left << "\" y=\"22\" font-size=\"14\">" << svg::escape(pp.title) << "</text>\n";
    svg::axes(os, f, "PC1", "PC2");
    os << "<g fill-opacity=\"0.45\">\n";
    for (Index j = 0; j < pp.image_2d.cols(); ++j)
      os << "<circle cx=\"" << svg::num(f.px(pp.image_2d(0, j))) << "\" cy=\"" << svg::num(f.py(pp.image_2d(1, j)))
         << "\" r=\"2.5\" fill=\"" << svg::class_color(pp.labels[static_cast<std::size_t>(j)]) << "\"/>\n";
    os << "</g>\n<g stroke-width=\"2.5\">\n";
    for (Index k = 0; k < pp.text_2d.cols(); ++k)
      os << "<path d=\"M" << svg::num(f.px(0)) << ' ' << svg::num(f.py(0)) << "L" << svg::num(f.px(pp.text_2d(0, k)))
         << ' ' << svg::num(f.py(pp.text_2d(1, k))) << "\" stroke=\"" << svg::class_color(static_cast<int>(k))
         << "\"/>\n";
    os << "</g>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::vector<ScatterPoint> scatter_points(const std::vector<RunRow>& rows, const std::string& metric) {
  std::vector<ScatterPoint> pts;
  for (const RunRow& r : rows)
    if (r.ok) pts.push_back({row_value(r, metric), r.harmonic_mean, r.spec.method, r.spec.tau});
  return pts;
}

namespace detail {
inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}
}  // namespace detail

inline void emit_plots(const ExperimentReport& rep, const std::vector<ProjectionPanel>& panels,
                       const std::string& out_dir) {
  if (rep.rows.empty()) throw ArgumentError("emit_plots: empty report");
  const auto lcd = scatter_points(rep.rows, "novel_delta_lcd");
  if (lcd.empty()) throw ArgumentError("emit_plots: no successful runs to plot");
  const std::filesystem::path dir(out_dir);
  detail::ensure_dir(dir);
  detail::write_text(dir / "fig_lcd.svg", scatter_svg(lcd, "novel delta_lcd", "harmonic mean",
                                                      "delta_lcd vs harmonic mean (novel split)"));
  detail::write_text(dir / "fig_mid.svg", scatter_svg(scatter_points(rep.rows, "novel_mid_error"),
                                                      "novel mid_error", "harmonic mean",
                                                      "mid_error vs harmonic mean (novel split)"));
  detail::write_text(dir / "fig_reps.svg", projection_svg(panels));
}

// Projections for the figure: each method at the smallest tau, first seed,
// first weight setting.
inline std::vector<ProjectionPanel> representative_panels(const ExperimentConfig& c) {
  std::vector<ProjectionPanel> panels;
  const double tau = *std::min_element(c.taus.begin(), c.taus.end());
  for (Method m : c.methods) {
    RunSpec spec{tau, m, m == Method::Npt ? c.npt_weights().front() : WeightSetting{0.0, 0.0}, c.seeds.front()};
    RunArtifacts art;
    const RunRow row = run_base_to_novel(c, spec, &art);
    if (!row.ok) continue;
    std::ostringstream t;
    t << to_string(m) << ", tau = " << svg::tick(tau) << ", seed " << spec.seed;
    panels.push_back(project_reps(art.novel_reps, t.str()));
  }
  return panels;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline void write_sweep_outputs(const ExperimentConfig& c, const ExperimentReport& rep,
                                const std::vector<ProjectionPanel>& panels, const std::string& out_dir) {
  const std::filesystem::path dir(out_dir);
  detail::ensure_dir(dir);
  std::ostringstream csv;
  write_runs_csv(csv, rep.rows);
  detail::write_text(dir / "runs.csv", csv.str());
  json agg = aggregate_json(rep);
  agg["generated_at"] = utc_timestamp();
  detail::write_text(dir / "aggregate.json", agg.dump(2) + "\n");
  detail::write_text(dir / "config_echo.json", json(c).dump(2) + "\n");
  // with every run failed there is nothing to draw; the CSV still records why
  if (rep.failed() < rep.rows.size()) emit_plots(rep, panels, out_dir);
}

// Reads runs.csv and aggregate.json back and checks that they agree.
inline ExperimentReport load_report(const std::string& out_dir) {
  const std::filesystem::path dir(out_dir);
  std::ifstream rf(dir / "runs.csv");
  if (!rf) throw IoError("cannot open " + (dir / "runs.csv").string());
  std::vector<RunRow> rows = read_runs_csv(rf);
  std::ifstream af(dir / "aggregate.json");
  if (af) {
    json stored;
    try {
      stored = json::parse(af);
    } catch (const json::exception& e) {
      throw IoError(std::string("malformed aggregate.json: ") + e.what());
    }
    stored.erase("generated_at");
    verify_aggregate(rows, stored);
  }
  return aggregate(std::move(rows));
}

}  // namespace npt
