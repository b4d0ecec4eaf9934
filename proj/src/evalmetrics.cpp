#include "pcac/evalmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace pcac {
namespace {

constexpr double kPsnrCap = 100.0;

double mse_to_db(double mse, double peak) {
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

// least-squares polynomial fit, ascending coefficient order
VecX<double> polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  const Index n = static_cast<Index>(x.size());
  MatX<double> vand(n, degree + 1);
  for (Index i = 0; i < n; ++i) {
    double p = 1.0;
    for (int d = 0; d <= degree; ++d) {
      vand(i, d) = p;
      p *= x[static_cast<size_t>(i)];
    }
  }
  VecX<double> rhs(n);
  for (Index i = 0; i < n; ++i) rhs[i] = y[static_cast<size_t>(i)];
  return vand.colPivHouseholderQr().solve(rhs);
}

double poly_integral(const VecX<double>& coeffs, double lo, double hi) {
  double acc = 0.0;
  double plo = lo, phi = hi;
  for (Index d = 0; d < coeffs.size(); ++d) {
    acc += coeffs[d] * (phi - plo) / static_cast<double>(d + 1);
    plo *= lo;
    phi *= hi;
  }
  return acc;
}

// mean of the fitted curve of y-over-x for `test` minus `anchor` on the
// overlap of their x ranges
double bd_delta(const std::vector<double>& xa, const std::vector<double>& ya,
                const std::vector<double>& xt, const std::vector<double>& yt) {
  const double lo = std::max(*std::min_element(xa.begin(), xa.end()),
                             *std::min_element(xt.begin(), xt.end()));
  const double hi = std::min(*std::max_element(xa.begin(), xa.end()),
                             *std::max_element(xt.begin(), xt.end()));
  if (!(hi > lo)) throw PreconditionError("disjoint RD ranges");
  const int deg_a = std::min<int>(3, static_cast<int>(xa.size()) - 1);
  const int deg_t = std::min<int>(3, static_cast<int>(xt.size()) - 1);
  const double int_a = poly_integral(polyfit(xa, ya, deg_a), lo, hi);
  const double int_t = poly_integral(polyfit(xt, yt, deg_t), lo, hi);
  return (int_t - int_a) / (hi - lo);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string sanitize_label(const std::string& label) {
  std::string out;
  for (char ch : label)
    out.push_back((std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.')
                      ? ch
                      : '_');
  return out.empty() ? std::string("curve") : out;
}

}  // namespace

double psnr(const VecX<double>& a, const VecX<double>& b, double peak) {
  if (a.size() != b.size()) throw PreconditionError("psnr: length mismatch");
  if (a.size() == 0) throw PreconditionError("psnr: empty input");
  const double mse = (a - b).squaredNorm() / static_cast<double>(a.size());
  return mse_to_db(mse, peak);
}

double psnr_yuv(const MatX<double>& orig, const MatX<double>& rec) {
  if (orig.rows() != rec.rows() || orig.cols() != 3 || rec.cols() != 3)
    throw PreconditionError("psnr_yuv: need matching Nx3 matrices");
  if (orig.rows() == 0) throw PreconditionError("psnr_yuv: empty input");
  const double n = static_cast<double>(orig.rows());
  const double my = (orig.col(0) - rec.col(0)).squaredNorm() / n;
  const double mu = (orig.col(1) - rec.col(1)).squaredNorm() / n;
  const double mv = (orig.col(2) - rec.col(2)).squaredNorm() / n;
  return mse_to_db((6.0 * my + mu + mv) / 8.0, 1.0);
}

double bpp(size_t total_bytes, Index n_points) {
  if (n_points < 1) throw PreconditionError("bpp: need at least one point");
  return 8.0 * static_cast<double>(total_bytes) / static_cast<double>(n_points);
}

double bpp(const Bitstream& bs) {
  return bpp(pack_bitstream(bs).size(), static_cast<Index>(bs.n_points));
}

void validate(const RDCurve& curve) {
  if (curve.points.size() < 2)
    throw PreconditionError("RD curve '" + curve.label + "' needs at least 2 points");
  for (size_t i = 1; i < curve.points.size(); ++i)
    if (!(curve.points[i].bpp > curve.points[i - 1].bpp))
      throw PreconditionError("RD curve '" + curve.label + "' bpp not strictly increasing");
  for (const RDPoint& p : curve.points)
    if (!(p.bpp > 0)) throw PreconditionError("RD curve '" + curve.label + "' has bpp <= 0");
  if (!curve.lambdas.empty() && curve.lambdas.size() != curve.points.size())
    throw PreconditionError("RD curve '" + curve.label + "' lambda list size mismatch");
}

BDResult bd_metrics(const RDCurve& anchor, const RDCurve& test) {
  validate(anchor);
  validate(test);
  std::vector<double> log_ra, pa, log_rt, pt;
  for (const RDPoint& p : anchor.points) {
    log_ra.push_back(std::log10(p.bpp));
    pa.push_back(p.psnr_y);
  }
  for (const RDPoint& p : test.points) {
    log_rt.push_back(std::log10(p.bpp));
    pt.push_back(p.psnr_y);
  }
  BDResult r;
  r.bd_psnr_db = bd_delta(log_ra, pa, log_rt, pt);
  const double dlog = bd_delta(pa, log_ra, pt, log_rt);
  r.bd_br_percent = (std::pow(10.0, dlog) - 1.0) * 100.0;
  r.flagged = std::abs(r.bd_br_percent) > 999.0;
  return r;
}

void write_rd_csv(const std::vector<RDCurve>& curves, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << "name,lambda,bpp,psnr_y,psnr_yuv\n";
  for (const RDCurve& c : curves)
    for (size_t i = 0; i < c.points.size(); ++i) {
      const double lambda = c.lambdas.empty() ? 0.0 : c.lambdas[i];
      os << c.label << ',' << format_double(lambda) << ',' << format_double(c.points[i].bpp)
         << ',' << format_double(c.points[i].psnr_y) << ','
         << format_double(c.points[i].psnr_yuv) << '\n';
    }
  if (!os) throw FormatError("write failed for " + path);
}

void append_rd_csv(const std::string& path, const std::string& name, double lambda,
                   const RDPoint& point) {
  if (name.find(',') != std::string::npos || name.find('\n') != std::string::npos)
    throw PreconditionError("curve name must not contain ',' or newlines");
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream os(path, std::ios::app);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  if (fresh) os << "name,lambda,bpp,psnr_y,psnr_yuv\n";
  os << name << ',' << format_double(lambda) << ',' << format_double(point.bpp) << ','
     << format_double(point.psnr_y) << ',' << format_double(point.psnr_yuv) << '\n';
  if (!os) throw FormatError("write failed for " + path);
}

std::vector<RDCurve> read_rd_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + ": empty CSV");
  std::vector<RDCurve> curves;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, field;
    if (!std::getline(ls, name, ',')) throw FormatError(path + ": malformed CSV row");
    double vals[4];
    for (double& v : vals) {
      if (!std::getline(ls, field, ',')) throw FormatError(path + ": malformed CSV row");
      try {
        v = std::stod(field);
      } catch (const std::exception&) {
        throw FormatError(path + ": bad number '" + field + "'");
      }
    }
    if (curves.empty() || curves.back().label != name) {
      curves.emplace_back();
      curves.back().label = name;
    }
    curves.back().lambdas.push_back(vals[0]);
    curves.back().points.push_back({vals[1], vals[2], vals[3]});
  }
  if (curves.empty()) throw FormatError(path + ": no data rows");
  return curves;
}

namespace {

void write_svg_plot(const std::vector<RDCurve>& curves, const std::string& path) {
  // data bounds with a margin
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const RDCurve& c : curves)
    for (const RDPoint& p : c.points) {
      x_lo = std::min(x_lo, p.bpp);
      x_hi = std::max(x_hi, p.bpp);
      y_lo = std::min(y_lo, p.psnr_y);
      y_hi = std::max(y_hi, p.psnr_y);
    }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double mx = 0.05 * (x_hi - x_lo), my = 0.05 * (y_hi - y_lo);
  x_lo -= mx;
  x_hi += mx;
  y_lo -= my;
  y_hi += my;

  const double w = 640, h = 480, pad = 60;
  auto sx = [&](double v) { return pad + (v - x_lo) / (x_hi - x_lo) * (w - 2 * pad); };
  auto sy = [&](double v) { return h - pad - (v - y_lo) / (y_hi - y_lo) * (h - 2 * pad); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};

  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  char buf[512];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
        "viewBox=\"0 0 640 480\">\n"
        "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" "
                "stroke=\"black\"/>\n",
                pad, pad, w - 2 * pad, h - 2 * pad);
  os << buf;
  // axis ticks: 5 per axis
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_lo + (x_hi - x_lo) * i / 4.0;
    const double yv = y_lo + (y_hi - y_lo) * i / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                  "<text x=\"%g\" y=\"%g\" font-size=\"11\" text-anchor=\"middle\">%.3g</text>\n",
                  sx(xv), h - pad, sx(xv), h - pad + 5, sx(xv), h - pad + 18, xv);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                  "<text x=\"%g\" y=\"%g\" font-size=\"11\" text-anchor=\"end\">%.4g</text>\n",
                  pad - 5, sy(yv), pad, sy(yv), pad - 8, sy(yv) + 4, yv);
    os << buf;
  }
  os << "<text x=\"320\" y=\"470\" font-size=\"13\" text-anchor=\"middle\">bits per point"
        "</text>\n"
        "<text x=\"15\" y=\"240\" font-size=\"13\" text-anchor=\"middle\" "
        "transform=\"rotate(-90 15 240)\">Y-PSNR (dB)</text>\n";
  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const char* color = kColors[ci % 6];
    std::string pts;
    for (const RDPoint& p : curves[ci].points) {
      std::snprintf(buf, sizeof buf, "%g,%g ", sx(p.bpp), sy(p.psnr_y));
      pts += buf;
    }
    os << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\"/>\n";
    for (const RDPoint& p : curves[ci].points) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%g\" cy=\"%g\" r=\"3\" fill=\"%s\"/>\n",
                    sx(p.bpp), sy(p.psnr_y), color);
      os << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                  w - pad - 150.0, pad + 18.0 + 16.0 * static_cast<double>(ci), color,
                  curves[ci].label.c_str());
    os << buf;
  }
  os << "</svg>\n";
  if (!os) throw FormatError("write failed for " + path);
}

}  // namespace

void rd_report(const std::vector<RDCurve>& curves, const std::string& out_dir) {
  if (curves.empty()) throw PreconditionError("rd_report: no curves");
  for (const RDCurve& c : curves) validate(c);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw FormatError("cannot create directory " + out_dir + ": " + ec.message());
  for (const RDCurve& c : curves)
    write_rd_csv({c}, (std::filesystem::path(out_dir) / (sanitize_label(c.label) + ".csv"))
                          .string());
  write_svg_plot(curves, (std::filesystem::path(out_dir) / "rd_curves.svg").string());
}

}  // namespace pcac
