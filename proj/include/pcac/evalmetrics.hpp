#pragma once

#include <string>
#include <vector>

#include "pcac/bitstream.hpp"
#include "pcac/pointcloud.hpp"
#include "pcac/types.hpp"

namespace pcac {

/// 10·log10(peak²/MSE), capped at 100 dB (exact matches report the cap).
double psnr(const VecX<double>& a, const VecX<double>& b, double peak = 1.0);

/// Composite PSNR of YUV matrices with 6:1:1 channel weighting, peak 1.
double psnr_yuv(const MatX<double>& orig, const MatX<double>& rec);

/// Bits per input point, headers included.
double bpp(size_t total_bytes, Index n_points);
double bpp(const Bitstream& bs);

/// One labeled rate-distortion curve; points sorted by strictly increasing
/// bpp. `lambdas` is optional report metadata (empty, or one per point).
struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;
  std::vector<double> lambdas;
};

void validate(const RDCurve& curve);

struct BDResult {
  double bd_br_percent = 0.0;
  double bd_psnr_db = 0.0;
  bool flagged = false;  // |BD-BR| > 999%: reported, not dropped
};

/// Bjøntegaard deltas of `test` against `anchor`: polynomial fit of PSNR over
/// log10(bpp) of degree min(3, n-1), integrated over the overlapping range
/// (and the inverse fit for BD-BR). Throws on disjoint ranges.
BDResult bd_metrics(const RDCurve& anchor, const RDCurve& test);

/// Writes one CSV per curve (sanitized label + ".csv", columns
/// name,lambda,bpp,psnr_y,psnr_yuv) and a combined SVG plot
/// ("rd_curves.svg") into out_dir. Deterministic bytes for identical input.
void rd_report(const std::vector<RDCurve>& curves, const std::string& out_dir);

void write_rd_csv(const std::vector<RDCurve>& curves, const std::string& path);

/// Appends one row to an RD CSV, writing the header first if the file does
/// not exist yet.
void append_rd_csv(const std::string& path, const std::string& name, double lambda,
                   const RDPoint& point);

/// Parses rows back into curves (consecutive rows sharing a name fold into
/// one curve). Accepts the files rd_report/write_rd_csv emit.
std::vector<RDCurve> read_rd_csv(const std::string& path);

}  // namespace pcac
