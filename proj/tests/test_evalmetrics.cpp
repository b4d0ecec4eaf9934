#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pcac/evalmetrics.hpp"
#include "pcac/rng.hpp"

#include "testutil.hpp"

using namespace pcac;
using testutil::random_mat;

namespace {

RDCurve curve(const std::string& label, std::vector<RDPoint> pts) {
  RDCurve c;
  c.label = label;
  c.points = std::move(pts);
  return c;
}

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("psnr of identical signals reports the cap") {
  VecX<double> a = VecX<double>::LinSpaced(100, 0.0, 1.0);
  CHECK(psnr(a, a) == 100.0);
}

TEST_CASE("psnr handles known mean squared errors") {
  // all-zero vs all-peak: MSE = peak^2, so exactly 0 dB
  const VecX<double> zeros = VecX<double>::Zero(64);
  const VecX<double> peaks = VecX<double>::Constant(64, 255.0);
  CHECK(psnr(zeros, peaks, 255.0) == doctest::Approx(0.0).epsilon(1e-12));
  // MSE = peak^2 / 10 gives exactly 10 dB
  const VecX<double> off = VecX<double>::Constant(64, 1.0 / std::sqrt(10.0));
  CHECK(psnr(zeros, off, 1.0) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("psnr shrinks as noise grows") {
  Rng rng(110);
  const VecX<double> a = VecX<double>::Random(500).cwiseAbs();
  VecX<double> n1 = a, n2 = a;
  for (Index i = 0; i < a.size(); ++i) {
    const double e = rng.uniform() - 0.5;
    n1[i] += 0.01 * e;
    n2[i] += 0.10 * e;
  }
  CHECK(psnr(a, n1) > psnr(a, n2));
  CHECK_THROWS_AS(psnr(a, VecX<double>::Zero(3)), PreconditionError);
}

TEST_CASE("composite psnr weighs luma six to one against each chroma") {
  Rng rng(111);
  const MatX<double> orig = random_mat(200, 3, rng).cwiseAbs();
  MatX<double> rec = orig;
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < 200; ++r) rec(r, c) += 0.03 * (rng.uniform() - 0.5);
  // oracle: MSE per channel, then (6*mse_y + mse_u + mse_v) / 8
  double mse[3] = {0, 0, 0};
  for (Index c = 0; c < 3; ++c)
    mse[c] = (orig.col(c) - rec.col(c)).squaredNorm() / 200.0;
  const double combined = (6.0 * mse[0] + mse[1] + mse[2]) / 8.0;
  CHECK(psnr_yuv(orig, rec) ==
        doctest::Approx(10.0 * std::log10(1.0 / combined)).epsilon(1e-9));
}

TEST_CASE("bits per point counts whole stream bytes") {
  CHECK(bpp(1000, 8000) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(bpp(1, 0), PreconditionError);

  Bitstream bs;
  bs.n_points = 1000;
  PatchRecord rec;
  rec.payload.resize(200);
  bs.patches.push_back(rec);
  // accounting identity: header bytes plus payload bytes, nothing else
  CHECK(bpp(bs) == doctest::Approx(bpp(pack_bitstream(bs).size(), 1000)).epsilon(1e-12));
}

TEST_CASE("identical curves have zero delta and opposite curves negate") {
  const RDCurve a = curve("a", {{0.5, 30, 29}, {1.0, 33, 32}, {2.0, 36, 35}, {4.0, 39, 38}});
  const RDCurve b = curve("b", {{0.5, 31, 30}, {1.0, 34.2, 33}, {2.0, 37, 36}, {4.0, 40.1, 39}});
  const BDResult self = bd_metrics(a, a);
  CHECK(std::abs(self.bd_psnr_db) < 1e-9);
  CHECK(std::abs(self.bd_br_percent) < 1e-9);
  const BDResult ab = bd_metrics(a, b);
  const BDResult ba = bd_metrics(b, a);
  CHECK(ab.bd_psnr_db == doctest::Approx(-ba.bd_psnr_db).epsilon(1e-6));
  CHECK(ab.bd_psnr_db > 0.0);  // b sits above a everywhere
}

TEST_CASE("constant psnr offset is recovered exactly") {
  std::vector<RDPoint> pts, up;
  for (double b : {0.5, 1.0, 2.0, 4.0}) {
    pts.push_back({b, 30 + 3 * std::log2(b / 0.5), 0});
    up.push_back({b, 31 + 3 * std::log2(b / 0.5), 0});
  }
  const BDResult r = bd_metrics(curve("a", pts), curve("b", up));
  CHECK(r.bd_psnr_db == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("doubling the rate at equal quality costs one hundred percent") {
  std::vector<RDPoint> base, twice;
  for (double b : {0.5, 1.0, 2.0, 4.0}) {
    const double q = 30 + 3 * std::log2(b / 0.5);
    base.push_back({b, q, 0});
    twice.push_back({2 * b, q, 0});
  }
  const BDResult r = bd_metrics(curve("a", base), curve("b", twice));
  CHECK(r.bd_br_percent == doctest::Approx(100.0).epsilon(1e-3));
}

TEST_CASE("disjoint quality ranges cannot be compared") {
  const RDCurve lo = curve("lo", {{0.5, 20, 20}, {1.0, 25, 25}});
  const RDCurve hi = curve("hi", {{0.5, 40, 40}, {1.0, 45, 45}});
  CHECK_THROWS_AS(bd_metrics(lo, hi), PreconditionError);
}

TEST_CASE("curves must be sorted with strictly increasing rate") {
  RDCurve bad = curve("bad", {{1.0, 33, 32}, {0.5, 30, 29}});
  CHECK_THROWS_AS(validate(bad), PreconditionError);
  bad = curve("dup", {{1.0, 33, 32}, {1.0, 34, 33}});
  CHECK_THROWS_AS(validate(bad), PreconditionError);
  CHECK_THROWS_AS(bd_metrics(curve("e", {}), curve("e2", {})), PreconditionError);
}

TEST_CASE("csv files round-trip curves") {
  namespace fs = std::filesystem;
  const std::string path = "rd_test_roundtrip.csv";
  std::vector<RDCurve> curves;
  curves.push_back(curve("first", {{0.5, 30.125, 29.5}, {1.0, 33.25, 32.75}}));
  curves.push_back(curve("second", {{0.75, 31.0625, 30.5}}));
  curves[0].lambdas = {1e-4, 3e-4};
  curves[1].lambdas = {6e-4};
  write_rd_csv(curves, path);
  const std::vector<RDCurve> back = read_rd_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].label == "first");
  CHECK(back[1].label == "second");
  REQUIRE(back[0].points.size() == 2);
  CHECK(back[0].points[1].bpp == 1.0);
  CHECK(back[0].points[1].psnr_y == 33.25);
  CHECK(back[0].points[1].psnr_yuv == 32.75);
  CHECK(back[0].lambdas == curves[0].lambdas);
  fs::remove(path);
}

TEST_CASE("appending builds the same file as writing at once") {
  const std::string path = "rd_test_append.csv";
  std::remove(path.c_str());
  append_rd_csv(path, "run", 1e-4, {0.5, 30.5, 29.5});
  append_rd_csv(path, "run", 3e-4, {1.0, 33.5, 32.5});
  const std::vector<RDCurve> back = read_rd_csv(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].points.size() == 2);
  CHECK(back[0].points[0].bpp == 0.5);
  CHECK(back[0].lambdas == std::vector<double>{1e-4, 3e-4});
  CHECK_THROWS_AS(append_rd_csv(path, "bad,name", 0, {1, 1, 1}), PreconditionError);
  std::remove(path.c_str());
}

TEST_CASE("report emits per-curve csv files and a deterministic plot") {
  namespace fs = std::filesystem;
  const std::string dir = "rd_test_report";
  fs::remove_all(dir);
  std::vector<RDCurve> curves;
  curves.push_back(curve("ours", {{0.5, 30, 29}, {1.0, 33, 32}, {2.0, 36, 35}}));
  curves.push_back(curve("anchor", {{0.6, 29, 28}, {1.2, 32, 31}, {2.4, 35, 34}}));
  rd_report(curves, dir);
  CHECK(fs::exists(dir + "/ours.csv"));
  CHECK(fs::exists(dir + "/anchor.csv"));
  REQUIRE(fs::exists(dir + "/rd_curves.svg"));
  const std::vector<uint8_t> first = slurp(dir + "/rd_curves.svg");
  CHECK(!first.empty());
  rd_report(curves, dir);
  CHECK(slurp(dir + "/rd_curves.svg") == first);

  const std::vector<RDCurve> back = read_rd_csv(dir + "/ours.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].points.size() == 3);
  fs::remove_all(dir);
}
