#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "spancca/matrix_io.hpp"
#include "test_util.hpp"

using spancca::DataMatrix;
using spancca::HeaderMode;
using spancca::MatrixFormat;

namespace {

namespace fs = std::filesystem;

struct TempFile {
  fs::path path;

  explicit TempFile(const std::string& contents, const std::string& ext = ".csv") {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("spancca_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ext);
    std::ofstream out(path, std::ios::binary);
    out << contents;
  }

  ~TempFile() {
    std::error_code ec;
    fs::remove(path, ec);
  }
};

}  // namespace

TEST_CASE("csv loads a plain numeric matrix") {
  TempFile f("1,2\n3,4\n");
  const DataMatrix m = spancca::load_matrix(f.path, MatrixFormat::csv);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 2);
  CHECK(m.values(0, 0) == 1.0);
  CHECK(m.values(0, 1) == 2.0);
  CHECK(m.values(1, 0) == 3.0);
  CHECK(m.values(1, 1) == 4.0);
  CHECK(m.col_names.empty());
}

TEST_CASE("csv auto-detects a header row") {
  TempFile f("a,b\n1,2\n");
  const DataMatrix m = spancca::load_matrix(f.path, MatrixFormat::csv);
  REQUIRE(m.rows() == 1);
  REQUIRE(m.cols() == 2);
  REQUIRE(m.col_names.size() == 2);
  CHECK(m.col_names[0] == "a");
  CHECK(m.col_names[1] == "b");
}

TEST_CASE("csv header override forces the first row's role") {
  TempFile f("1,2\n3,4\n");
  const DataMatrix with = spancca::load_matrix(f.path, MatrixFormat::csv, HeaderMode::with_header);
  CHECK(with.rows() == 1);
  CHECK(with.col_names == std::vector<std::string>{"1", "2"});
  TempFile g("a,b\n1,2\n");
  CHECK_THROWS_AS(spancca::load_matrix(g.path, MatrixFormat::csv, HeaderMode::without_header),
                  spancca::ParseError);
}

TEST_CASE("csv accepts CRLF line endings") {
  TempFile f("a,b\r\n1,2\r\n3,4\r\n");
  const DataMatrix m = spancca::load_matrix(f.path, MatrixFormat::csv);
  CHECK(m.rows() == 2);
  CHECK(m.col_names[1] == "b");
}

TEST_CASE("ragged csv reports the offending line") {
  TempFile f("1,2\n3\n");
  try {
    spancca::load_matrix(f.path, MatrixFormat::csv);
    FAIL("expected ParseError");
  } catch (const spancca::ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("non-numeric cell below the header is an error") {
  TempFile f("a,b\n1,x\n");
  CHECK_THROWS_AS(spancca::load_matrix(f.path, MatrixFormat::csv), spancca::ParseError);
}

TEST_CASE("matrix market coordinate entries densify with zero fill") {
  TempFile f("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 5.0\n", ".mtx");
  const DataMatrix m = spancca::load_matrix(f.path, MatrixFormat::matrix_market);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 2);
  CHECK(m.values(0, 0) == 5.0);
  CHECK(m.values(0, 1) == 0.0);
  CHECK(m.values(1, 0) == 0.0);
  CHECK(m.values(1, 1) == 0.0);
}

TEST_CASE("matrix market array entries are column-major") {
  TempFile f("%%MatrixMarket matrix array real general\n% comment\n2 2\n1\n2\n3\n4\n", ".mtx");
  const DataMatrix m = spancca::load_matrix(f.path, MatrixFormat::matrix_market);
  CHECK(m.values(0, 0) == 1.0);
  CHECK(m.values(1, 0) == 2.0);
  CHECK(m.values(0, 1) == 3.0);
  CHECK(m.values(1, 1) == 4.0);
}

TEST_CASE("unsupported matrix market qualifiers are rejected") {
  TempFile f1("%%MatrixMarket matrix coordinate complex general\n2 2 0\n", ".mtx");
  CHECK_THROWS_AS(spancca::load_matrix(f1.path, MatrixFormat::matrix_market),
                  spancca::UnsupportedFormat);
  TempFile f2("%%MatrixMarket matrix coordinate real symmetric\n2 2 0\n", ".mtx");
  CHECK_THROWS_AS(spancca::load_matrix(f2.path, MatrixFormat::matrix_market),
                  spancca::UnsupportedFormat);
}

TEST_CASE("write/load round-trips both formats to 1e-15 relative") {
  std::mt19937_64 gen(31);
  DataMatrix m;
  m.values = test_util::random_matrix(7, 5, 1234) * 1e3;
  m.col_names = {"c0", "c1", "c2", "c3", "c4"};
  for (MatrixFormat fmt : {MatrixFormat::csv, MatrixFormat::matrix_market}) {
    TempFile f("", fmt == MatrixFormat::csv ? ".csv" : ".mtx");
    spancca::save_matrix(f.path, fmt, m);
    const DataMatrix back = spancca::load_matrix(f.path, fmt);
    REQUIRE(back.rows() == m.rows());
    REQUIRE(back.cols() == m.cols());
    const double scale = m.values.cwiseAbs().maxCoeff();
    CHECK((back.values - m.values).cwiseAbs().maxCoeff() <= 1e-15 * scale);
    if (fmt == MatrixFormat::csv) CHECK(back.col_names == m.col_names);
  }
}

TEST_CASE("standardize centers and scales with the k-1 divisor") {
  DataMatrix m;
  m.values.resize(3, 1);
  m.values << 1, 2, 3;
  const DataMatrix z = spancca::standardize(m);
  CHECK(z.values(0, 0) == Catch::Approx(-1.0));
  CHECK(z.values(1, 0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(z.values(2, 0) == Catch::Approx(1.0));
}

TEST_CASE("standardize of a two-point column uses the sample rule") {
  DataMatrix m;
  m.values.resize(2, 1);
  m.values << 0, 2;
  const DataMatrix z = spancca::standardize(m);
  CHECK(z.values(0, 0) == Catch::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(z.values(1, 0) == Catch::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("standardize flags zero-variance columns") {
  DataMatrix m;
  m.values.resize(3, 2);
  m.values << 5, 1, 5, 2, 5, 3;
  try {
    spancca::standardize(m);
    FAIL("expected DegenerateColumn");
  } catch (const spancca::DegenerateColumn& e) {
    CHECK(e.column() == 0);
  }
}

TEST_CASE("standardize is idempotent on non-degenerate input") {
  DataMatrix m;
  m.values = test_util::random_matrix(20, 6, 555);
  const DataMatrix once = spancca::standardize(m);
  const DataMatrix twice = spancca::standardize(once);
  CHECK((twice.values - once.values).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("cross covariance computes X'Y") {
  DataMatrix x, y;
  x.values.resize(2, 1);
  x.values << 1, -1;
  y.values.resize(2, 1);
  y.values << 1, -1;
  const spancca::CrossCov s = spancca::cross_covariance(x, y);
  REQUIRE(s.rows() == 1);
  REQUIRE(s.cols() == 1);
  CHECK(s(0, 0) == Catch::Approx(2.0));

  DataMatrix xi, yi;
  xi.values = Eigen::MatrixXd::Identity(2, 2);
  yi.values.resize(2, 1);
  yi.values << 2, 3;
  const spancca::CrossCov si = spancca::cross_covariance(xi, yi);
  CHECK(si(0, 0) == 2.0);
  CHECK(si(1, 0) == 3.0);
}

TEST_CASE("cross covariance rejects mismatched sample counts") {
  DataMatrix x, y;
  x.values = Eigen::MatrixXd::Zero(3, 2);
  y.values = Eigen::MatrixXd::Zero(4, 2);
  CHECK_THROWS_AS(spancca::cross_covariance(x, y), spancca::ShapeError);
}

TEST_CASE("cross covariance transposes under argument swap") {
  DataMatrix x, y;
  x.values = test_util::random_matrix(15, 4, 10);
  y.values = test_util::random_matrix(15, 6, 11);
  const spancca::CrossCov a = spancca::cross_covariance(x, y);
  const spancca::CrossCov b = spancca::cross_covariance(y, x);
  const double scale = a.cwiseAbs().maxCoeff();
  CHECK((a - b.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale);
}

TEST_CASE("cross covariance shape matches the views", "[slow]") {
  DataMatrix x, y;
  x.values = Eigen::MatrixXd::Zero(89, 2149);
  y.values = Eigen::MatrixXd::Zero(89, 19672);
  const spancca::CrossCov s = spancca::cross_covariance(x, y);
  CHECK(s.rows() == 2149);
  CHECK(s.cols() == 19672);
}
