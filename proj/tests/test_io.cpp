#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "doctest.h"
#include "json.hpp"

#include "qhr/dataset_io.hpp"
#include "qhr/model_io.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace qhr;

namespace {

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

// what() of the error thrown by a reader call
template <typename Fn>
std::string error_text(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("dataset reader basics") {
  SUBCASE("header file with one feature") {
    TempFile f("tmp_io_basic.csv");
    spit(f.path, "y,x1\n1.5,2\n-3,4\n0,0.25\n");
    const Dataset d = read_csv({f.path});
    REQUIRE(d.A.rows() == 3);
    REQUIRE(d.A.cols() == 1);
    CHECK(d.response_name == "y");
    REQUIRE(d.feature_names.size() == 1);
    CHECK(d.feature_names[0] == "x1");
    CHECK(d.b[0] == 1.5);
    CHECK(d.b[1] == -3.0);
    CHECK(d.A(2, 0) == 0.25);
  }
  SUBCASE("headerless file gets synthetic names") {
    TempFile f("tmp_io_nohdr.csv");
    spit(f.path, "1,2,3\n4,5,6\n");
    DatasetFile file{f.path};
    file.has_header = false;
    const Dataset d = read_csv(file);
    CHECK(d.response_name == "b");
    REQUIRE(d.feature_names.size() == 2);
    CHECK(d.feature_names[0] == "x1");
    CHECK(d.feature_names[1] == "x2");
    CHECK(d.b[1] == 4.0);
    CHECK(d.A(1, 1) == 6.0);
  }
  SUBCASE("response column by name and by 1-based index") {
    TempFile f("tmp_io_resp.csv");
    spit(f.path, "a,b,c\n1,2,3\n4,5,6\n");
    DatasetFile by_name{f.path};
    by_name.response_column = "b";
    const Dataset dn = read_csv(by_name);
    CHECK(dn.response_name == "b");
    CHECK(dn.b[0] == 2.0);
    CHECK(dn.feature_names == std::vector<std::string>({"a", "c"}));
    CHECK(dn.A(1, 0) == 4.0);
    CHECK(dn.A(1, 1) == 6.0);

    DatasetFile by_index{f.path};
    by_index.response_column = "3";
    const Dataset di = read_csv(by_index);
    CHECK(di.response_name == "c");
    CHECK(di.b[1] == 6.0);

    DatasetFile missing{f.path};
    missing.response_column = "zz";
    CHECK_THROWS_AS(read_csv(missing), std::runtime_error);
    DatasetFile oob{f.path};
    oob.response_column = "4";
    CHECK_THROWS_AS(read_csv(oob), std::runtime_error);
  }
  SUBCASE("carriage returns, BOM, and trailing blank lines tolerated") {
    TempFile f("tmp_io_crlf.csv");
    spit(f.path, "\xEF\xBB\xBFy,x1\r\n1,2\r\n3,4\r\n\n");
    const Dataset d = read_csv({f.path});
    CHECK(d.response_name == "y");
    REQUIRE(d.A.rows() == 2);
    CHECK(d.b[1] == 3.0);
  }
  SUBCASE("quoted fields, including separators and doubled quotes") {
    TempFile f("tmp_io_quoted.csv");
    spit(f.path, "\"resp,onse\",\"say \"\"x\"\"\"\n\"1.5\",2\n3,\"4\"\n");
    const Dataset d = read_csv({f.path});
    CHECK(d.response_name == "resp,onse");
    CHECK(d.feature_names[0] == "say \"x\"");
    CHECK(d.b[0] == 1.5);
    CHECK(d.A(1, 0) == 4.0);
  }
}

TEST_CASE("dataset reader rejects malformed input") {
  SUBCASE("non-finite cells carry their location") {
    TempFile f("tmp_io_inf.csv");
    spit(f.path, "y,x1\n1,2\ninf,4\n");
    const std::string msg = error_text([&] { read_csv({f.path}); });
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("column 1") != std::string::npos);

    TempFile g("tmp_io_nan.csv");
    spit(g.path, "y,x1\n1,nan\n");
    const std::string msg2 = error_text([&] { read_csv({g.path}); });
    CHECK(msg2.find("row 2") != std::string::npos);
    CHECK(msg2.find("column 2") != std::string::npos);
  }
  SUBCASE("non-numeric cells carry their location") {
    TempFile f("tmp_io_text.csv");
    spit(f.path, "y,x1\n1,2\n3,four\n");
    const std::string msg = error_text([&] { read_csv({f.path}); });
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }
  SUBCASE("ragged rows") {
    TempFile f("tmp_io_ragged.csv");
    spit(f.path, "y,x1\n1,2\n3\n");
    const std::string msg = error_text([&] { read_csv({f.path}); });
    CHECK(msg.find("row 3") != std::string::npos);
  }
  SUBCASE("unterminated quote") {
    TempFile f("tmp_io_quote.csv");
    spit(f.path, "y,x1\n\"1,2\n");
    CHECK_THROWS_AS(read_csv({f.path}), std::runtime_error);
  }
  SUBCASE("single column cannot split into response and features") {
    TempFile f("tmp_io_single.csv");
    spit(f.path, "y\n1\n2\n");
    CHECK_THROWS_AS(read_csv({f.path}), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_csv({"tmp_io_does_not_exist.csv"}),
                    std::runtime_error);
  }
  SUBCASE("empty cell") {
    TempFile f("tmp_io_empty.csv");
    spit(f.path, "y,x1\n1,\n");
    const std::string msg = error_text([&] { read_csv({f.path}); });
    CHECK(msg.find("row 2") != std::string::npos);
  }
}

TEST_CASE("dataset round trip preserves every bit") {
  Dataset d;
  d.A.resize(4, 3);
  d.A << 0.1, 1.0 / 3.0, 3.141592653589793, -2.5e17, 1e-300, 7.0,
      -0.0, 123456.789012345678, 2.2250738585072014e-308, 42.0,
      -9.87654321e-12, 0.5;
  d.b.resize(4);
  d.b << 1.0000000000000002, -1e22, 0.3333333333333333, 8.0;
  d.feature_names = {"alpha", "beta", "gamma"};
  d.response_name = "target";

  TempFile f("tmp_io_roundtrip.csv");
  write_dataset_csv(f.path, d);
  const Dataset back = read_csv({f.path});
  CHECK(back.response_name == d.response_name);
  CHECK(back.feature_names == d.feature_names);
  REQUIRE(back.A.rows() == 4);
  REQUIRE(back.A.cols() == 3);
  for (int i = 0; i < 4; ++i) {
    CHECK(back.b[i] == d.b[i]);
    for (int j = 0; j < 3; ++j) CHECK(back.A(i, j) == d.A(i, j));
  }
}

TEST_CASE("compact float rendering") {
  const double values[] = {0.1,
                           1.0 / 3.0,
                           -2.5e17,
                           1e-300,
                           2.2250738585072014e-308,
                           1.0000000000000002,
                           -0.0,
                           12345.0,
                           6.02214076e23};
  for (double v : values) {
    const std::string s = format_g17(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
    CHECK(format_g17(v) == s);
  }
  CHECK(format_g17(42.0) == "42");
}

TEST_CASE("feature table reader") {
  TempFile f("tmp_io_features.csv");
  spit(f.path, "u,v\n1,2\n3,4\n5,6\n");
  const FeatureTable t = read_feature_csv(f.path);
  REQUIRE(t.A.rows() == 3);
  REQUIRE(t.A.cols() == 2);
  CHECK(t.names == std::vector<std::string>({"u", "v"}));
  CHECK(t.A(2, 1) == 6.0);

  TempFile g("tmp_io_features_nohdr.csv");
  spit(g.path, "1\n2\n");
  const FeatureTable s = read_feature_csv(g.path, false);
  REQUIRE(s.A.cols() == 1);
  CHECK(s.names == std::vector<std::string>({"x1"}));
}

TEST_CASE("prediction writer") {
  VectorXd pred(3);
  pred << 0.1, -2.5, 1.0 / 3.0;
  TempFile f("tmp_io_pred.csv");
  write_predictions_csv(f.path, pred);
  const std::string text = slurp(f.path);
  CHECK(text.rfind("prediction\n", 0) == 0);
  const FeatureTable t = read_feature_csv(f.path);
  REQUIRE(t.A.rows() == 3);
  CHECK(t.A(0, 0) == 0.1);
  CHECK(t.A(2, 0) == 1.0 / 3.0);
}

TEST_CASE("model artifact round trip") {
  ModelArtifact m;
  m.method = "l1-qhr";
  m.tau = 0.25;
  m.kappa = 0.7;
  m.lambda = 0.034;
  m.coefficients = {{0, 0.1}, {3, -2.5e17}, {7, 1.0 / 3.0}, {9, 1e-300}};
  m.dimension = 10;
  m.feature_names = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  m.seed = 123456789012345ULL;
  m.solver = "ip";
  m.iterations = 17;

  const std::string text = model_to_json(m);
  const ModelArtifact back = model_from_json(text);
  CHECK(back.schema_version == 1);
  CHECK(back.method == m.method);
  CHECK(back.tau == m.tau);
  CHECK(back.kappa == m.kappa);
  REQUIRE(back.lambda.has_value());
  CHECK(*back.lambda == *m.lambda);
  CHECK_FALSE(back.sparsity.has_value());
  CHECK(back.coefficients == m.coefficients);
  CHECK(back.dimension == 10);
  CHECK(back.feature_names == m.feature_names);
  CHECK(back.seed == m.seed);
  CHECK(back.solver == "ip");
  CHECK(back.iterations == 17);

  // canonical: equal artifacts serialize to equal bytes, ending in newline
  CHECK(model_to_json(back) == text);
  CHECK(text.back() == '\n');

  // file round trip
  TempFile f("tmp_io_model.json");
  write_model(f.path, m);
  const ModelArtifact from_file = read_model(f.path);
  CHECK(from_file.coefficients == m.coefficients);
  CHECK(slurp(f.path) == text);

  // dense expansion
  const VectorXd beta = model_coefficients(m);
  REQUIRE(beta.size() == 10);
  CHECK(beta[3] == -2.5e17);
  CHECK(beta[1] == 0.0);
}

TEST_CASE("model artifact corner cases") {
  SUBCASE("empty support round-trips") {
    ModelArtifact m;
    m.method = "l0-qr";
    m.tau = 0.5;
    m.sparsity = 0;
    m.dimension = 5;
    m.solver = "ip";
    const ModelArtifact back = model_from_json(model_to_json(m));
    CHECK(back.coefficients.empty());
    CHECK(back.dimension == 5);
    REQUIRE(back.sparsity.has_value());
    CHECK(*back.sparsity == 0);
    CHECK_FALSE(back.lambda.has_value());
    const VectorXd dense = model_coefficients(back);
    REQUIRE(dense.size() == 5);
    CHECK(dense.norm() == 0.0);
  }
  SUBCASE("future schema versions are refused") {
    ModelArtifact m;
    m.method = "lasso";
    m.dimension = 2;
    m.solver = "ip";
    std::string text = model_to_json(m);
    const auto pos = text.find("\"schema_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, std::string("\"schema_version\": 1").size(),
                 "\"schema_version\": 2");
    const std::string msg = error_text([&] { model_from_json(text); });
    CHECK(msg.find("schema_version") != std::string::npos);
  }
  SUBCASE("unknown method names are refused, both directions") {
    ModelArtifact m;
    m.method = "ridge";
    m.dimension = 2;
    m.solver = "ip";
    CHECK_THROWS_AS(model_to_json(m), std::invalid_argument);

    ModelArtifact ok;
    ok.method = "lasso";
    ok.dimension = 2;
    ok.solver = "ip";
    std::string text = model_to_json(ok);
    const auto pos = text.find("\"lasso\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 7, "\"ridge\"");
    CHECK_THROWS(model_from_json(text));
  }
  SUBCASE("coefficient indices must be increasing and in range") {
    ModelArtifact m;
    m.method = "l1-qr";
    m.dimension = 4;
    m.solver = "ip";
    m.coefficients = {{2, 1.0}, {1, 2.0}};
    CHECK_THROWS(model_to_json(m));
    m.coefficients = {{1, 2.0}, {7, 1.0}};
    CHECK_THROWS(model_to_json(m));
  }
  SUBCASE("feature name count must match the dimension") {
    ModelArtifact m;
    m.method = "l1-qr";
    m.dimension = 3;
    m.solver = "ip";
    m.feature_names = {"only", "two"};
    CHECK_THROWS_AS(model_from_json(model_to_json(m)), std::runtime_error);
  }
  SUBCASE("builder thresholds and sorts") {
    VectorXd beta(6);
    beta << 0.0, 2.0, 0.0, -0.5, 1e-12, 3.0;
    const ModelArtifact m = make_artifact("l0-qhr", 0.3, 1.0, beta, {});
    CHECK(m.method == "l0-qhr");
    CHECK(m.tau == 0.3);
    CHECK(m.kappa == 1.0);
    CHECK(m.dimension == 6);
    REQUIRE(m.coefficients.size() == 3);
    CHECK(m.coefficients[0].first == 1);
    CHECK(m.coefficients[1].first == 3);
    CHECK(m.coefficients[2].first == 5);
    CHECK(m.coefficients[2].second == 3.0);
  }
}

TEST_CASE("model JSON layout is sorted and complete") {
  ModelArtifact m;
  m.method = "l1-qr";
  m.tau = 0.75;
  m.lambda = 0.2;
  m.coefficients = {{1, -4.0}};
  m.dimension = 3;
  m.solver = "admm";
  m.iterations = 99;
  m.seed = 42;

  const nlohmann::json j = nlohmann::json::parse(model_to_json(m));
  CHECK(j.at("schema_version") == 1);
  CHECK(j.at("method") == "l1-qr");
  CHECK(j.at("tau") == 0.75);
  CHECK(j.at("dimension") == 3);
  CHECK(j.at("provenance").at("solver") == "admm");
  CHECK(j.at("provenance").at("iterations") == 99);
  CHECK(j.at("provenance").at("seed") == 42);

  // keys arrive sorted at every level
  std::string prev;
  for (auto it = j.begin(); it != j.end(); ++it) {
    CHECK(prev < it.key());
    prev = it.key();
  }
}
