#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qcurv/cli.hpp"

using namespace qcurv;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("qcurv_cli_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::dispatch(std::move(args), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

}  // namespace

TEST(Config, TypedLookupWithFallback) {
  const cli::Config c(nlohmann::json{{"n", 3}, {"lambda", 2.5}, {"radii", {1.0, 2.0}}});
  EXPECT_EQ(c.get("n", 1), 3);
  EXPECT_DOUBLE_EQ(c.get("lambda", 1.0), 2.5);
  EXPECT_DOUBLE_EQ(c.get("sigma", 0.5), 0.5);
  EXPECT_EQ(c.get<std::vector<double>>("radii", {}).size(), 2u);
  EXPECT_TRUE(c.has("n"));
  EXPECT_FALSE(c.has("j"));
}

TEST(ExitCodes, ErrorKindsMapToDocumentedCodes) {
  EXPECT_EQ(cli::exit_code_for(ErrorKind::TailNotCertified), cli::kCertification);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::MomentVerification), cli::kCertification);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::Config), cli::kInvalidConfig);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::InvalidArgument), cli::kInvalidConfig);
}

TEST(Dispatch, ConstantsWritesTablesReportAndManifest) {
  const fs::path d = fresh_dir("constants");
  std::string text;
  ASSERT_EQ(run({"constants", "--check", "-o", d.string()}, &text), cli::kOk) << text;
  EXPECT_NE(text.find("PASS"), std::string::npos);
  EXPECT_EQ(text.find("FAIL"), std::string::npos);
  ASSERT_TRUE(fs::exists(d / "manifest.json"));
  const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  EXPECT_EQ(m.at("command"), "constants");
  EXPECT_EQ(m.at("tool_version"), cli::kToolVersion);
  EXPECT_EQ(m.at("seed"), QuadratureSpec{}.seed);
  for (const auto& [file, digest] : m.at("outputs").items())
    EXPECT_EQ(hex_digest(fnv1a(slurp(d / file))), digest.get<std::string>()) << file;
  const auto rep = nlohmann::json::parse(slurp(d / "constants.json"));
  EXPECT_FALSE(rep.at("checks").empty());
  fs::remove_all(d);
}

TEST(Dispatch, RerunsAreByteIdentical) {
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  ASSERT_EQ(run({"scaling", "--n", "3", "--j", "1", "-o", a.string()}), cli::kOk);
  ASSERT_EQ(run({"scaling", "--n", "3", "--j", "1", "-o", b.string()}), cli::kOk);
  auto ma = nlohmann::json::parse(slurp(a / "manifest.json")), mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  EXPECT_EQ(ma.at("outputs"), mb.at("outputs"));
  for (const auto& [file, digest] : ma.at("outputs").items()) EXPECT_EQ(slurp(a / file), slurp(b / file)) << file;
  ma.erase("wall_time");
  mb.erase("wall_time");
  ma["config"].erase("output_dir");
  mb["config"].erase("output_dir");
  EXPECT_EQ(ma.at("seed"), mb.at("seed"));
  EXPECT_EQ(ma.at("config"), mb.at("config"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dispatch, ConfigFileAndOverrides) {
  const fs::path d = fresh_dir("cfg");
  fs::create_directories(d);
  {
    std::ofstream f(d / "run.json");
    f << R"({"n": 1, "lambda": 2.0, "quadrature": {"rel_tol": 1e-9}})";
  }
  const fs::path o = d / "out";
  ASSERT_EQ(run({"residual", "-c", (d / "run.json").string(), "--set", "lambda=1.5", "-o", o.string(), "--check"}), cli::kOk);
  const auto m = nlohmann::json::parse(slurp(o / "manifest.json"));
  EXPECT_DOUBLE_EQ(m.at("config").at("lambda").get<double>(), 1.5);
  EXPECT_EQ(m.at("config").at("n"), 1);
  EXPECT_EQ(m.at("config_digest"), hex_digest(fnv1a(m.at("config").dump())));
  fs::remove_all(d);
}

TEST(Dispatch, InvalidInputsExitWithConfigCode) {
  const fs::path d = fresh_dir("bad");
  EXPECT_EQ(run({"nosuch"}), cli::kInvalidConfig);
  EXPECT_EQ(run({"residual", "-c", (d / "missing.json").string()}), cli::kInvalidConfig);
  EXPECT_EQ(run({"green", "--suite", "bogus", "-o", d.string()}), cli::kInvalidConfig);
  EXPECT_EQ(run({"estimates", "--kind", "bogus", "-o", d.string()}), cli::kInvalidConfig);
  EXPECT_EQ(run({"scaling", "--n", "3", "--j", "5", "-o", d.string()}), cli::kInvalidConfig);
  EXPECT_EQ(run({"residual", "--set", "noequals", "-o", d.string()}), cli::kInvalidConfig);
  EXPECT_EQ(run({"residual", "--set", "quadrature={\"rel_tol\": -1}", "-o", d.string()}), cli::kInvalidConfig);
  EXPECT_FALSE(fs::exists(d / "manifest.json"));
  fs::remove_all(d);
}

TEST(Dispatch, FailedChecksExitWithCheckCode) {
  const fs::path d = fresh_dir("fail");
  // no spread of u - v is below a negative tolerance
  std::string text;
  EXPECT_EQ(run({"potential", "--n", "3", "--set", "tolerance=-1", "-o", d.string(), "--check"}, &text), cli::kCheckFailed) << text;
  EXPECT_NE(text.find("FAIL"), std::string::npos);
  fs::remove_all(d);
}
