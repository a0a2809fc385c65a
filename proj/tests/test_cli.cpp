#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixture.hpp"
#include "sosmas/cli.hpp"
#include "sosmas/sos.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sosmas_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    std::ostringstream out;
    err_.str("");
    return sosmas::cli::run(args, out, err_);
  }

  std::string write_problem(const std::string& name, const json& j) const {
    std::ofstream(path(name)) << j.dump();
    return path(name);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static json read(const std::string& p) { return json::parse(slurp(p)); }

  std::ostringstream err_;
  fs::path dir_;
};

const std::string kExample = std::string(SOSMAS_DATA_DIR) + "/paper_example.json";

// Independent recheck of every Gram certificate stored in a result file.
void expect_file_certificates_valid(const json& result) {
  ASSERT_FALSE(result.at("certificates").empty());
  for (const auto& c : result.at("certificates")) {
    const auto cert = c.at("certificate").get<sosmas::GramCertificate>();
    EXPECT_TRUE(sosmas::check_certificate(cert).valid) << c.at("name");
  }
}

}  // namespace

TEST_F(CliTest, VerifyExampleCertificate) {
  ASSERT_EQ(run({"verify", "--problem", kExample, "--out", path("cert.json"), "--dump-sdp", path("v.sdp")}), 0)
      << err_.str();
  const json r = read(path("cert.json"));
  EXPECT_TRUE(r.at("feasible").get<bool>());
  EXPECT_GT(r.at("psi_lambda_min").get<double>(), 0.0);
  expect_file_certificates_valid(r);
  EXPECT_EQ(slurp(path("v.sdp")).rfind("blocks", 0), 0u);

  const json meta = read(path("cert.json.meta.json"));
  EXPECT_EQ(meta.at("command"), "verify");
  EXPECT_EQ(meta.at("exit_code"), 0);
  EXPECT_FALSE(r.contains("started_utc"));
}

TEST_F(CliTest, OutputsAreReproducible) {
  ASSERT_EQ(run({"verify", "--problem", kExample, "--out", path("a.json")}), 0);
  ASSERT_EQ(run({"verify", "--problem", kExample, "--out", path("b.json"), "--meta", path("b.meta")}), 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_TRUE(fs::exists(path("b.meta")));

  ASSERT_EQ(run({"simulate", "--problem", kExample, "--T", "0.02", "--out", path("a.csv"), "--summary",
                 path("a.sum")}),
            0);
  ASSERT_EQ(run({"simulate", "--problem", kExample, "--T", "0.02", "--out", path("b.csv"), "--summary",
                 path("b.sum")}),
            0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.sum")), slurp(path("b.sum")));
}

TEST_F(CliTest, InfeasibleVerifyStillWritesReport) {
  json p = fixture::load_example();
  p["psi"] = json::array();
  for (int i = 0; i < 5; ++i) {
    json row = json::array();
    for (int k = 0; k < 5; ++k) row.push_back(i == k ? 100.0 : 0.0);
    p["psi"].push_back(row);
  }
  EXPECT_EQ(run({"verify", "--problem", write_problem("p.json", p), "--out", path("r.json")}), 2);
  EXPECT_FALSE(read(path("r.json")).at("feasible").get<bool>());
  EXPECT_FALSE(err_.str().empty());
}

TEST_F(CliTest, SynthQuadraticIsInfeasible) {
  EXPECT_EQ(run({"synth", "--problem", kExample, "--order", "2", "--deg-v", "2", "--out", path("s.json")}), 2);
  const json r = read(path("s.json"));
  EXPECT_EQ(r.at("status"), "infeasible");
  EXPECT_FALSE(r.at("feasible").get<bool>());
  EXPECT_EQ(read(path("s.json.meta.json")).at("exit_code"), 2);
}

TEST_F(CliTest, SynthQuarticCertifies) {
  ASSERT_EQ(run({"synth", "--problem", kExample, "--order", "2", "--deg-v", "4", "--deg-h", "3", "--out",
                 path("s.json"), "--dump-sdp", path("s.sdp")}),
            0)
      << err_.str();
  const json r = read(path("s.json"));
  EXPECT_EQ(r.at("status"), "optimal");
  expect_file_certificates_valid(r);
  EXPECT_TRUE(r.contains("V"));
  EXPECT_TRUE(fs::exists(path("s.sdp")));
}

TEST_F(CliTest, SimulateWritesTrajectory) {
  ASSERT_EQ(run({"simulate", "--problem", kExample, "--T", "0.01", "--out", path("t.csv"), "--summary",
                 path("s.json")}),
            0)
      << err_.str();
  std::istringstream csv(slurp(path("t.csv")));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "t,pos_err_1,pos_err_2,pos_err_3,pos_err_4,vel_err_1,vel_err_2,vel_err_3,vel_err_4,lyap,graph_index");
  const json s = read(path("s.json"));
  EXPECT_EQ(s.at("steps"), 100);
  EXPECT_EQ(s.at("switch_count"), 10);
  EXPECT_EQ(s.at("lyapunov").at("within_violations"), 0);
}

TEST_F(CliTest, Errors) {
  EXPECT_EQ(run({"simulate", "--problem", path("missing.json"), "--out", path("x.csv")}), 1);
  EXPECT_EQ(run({}), 1);
  EXPECT_EQ(run({"verify", "--problem", kExample}), 1);
  EXPECT_EQ(run({"synth", "--problem", kExample, "--out", path("s.json"), "--order", "3"}), 1);
  EXPECT_EQ(run({"simulate", "--problem", kExample, "--out", path("x.csv"), "--dt", "3e-4"}), 1);
  EXPECT_NE(err_.str().find("does not divide"), std::string::npos);

  std::ofstream(path("bad.json")) << "{ not json";
  EXPECT_EQ(run({"verify", "--problem", path("bad.json"), "--out", path("r.json")}), 1);
  EXPECT_FALSE(fs::exists(path("r.json")));
}

TEST_F(CliTest, TopologyCheck) {
  EXPECT_EQ(run({"topology", "check", "--reference", "--out", path("ref.json")}), 0);
  const json ref = read(path("ref.json"));
  EXPECT_TRUE(ref.at("jointly_connected").get<bool>());
  for (const auto& g : ref.at("graphs")) EXPECT_FALSE(g.at("connected_with_leader").get<bool>());

  EXPECT_EQ(run({"topology", "check", "--problem", kExample, "--out", path("ex.json")}), 0);

  // Only the first graph, which reaches agent 1 alone.
  json p = fixture::load_example();
  p["schedule"]["subintervals"] = json::array({json::array({0, 0.001})});
  p["schedule"]["windows"] = json::array({0, 1});
  EXPECT_EQ(run({"topology", "check", "--problem", write_problem("p.json", p), "--out", path("t.json")}), 2);
  EXPECT_FALSE(read(path("t.json")).at("jointly_connected").get<bool>());
  EXPECT_EQ(run({"topology", "check"}), 1);
}
