#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "stimeeg/pipeline.hpp"
#include "stimeeg/synth.hpp"

using namespace stimeeg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("stimeeg_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Cli {
  int code = 0;
  std::string out, err;
};

Cli invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "stimeeg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Cli r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

synth::SynthSpec short_spec(std::size_t n_per_class) {
  synth::SynthSpec s;
  s.n_per_class = n_per_class;
  s.resting_s = 30.0;
  s.hv_s = 60.0;
  s.photic_driving_gain = 5.0;
  s.seed = 5;
  return s;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return files;
}

}  // namespace

TEST_CASE("config file parsing") {
  const auto kv = cli::parse_ini("# comment\ntop = 1\n[dataset]\nroot = /data \n; other\n[evaluation]\nseeds=\"3\"\n");
  REQUIRE(kv.size() == 3);
  CHECK(kv[0] == std::pair<std::string, std::string>{"top", "1"});
  CHECK(kv[1] == std::pair<std::string, std::string>{"dataset.root", "/data"});
  CHECK(kv[2] == std::pair<std::string, std::string>{"evaluation.seeds", "3"});
  CHECK_THROWS_AS(cli::parse_ini("[dataset\n"), Error);
  CHECK_THROWS_AS(cli::parse_ini("no equals sign\n"), Error);
}

TEST_CASE("profiles set notch and rate defaults, flags override") {
  pipeline::RunConfig c;
  c.profile = pipeline::Profile::TUH;
  CHECK(c.preprocess_config().notch_hz == 60.0);
  CHECK(c.preprocess_config().target_fs == 250.0);
  c.profile = pipeline::Profile::EMC;
  CHECK(c.preprocess_config().notch_hz == 50.0);
  CHECK(c.preprocess_config().target_fs == 200.0);
  c.notch_hz = 60.0;
  CHECK(c.preprocess_config().notch_hz == 60.0);
  CHECK(c.grid().size() == 10 * 4 * 6 * 5);
  CHECK(pipeline::parse_profile("TUH") == pipeline::Profile::TUH);
  CHECK_THROWS_AS(pipeline::parse_profile("x"), Error);
}

TEST_CASE("empty dataset directory") {
  const auto dir = scratch("empty");
  fs::create_directories(dir / "data");
  const auto r = invoke({"ingest", "--dataset-root", (dir / "data").string(), "--out", (dir / "out").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("warning") != std::string::npos);
  const auto m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["subjects"].empty());
  CHECK(m["warnings"].size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("manifest of a synthetic cohort") {
  const auto dir = scratch("manifest");
  synth::write_cohort(synth::gen_cohort(short_spec(5)), dir / "data");
  // An unreadable file is listed and the scan continues.
  std::ofstream(dir / "data" / "broken.edf") << "not an edf";
  const auto r = invoke({"ingest", "--dataset-root", (dir / "data").string(), "--out", (dir / "out").string()});
  CHECK(r.code == 0);
  const auto m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["included"] == 10);
  std::size_t errors = 0;
  for (const auto& s : m["subjects"]) {
    if (s["status"] == "error") {
      ++errors;
      continue;
    }
    CHECK(s["status"] == "ok");
    CHECK(s["segments"].size() == 3);
    CHECK(s["channels"] == 19);
    CHECK(s["ips_train_frequencies"].size() == 11);
  }
  CHECK(errors == 1);
  fs::remove_all(dir);
}

TEST_CASE("ied_free_only excludes flagged recordings") {
  const auto dir = scratch("iedfree");
  auto cohort = synth::gen_cohort(short_spec(2));
  synth::write_cohort(cohort, dir / "data");
  for (std::size_t i : {0, 3}) {
    auto sc = cohort[i].sidecar;
    sc.ied_free = false;
    std::ofstream(dir / "data" / (sc.subject_id + ".meta")) << ingest::format_sidecar(sc);
  }
  const auto r = invoke({"ingest", "--ied-free-only", "--dataset-root", (dir / "data").string(), "--out",
                      (dir / "out").string()});
  CHECK(r.code == 0);
  std::size_t logged = 0;
  for (std::size_t p = r.out.find("excluded"); p != std::string::npos; p = r.out.find("excluded", p + 1)) ++logged;
  CHECK(logged == 2);
  const auto m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["included"] == 2);
  std::size_t excluded = 0;
  for (const auto& s : m["subjects"]) excluded += s["status"] == "excluded" && s["reason"] == "not IED-free";
  CHECK(excluded == 2);
  fs::remove_all(dir);
}

TEST_CASE("usage errors exit with code 2") {
  const auto dir = scratch("usage");
  std::ofstream(dir / "bad.ini") << "[dataset]\nroot = " << dir.string() << "\n[features]\nfamilys = Spectral\n";
  auto r = invoke({"ingest", "--config", (dir / "bad.ini").string(), "--out", (dir / "out").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("features.familys") != std::string::npos);

  r = invoke({"rank", "--dataset-root", dir.string(), "--families", "Spectrum", "--out", (dir / "out").string()});
  CHECK(r.code == 2);
  r = invoke({"rank", "--out", (dir / "out").string()});
  CHECK(r.code == 2);
  r = invoke({"rank", "--dataset-root", dir.string(), "--ensemble-sizes", "5-2", "--out", (dir / "out").string()});
  CHECK(r.code == 2);
  r = invoke({});
  CHECK(r.code == 2);
  // A missing root is a pipeline error rather than a usage error.
  r = invoke({"ingest", "--dataset-root", (dir / "missing").string(), "--out", (dir / "out").string()});
  CHECK(r.code == 1);
  fs::remove_all(dir);
}

TEST_CASE("end-to-end run, warm cache and flag precedence") {
  const auto dir = scratch("run");
  const auto data = dir / "data";
  synth::write_cohort(synth::gen_cohort(short_spec(6)), data);
  const auto before = tree(data);
  std::ofstream(dir / "run.ini") << "[dataset]\nroot = " << data.string() << "\n[features]\nsegments = IPS\n"
                                 << "families = Spectral,UTM\nmontages = CAR\nwindows = 2\ncombiners = Mean\n"
                                 << "[evaluation]\nseeds = 3\nensemble_sizes = 2-2\n";
  const std::vector<std::string> args{"run", "--config", (dir / "run.ini").string(), "--seeds", "2",
                                      "--out", (dir / "out").string()};
  auto r = invoke(args);
  REQUIRE(r.code == 0);
  const auto out = dir / "out";
  const auto stage1 = json::parse(slurp(out / "reports" / "IPS_stage1.json"));
  REQUIRE(stage1["reports"].size() == 2);
  for (const auto& rep : stage1["reports"]) {
    CHECK(rep["auc"]["mean"].is_number());
    CHECK(rep["seeds"].size() == 2);  // flag beats file
  }
  const auto ens = json::parse(slurp(out / "reports" / "IPS_ensembles.json"));
  REQUIRE(ens["reports"].size() == 1);
  CHECK(ens["reports"][0]["members"].size() == 2);
  CHECK(fs::exists(out / "roc" / "IPS.svg"));
  CHECK(fs::exists(out / "reports" / "summary.csv"));
  CHECK(fs::exists(out / "reports" / "hv_slowing.csv"));
  CHECK(fs::exists(out / "features" / "IPS" / "Spectral_CAR_2s_Mean.csv"));

  const auto first = tree(out);
  r = invoke(args);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("2 feature sets cached, 0 to compute") != std::string::npos);
  CHECK(r.out.find("ranking loaded from cache") != std::string::npos);
  CHECK(tree(out) == first);

  // A cold run into a fresh directory writes the same bytes.
  auto cold = args;
  cold.back() = (dir / "out2").string();
  REQUIRE(invoke(cold).code == 0);
  CHECK(tree(dir / "out2") == first);
  CHECK(tree(data) == before);

  // Changing the seed count invalidates the evaluation cache but not the features.
  auto more = args;
  more[4] = "1";
  r = invoke(more);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("2 feature sets cached") != std::string::npos);
  CHECK(r.out.find("ranking loaded from cache") == std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("feature CSV round trip") {
  features::FeatureMatrix fm;
  fm.config = {features::Family::PLV, preprocess::MontageKind::Laplacian, 0.5, features::Combiner::Kurtosis};
  fm.segment = SegmentKind::HV;
  fm.feature_names = {"a", "b"};
  fm.subject_ids = {"s1", "s2", "s3"};
  fm.labels = {Label::Epileptic, std::nullopt, Label::NonEpileptic};
  fm.ied_free = {true, false, true};
  fm.X = Matrix(3, 2);
  fm.X(0, 0) = 0.1;
  fm.X(0, 1) = std::nan("");
  fm.X(1, 0) = -1e-300;
  fm.X(2, 1) = 12345.678901234567;
  const auto dir = scratch("csv");
  const auto path = dir / "f.csv";
  pipeline::write_feature_csv(fm, path, "k1");
  CHECK_FALSE(pipeline::read_feature_csv(path, "k2").has_value());
  CHECK_FALSE(pipeline::read_feature_csv(dir / "missing.csv", "k1").has_value());
  const auto got = pipeline::read_feature_csv(path, "k1");
  REQUIRE(got.has_value());
  CHECK(got->config.key() == fm.config.key());
  CHECK(got->segment == SegmentKind::HV);
  CHECK(got->feature_names == fm.feature_names);
  CHECK(got->subject_ids == fm.subject_ids);
  CHECK(got->labels == fm.labels);
  CHECK(got->ied_free == fm.ied_free);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      if (std::isnan(fm.X(r, c))) CHECK(std::isnan(got->X(r, c)));
      else CHECK(got->X(r, c) == fm.X(r, c));
    }
  }
  const auto sub = pipeline::subset(fm, {"s3", "s1"});
  CHECK(sub.subject_ids == std::vector<std::string>{"s1", "s3"});
  CHECK(sub.X(1, 1) == fm.X(2, 1));
  CHECK(pipeline::file_stem("Spectral/CAR/2s/Mean") == "Spectral_CAR_2s_Mean");
  fs::remove_all(dir);
}

TEST_CASE("ROC figure shades the clinically relevant region") {
  pipeline::RocSeries s{"x", {{0, 0, 0}, {0.5, 1, 0}, {1, 1, 0}}, std::pair{0.5, 1.0}};
  // Plot square 400 px at (60, 40): slope 4 meets TPR = 1 at FPR = 0.25.
  const auto svg = pipeline::roc_svg({s}, 4.0, "t");
  CHECK(svg.find("points=\"60.00,440.00 160.00,40.00 60.00,40.00\"") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
  // Slope below 1 reaches the right edge first.
  const auto flat = pipeline::roc_svg({s}, 0.5, "t");
  CHECK(flat.find("points=\"60.00,440.00 460.00,240.00 460.00,40.00 60.00,40.00\"") != std::string::npos);
}
