#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "stimeeg/pipeline.hpp"
#include "stimeeg/synth.hpp"

namespace stimeeg::cli {

namespace {

struct UsageError : Error {
  using Error::Error;
};

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

// Config-file key -> long flag.
const std::map<std::string, std::string>& config_keys() {
  static const std::map<std::string, std::string> keys{
      {"dataset.root", "dataset-root"},
      {"dataset.profile", "profile"},
      {"dataset.ied_free_only", "ied-free-only"},
      {"preprocess.notch_hz", "notch-hz"},
      {"preprocess.target_fs", "target-fs"},
      {"features.segments", "segments"},
      {"features.families", "families"},
      {"features.montages", "montages"},
      {"features.windows", "windows"},
      {"features.combiners", "combiners"},
      {"evaluation.ensemble_sizes", "ensemble-sizes"},
      {"evaluation.ensemble_exhaustive", "ensemble-exhaustive"},
      {"evaluation.seeds", "seeds"},
      {"evaluation.seed", "seed"},
      {"output.out", "out"},
      {"runtime.threads", "threads"},
  };
  return keys;
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse(item));
  }
  return out;
}

double parse_number(std::string s, const std::string& what) {
  if (!s.empty() && s.back() == 's') s.pop_back();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("invalid " + what + " '" + s + "'");
  }
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  const double v = parse_number(s, what);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) throw UsageError("invalid " + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

bool parse_bool(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off" || s.empty()) return false;
  throw UsageError("invalid boolean '" + s + "'");
}

pipeline::RunConfig build_config(std::map<std::string, std::string>& v, bool need_root) {
  pipeline::RunConfig cfg;
  try {
    if (!v["dataset-root"].empty()) cfg.dataset_root = v["dataset-root"];
    else if (need_root) throw UsageError("--dataset-root is required");
    if (!v["out"].empty()) cfg.out = v["out"];
    if (!v["profile"].empty()) cfg.profile = pipeline::parse_profile(v["profile"]);
    if (!v["notch-hz"].empty()) cfg.notch_hz = parse_number(v["notch-hz"], "notch frequency");
    if (!v["target-fs"].empty()) cfg.target_fs = parse_number(v["target-fs"], "target rate");
    if (!v["segments"].empty()) cfg.segments = parse_list<SegmentKind>(v["segments"], parse_segment_kind);
    if (!v["families"].empty()) cfg.families = parse_list<features::Family>(v["families"], features::parse_family);
    if (!v["montages"].empty()) cfg.montages = parse_list<preprocess::MontageKind>(v["montages"], preprocess::parse_montage);
    if (!v["windows"].empty()) {
      cfg.windows = parse_list<double>(v["windows"], [](const std::string& s) { return parse_number(s, "window"); });
    }
    if (!v["combiners"].empty()) cfg.combiners = parse_list<features::Combiner>(v["combiners"], features::parse_combiner);
    if (const auto& s = v["ensemble-sizes"]; !s.empty()) {
      const auto dash = s.find('-');
      cfg.ensemble_min = parse_count(trim(s.substr(0, dash)), "ensemble size");
      cfg.ensemble_max = dash == std::string::npos ? cfg.ensemble_min : parse_count(trim(s.substr(dash + 1)), "ensemble size");
    }
    cfg.ensemble_exhaustive = parse_bool(v["ensemble-exhaustive"]);
    cfg.ied_free_only = parse_bool(v["ied-free-only"]);
    if (!v["seeds"].empty()) cfg.seeds = parse_count(v["seeds"], "seed count");
    if (!v["seed"].empty()) cfg.seed = parse_count(v["seed"], "seed");
    if (!v["threads"].empty()) cfg.threads = parse_count(v["threads"], "thread count");
    cfg.validate();
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_ini(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error("config line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out.emplace_back(section.empty() ? key : section + "." + key, value);
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"EEG stimulation-procedure classification pipeline", "stimeeg"};
  app.fallthrough();
  app.require_subcommand(1);

  std::map<std::string, std::string> v;
  std::string config_path;
  bool ied_free_only = false, exhaustive = false;
  app.add_option("--config", config_path, "key-value config file with [sections]");
  app.add_option("--dataset-root", v["dataset-root"], "directory of EDF files and .meta sidecars");
  app.add_option("--profile", v["profile"], "tuh (60 Hz, 250 Hz) or emc (50 Hz, 200 Hz)");
  app.add_option("--notch-hz", v["notch-hz"], "override the profile notch frequency");
  app.add_option("--target-fs", v["target-fs"], "override the profile sampling rate");
  app.add_option("--segments", v["segments"], "comma list of Resting,IPS,HV");
  app.add_option("--families", v["families"], "comma list of feature families");
  app.add_option("--montages", v["montages"], "comma list of CAR,Cz,Laplacian,BipolarDB");
  app.add_option("--windows", v["windows"], "comma list of window lengths in seconds");
  app.add_option("--combiners", v["combiners"], "comma list of Mean,Median,Std,Skewness,Kurtosis");
  app.add_option("--ensemble-sizes", v["ensemble-sizes"], "size range, e.g. 2-10");
  app.add_flag("--ensemble-exhaustive", exhaustive, "every subset of ranked families per size");
  app.add_option("--seeds", v["seeds"], "repeats with different seeds");
  app.add_option("--seed", v["seed"], "base seed");
  app.add_flag("--ied-free-only", ied_free_only, "exclude recordings not flagged IED-free");
  app.add_option("--out", v["out"], "output directory");
  app.add_option("--threads", v["threads"], "worker threads");

  auto* c_ingest = app.add_subcommand("ingest", "scan the dataset and write manifest.json");
  auto* c_features = app.add_subcommand("features", "compute feature matrices");
  auto* c_rank = app.add_subcommand("rank", "stage-1 evaluation of every configuration");
  auto* c_ensemble = app.add_subcommand("ensemble", "stacked ensembles of the best family configurations");
  auto* c_hv = app.add_subcommand("hv", "hyperventilation slowing index and responder strata");
  auto* c_report = app.add_subcommand("report", "ROC figures and summary tables");
  auto* c_run = app.add_subcommand("run", "every stage in order");
  auto* c_synth = app.add_subcommand("synth", "write a synthetic EDF cohort to --out");
  synth::SynthSpec spec;
  c_synth->add_option("--n-per-class", spec.n_per_class);
  c_synth->add_option("--fs", spec.fs);
  c_synth->add_option("--resting-s", spec.resting_s);
  c_synth->add_option("--hv-s", spec.hv_s);
  c_synth->add_option("--photic-driving-gain", spec.photic_driving_gain);
  c_synth->add_option("--hv-slowing-gain", spec.hv_slowing_gain);
  c_synth->add_option("--hv-arousal-gain", spec.hv_arousal_gain);
  c_synth->add_option("--plv-coupling-gain", spec.plv_coupling_gain);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (ied_free_only) v["ied-free-only"] = "true";
    if (exhaustive) v["ensemble-exhaustive"] = "true";
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("cannot read config file " + config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      for (const auto& [key, value] : parse_ini(ss.str())) {
        auto it = config_keys().find(key);
        if (it == config_keys().end()) throw UsageError("unknown config key '" + key + "'");
        if (app.get_option("--" + it->second)->count() == 0) v[it->second] = value;
      }
    }

    if (c_synth->parsed()) {
      const std::string dir = v["out"].empty() ? "synth" : v["out"];
      if (!v["seed"].empty()) spec.seed = parse_count(v["seed"], "seed");
      const auto cohort = synth::gen_cohort(spec);
      synth::write_cohort(cohort, dir);
      out << "wrote " << cohort.size() << " subjects to " << dir << '\n';
      return 0;
    }

    const bool need_root = !c_report->parsed();
    pipeline::Runner runner(build_config(v, need_root), out);
    const auto& segments = runner.config().segments;
    if (c_ingest->parsed()) runner.ingest();
    if (c_features->parsed()) for (auto s : segments) runner.features(s);
    if (c_rank->parsed()) for (auto s : segments) runner.rank(s);
    if (c_ensemble->parsed()) for (auto s : segments) runner.ensemble(s);
    if (c_hv->parsed()) runner.hv();
    if (c_report->parsed()) runner.report();
    if (c_run->parsed()) runner.run();
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace stimeeg::cli
