#include "stimeeg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "stimeeg/edf.hpp"
#include "stimeeg/ingest.hpp"

namespace stimeeg::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string preprocess_signature(const preprocess::PreprocessConfig& p) {
  std::ostringstream o;
  o << p.notch_hz << ' ' << p.notch_q << ' ' << p.highpass_hz << ' ' << p.highpass_order << ' ' << p.target_fs << ' '
    << p.rms_window_s << ' ' << p.rms_mad_k << ' ' << p.rms_mad_floor << ' ' << p.rms_abs_uv;
  return o.str();
}

std::string gbdt_signature(const gbdt::Params& g) {
  std::ostringstream o;
  o << g.n_estimators << ' ' << g.max_depth << ' ' << g.subsample << ' ' << g.gamma << ' ' << g.learning_rate << ' '
    << g.l2_leaf_reg << ' ' << g.min_child_weight;
  return o.str();
}

json read_json_file(const fs::path& p) {
  if (!fs::exists(p)) return nullptr;
  try {
    return json::parse(read_bytes(p));
  } catch (const json::exception&) {
    return nullptr;
  }
}

}  // namespace

std::string_view to_string(Profile p) { return p == Profile::TUH ? "tuh" : "emc"; }

Profile parse_profile(std::string_view text) {
  const auto t = lower(std::string(text));
  if (t == "tuh") return Profile::TUH;
  if (t == "emc") return Profile::EMC;
  throw Error("unknown profile '" + std::string(text) + "' (expected tuh or emc)");
}

preprocess::PreprocessConfig RunConfig::preprocess_config() const {
  preprocess::PreprocessConfig p;
  p.notch_hz = profile == Profile::TUH ? 60.0 : 50.0;
  p.target_fs = profile == Profile::TUH ? 250.0 : 200.0;
  if (notch_hz) p.notch_hz = *notch_hz;
  if (target_fs) p.target_fs = *target_fs;
  return p;
}

std::vector<features::FeatureConfig> RunConfig::grid() const {
  std::vector<features::FeatureConfig> out;
  for (auto f : families) {
    for (auto m : montages) {
      for (double w : windows) {
        for (auto c : combiners) out.push_back({f, m, w, c});
      }
    }
  }
  return out;
}

evaluation::EvalOptions RunConfig::eval_options() const {
  evaluation::EvalOptions o;
  o.seeds = seeds;
  o.base_seed = seed;
  o.threads = threads;
  return o;
}

void RunConfig::validate() const {
  if (segments.empty() || families.empty() || montages.empty() || windows.empty() || combiners.empty()) {
    throw Error("config: segments, families, montages, windows and combiners must be non-empty");
  }
  for (double w : windows) {
    if (!(w > 0.0)) throw Error("config: window lengths must be positive");
  }
  if (seeds == 0) throw Error("config: seeds must be at least 1");
  if (ensemble_min == 0 || ensemble_min > ensemble_max) throw Error("config: invalid ensemble size range");
  if (threads == 0) throw Error("config: threads must be at least 1");
  preprocess_config().validate();
}

std::size_t Manifest::included() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const ManifestEntry& e) { return e.status == "ok"; }));
}

json Manifest::to_json() const {
  json j;
  j["root"] = root;
  j["dataset_hash"] = dataset_hash;
  j["warnings"] = warnings;
  j["included"] = included();
  auto& arr = j["subjects"] = json::array();
  for (const auto& e : entries) {
    json s{{"file", e.file}, {"subject", e.subject_id}, {"status", e.status}};
    if (!e.reason.empty()) s["reason"] = e.reason;
    if (e.status != "error") {
      s["label"] = e.label ? json(std::string(stimeeg::to_string(*e.label))) : json(nullptr);
      s["ied_free"] = e.ied_free;
      s["channels"] = e.channels;
      s["discarded_channels"] = e.discarded_channels;
      s["ips_train_frequencies"] = e.train_frequencies;
      json segs = json::object();
      for (const auto& [kind, span] : e.segments) segs[std::string(stimeeg::to_string(kind))] = {span.first, span.second};
      s["segments"] = segs;
    }
    arr.push_back(s);
  }
  return j;
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_feature_csv(const features::FeatureMatrix& fm, const fs::path& path, const std::string& cache_key) {
  fs::create_directories(path.parent_path());
  std::ostringstream o;
  o << "# cache " << cache_key << '\n';
  o << "# config " << fm.config.key() << " segment " << stimeeg::to_string(fm.segment) << '\n';
  o << "subject,label,ied_free";
  for (const auto& n : fm.feature_names) o << ',' << n;
  o << '\n';
  for (std::size_t r = 0; r < fm.subject_ids.size(); ++r) {
    if (fm.subject_ids[r].find(',') != std::string::npos) throw Error("subject id contains a comma: " + fm.subject_ids[r]);
    o << fm.subject_ids[r] << ',' << (fm.labels[r] ? std::string(stimeeg::to_string(*fm.labels[r])) : "") << ','
      << (fm.ied_free[r] ? 1 : 0);
    for (double v : fm.X.row(r)) o << ',' << num(v);
    o << '\n';
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out << o.str();
  }
  fs::rename(tmp, path);
}

std::optional<features::FeatureMatrix> read_feature_csv(const fs::path& path, const std::string& cache_key) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line) || line != "# cache " + cache_key) return std::nullopt;
  if (!std::getline(in, line)) return std::nullopt;
  std::istringstream meta(line);
  std::string hash, cfg_word, key, seg_word, seg;
  meta >> hash >> cfg_word >> key >> seg_word >> seg;
  features::FeatureMatrix fm;
  fm.config = features::FeatureConfig::parse(key);
  fm.segment = parse_segment_kind(seg);
  if (!std::getline(in, line)) return std::nullopt;
  auto header = split(line, ',');
  if (header.size() < 3) return std::nullopt;
  fm.feature_names.assign(header.begin() + 3, header.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != header.size()) throw Error(path.string() + ": ragged row");
    fm.subject_ids.push_back(cells[0]);
    fm.labels.push_back(cells[1].empty() ? std::nullopt : std::optional<Label>(parse_label(cells[1])));
    fm.ied_free.push_back(cells[2] == "1");
    std::vector<double> v;
    for (std::size_t i = 3; i < cells.size(); ++i) v.push_back(std::strtod(cells[i].c_str(), nullptr));
    rows.push_back(std::move(v));
  }
  fm.X = Matrix(rows.size(), fm.feature_names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), fm.X.row(r).begin());
  return fm;
}

std::string file_stem(const std::string& config_key) {
  std::string s = config_key;
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

features::FeatureMatrix subset(const features::FeatureMatrix& fm, const std::vector<std::string>& keep) {
  const std::set<std::string> wanted(keep.begin(), keep.end());
  features::FeatureMatrix out;
  out.config = fm.config;
  out.segment = fm.segment;
  out.feature_names = fm.feature_names;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < fm.subject_ids.size(); ++r) {
    if (!wanted.contains(fm.subject_ids[r])) continue;
    rows.push_back(r);
    out.subject_ids.push_back(fm.subject_ids[r]);
    out.labels.push_back(fm.labels[r]);
    out.ied_free.push_back(fm.ied_free[r]);
  }
  out.X = Matrix(rows.size(), fm.X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(fm.X.row(rows[i]).begin(), fm.X.row(rows[i]).end(), out.X.row(i).begin());
  return out;
}

// ---- Runner ----

Runner::Runner(RunConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log) { cfg_.validate(); }

void Runner::write_text(const fs::path& rel, const std::string& text) const {
  const auto path = cfg_.out / rel;
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void Runner::write_json(const fs::path& rel, const json& j) const { write_text(rel, j.dump(2) + "\n"); }

const Manifest& Runner::ingest() {
  if (manifest_) return *manifest_;
  if (!fs::is_directory(cfg_.dataset_root)) throw Error("dataset root is not a directory: " + cfg_.dataset_root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(cfg_.dataset_root)) {
    if (e.is_regular_file() && lower(e.path().extension().string()) == ".edf") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Manifest m;
  m.root = cfg_.dataset_root.string();
  std::string digest;
  std::set<std::string> seen;
  for (const auto& path : files) {
    ManifestEntry e;
    e.file = fs::relative(path, cfg_.dataset_root).generic_string();
    try {
      const std::string bytes = read_bytes(path);
      ingest::Sidecar sc;
      std::string sidecar_text;
      const auto sc_path = ingest::sidecar_path(path);
      if (fs::exists(sc_path)) {
        sidecar_text = read_bytes(sc_path);
        sc = ingest::parse_sidecar(sidecar_text);
      }
      if (sc.subject_id.empty()) sc.subject_id = path.stem().string();
      const auto span = std::span(reinterpret_cast<const std::byte*>(bytes.data()), bytes.size());
      auto res = ingest::ingest(edf::parse(span), sc);
      const auto& rec = res.recording;
      e.subject_id = rec.subject_id;
      e.label = rec.label;
      e.ied_free = rec.ied_free;
      e.channels = rec.channels.size();
      e.discarded_channels = res.discarded_channels;
      for (const auto& t : res.trains) e.train_frequencies.push_back(t.flash_frequency_hz);
      for (const auto& s : rec.segments) {
        e.segments.push_back({s.kind, {static_cast<double>(s.span.begin) / rec.fs, static_cast<double>(s.span.end) / rec.fs}});
      }
      e.status = "ok";
      if (cfg_.ied_free_only && !rec.ied_free) {
        e.status = "excluded";
        e.reason = "not IED-free";
      } else if (seen.contains(rec.subject_id)) {
        e.status = "excluded";
        e.reason = "duplicate subject id";
      } else if (!rec.label) {
        e.reason = "unlabeled; ignored by evaluation";
      }
      if (e.status == "ok") {
        seen.insert(rec.subject_id);
        digest += e.file + ':' + content_hash(bytes) + ':' + content_hash(sidecar_text) + ';';
        raw_.push_back(std::move(res.recording));
      } else {
        log_ << "excluded " << e.file << ": " << e.reason << '\n';
      }
    } catch (const std::exception& ex) {
      e.status = "error";
      e.reason = ex.what();
      log_ << "error reading " << e.file << ": " << ex.what() << '\n';
    }
    m.entries.push_back(std::move(e));
  }
  if (files.empty()) {
    m.warnings.push_back("no EDF files found under " + m.root);
    log_ << "warning: " << m.warnings.back() << '\n';
  }
  m.dataset_hash = content_hash(digest);
  manifest_ = std::move(m);
  write_json("manifest.json", manifest_->to_json());
  log_ << "ingested " << manifest_->included() << " of " << files.size() << " recordings\n";
  return *manifest_;
}

const std::vector<Recording>& Runner::preprocessed() {
  if (preprocessed_) return *preprocessed_;
  ingest();
  const auto pcfg = cfg_.preprocess_config();
  std::vector<std::optional<Recording>> out(raw_.size());
  std::vector<std::string> errors(raw_.size());
  parallel_for(raw_.size(), cfg_.threads, [&](std::size_t i) {
    try {
      out[i] = preprocess::run(raw_[i], pcfg).recording;
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  });
  preprocessed_.emplace();
  for (std::size_t i = 0; i < raw_.size(); ++i) {
    if (out[i]) {
      preprocessed_->push_back(std::move(*out[i]));
    } else {
      const std::string msg = raw_[i].subject_id + ": preprocessing failed: " + errors[i];
      manifest_->warnings.push_back(msg);
      log_ << "warning: " << msg << '\n';
    }
  }
  if (preprocessed_->size() != raw_.size()) write_json("manifest.json", manifest_->to_json());
  return *preprocessed_;
}

const std::vector<features::FeatureMatrix>& Runner::features(SegmentKind segment) {
  if (auto it = features_.find(segment); it != features_.end()) return it->second;
  const auto& recs = preprocessed();
  const auto grid = cfg_.grid();
  const std::string base = manifest_->dataset_hash + '|' + preprocess_signature(cfg_.preprocess_config()) + '|' +
                           std::string(stimeeg::to_string(segment)) + "|features-v1|";
  std::vector<std::optional<features::FeatureMatrix>> got(grid.size());
  std::vector<features::FeatureConfig> missing;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto path = cfg_.out / "features" / std::string(stimeeg::to_string(segment)) / (file_stem(grid[i].key()) + ".csv");
    got[i] = read_feature_csv(path, content_hash(base + grid[i].key()));
    if (!got[i]) missing.push_back(grid[i]);
  }
  log_ << stimeeg::to_string(segment) << ": " << grid.size() - missing.size() << " feature sets cached, "
       << missing.size() << " to compute\n";
  if (!missing.empty()) {
    std::vector<std::string> warnings;
    features::BuildOptions bo;
    bo.threads = cfg_.threads;
    auto built = features::build_feature_matrices(recs, segment, missing, &warnings, bo);
    std::set<std::string> unique(warnings.begin(), warnings.end());
    for (const auto& w : unique) log_ << "warning: " << w << '\n';
    std::size_t k = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (got[i]) continue;
      const auto path = cfg_.out / "features" / std::string(stimeeg::to_string(segment)) / (file_stem(grid[i].key()) + ".csv");
      write_feature_csv(built[k], path, content_hash(base + grid[i].key()));
      got[i] = std::move(built[k++]);
    }
  }
  auto& out = features_[segment];
  for (auto& g : got) out.push_back(std::move(*g));
  return out;
}

std::string Runner::stage_key(SegmentKind segment) const {
  std::string s = manifest_->dataset_hash + '|' + preprocess_signature(cfg_.preprocess_config()) + '|' +
                  std::string(stimeeg::to_string(segment)) + '|' + gbdt_signature(gbdt::Params{}) + '|' +
                  std::to_string(cfg_.seeds) + '|' + std::to_string(cfg_.seed) + "|stage1-v1|";
  for (const auto& c : cfg_.grid()) s += c.key() + ';';
  return content_hash(s);
}

const SegmentResults& Runner::rank(SegmentKind segment) {
  if (ranked_[segment]) return results_[segment];
  ingest();
  const std::string seg(stimeeg::to_string(segment));
  const std::string key = stage_key(segment);
  auto& res = results_[segment];
  const json cached = read_json_file(cfg_.out / "reports" / (seg + "_ranking.json"));
  if (cached.is_object() && cached.value("cache_key", "") == key &&
      fs::exists(cfg_.out / "reports" / (seg + "_stage1.json"))) {
    for (const auto& r : cached["ranking"]) res.ranking.push_back(r["config"].get<std::string>());
    log_ << seg << ": stage-1 ranking loaded from cache\n";
    ranked_[segment] = true;
    return res;
  }
  const auto& mats = features(segment);
  const auto opts = cfg_.eval_options();
  for (std::size_t i = 0; i < mats.size(); ++i) {
    try {
      res.stage1.push_back(evaluation::run_single_config(mats[i], opts));
      const auto& r = res.stage1.back();
      log_ << seg << " [" << i + 1 << "/" << mats.size() << "] " << r.name << " AUC " << fixed(r.auc.mean, 3) << " +- "
           << fixed(r.auc.std, 3) << '\n';
    } catch (const Error& ex) {
      log_ << "warning: " << seg << ' ' << mats[i].config.key() << " skipped: " << ex.what() << '\n';
    }
  }
  json arr = json::array();
  for (const auto& r : res.stage1) arr.push_back(r.to_json());
  write_json(fs::path("reports") / (seg + "_stage1.json"), json{{"cache_key", key}, {"segment", seg}, {"reports", arr}});
  write_text(fs::path("reports") / (seg + "_stage1.csv"), stage1_csv(arr));
  json ranking = json::array();
  for (const auto* r : evaluation::rank_configs(res.stage1)) {
    res.ranking.push_back(r->name);
    ranking.push_back({{"config", r->name}, {"auc_mean", r->auc.mean}, {"auc_std", r->auc.std},
                       {"bac_at_sens_0.8_mean", r->bac_at_sens.mean}});
  }
  write_json(fs::path("reports") / (seg + "_ranking.json"), json{{"cache_key", key}, {"segment", seg}, {"ranking", ranking}});
  ranked_[segment] = true;
  return res;
}

std::vector<const features::FeatureMatrix*> Runner::ranked_matrices(SegmentKind segment) {
  const auto& res = rank(segment);
  const auto& mats = features(segment);
  std::vector<const features::FeatureMatrix*> out;
  for (const auto& key : res.ranking) {
    auto it = std::find_if(mats.begin(), mats.end(), [&](const features::FeatureMatrix& m) { return m.config.key() == key; });
    if (it == mats.end()) throw Error("ranked config " + key + " is not in the feature grid");
    out.push_back(&*it);
  }
  return out;
}

const SegmentResults& Runner::ensemble(SegmentKind segment) {
  if (ensembled_[segment]) return results_[segment];
  rank(segment);
  auto& res = results_[segment];
  const std::string seg(stimeeg::to_string(segment));
  std::string k = stage_key(segment) + '|' + std::to_string(cfg_.ensemble_min) + '-' + std::to_string(cfg_.ensemble_max) +
                  (cfg_.ensemble_exhaustive ? "|exhaustive" : "");
  for (const auto& r : res.ranking) k += ';' + r;
  const std::string key = content_hash(k);
  const auto rel = fs::path("reports") / (seg + "_ensembles.json");
  const json cached = read_json_file(cfg_.out / rel);
  if (cached.is_object() && cached.value("cache_key", "") == key) {
    log_ << seg << ": ensembles loaded from cache\n";
    ensembled_[segment] = true;
    return res;
  }
  if (res.ranking.size() < cfg_.ensemble_min) {
    log_ << seg << ": " << res.ranking.size() << " ranked families, fewer than the minimum ensemble size "
         << cfg_.ensemble_min << "; no ensembles\n";
  } else {
    const auto ranked = ranked_matrices(segment);
    const auto opts = cfg_.eval_options();
    auto evaluate = [&](const std::vector<const features::FeatureMatrix*>& members) {
      try {
        res.ensembles.push_back(evaluation::run_ensemble(members, opts));
        const auto& r = res.ensembles.back();
        log_ << seg << " ensemble of " << members.size() << " AUC " << fixed(r.auc.mean, 3) << " +- "
             << fixed(r.auc.std, 3) << '\n';
      } catch (const Error& ex) {
        log_ << "warning: " << seg << " ensemble of " << members.size() << " skipped: " << ex.what() << '\n';
      }
    };
    for (std::size_t size = cfg_.ensemble_min; size <= std::min(cfg_.ensemble_max, ranked.size()); ++size) {
      if (!cfg_.ensemble_exhaustive) {
        evaluate({ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(size)});
        continue;
      }
      // Lexicographic subsets of rank positions.
      std::vector<std::size_t> pick(size);
      std::iota(pick.begin(), pick.end(), 0);
      while (true) {
        std::vector<const features::FeatureMatrix*> members;
        for (auto i : pick) members.push_back(ranked[i]);
        evaluate(members);
        std::size_t j = size;
        while (j > 0 && pick[j - 1] == ranked.size() - size + j - 1) --j;
        if (j == 0) break;
        ++pick[j - 1];
        for (std::size_t k = j; k < size; ++k) pick[k] = pick[k - 1] + 1;
      }
    }
  }
  json arr = json::array();
  for (const auto& r : res.ensembles) arr.push_back(r.to_json());
  write_json(rel, json{{"cache_key", key}, {"segment", seg}, {"reports", arr}});
  write_text(fs::path("reports") / (seg + "_ensembles.csv"), ensembles_csv(arr));
  ensembled_[segment] = true;
  return res;
}

const hv::SlowingReport& Runner::hv() {
  if (hv_) return *hv_;
  const auto& recs = preprocessed();
  std::vector<hv::SubjectSlowing> subjects(recs.size());
  parallel_for(recs.size(), cfg_.threads, [&](std::size_t i) { subjects[i] = hv::analyze(recs[i]); });
  hv_ = hv::stratify(std::move(subjects));
  write_text("reports/hv_slowing.csv", hv_->to_csv());
  write_json("reports/hv_slowing.json", hv_->to_json());
  std::size_t valid = 0, responders = 0;
  for (const auto& s : hv_->subjects) {
    valid += s.valid;
    responders += s.responder;
  }
  log_ << "HV: " << valid << " valid subjects, " << responders << " responders\n";

  // Best HV configuration re-evaluated within each responder stratum.
  if (std::find(cfg_.segments.begin(), cfg_.segments.end(), SegmentKind::HV) == cfg_.segments.end()) return *hv_;
  const auto& res = rank(SegmentKind::HV);
  if (res.ranking.empty()) return *hv_;
  const auto best = ranked_matrices(SegmentKind::HV).front();
  json strata = json::object();
  for (bool want : {true, false}) {
    std::vector<std::string> ids;
    for (const auto& s : hv_->subjects) {
      if (s.valid && s.responder == want) ids.push_back(s.subject_id);
    }
    const std::string name = want ? "HV-R" : "HV-NR";
    try {
      strata[name] = evaluation::run_single_config(subset(*best, ids), cfg_.eval_options()).to_json();
      log_ << name << " " << best->config.key() << " AUC " << fixed(strata[name]["auc"]["mean"].get<double>(), 3) << '\n';
    } catch (const Error& ex) {
      strata[name] = json{{"skipped", ex.what()}, {"subjects", ids.size()}};
    }
  }
  write_json("reports/HV_stratified.json", json{{"config", best->config.key()}, {"strata", strata}});
  return *hv_;
}

void Runner::report() {
  const auto reports = cfg_.out / "reports";
  std::ostringstream summary;
  summary << "segment,kind,name,auc_mean,auc_std,bac_sens80_mean,bac_decision_mean,gmean_mean,op_fpr,op_tpr,clinically_relevant\n";
  std::size_t figures = 0;
  for (auto segment : cfg_.segments) {
    const std::string seg(stimeeg::to_string(segment));
    const json stage1 = read_json_file(reports / (seg + "_stage1.json"));
    const json ranking = read_json_file(reports / (seg + "_ranking.json"));
    const json ens = read_json_file(reports / (seg + "_ensembles.json"));
    if (!stage1.is_object() || !ranking.is_object()) continue;
    std::vector<RocSeries> series;
    double slope = 0.0;
    auto add = [&](const json& r, const std::string& kind) {
      RocSeries s;
      s.name = kind + ": " + r["name"].get<std::string>() + " (AUC " + fixed(r["auc"]["mean"].get<double>(), 3) + ")";
      for (const auto& p : r["roc"]) s.points.push_back({p[0].get<double>(), p[1].get<double>(), 0.0});
      s.operating_point = std::pair{r["operating_point"]["fpr"].get<double>(), r["operating_point"]["tpr"].get<double>()};
      slope = r["clinical_slope"].get<double>();
      series.push_back(std::move(s));
      const auto& op = r["operating_point"];
      summary << seg << ',' << kind << ',' << r["name"].get<std::string>() << ',' << fixed(r["auc"]["mean"].get<double>())
              << ',' << fixed(r["auc"]["std"].get<double>()) << ',' << fixed(r["bac_at_sens_0.8"]["mean"].get<double>())
              << ',' << fixed(r["bac_at_decision"]["mean"].get<double>()) << ',' << fixed(r["gmean"]["mean"].get<double>())
              << ',' << fixed(op["fpr"].get<double>()) << ',' << fixed(op["tpr"].get<double>()) << ','
              << (op["clinically_relevant"].get<bool>() ? 1 : 0) << '\n';
    };
    if (!ranking["ranking"].empty()) {
      const auto best = ranking["ranking"][0]["config"].get<std::string>();
      for (const auto& r : stage1["reports"]) {
        if (r["name"] == best) add(r, "single");
      }
    }
    if (ens.is_object() && !ens["reports"].empty()) {
      const json* top = nullptr;
      for (const auto& r : ens["reports"]) {
        if (!top || r["auc"]["mean"].get<double>() > (*top)["auc"]["mean"].get<double>()) top = &r;
      }
      add(*top, "ensemble");
    }
    if (series.empty()) continue;
    write_text(fs::path("roc") / (seg + ".svg"), roc_svg(series, slope, seg + " segment"));
    ++figures;
  }
  write_text("reports/summary.csv", summary.str());
  log_ << "report: " << figures << " ROC figure(s)\n";
}

void Runner::run() {
  ingest();
  for (auto segment : cfg_.segments) {
    features(segment);
    rank(segment);
    ensemble(segment);
  }
  hv();
  report();
}

// ---- rendering ----

std::string roc_svg(const std::vector<RocSeries>& series, double slope, const std::string& title) {
  constexpr double kLeft = 60, kTop = 40, kSize = 400;
  auto X = [&](double fpr) { return kLeft + kSize * fpr; };
  auto Y = [&](double tpr) { return kTop + kSize * (1.0 - tpr); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  const double height = kTop + kSize + 60 + 18.0 * static_cast<double>(series.size());
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + kSize + 40 << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kLeft + kSize / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  // Region where a positive prediction reaches the target posterior.
  if (slope > 0.0) {
    o << "<polygon fill=\"#ffe08a\" fill-opacity=\"0.6\" points=\"" << X(0) << ',' << Y(0) << ' ';
    if (slope >= 1.0) {
      o << X(1.0 / slope) << ',' << Y(1) << ' ';
    } else {
      o << X(1) << ',' << Y(slope) << ' ' << X(1) << ',' << Y(1) << ' ';
    }
    o << X(0) << ',' << Y(1) << "\"/>\n";
  }
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kSize << "\" height=\"" << kSize
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << X(0) << "\" y1=\"" << Y(0) << "\" x2=\"" << X(1) << "\" y2=\"" << Y(1)
    << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    o << "<text x=\"" << X(v) << "\" y=\"" << Y(0) + 16 << "\" text-anchor=\"middle\">" << std::setprecision(1) << v << "</text>\n";
    o << "<text x=\"" << X(0) - 8 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
    o << std::setprecision(2);
  }
  o << "<text x=\"" << kLeft + kSize / 2 << "\" y=\"" << Y(0) + 34 << "\" text-anchor=\"middle\">False positive rate</text>\n";
  o << "<text transform=\"translate(" << kLeft - 40 << ',' << kTop + kSize / 2
    << ") rotate(-90)\" text-anchor=\"middle\">True positive rate</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto* color = kColors[i % 5];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : series[i].points) o << X(p.fpr) << ',' << Y(p.tpr) << ' ';
    o << "\"/>\n";
    if (series[i].operating_point) {
      o << "<circle cx=\"" << X(series[i].operating_point->first) << "\" cy=\"" << Y(series[i].operating_point->second)
        << "\" r=\"5\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + kSize + 54 + 18.0 * static_cast<double>(i);
    o << "<rect x=\"" << kLeft << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"4\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << kLeft + 18 << "\" y=\"" << ly - 4 << "\">" << series[i].name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string stage1_csv(const json& reports) {
  std::ostringstream o;
  o << "config,family,montage,window_s,combiner,subjects,auc_mean,auc_std,bac_sens80_mean,bac_sens80_std,"
       "bac_decision_mean,gmean_mean,op_fpr,op_tpr,clinically_relevant\n";
  for (const auto& r : reports) {
    const auto name = r["name"].get<std::string>();
    const auto c = features::FeatureConfig::parse(name);
    const auto& op = r["operating_point"];
    o << name << ',' << features::to_string(c.family) << ',' << preprocess::to_string(c.montage) << ',' << c.window_s << ','
      << features::to_string(c.combiner) << ',' << r["subjects"].size() << ',' << fixed(r["auc"]["mean"].get<double>())
      << ',' << fixed(r["auc"]["std"].get<double>()) << ',' << fixed(r["bac_at_sens_0.8"]["mean"].get<double>()) << ','
      << fixed(r["bac_at_sens_0.8"]["std"].get<double>()) << ',' << fixed(r["bac_at_decision"]["mean"].get<double>())
      << ',' << fixed(r["gmean"]["mean"].get<double>()) << ',' << fixed(op["fpr"].get<double>()) << ','
      << fixed(op["tpr"].get<double>()) << ',' << (op["clinically_relevant"].get<bool>() ? 1 : 0) << '\n';
  }
  return o.str();
}

std::string ensembles_csv(const json& reports) {
  std::ostringstream o;
  o << "name,size,members,auc_mean,auc_std,bac_sens80_mean,bac_sens80_std,bac_decision_mean,bac_decision_std,"
       "gmean_mean,op_fpr,op_tpr,clinically_relevant\n";
  for (const auto& r : reports) {
    std::string members;
    for (const auto& m : r["members"]) members += (members.empty() ? "" : " + ") + m.get<std::string>();
    const auto& op = r["operating_point"];
    o << r["name"].get<std::string>() << ',' << r["members"].size() << ',' << members << ','
      << fixed(r["auc"]["mean"].get<double>()) << ',' << fixed(r["auc"]["std"].get<double>()) << ','
      << fixed(r["bac_at_sens_0.8"]["mean"].get<double>()) << ',' << fixed(r["bac_at_sens_0.8"]["std"].get<double>())
      << ',' << fixed(r["bac_at_decision"]["mean"].get<double>()) << ',' << fixed(r["bac_at_decision"]["std"].get<double>())
      << ',' << fixed(r["gmean"]["mean"].get<double>()) << ',' << fixed(op["fpr"].get<double>()) << ','
      << fixed(op["tpr"].get<double>()) << ',' << (op["clinically_relevant"].get<bool>() ? 1 : 0) << '\n';
  }
  return o.str();
}

}  // namespace stimeeg::pipeline
