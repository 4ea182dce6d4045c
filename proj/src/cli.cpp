#include "saeb/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "saeb/diagnostics.hpp"
#include "saeb/errors.hpp"
#include "saeb/inference.hpp"
#include "saeb/simulator.hpp"
#include "saeb/text.hpp"

namespace saeb {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifest = "manifest.json";

/// Raised for a corrupted or inconsistent artifact directory.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

std::string to_hex(const unsigned char* data, unsigned int n) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < n; ++i) os << std::setw(2) << static_cast<int>(data[i]);
  return os.str();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string absolute_path(const std::string& p) {
  return fs::weakly_canonical(fs::absolute(p)).string();
}

std::string fmt(double x) { return text::format_double(x); }

/// Every regular file below `dir` except the manifest, relative and sorted.
std::vector<std::string> list_artifacts(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel != kManifest) out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Json artifact_hashes(const fs::path& dir) {
  Json list = Json::array();
  for (const auto& rel : list_artifacts(dir))
    list.push_back({{"path", rel}, {"sha256", sha256_file(dir / rel)}});
  return list;
}

Json read_manifest(const fs::path& dir) {
  const auto path = dir / kManifest;
  if (!fs::exists(path)) throw ArtifactError("no manifest in " + dir.string());
  try {
    return Json::parse(text::read_file(path));
  } catch (const Json::exception& e) {
    throw ArtifactError("unreadable manifest " + path.string() + ": " + e.what());
  }
}

/// Rehashes every listed artifact; throws ArtifactError on any difference.
void verify_artifacts(const fs::path& dir, const Json& manifest) {
  if (!manifest.contains("artifacts")) throw ArtifactError("manifest lists no artifacts");
  for (const auto& a : manifest["artifacts"]) {
    const fs::path p = dir / a["path"].get<std::string>();
    if (!fs::exists(p)) throw ArtifactError("missing artifact " + p.string());
    if (sha256_file(p) != a["sha256"].get<std::string>())
      throw ArtifactError("hash mismatch for " + p.string());
  }
}

/// Shared bookkeeping of one command invocation.
struct Run {
  std::string command;
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  std::string seed_source = "default";
  std::string started = utc_now();
  Json extra = Json::object();
  Json inputs = Json::object();

  void add_input(const std::string& role, const std::string& path) {
    inputs[role] = {{"path", path}, {"sha256", sha256_file(path)}};
  }

  void finish(const fs::path& out_dir) const {
    Json m;
    m["command"] = command;
    m["args"] = args;
    m["engine_version"] = kEngineVersion;
    m["seed"] = seed;
    m["seed_source"] = seed_source;
    m["inputs"] = inputs;
    for (const auto& [k, v] : extra.items()) m[k] = v;
    m["started"] = started;
    m["finished"] = utc_now();
    m["artifacts"] = artifact_hashes(out_dir);
    text::write_file(out_dir / kManifest, m.dump(2) + "\n");
  }
};

std::uint64_t resolve_seed(std::uint64_t flag, bool flag_given, const CliOptions& options,
                           std::string& source) {
  source = flag_given ? "flag" : "default";
  if (!options.allow_env_seed) return flag;
  const char* env = std::getenv("SAEB_SEED");
  if (env == nullptr || *env == '\0') return flag;
  std::int64_t v = 0;
  if (!text::parse_int(env, v) || v < 0)
    throw ConfigError("SAEB_SEED", "SAEB_SEED must be a non-negative integer, got '" +
                                       std::string(env) + "'");
  source = "env";
  return static_cast<std::uint64_t>(v);
}

// ---------------------------------------------------------------- simulate

template <class T>
T json_value(const Json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(key, "key '" + key + "' has the wrong type");
  }
}

void apply_scenario_json(const Json& cfg, ScenarioConfig& sc) {
  if (!cfg.is_object()) throw ConfigError("config", "scenario config must be a JSON object");
  for (const auto& [key, v] : cfg.items()) {
    if (key == "family") continue;
    if (key == "regions") sc.num_regions = json_value<int>(v, key);
    else if (key == "quarters") sc.num_quarters = json_value<int>(v, key);
    else if (key == "coefficients") sc.coefficients = json_value<std::vector<double>>(v, key);
    else if (key == "employed_coefficients")
      sc.employed_coefficients = json_value<std::vector<double>>(v, key);
    else if (key == "tau_w1") sc.tau_w1 = json_value<double>(v, key);
    else if (key == "tau_w2") sc.tau_w2 = json_value<double>(v, key);
    else if (key == "tau_eps") sc.tau_eps = json_value<double>(v, key);
    else if (key == "tau_u") sc.tau_u = json_value<double>(v, key);
    else if (key == "tau_v") sc.tau_v = json_value<double>(v, key);
    else if (key == "phi") sc.dispersion = json_value<double>(v, key);
    else if (key == "min_sample") sc.min_sample = json_value<double>(v, key);
    else if (key == "max_sample") sc.max_sample = json_value<double>(v, key);
    else if (key == "min_activity") sc.min_activity = json_value<double>(v, key);
    else if (key == "max_activity") sc.max_activity = json_value<double>(v, key);
    else if (key == "heavy_tail_df") sc.heavy_tail_df = json_value<double>(v, key);
    else if (key == "heavy_tail_scale") sc.heavy_tail_scale = json_value<double>(v, key);
    else if (key == "max_attempts") sc.max_attempts = json_value<int>(v, key);
    else if (key == "seed") sc.seed = json_value<std::uint64_t>(v, key);
    else throw ConfigError(key, "unknown scenario key '" + key + "'");
  }
}

struct SimulateArgs {
  std::string family;
  std::uint64_t seed = 1;
  std::optional<int> regions;
  std::optional<int> quarters;
  std::optional<double> phi;
  std::optional<double> heavy_tail_df;
  std::optional<double> heavy_tail_scale;
  std::string adjacency;
  std::string config;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, bool seed_given, const CliOptions& options,
                 std::ostream& out) {
  Run run;
  run.command = "simulate";
  Json cfg = Json::object();
  if (!a.config.empty()) {
    try {
      cfg = Json::parse(text::read_file(a.config));
    } catch (const Json::exception& e) {
      throw ConfigError("config", std::string("unreadable scenario config: ") + e.what());
    }
    if (!cfg.is_object()) throw ConfigError("config", "scenario config must be a JSON object");
  }
  std::string family_name = a.family;
  if (family_name.empty() && cfg.contains("family"))
    family_name = json_value<std::string>(cfg["family"], "family");
  if (family_name.empty()) family_name = "binomial";
  const Family family = parse_family(family_name);
  ScenarioConfig sc = default_scenario(family);
  apply_scenario_json(cfg, sc);
  const bool cfg_seed = cfg.contains("seed");
  run.seed = resolve_seed(seed_given || !cfg_seed ? a.seed : sc.seed, seed_given || cfg_seed,
                          options, run.seed_source);
  sc.seed = run.seed;
  if (a.regions) sc.num_regions = *a.regions;
  if (a.quarters) sc.num_quarters = *a.quarters;
  if (a.phi) sc.dispersion = *a.phi;
  if (a.heavy_tail_df) sc.heavy_tail_df = *a.heavy_tail_df;
  if (a.heavy_tail_scale) sc.heavy_tail_scale = *a.heavy_tail_scale;
  if (!a.adjacency.empty()) sc.graph = load_adjacency(a.adjacency);
  sc.validate();

  const Simulation sim = simulate(sc);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  save_panel(sim.dataset, dir / "panel.csv");
  {
    std::ofstream f(dir / "adjacency.txt", std::ios::binary);
    write_adjacency(sim.graph, f);
  }
  save_truth(sim.truth, dir / "truth.csv");

  run.args = {"simulate", "--family", std::string(to_string(family)), "--seed",
              std::to_string(run.seed), "--regions", std::to_string(sc.num_regions),
              "--quarters", std::to_string(sc.num_quarters), "--out", absolute_path(a.out)};
  if (a.phi) run.args.insert(run.args.end(), {"--phi", fmt(*a.phi)});
  if (a.heavy_tail_df) run.args.insert(run.args.end(), {"--heavy-tail-df", fmt(*a.heavy_tail_df)});
  if (a.heavy_tail_scale)
    run.args.insert(run.args.end(), {"--heavy-tail-scale", fmt(*a.heavy_tail_scale)});
  if (!a.adjacency.empty()) {
    run.args.insert(run.args.end(), {"--adjacency", absolute_path(a.adjacency)});
    run.add_input("adjacency", absolute_path(a.adjacency));
  }
  if (!a.config.empty()) {
    run.args.insert(run.args.end(), {"--config", absolute_path(a.config)});
    run.add_input("config", absolute_path(a.config));
  }
  run.extra["family"] = to_string(family);
  run.extra["regions"] = sc.num_regions;
  run.extra["quarters"] = sc.num_quarters;
  run.extra["attempts"] = sim.truth.attempts;
  run.finish(dir);
  out << "simulated " << to_string(family) << " panel: " << sc.num_regions << " regions x "
      << sc.num_quarters << " quarters -> " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string panel;
  std::string adjacency;
  std::string spec;
  std::string model;
  std::uint64_t seed = 1;
  int chains = 4;
  int iters = 20000;
  int burnin = 5000;
  int thin = 5;
  std::string out;
  bool holdout = false;
  double psrf_threshold = 1.1;
};

void write_interval(std::ostream& os, const Interval& v) {
  os << ',' << fmt(v.mean) << ',' << fmt(v.sd) << ',' << fmt(v.lower) << ',' << fmt(v.upper);
}

void write_cells(const std::vector<CellSummary>& cells, const PanelDataset& dataset,
                 Family family, const fs::path& path) {
  std::ostringstream os;
  os << "region,quarter,target_mean,target_sd,target_lower,target_upper,"
        "rate_mean,rate_sd,rate_lower,rate_upper,total_mean,total_sd,total_lower,total_upper";
  const bool multi = family == Family::Multinomial;
  if (multi) os << ",p_employed,p_unemployed,p_inactive,n_employed,n_unemployed,n_inactive";
  os << '\n';
  for (const auto& c : cells) {
    os << c.region << ',' << c.quarter;
    write_interval(os, c.target);
    write_interval(os, c.rate);
    write_interval(os, c.total);
    if (multi) {
      const auto& obs = dataset.cell(c.region - 1, c.quarter - 1);
      const auto n = apportion_total(obs.sample_size(), c.probabilities);
      os << ',' << fmt(c.probabilities[0]) << ',' << fmt(c.probabilities[1]) << ','
         << fmt(c.probabilities[2]) << ',' << n[0] << ',' << n[1] << ',' << n[2];
    }
    os << '\n';
  }
  text::write_file(path, os.str());
}

void write_parameter_table(const std::vector<ParameterSummary>& rows, const fs::path& path) {
  std::ostringstream os;
  os << "name,mean,sd,q025,q975\n";
  for (const auto& r : rows)
    os << r.name << ',' << fmt(r.mean) << ',' << fmt(r.sd) << ',' << fmt(r.q025) << ','
       << fmt(r.q975) << '\n';
  text::write_file(path, os.str());
}

/// The model whose posterior a fit directory stores: the full panel, or its
/// first T - 1 quarters for a hold-out fit.
Model fit_model(const PanelDataset& panel, const ModelSpec& spec,
                const std::optional<RegionGraph>& graph, bool holdout) {
  if (!holdout) return Model(panel, spec, graph);
  const PanelDataset full = spec.standardize ? standardize_covariates(panel) : panel;
  return Model(full.leading_quarters(panel.num_quarters() - 1), spec, graph);
}

int cmd_fit(const FitArgs& a, bool seed_given, const CliOptions& options, std::ostream& out,
            std::ostream& err) {
  Run run;
  run.command = "fit";
  run.seed = resolve_seed(a.seed, seed_given, options, run.seed_source);
  if (!(a.psrf_threshold > 1.0)) throw ConfigError("psrf-threshold", "threshold must exceed 1");
  MCMCConfig config;
  config.num_chains = a.chains;
  config.iterations = a.iters;
  config.burn_in = a.burnin;
  config.thinning = a.thin;
  config.base_seed = run.seed;
  config.validate();

  ModelSpec spec;
  if (!a.spec.empty()) {
    spec = load_model_spec(a.spec);
    if (!a.model.empty()) spec.family = parse_family(a.model);
  } else {
    spec = default_model_spec(parse_family(a.model.empty() ? "poisson" : a.model));
  }
  spec = resolve(spec);
  const PanelDataset panel = load_panel(a.panel);
  std::optional<RegionGraph> graph;
  if (!a.adjacency.empty()) graph = load_adjacency(a.adjacency);
  if (a.holdout && panel.num_quarters() < 3)
    throw SpecError("hold-out prediction needs at least three quarters");

  const Model model = fit_model(panel, spec, graph, a.holdout);
  PosteriorSamples samples;
  std::vector<CellSummary> predictions;
  if (a.holdout) {
    auto h = predict_holdout(panel, spec, graph, config, panel.num_quarters());
    samples = std::move(h.samples);
    predictions = std::move(h.predictions);
  } else {
    samples = fit(model, config);
  }
  samples.spec_text = spec.canonical_text();

  const fs::path dir = a.out;
  fs::create_directories(dir);
  if (fs::exists(dir / "samples")) fs::remove_all(dir / "samples");
  write_samples(samples, dir / "samples");
  text::write_file(dir / "spec.txt", spec.canonical_text());
  fs::copy_file(a.panel, dir / "panel.csv", fs::copy_options::overwrite_existing);
  if (graph) fs::copy_file(a.adjacency, dir / "adjacency.txt", fs::copy_options::overwrite_existing);
  else if (fs::exists(dir / "adjacency.txt")) fs::remove(dir / "adjacency.txt");

  const FitSummary summary = summarize(samples, model);
  const auto* coef = samples.layout.group("coefficients");
  bool failed = false;
  std::ostringstream os;
  os << "name,mean,sd,q025,q975,psrf,flag\n";
  for (const auto& p : summary.parameters) {
    std::optional<double> r;
    if (samples.num_chains() >= 2 && samples.draws_per_chain() >= 4) r = psrf(samples, p.name);
    const auto idx = samples.layout.index_of(p.name);
    const bool is_coef = idx >= coef->offset && idx < coef->offset + coef->size;
    const bool bad = r && !(*r <= a.psrf_threshold);
    if (bad && is_coef) failed = true;
    os << p.name << ',' << fmt(p.mean) << ',' << fmt(p.sd) << ',' << fmt(p.q025) << ','
       << fmt(p.q975) << ',' << (r ? fmt(*r) : std::string("NA")) << ','
       << (bad ? "psrf" : "") << '\n';
  }
  text::write_file(dir / "summary.csv", os.str());
  if (spec.predictor.include_intercept || !spec.standardize)
    write_parameter_table(summarize_raw_coefficients(samples, model), dir / "summary_raw.csv");
  else if (fs::exists(dir / "summary_raw.csv"))
    fs::remove(dir / "summary_raw.csv");
  write_parameter_table(summary.effects, dir / "effects.csv");
  write_cells(summary.cells, model.dataset(), spec.family, dir / "fitted.csv");
  if (a.holdout) write_cells(predictions, panel, spec.family, dir / "prediction.csv");
  else if (fs::exists(dir / "prediction.csv")) fs::remove(dir / "prediction.csv");

  run.args = {"fit", "--panel", absolute_path(a.panel), "--model",
              std::string(to_string(spec.family)), "--seed", std::to_string(run.seed),
              "--chains", std::to_string(a.chains), "--iters", std::to_string(a.iters),
              "--burnin", std::to_string(a.burnin), "--thin", std::to_string(a.thin),
              "--psrf-threshold", fmt(a.psrf_threshold), "--out", absolute_path(a.out)};
  run.add_input("panel", absolute_path(a.panel));
  if (!a.adjacency.empty()) {
    run.args.insert(run.args.end(), {"--adjacency", absolute_path(a.adjacency)});
    run.add_input("adjacency", absolute_path(a.adjacency));
  }
  if (!a.spec.empty()) {
    run.args.insert(run.args.end(), {"--spec", absolute_path(a.spec)});
    run.add_input("spec", absolute_path(a.spec));
  }
  if (a.holdout) run.args.push_back("--holdout-last-quarter");
  run.extra["family"] = to_string(spec.family);
  run.extra["spec_hash"] = sha256_hex(spec.canonical_text());
  run.extra["holdout"] = a.holdout;
  run.extra["config"] = {{"chains", a.chains}, {"iters", a.iters}, {"burnin", a.burnin},
                         {"thin", a.thin},     {"adaptation_window", config.adaptation_window},
                         {"target_acceptance", config.target_acceptance}};
  run.extra["psrf_threshold"] = a.psrf_threshold;
  run.extra["converged"] = !failed;
  run.finish(dir);
  out << "fitted " << to_string(spec.family) << " model (" << samples.total_draws()
      << " draws) -> " << dir.string() << "\n";
  if (failed) {
    err << "convergence failure: PSRF above " << fmt(a.psrf_threshold)
        << " on a fixed effect (see summary.csv)\n";
    return kExitConvergence;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- loading fits

struct LoadedFit {
  fs::path dir;
  Json manifest;
  std::string label;
  std::optional<PanelDataset> panel;
  std::unique_ptr<Model> model;
};

LoadedFit load_fit(const fs::path& dir) {
  LoadedFit f;
  f.dir = dir;
  f.manifest = read_manifest(dir);
  if (f.manifest.value("command", "") != "fit")
    throw ArtifactError(dir.string() + " is not a fit directory");
  verify_artifacts(dir, f.manifest);
  f.label = f.manifest.value("family", "model");
  const ModelSpec spec = resolve(parse_model_spec(text::read_file(dir / "spec.txt")));
  f.panel = load_panel(dir / "panel.csv");
  std::optional<RegionGraph> graph;
  if (fs::exists(dir / "adjacency.txt")) graph = load_adjacency(dir / "adjacency.txt");
  f.model = std::make_unique<Model>(
      fit_model(*f.panel, spec, graph, f.manifest.value("holdout", false)));
  return f;
}

MCMCConfig manifest_config(const Json& m) {
  MCMCConfig c;
  const auto& j = m.at("config");
  c.num_chains = j.at("chains").get<int>();
  c.iterations = j.at("iters").get<int>();
  c.burn_in = j.at("burnin").get<int>();
  c.thinning = j.at("thin").get<int>();
  c.adaptation_window = j.at("adaptation_window").get<int>();
  c.target_acceptance = j.at("target_acceptance").get<double>();
  c.base_seed = m.at("seed").get<std::uint64_t>();
  return c;
}

void unique_labels(std::vector<LoadedFit>& fits) {
  std::map<std::string, int> seen;
  for (auto& f : fits) {
    const int n = ++seen[f.label];
    if (n > 1) f.label += "#" + std::to_string(n);
  }
}

/// (region, quarter) -> fitted.csv / prediction.csv row of a fit.
struct CellTable {
  std::map<std::pair<int, int>, std::map<std::string, double>> rows;

  void load(const fs::path& path) {
    if (!fs::exists(path)) return;
    const auto t = text::read_csv_file(path);
    for (const auto& r : t.rows) {
      std::map<std::string, double> v;
      for (std::size_t c = 0; c < t.header.size() && c < r.size(); ++c) {
        double x = 0.0;
        if (text::parse_double(r[c], x)) v[t.header[c]] = x;
      }
      rows[{static_cast<int>(v["region"]), static_cast<int>(v["quarter"])}] = std::move(v);
    }
  }
  const std::map<std::string, double>* find(int region, int quarter) const {
    const auto it = rows.find({region, quarter});
    return it == rows.end() ? nullptr : &it->second;
  }
};

// ---------------------------------------------------------------- diagnose

struct DiagnoseArgs {
  std::vector<std::string> fits;
  std::string out;
  bool multinomial_cpo_unavailable = false;
  bool randomized_pit = false;
  std::uint64_t pit_seed = 1;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  if (a.fits.empty()) throw ConfigError("fit", "at least one fit directory is required");
  Run run;
  run.command = "diagnose";
  run.seed = a.pit_seed;
  run.seed_source = "flag";
  std::vector<LoadedFit> fits;
  for (const auto& d : a.fits) fits.push_back(load_fit(d));
  unique_labels(fits);

  std::vector<ModelReportRow> summary;
  std::ostringstream obs_csv, region_csv;
  obs_csv << "model,region,quarter,cpo,log_cpo,pit,relative_error,flagged\n";
  region_csv << "method,region,quarter,rate,rate_lower,rate_upper,total,total_lower,"
                "total_upper,rrmse\n";
  for (auto& f : fits) {
    const Model& model = *f.model;
    const PosteriorSamples samples =
        read_samples(f.dir / "samples", model, manifest_config(f.manifest));
    ModelReportRow row;
    row.model = f.label;
    row.dic = dic(samples, model);
    const bool available =
        !(a.multinomial_cpo_unavailable && model.family() == Family::Multinomial);
    ObservationOptions opt;
    opt.randomized_pit = a.randomized_pit;
    opt.pit_seed = a.pit_seed;
    const auto obs = observation_diagnostics(samples, model, opt);
    if (available) row.log_score = log_score_from_log(count_scale_log_cpo(model, obs.log_cpo)).value;
    summary.push_back(row);
    std::ostringstream one;
    write_observation_report(model, obs, available, one);
    std::istringstream lines(one.str());
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) obs_csv << f.label << ',' << line << '\n';

    CellTable cells;
    cells.load(f.dir / "fitted.csv");
    for (const auto& c : model.dataset().cells()) {
      const auto* v = cells.find(c.region, c.quarter);
      if (v == nullptr) continue;
      region_csv << f.label << ',' << c.region << ',' << c.quarter << ','
                 << fmt(v->at("rate_mean")) << ',' << fmt(v->at("rate_lower")) << ','
                 << fmt(v->at("rate_upper")) << ',' << fmt(v->at("total_mean")) << ','
                 << fmt(v->at("total_lower")) << ',' << fmt(v->at("total_upper")) << ','
                 << fmt(relative_sd(v->at("rate_mean"), v->at("rate_sd"))) << '\n';
    }
  }
  for (const auto& e : direct_estimate(*fits.front().panel)) {
    const double half = 1.959963984540054 * std::sqrt(e.variance);
    const double m = e.missing || e.rate <= 0.0 ? std::nan("") : e.total / e.rate;
    region_csv << "direct," << e.region << ',' << e.quarter << ',' << fmt(e.rate) << ','
               << fmt(e.rate - half) << ',' << fmt(e.rate + half) << ',' << fmt(e.total) << ','
               << fmt((e.rate - half) * m) << ',' << fmt((e.rate + half) * m) << ','
               << fmt(e.rrmse) << '\n';
  }

  const fs::path dir = a.out;
  fs::create_directories(dir);
  std::ostringstream sum_csv;
  write_summary_report(summary, sum_csv);
  text::write_file(dir / "summary.csv", sum_csv.str());
  text::write_file(dir / "observations.csv", obs_csv.str());
  text::write_file(dir / "regions.csv", region_csv.str());

  run.args = {"diagnose", "--out", absolute_path(a.out), "--pit-seed", std::to_string(a.pit_seed)};
  for (std::size_t i = 0; i < fits.size(); ++i) {
    run.args.insert(run.args.end(), {"--fit", absolute_path(a.fits[i])});
    run.inputs["fit" + std::to_string(i)] = {
        {"path", absolute_path(a.fits[i])},
        {"manifest_sha256", sha256_file(fits[i].dir / kManifest)}};
  }
  if (a.multinomial_cpo_unavailable) run.args.push_back("--multinomial-cpo-unavailable");
  if (a.randomized_pit) run.args.push_back("--randomized-pit");
  run.finish(dir);
  out << "diagnosed " << fits.size() << " model(s) -> " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- compare

struct CompareArgs {
  std::vector<std::string> fits;
  std::string panel;
  std::string truth;
  int quarter = 0;
  std::string out;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  if (a.fits.empty()) throw ConfigError("fit", "at least one fit directory is required");
  Run run;
  run.command = "compare";
  struct Source {
    std::string label;
    CellTable cells;
  };
  std::vector<LoadedFit> fits;
  for (const auto& d : a.fits) {
    LoadedFit f;
    f.dir = d;
    f.manifest = read_manifest(d);
    if (f.manifest.value("command", "") != "fit")
      throw ArtifactError(std::string(d) + " is not a fit directory");
    verify_artifacts(d, f.manifest);
    f.label = f.manifest.value("family", "model");
    fits.push_back(std::move(f));
  }
  unique_labels(fits);
  std::vector<Source> sources;
  for (const auto& f : fits) {
    Source s{f.label, {}};
    s.cells.load(f.dir / "fitted.csv");
    s.cells.load(f.dir / "prediction.csv");
    sources.push_back(std::move(s));
  }
  const std::string panel_path =
      a.panel.empty() ? (fits.front().dir / "panel.csv").string() : a.panel;
  const PanelDataset panel = load_panel(panel_path);
  const int J = panel.num_regions();
  const int T = panel.num_quarters();
  const int quarter = a.quarter == 0 ? T : a.quarter;
  if (quarter < 1 || quarter > T)
    throw ConfigError("quarter", "quarter must lie in [1, " + std::to_string(T) + "]");
  std::vector<double> truth;
  if (!a.truth.empty()) truth = load_truth_rates(a.truth, J, T);
  const auto direct = direct_estimate(panel);

  std::ostringstream os;
  os << "region,method,quarter,sample_size,rate,rate_lower,rate_upper,total,total_lower,"
        "total_upper,truth,rrmse\n";
  for (int j = 1; j <= J; ++j) {
    const auto& obs = panel.cell(j - 1, quarter - 1);
    const double t = truth.empty()
                         ? std::nan("")
                         : truth[static_cast<std::size_t>(panel.cell_index(j - 1, quarter - 1))];
    auto series_rrmse = [&](auto&& estimate_at) {
      std::vector<double> e, tr;
      for (int q = 1; q <= T; ++q) {
        e.push_back(estimate_at(q));
        tr.push_back(truth[static_cast<std::size_t>(panel.cell_index(j - 1, q - 1))]);
      }
      return relative_rmse(e, tr);
    };
    for (const auto& s : sources) {
      const auto* v = s.cells.find(j, quarter);
      if (v == nullptr)
        throw ArtifactError("fit '" + s.label + "' has no estimate for region " +
                            std::to_string(j) + ", quarter " + std::to_string(quarter));
      double rrmse = relative_sd(v->at("rate_mean"), v->at("rate_sd"));
      if (!truth.empty())
        rrmse = series_rrmse([&](int q) {
          const auto* w = s.cells.find(j, q);
          return w ? w->at("rate_mean") : std::nan("");
        });
      os << j << ',' << s.label << ',' << quarter << ',' << obs.sample_size() << ','
         << fmt(v->at("rate_mean")) << ',' << fmt(v->at("rate_lower")) << ','
         << fmt(v->at("rate_upper")) << ',' << fmt(v->at("total_mean")) << ','
         << fmt(v->at("total_lower")) << ',' << fmt(v->at("total_upper")) << ',' << fmt(t)
         << ',' << fmt(rrmse) << '\n';
    }
    const auto& e = direct[static_cast<std::size_t>(panel.cell_index(j - 1, quarter - 1))];
    const double half = 1.959963984540054 * std::sqrt(e.variance);
    const double m = e.missing || e.rate <= 0.0 ? std::nan("") : e.total / e.rate;
    double rrmse = e.rrmse;
    if (!truth.empty())
      rrmse = series_rrmse([&](int q) {
        return direct[static_cast<std::size_t>(panel.cell_index(j - 1, q - 1))].rate;
      });
    os << j << ",direct," << quarter << ',' << obs.sample_size() << ',' << fmt(e.rate) << ','
       << fmt(e.rate - half) << ',' << fmt(e.rate + half) << ',' << fmt(e.total) << ','
       << fmt((e.rate - half) * m) << ',' << fmt((e.rate + half) * m) << ',' << fmt(t) << ','
       << fmt(rrmse) << '\n';
  }
  const fs::path dir = a.out;
  fs::create_directories(dir);
  text::write_file(dir / "comparison.csv", os.str());

  run.args = {"compare", "--out", absolute_path(a.out), "--quarter", std::to_string(quarter),
              "--panel", absolute_path(panel_path)};
  run.add_input("panel", absolute_path(panel_path));
  if (!a.truth.empty()) {
    run.args.insert(run.args.end(), {"--truth", absolute_path(a.truth)});
    run.add_input("truth", absolute_path(a.truth));
  }
  for (std::size_t i = 0; i < fits.size(); ++i) {
    run.args.insert(run.args.end(), {"--fit", absolute_path(a.fits[i])});
    run.inputs["fit" + std::to_string(i)] = {
        {"path", absolute_path(a.fits[i])},
        {"manifest_sha256", sha256_file(fits[i].dir / kManifest)}};
  }
  run.finish(dir);
  out << "compared " << fits.size() << " model(s) with the direct estimator -> "
      << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- replay

int cmd_replay(const std::string& source, const std::string& out_dir, std::ostream& out,
               std::ostream& err) {
  const fs::path src = fs::is_directory(source) ? fs::path(source) : fs::path(source).parent_path();
  const Json manifest = read_manifest(src);
  auto args = manifest.at("args").get<std::vector<std::string>>();
  const auto it = std::find(args.begin(), args.end(), "--out");
  if (it == args.end() || it + 1 == args.end()) throw ArtifactError("manifest has no --out");
  const std::string target = out_dir.empty() ? *(it + 1) + "-replay" : out_dir;
  if (absolute_path(target) == absolute_path(src.string()))
    throw ConfigError("out", "replay output must differ from the recorded directory");
  *(it + 1) = target;
  std::ostringstream quiet;
  CliOptions opts;
  opts.allow_env_seed = false;
  const int code = run_cli(args, quiet, err, opts);
  if (code != kExitOk && code != kExitConvergence) return code;
  const Json replayed = read_manifest(target);
  std::map<std::string, std::string> want, got;
  for (const auto& a : manifest["artifacts"]) want[a["path"]] = a["sha256"];
  for (const auto& a : replayed["artifacts"]) got[a["path"]] = a["sha256"];
  std::size_t bad = 0;
  for (const auto& [path, hash] : want) {
    const auto g = got.find(path);
    if (g == got.end()) {
      err << "missing in replay: " << path << "\n";
      ++bad;
    } else if (g->second != hash) {
      err << "differs: " << path << "\n";
      ++bad;
    }
  }
  for (const auto& [path, hash] : got)
    if (!want.count(path)) {
      err << "extra in replay: " << path << "\n";
      ++bad;
    }
  if (bad) {
    err << "replay mismatch: " << bad << " artifact(s)\n";
    return kExitFailure;
  }
  out << "replay identical: " << want.size() << " artifacts -> " << target << "\n";
  return kExitOk;
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  EVP_Digest(data.data(), data.size(), md, &n, EVP_sha256(), nullptr);
  return to_hex(md, n);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &n);
  return to_hex(md, n);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliOptions& options) {
  CLI::App app{"Small-area unemployment estimation: simulate, fit, diagnose, compare"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a synthetic labour-force panel");
  s->add_option("--family", sim.family, "poisson, negbin, binomial, beta, multinomial, gaussian");
  auto* sim_seed = s->add_option("--seed", sim.seed, "Random seed");
  s->add_option("--regions", sim.regions, "Number of regions");
  s->add_option("--quarters", sim.quarters, "Number of quarters");
  s->add_option("--phi", sim.phi, "Dispersion (negbin, beta)");
  s->add_option("--heavy-tail-df", sim.heavy_tail_df, "Student-t cell noise degrees of freedom");
  s->add_option("--heavy-tail-scale", sim.heavy_tail_scale, "Student-t cell noise scale");
  s->add_option("--adjacency", sim.adjacency, "Region adjacency file");
  s->add_option("--config", sim.config, "Scenario config (JSON)");
  s->add_option("--out", sim.out, "Output directory")->required();

  FitArgs fa;
  auto* f = app.add_subcommand("fit", "Fit a model by MCMC");
  f->add_option("--panel", fa.panel, "Panel CSV")->required();
  f->add_option("--adjacency", fa.adjacency, "Region adjacency file");
  f->add_option("--spec", fa.spec, "Model spec file");
  f->add_option("--model", fa.model, "Likelihood family");
  auto* fit_seed = f->add_option("--seed", fa.seed, "Base seed");
  f->add_option("--chains", fa.chains, "Number of chains");
  f->add_option("--iters", fa.iters, "Iterations per chain");
  f->add_option("--burnin", fa.burnin, "Burn-in iterations");
  f->add_option("--thin", fa.thin, "Thinning interval");
  f->add_option("--out", fa.out, "Output directory")->required();
  f->add_flag("--holdout-last-quarter", fa.holdout, "Fit T-1 quarters and predict quarter T");
  f->add_option("--psrf-threshold", fa.psrf_threshold, "Largest acceptable PSRF");

  DiagnoseArgs da;
  auto* d = app.add_subcommand("diagnose", "DIC, CPO, PIT and log score of fitted models");
  d->add_option("--fit", da.fits, "Fit directory (repeatable)");
  d->add_option("--out", da.out, "Output directory")->required();
  d->add_flag("--multinomial-cpo-unavailable", da.multinomial_cpo_unavailable,
              "Report multinomial CPO and log score as unavailable");
  d->add_flag("--randomized-pit", da.randomized_pit, "Randomized PIT for discrete families");
  d->add_option("--pit-seed", da.pit_seed, "Seed of the randomized PIT");

  CompareArgs ca;
  auto* c = app.add_subcommand("compare", "Model estimates against direct estimates and truth");
  c->add_option("--fit", ca.fits, "Fit directory (repeatable)");
  c->add_option("--panel", ca.panel, "Panel CSV (default: the first fit's copy)");
  c->add_option("--truth", ca.truth, "Truth CSV from simulate");
  c->add_option("--quarter", ca.quarter, "Quarter to report (default: last)");
  c->add_option("--out", ca.out, "Output directory")->required();

  std::string replay_source, replay_out;
  auto* r = app.add_subcommand("replay", "Re-run a command from its manifest and compare outputs");
  r->add_option("--manifest", replay_source, "Manifest file or its directory")->required();
  r->add_option("--out", replay_out, "Output directory (default: <recorded out>-replay)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim, sim_seed->count() > 0, options, out);
    if (f->parsed()) return cmd_fit(fa, fit_seed->count() > 0, options, out, err);
    if (d->parsed()) return cmd_diagnose(da, out);
    if (c->parsed()) return cmd_compare(ca, out);
    if (r->parsed()) return cmd_replay(replay_source, replay_out, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.key() << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const DiagnosticsError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const NonFiniteStart& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace saeb
