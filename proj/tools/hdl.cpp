// hdl: simulate, train, rollout, evaluate and distill from the command line.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hdl/checkpoint.hpp"
#include "hdl/core_io.hpp"
#include "hdl/dynamics.hpp"
#include "hdl/evaluation.hpp"
#include "hdl/ground_truth.hpp"
#include "hdl/hgnn.hpp"
#include "hdl/symreg.hpp"
#include "hdl/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

// Raised for bad flags, unknown config keys and unusable paths.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string stem_path(const std::string& out) {
  fs::path p(out);
  return (p.parent_path() / p.stem()).string();
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

void require_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw UsageError("output directory '" + parent.string() + "' does not exist");
}

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw hdl::FormatError("cannot open '" + path + "' for writing");
  os << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw hdl::FormatError("cannot open '" + path + "'");
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::exception& e) {
    throw hdl::FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_manifest(const std::string& path, const std::string& command, const json& config, std::uint64_t seed,
                    int workers) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["workers"] = workers;
  m["versions"] = {{"hdl", kVersion}, {"compiler", __VERSION__}, {"cxx", static_cast<long>(__cplusplus)}};
  write_json(path, m);
}

// Hybrid n splits into ceil(n/2) pendulum bobs and the remaining springs.
hdl::SystemSpec build_spec(const std::string& kind, int n) {
  const hdl::SystemKind k = hdl::parse_kind(kind);
  if (k == hdl::SystemKind::Hybrid) {
    if (n < 2) throw hdl::DomainError("hybrid needs at least 2 particles");
    const int np = (n + 1) / 2;
    return hdl::make_hybrid(np, n - np);
  }
  return hdl::make_spec(k, n);
}

// --------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string system;
  int n = 0;
  std::uint64_t seed = 0;
  long steps = 0;
  int stride = 1;
  std::string out;
  double dt = 0.0;
  int trajectories = 1;
  bool no_successors = false;
  long equilibrate = 0;
};

json simulate_config(const SimulateArgs& a) {
  return {{"system", a.system}, {"n", a.n},           {"seed", a.seed},
          {"steps", a.steps},   {"stride", a.stride}, {"out", a.out},
          {"dt", a.dt},         {"trajectories", a.trajectories},
          {"successors", !a.no_successors},           {"equilibrate", a.equilibrate}};
}

int run_simulate(const SimulateArgs& a) {
  require_parent(a.out);
  if (a.trajectories < 1) throw UsageError("--trajectories must be at least 1");
  const hdl::SystemSpec spec = build_spec(a.system, a.n);
  const hdl::AnalyticSystem sys(spec);
  const double dt = a.dt > 0.0 ? a.dt : hdl::default_dt(spec.kind);
  for (int k = 0; k < a.trajectories; ++k) {
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(k);
    std::string base = stem_path(a.out);
    if (a.trajectories > 1) {
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "-%03d", k);
      base += suffix;
    }
    hdl::PhaseState init = hdl::sample_initial(spec, seed);
    if (a.equilibrate > 0) init = hdl::equilibrate_lj(spec, init, a.equilibrate);
    const hdl::Trajectory traj = hdl::generate_trajectory(sys, init, dt, a.steps, a.stride, !a.no_successors);
    hdl::write_frames_csv(base + ".csv", spec, traj.frames);
    if (!a.no_successors) hdl::write_frames_csv(base + ".next.csv", spec, traj.successors);
    write_json(base + ".json", {{"spec", hdl::to_json(spec)},
                                {"dt", dt},
                                {"stride", a.stride},
                                {"steps", a.steps},
                                {"seed", seed},
                                {"successors", !a.no_successors}});
  }
  write_manifest(stem_path(a.out) + ".manifest.json", "simulate", simulate_config(a), a.seed, 1);
  return 0;
}

// --------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string system;
  std::string data;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct TrainFileConfig {
  hdl::TrainConfig train;
  hdl::HyperParams hp;
  int pairs_per_trajectory = 20;
};

TrainFileConfig parse_train_config(const json& j, hdl::SystemKind kind) {
  static const std::set<std::string> known = {"lr",          "batch",       "max_epochs", "window",
                                              "min_decrease", "divergence", "beta1",      "beta2",
                                              "eps",          "time_budget_s", "pairs_per_trajectory",
                                              "embed",        "hidden",     "depth",      "layers"};
  if (!j.is_object()) throw UsageError("training config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw UsageError("unknown training config key '" + it.key() + "'");
  TrainFileConfig c;
  c.hp.layers = hdl::default_layers(kind);
  try {
    hdl::TrainConfig& t = c.train;
    t.lr = j.value("lr", t.lr);
    t.batch = j.value("batch", t.batch);
    t.max_epochs = j.value("max_epochs", t.max_epochs);
    t.window = j.value("window", t.window);
    t.min_decrease = j.value("min_decrease", t.min_decrease);
    t.divergence = j.value("divergence", t.divergence);
    t.beta1 = j.value("beta1", t.beta1);
    t.beta2 = j.value("beta2", t.beta2);
    t.eps = j.value("eps", t.eps);
    t.time_budget_s = j.value("time_budget_s", t.time_budget_s);
    c.pairs_per_trajectory = j.value("pairs_per_trajectory", c.pairs_per_trajectory);
    c.hp.embed = j.value("embed", c.hp.embed);
    c.hp.hidden = j.value("hidden", c.hp.hidden);
    c.hp.depth = j.value("depth", c.hp.depth);
    c.hp.layers = j.value("layers", c.hp.layers);
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad training config value: ") + e.what());
  }
  return c;
}

std::vector<hdl::Trajectory> load_trajectories(const std::string& dir, hdl::SystemKind kind) {
  std::vector<fs::path> sidecars;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (p.extension() != ".json") continue;
    const std::string name = p.filename().string();
    if (name.find(".manifest.") != std::string::npos || name == "manifest.json") continue;
    sidecars.push_back(p);
  }
  std::sort(sidecars.begin(), sidecars.end());
  std::vector<hdl::Trajectory> out;
  for (const fs::path& side : sidecars) {
    const json j = read_json(side.string());
    if (!j.contains("spec")) continue;
    hdl::Trajectory t;
    t.spec = hdl::spec_from_json(j.at("spec"));
    if (t.spec.kind != kind)
      throw hdl::DomainError("'" + side.string() + "' holds a " + hdl::to_string(t.spec.kind) + " trajectory");
    t.dt = j.at("dt").get<double>();
    t.stride = j.at("stride").get<int>();
    const std::string base = (side.parent_path() / side.stem()).string();
    t.frames = hdl::read_frames_csv(base + ".csv", t.spec);
    if (fs::exists(base + ".next.csv")) t.successors = hdl::read_frames_csv(base + ".next.csv", t.spec);
    out.push_back(std::move(t));
  }
  if (out.empty()) throw hdl::DomainError("no trajectories found in '" + dir + "'");
  return out;
}

int run_train(const TrainArgs& a) {
  if (!fs::is_directory(a.data)) throw UsageError("data directory '" + a.data + "' does not exist");
  require_file(a.config, "config");
  require_parent(a.out);
  const hdl::SystemKind kind = hdl::parse_kind(a.system);
  if (kind == hdl::SystemKind::Hybrid) throw hdl::DomainError("train each hybrid part on its own system");
  const json cj = read_json(a.config);
  TrainFileConfig tc = parse_train_config(cj, kind);
  tc.train.seed = a.seed;
  tc.train.workers = a.workers;
  const auto trajs = load_trajectories(a.data, kind);
  const hdl::Dataset ds = hdl::build_dataset(trajs, tc.pairs_per_trajectory, a.seed);
  tc.hp.dim = ds.spec.dim;
  const hdl::ModelParams init = hdl::init_params(tc.hp, a.seed);
  const hdl::TrainResult res = hdl::train(init, ds, tc.train);

  hdl::Checkpoint ck;
  ck.params = res.params;
  ck.meta.system = hdl::to_string(kind);
  ck.meta.n = ds.spec.n;
  ck.meta.dt = ds.dt;
  ck.meta.has_ranges = true;
  ck.meta.ranges = hdl::observed_ranges(ds);
  ck.meta.best_epoch = res.best_epoch;
  ck.meta.best_validation = res.best_validation;
  ck.meta.stop_reason = res.stop_reason;
  ck.meta.extra = {{"train_pairs", ds.train.size()}, {"validation_pairs", ds.validation.size()}};
  hdl::save_checkpoint(a.out, ck);

  const fs::path dir = fs::path(a.out).parent_path();
  std::ofstream ls((dir / "losses.csv").string());
  if (!ls) throw hdl::FormatError("cannot write losses.csv");
  ls << "epoch,train,val\n";
  for (const auto& e : res.history)
    ls << e.epoch << ',' << hdl::format_double(e.train) << ',' << hdl::format_double(e.validation) << '\n';
  json cfg = {{"system", a.system}, {"data", a.data}, {"config", cj}, {"out", a.out}};
  write_manifest(stem_path(a.out) + ".manifest.json", "train", cfg, a.seed,
                 hdl::detail::resolve_workers(a.workers));
  return 0;
}

// --------------------------------------------------------------------------
// Model loading shared by rollout and evaluate.

std::vector<hdl::Checkpoint> load_checkpoints(const std::vector<std::string>& paths) {
  std::vector<hdl::Checkpoint> out;
  for (const std::string& p : paths) {
    require_file(p, "checkpoint");
    out.push_back(hdl::load_checkpoint(p));
  }
  return out;
}

void check_checkpoint_count(const hdl::SystemSpec& spec, std::size_t count) {
  const std::size_t want = spec.kind == hdl::SystemKind::Hybrid ? spec.parts.size() : 1;
  if (count != want)
    throw UsageError("system needs " + std::to_string(want) + " checkpoint(s), got " + std::to_string(count));
}

template <class Fn>
auto with_field(const hdl::SystemSpec& spec, const std::vector<hdl::Checkpoint>& cks, Fn&& fn) {
  check_checkpoint_count(spec, cks.size());
  if (spec.kind == hdl::SystemKind::Hybrid) {
    std::vector<hdl::HgnnNet<double>> nets;
    for (std::size_t k = 0; k < cks.size(); ++k) {
      if (cks[k].meta.system != hdl::to_string(spec.parts[k].kind))
        throw hdl::DomainError("checkpoint " + std::to_string(k) + " was trained on " + cks[k].meta.system +
                               ", hybrid part is " + hdl::to_string(spec.parts[k].kind));
      nets.push_back(hdl::HgnnNet<double>::from(cks[k].params));
    }
    return fn(hdl::compose_hybrid(nets, spec));
  }
  if (cks[0].meta.system != hdl::to_string(spec.kind))
    throw hdl::DomainError("checkpoint was trained on " + cks[0].meta.system + ", not " + hdl::to_string(spec.kind));
  return fn(hdl::HamiltonianField<hdl::HgnnModel<double>>(
      hdl::HgnnModel<double>(hdl::HgnnNet<double>::from(cks[0].params), spec)));
}

// --------------------------------------------------------------------------
// rollout

struct RolloutArgs {
  std::vector<std::string> checkpoints;
  std::string system;
  int n = 0;
  std::uint64_t seed = 0;
  long steps = 0;
  int stride = 1;
  double dt = 0.0;
  std::string out;
};

int run_rollout(const RolloutArgs& a) {
  require_parent(a.out);
  const auto cks = load_checkpoints(a.checkpoints);
  const hdl::SystemSpec spec = build_spec(a.system, a.n);
  const double dt = a.dt > 0.0 ? a.dt : hdl::default_dt(spec.kind);
  const hdl::PhaseState init = hdl::sample_initial(spec, a.seed);
  const hdl::ConstraintSet cs = hdl::constraints_for(spec);
  const hdl::Trajectory traj =
      with_field(spec, cks, [&](const auto& field) { return hdl::rollout(field, cs, spec, init, dt, a.steps, a.stride); });
  hdl::write_frames_csv(stem_path(a.out) + ".csv", spec, traj.frames);
  write_json(stem_path(a.out) + ".json",
             {{"spec", hdl::to_json(spec)}, {"dt", dt}, {"stride", a.stride}, {"steps", a.steps}, {"seed", a.seed}});
  json cfg = {{"checkpoints", a.checkpoints}, {"system", a.system}, {"n", a.n},  {"steps", a.steps},
              {"stride", a.stride},           {"dt", dt},             {"out", a.out}};
  write_manifest(stem_path(a.out) + ".manifest.json", "rollout", cfg, a.seed, 1);
  return 0;
}

// --------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::vector<std::string> checkpoints;
  std::string system;
  int n = 0;
  long steps = 1000;
  int seeds = 10;
  std::uint64_t seed = 0;
  int stride = 1;
  double dt = 0.0;
  int workers = 1;
  std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
  if (a.seeds < 1) throw UsageError("--seeds must be at least 1");
  const auto cks = load_checkpoints(a.checkpoints);
  fs::create_directories(a.out);
  const hdl::SystemSpec spec = build_spec(a.system, a.n);
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < a.seeds; ++k) seeds.push_back(a.seed + static_cast<std::uint64_t>(k));
  hdl::TransferOptions opt;
  opt.steps = a.steps;
  opt.stride = a.stride;
  opt.dt = a.dt;
  opt.workers = hdl::detail::resolve_workers(a.workers);
  opt.keep_rollouts = true;
  const hdl::AnalyticSystem sys(spec);
  const auto rep = with_field(spec, cks, [&](const auto& field) {
    auto report = hdl::transfer_harness([&](const hdl::SystemSpec&) { return field; }, spec, seeds, opt);
    std::ofstream sc((fs::path(a.out) / "scatter.csv").string());
    if (!sc) throw hdl::FormatError("cannot write scatter.csv");
    sc << "seed,frame,quantity,component,true,predicted\n";
    for (const auto& s : report.seeds) {
      const hdl::MetricSeries m = hdl::compare_quantities(field, sys, s.rollout.reference);
      for (std::size_t f = 0; f < m.times.size(); ++f) {
        const std::string pre = std::to_string(s.seed) + ',' + std::to_string(f) + ',';
        sc << pre << "T,0," << hdl::format_double(m.T_true[f]) << ',' << hdl::format_double(m.T_pred[f]) << '\n';
        sc << pre << "V,0," << hdl::format_double(m.V_true[f]) << ',' << hdl::format_double(m.V_pred[f]) << '\n';
        for (std::size_t c = 0; c < m.force_true[f].size(); ++c)
          sc << pre << "force," << c << ',' << hdl::format_double(m.force_true[f][c]) << ','
             << hdl::format_double(m.force_pred[f][c]) << '\n';
      }
    }
    return report;
  });
  std::ofstream mc((fs::path(a.out) / "metrics.csv").string());
  if (!mc) throw hdl::FormatError("cannot write metrics.csv");
  mc << "seed,t,EE,ME\n";
  json per_seed = json::array();
  for (const auto& s : rep.seeds) {
    for (std::size_t f = 0; f < s.rollout.times.size(); ++f)
      mc << s.seed << ',' << hdl::format_double(s.rollout.times[f]) << ',' << hdl::format_double(s.rollout.EE[f])
         << ',' << hdl::format_double(s.rollout.ME[f]) << '\n';
    per_seed.push_back({{"seed", s.seed},
                        {"ee_median", s.ee_median},
                        {"me_median", s.me_median},
                        {"force_mse", s.force_mse},
                        {"max_rod_violation", s.max_rod_violation}});
  }
  write_json((fs::path(a.out) / "summary.json").string(), {{"ee_median", rep.ee_median},
                                                            {"me_median", rep.me_median},
                                                            {"force_mse_median", rep.force_mse_median},
                                                            {"max_rod_violation", rep.max_rod_violation},
                                                            {"seeds", per_seed}});
  json cfg = {{"checkpoints", a.checkpoints}, {"system", a.system}, {"n", a.n},   {"steps", a.steps},
              {"seeds", a.seeds},             {"stride", a.stride}, {"dt", a.dt}, {"out", a.out}};
  write_manifest((fs::path(a.out) / "manifest.json").string(), "evaluate", cfg, a.seed, opt.workers);
  return 0;
}

// --------------------------------------------------------------------------
// distill

struct DistillArgs {
  std::string checkpoint;
  std::string analytic;
  std::string head;
  std::string powers;
  std::string domain;
  std::string out;
  int count = 500;
  std::uint64_t seed = 0;
  int population = 512;
  int generations = 200;
  int workers = 1;
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("bad integer '" + tok + "' in list");
    }
  }
  return out;
}

std::pair<double, double> parse_domain(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw UsageError("--domain expects lo,hi");
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw UsageError("--domain expects two numbers");
  }
}

// Observed input range of a head, narrowed 5% on each side.
std::pair<double, double> observed_range(const hdl::CheckpointMeta& m, const hdl::sr::HeadSpec& h) {
  if (!m.has_ranges) throw hdl::DomainError("checkpoint carries no observed data ranges");
  const hdl::DataRanges& r = m.ranges;
  switch (h.kind) {
    case hdl::sr::HeadKind::Kinetic: return {r.speed_min, r.speed_max};
    case hdl::sr::HeadKind::Node: return {r.coord_min.back(), r.coord_max.back()};
    case hdl::sr::HeadKind::Edge: {
      const int a = std::min(h.ta, h.tb), b = std::max(h.ta, h.tb);
      if (!r.has_dist[a][b]) throw hdl::DomainError("no observed distances for species pair " + hdl::sr::head_name(h));
      return {r.dist_min[a][b], r.dist_max[a][b]};
    }
  }
  throw hdl::DomainError("unknown head");
}

int run_distill(const DistillArgs& a) {
  if (a.checkpoint.empty() == a.analytic.empty()) throw UsageError("give exactly one of --checkpoint or --analytic");
  require_parent(a.out);
  if (!a.checkpoint.empty()) require_file(a.checkpoint, "checkpoint");
  const hdl::sr::HeadSpec head = hdl::sr::parse_head(a.head);
  hdl::sr::GpConfig cfg;
  cfg.seed = a.seed;
  cfg.population = a.population;
  cfg.generations = a.generations;
  cfg.workers = hdl::detail::resolve_workers(a.workers);

  hdl::sr::SampleSet samples;
  std::optional<hdl::HgnnNet<double>> net;
  if (!a.analytic.empty()) {
    const hdl::SystemKind kind = hdl::parse_kind(a.analytic);
    if (a.domain.empty()) throw UsageError("--analytic requires --domain");
    const auto [lo, hi] = parse_domain(a.domain);
    cfg.powers = a.powers.empty() ? std::vector<int>{2, 3} : parse_int_list(a.powers);
    const auto grid = kind == hdl::SystemKind::BinaryLJ && head.kind == hdl::sr::HeadKind::Edge
                          ? hdl::sr::GridKind::DenseLow
                          : hdl::sr::GridKind::Uniform;
    samples = hdl::sr::sample_head(hdl::sr::analytic_head(kind, head), head, lo, hi, a.count, grid);
  } else {
    const hdl::Checkpoint ck = hdl::load_checkpoint(a.checkpoint);
    const hdl::SystemKind kind = hdl::parse_kind(ck.meta.system);
    net.emplace(hdl::HgnnNet<double>::from(ck.params));
    const auto observed = observed_range(ck.meta, head);
    std::pair<double, double> dom;
    if (a.domain.empty()) {
      const double w = observed.second - observed.first;
      dom = {observed.first + 0.05 * w, observed.second - 0.05 * w};
    } else {
      dom = parse_domain(a.domain);
    }
    const bool lj = kind == hdl::SystemKind::BinaryLJ;
    cfg.powers = !a.powers.empty() ? parse_int_list(a.powers)
                 : (lj && head.kind == hdl::sr::HeadKind::Edge) ? std::vector<int>{-12, -6}
                                                                 : std::vector<int>{2, 3};
    std::vector<double> base;
    if (head.kind == hdl::sr::HeadKind::Node) {
      for (std::size_t k = 0; k < ck.meta.ranges.coord_min.size(); ++k)
        base.push_back(0.5 * (ck.meta.ranges.coord_min[k] + ck.meta.ranges.coord_max[k]));
    }
    const auto grid = lj && head.kind == hdl::sr::HeadKind::Edge ? hdl::sr::GridKind::DenseLow
                                                                  : hdl::sr::GridKind::Uniform;
    samples = hdl::sr::sample_head(hdl::sr::head_function(*net, head, base), head, dom.first, dom.second, a.count,
                                   grid, observed);
  }
  const hdl::sr::DistillReport rep = hdl::sr::distill(samples, cfg);
  write_json(a.out, hdl::sr::report_to_json(rep));
  json c = {{"checkpoint", a.checkpoint}, {"analytic", a.analytic},   {"head", a.head},
            {"powers", cfg.powers},       {"domain", {samples.lo, samples.hi}},
            {"count", a.count},           {"population", a.population}, {"generations", a.generations},
            {"out", a.out}};
  write_manifest(stem_path(a.out) + ".manifest.json", "distill", c, a.seed, cfg.workers);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hamiltonian graph networks: simulate, train, rollout, evaluate, distill"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate ground-truth trajectories");
  s->add_option("--system", sim.system, "pendulum|spring|gravitational|lj|hybrid")->required();
  s->add_option("--n", sim.n, "Particle count")->required();
  s->add_option("--seed", sim.seed, "Random seed")->required();
  s->add_option("--steps", sim.steps, "Integrator steps")->required();
  s->add_option("--stride", sim.stride, "Record every k-th step")->required();
  s->add_option("--out", sim.out, "Output CSV path")->required();
  s->add_option("--dt", sim.dt, "Time step (default per system)");
  s->add_option("--trajectories", sim.trajectories, "Number of trajectories (seeds seed..seed+K-1)");
  s->add_flag("--no-successors", sim.no_successors, "Skip the one-step successor file");
  s->add_option("--equilibrate", sim.equilibrate, "LJ equilibration steps before recording");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network on simulated trajectories");
  t->add_option("--system", tr.system)->required();
  t->add_option("--data", tr.data, "Directory of simulate outputs")->required();
  t->add_option("--config", tr.config, "Training config JSON")->required();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--seed", tr.seed);
  t->add_option("--workers", tr.workers)->check(CLI::PositiveNumber);

  RolloutArgs ro;
  auto* r = app.add_subcommand("rollout", "Integrate a trained model");
  r->add_option("--checkpoint", ro.checkpoints, "Checkpoint (one per hybrid part)")->required();
  r->add_option("--system", ro.system)->required();
  r->add_option("--n", ro.n)->required();
  r->add_option("--seed", ro.seed);
  r->add_option("--steps", ro.steps)->required();
  r->add_option("--stride", ro.stride);
  r->add_option("--dt", ro.dt);
  r->add_option("--out", ro.out)->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Compare model rollouts against ground truth");
  e->add_option("--checkpoint", ev.checkpoints, "Checkpoint (one per hybrid part)")->required();
  e->add_option("--system", ev.system)->required();
  e->add_option("--n", ev.n)->required();
  e->add_option("--steps", ev.steps)->required();
  e->add_option("--seeds", ev.seeds)->required();
  e->add_option("--seed", ev.seed, "First seed");
  e->add_option("--stride", ev.stride);
  e->add_option("--dt", ev.dt);
  e->add_option("--workers", ev.workers)->check(CLI::PositiveNumber);
  e->add_option("--out", ev.out, "Output directory")->required();

  DistillArgs di;
  auto* d = app.add_subcommand("distill", "Symbolic regression on a learned head");
  d->add_option("--checkpoint", di.checkpoint);
  d->add_option("--analytic", di.analytic, "Use analytic stand-in heads of this system");
  d->add_option("--head", di.head, "kinetic|edge:A-B|node")->required();
  d->add_option("--powers", di.powers, "Comma-separated exponent menu");
  d->add_option("--domain", di.domain, "lo,hi");
  d->add_option("--count", di.count)->check(CLI::PositiveNumber);
  d->add_option("--seed", di.seed);
  d->add_option("--population", di.population)->check(CLI::PositiveNumber);
  d->add_option("--generations", di.generations)->check(CLI::NonNegativeNumber);
  d->add_option("--workers", di.workers)->check(CLI::PositiveNumber);
  d->add_option("--out", di.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*s) return run_simulate(sim);
    if (*t) return run_train(tr);
    if (*r) return run_rollout(ro);
    if (*e) return run_evaluate(ev);
    if (*d) return run_distill(di);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return 2;
  } catch (const hdl::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 2;
}
