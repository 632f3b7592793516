#include "commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "slotlab/binary_io.hpp"
#include "slotlab/checkpoint.hpp"
#include "slotlab/diagnostics.hpp"
#include "slotlab/envs/dataset_io.hpp"
#include "slotlab/error.hpp"
#include "slotlab/eval.hpp"
#include "slotlab/models/train.hpp"
#include "slotlab/oodgen.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::cli {

using nlohmann::json;
namespace fs = std::filesystem;

json DefaultConfig() {
  return json::parse(R"({
    "run": "default",
    "env": {"kind": "shapes", "num_objects": 0, "grid_size": 5, "dt": 0.01},
    "split": {"kind": "iid", "k": 0, "seed": 1},
    "data": {"train_episodes": 1000, "eval_episodes": 1000, "steps": 10, "seed": 1, "workers": 1},
    "model": {"type": "cswm", "latent_dim": 0, "hidden": 512, "gamma": 1.0, "sigma": 0.5, "seed": 1},
    "train": {"epochs": 100, "batch_size": 0, "learning_rate": 0.0005, "seed": 1,
              "checkpoint_every": 10, "resume": false},
    "eval": {"horizons": [1, 5, 10], "sweep": false, "workers": 1},
    "diagnose": {"episodes": 100, "maps": 8}
  })");
}

std::uint64_t ConfigHash(const json& config) {
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : config.dump()) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string HashHex(std::uint64_t hash, std::size_t digits) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << hash;
  return out.str().substr(0, digits);
}

void ApplyOverride(json& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    Fail(ErrorCategory::kConfig, "override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &config;
  std::istringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->contains(path[i]) || !(*node)[path[i]].is_object()) {
      Fail(ErrorCategory::kConfig, "unknown config section '" + path[i] + "' in '" + key + "'");
    }
    node = &(*node)[path[i]];
  }
  if (!node->contains(path.back())) Fail(ErrorCategory::kConfig, "unknown config key '" + key + "'");
  (*node)[path.back()] = value;
}

namespace {

template <typename V>
V Get(const json& config, const std::string& section, const std::string& key) {
  try {
    return config.at(section).at(key).get<V>();
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kConfig, "config key " + section + "." + key + ": " + e.what());
  }
}

struct RunContext {
  json config;
  std::string hash;  // full 16 hex digits
  fs::path dir;
  std::ostream& out;

  fs::path data_dir() const { return dir / "data"; }
  fs::path model_dir() const { return dir / "model"; }
  fs::path checkpoint() const { return model_dir() / "checkpoint.slck"; }
  fs::path train_data() const { return data_dir() / "train.slds"; }
  fs::path eval_data(const std::string& kind, int k) const {
    return data_dir() / ("eval-" + kind + "-k" + std::to_string(k) + ".slds");
  }
};

envs::EnvSpec EnvFromConfig(const json& config) {
  envs::EnvSpec env;
  env.kind = envs::ParseEnvKind(Get<std::string>(config, "env", "kind"));
  env.grid_size = Get<int>(config, "env", "grid_size");
  env.dt = Get<double>(config, "env", "dt");
  return env;
}

std::size_t NumObjects(const json& config) {
  const std::size_t k = Get<std::size_t>(config, "env", "num_objects");
  if (k != 0) return k;
  return EnvFromConfig(config).kind == envs::EnvKind::kThreeBody ? 3 : 5;
}

oodgen::SplitSpec SplitFor(const json& config, oodgen::SplitKind kind, int k) {
  return oodgen::MakeSplit(kind, k, EnvFromConfig(config).catalog, NumObjects(config),
                           Get<std::uint64_t>(config, "split", "seed"));
}

oodgen::SplitSpec ConfiguredSplit(const json& config) {
  return SplitFor(config, oodgen::ParseKind(Get<std::string>(config, "split", "kind")),
                  Get<int>(config, "split", "k"));
}

json Provenance(const RunContext& run, const oodgen::SplitSpec& split) {
  return {{"config_hash", run.hash}, {"config", run.config}, {"split", oodgen::SplitToJson(split)}};
}

// Dataset descriptor: the run provenance tagged with the file's role.
std::string Descriptor(const RunContext& run, const oodgen::SplitSpec& split, const char* role) {
  json d = Provenance(run, split);
  d["role"] = role;
  return d.dump();
}

std::string CommentBlock(const RunContext& run, const oodgen::SplitSpec& split) {
  return "config_hash " + run.hash + "\nseed " + std::to_string(split.seed) + "\nsplit " +
         oodgen::SplitToJson(split).dump();
}

std::uint64_t EvalSeed(const json& config) { return DeriveSeed(Get<std::uint64_t>(config, "data", "seed"), 2); }
std::uint64_t TrainDataSeed(const json& config) { return DeriveSeed(Get<std::uint64_t>(config, "data", "seed"), 1); }

envs::ExperienceBuffer EvalBuffer(const RunContext& run, const oodgen::SplitSpec& split, std::size_t episodes) {
  const json& c = run.config;
  return envs::GenerateBuffer(EnvFromConfig(c), split.test,
                              Descriptor(run, split, "eval"), episodes,
                              Get<std::size_t>(c, "data", "steps"), EvalSeed(c),
                              Get<unsigned>(c, "data", "workers"));
}

void WriteText(const fs::path& path, const std::string& text) { io::AtomicWriteFile(path.string(), text); }

int CmdGenerate(RunContext& run) {
  const json& c = run.config;
  const oodgen::SplitSpec split = ConfiguredSplit(c);
  const oodgen::ValidationReport check = oodgen::ValidateSplit(split);
  if (!check.ok()) Fail(ErrorCategory::kInfeasible, "generated split fails validation: " + check.violations.front());
  const envs::EnvSpec env = EnvFromConfig(c);
  const std::size_t steps = Get<std::size_t>(c, "data", "steps");
  const unsigned workers = Get<unsigned>(c, "data", "workers");
  const envs::ExperienceBuffer train =
      envs::GenerateBuffer(env, split.train, Descriptor(run, split, "train"),
                           Get<std::size_t>(c, "data", "train_episodes"), steps, TrainDataSeed(c), workers);
  const envs::ExperienceBuffer eval = EvalBuffer(run, split, Get<std::size_t>(c, "data", "eval_episodes"));
  const fs::path eval_path = run.eval_data(std::string(oodgen::KindName(split.kind)), split.num_changed);
  envs::WriteDataset(run.train_data().string(), train);
  envs::WriteDataset(eval_path.string(), eval);
  const json manifest = {{"train", envs::DatasetManifest(train)}, {"eval", envs::DatasetManifest(eval)},
                         {"files", {fs::relative(run.train_data(), run.dir).string(), fs::relative(eval_path, run.dir).string()}}};
  WriteText(run.data_dir() / "manifest.json", manifest.dump(2) + "\n");
  WriteText(run.dir / "config.json", c.dump(2) + "\n");
  run.out << manifest.dump(2) << "\n";
  return 0;
}

std::size_t BatchSize(const json& config) {
  const std::size_t b = Get<std::size_t>(config, "train", "batch_size");
  if (b != 0) return b;
  return EnvFromConfig(config).kind == envs::EnvKind::kThreeBody ? 100 : 512;
}

std::string LossCsv(const std::vector<models::EpochRecord>& epochs, const std::string& comment) {
  std::ostringstream out;
  out.precision(17);
  std::istringstream lines(comment);
  for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  out << "epoch,mean_loss,batches\n";
  for (const auto& r : epochs) out << r.epoch << ',' << r.mean_loss << ',' << r.batches << '\n';
  return out.str();
}

oodgen::SplitSpec SplitOfDataset(const envs::ExperienceBuffer& buffer) {
  try {
    return oodgen::SplitFromJson(json::parse(buffer.descriptor).at("split"));
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("dataset carries no split provenance: ") + e.what());
  }
}

int CmdTrain(RunContext& run) {
  const json& c = run.config;
  if (!fs::exists(run.train_data())) {
    Fail(ErrorCategory::kIo, "missing " + run.train_data().string() + "; run generate first");
  }
  const envs::ExperienceBuffer buffer = envs::ReadDataset(run.train_data().string());
  const oodgen::SplitSpec split = SplitOfDataset(buffer);
  const std::string type = Get<std::string>(c, "model", "type");
  const std::size_t K = buffer.num_objects();

  models::TrainConfig tc;
  tc.epochs = Get<std::size_t>(c, "train", "epochs");
  tc.batch_size = BatchSize(c);
  tc.learning_rate = Get<double>(c, "train", "learning_rate");
  tc.seed = Get<std::uint64_t>(c, "train", "seed");
  tc.checkpoint_every = Get<std::size_t>(c, "train", "checkpoint_every");
  tc.checkpoint_path = run.checkpoint().string();
  tc.provenance = {{"config_hash", run.hash},
                   {"config", c},
                   {"env", envs::EnvToJson(buffer.env)},
                   {"split", oodgen::SplitToJson(split)},
                   {"train_assignment", envs::AssignmentToJson(buffer.assignment)}};
  const bool resume = Get<bool>(c, "train", "resume") && fs::exists(run.checkpoint());
  const std::uint64_t model_seed = Get<std::uint64_t>(c, "model", "seed");
  const std::size_t latent = Get<std::size_t>(c, "model", "latent_dim");
  auto on_epoch = [&](const models::EpochRecord& r) {
    run.out << "epoch " << r.epoch + 1 << "/" << tc.epochs << " loss " << r.mean_loss << "\n" << std::flush;
  };

  models::TrainReport report;
  if (type == "cswm") {
    models::CswmConfig mc = models::DefaultCswmConfig(buffer.env, K);
    if (latent != 0) mc.latent_dim = latent;
    mc.hidden = mc.edge_dim = Get<std::size_t>(c, "model", "hidden");
    mc.gamma = Get<double>(c, "model", "gamma");
    mc.sigma = Get<double>(c, "model", "sigma");
    models::CswmModel<float> model(mc, model_seed);
    std::optional<models::ResumeState> state;
    if (resume) {
      const Checkpoint ck = ReadCheckpoint(run.checkpoint().string());
      model = models::CswmModel<float>::FromCheckpoint(ck);
      state = models::ReadResumeState(ck, model.params(), tc.learning_rate);
      run.out << "resuming after epoch " << state->history.size() << "\n";
    }
    report = models::TrainCswm(model, buffer, tc, state, on_epoch);
  } else if (type == "ae") {
    models::AeConfig ac = models::DefaultAeConfig(buffer.env, K);
    if (latent != 0) ac.latent_dim = latent;
    ac.hidden = Get<std::size_t>(c, "model", "hidden");
    models::AeModel<float> model(ac, model_seed);
    std::optional<models::ResumeState> state;
    if (resume) {
      const Checkpoint ck = ReadCheckpoint(run.checkpoint().string());
      model = models::AeModel<float>::FromCheckpoint(ck);
      state = models::ReadResumeState(ck, model.params(), tc.learning_rate);
      run.out << "resuming after epoch " << state->history.size() << "\n";
    }
    report = models::TrainAe(model, buffer, tc, state, on_epoch);
  } else {
    Fail(ErrorCategory::kConfig, "model.type must be cswm or ae, got '" + type + "'");
  }
  WriteText(run.model_dir() / "loss.csv", LossCsv(report.epochs, CommentBlock(run, split)));
  WriteText(run.model_dir() / "config.json", c.dump(2) + "\n");
  if (report.aborted) {
    Fail(ErrorCategory::kNumeric, "training aborted at " + report.abort_message +
                                      "; last good checkpoint kept at " + run.checkpoint().string());
  }
  run.out << "checkpoint " << run.checkpoint().string() << "\n";
  return 0;
}

// A loaded checkpoint with the adapters eval and diagnose need.
struct LoadedModel {
  std::optional<models::CswmModel<float>> cswm;
  std::optional<models::AeModel<float>> ae;
  json provenance;
  std::unique_ptr<eval::LatentDynamics> dynamics;
  diagnostics::MapFn maps;
};

LoadedModel LoadModel(const RunContext& run) {
  if (!fs::exists(run.checkpoint())) {
    Fail(ErrorCategory::kIo, "missing " + run.checkpoint().string() + "; run train first");
  }
  const Checkpoint ck = ReadCheckpoint(run.checkpoint().string());
  LoadedModel m;
  m.provenance = models::CheckpointPreamble(ck).at("extra").at("provenance");
  if (models::CheckpointModelKind(ck) == "cswm") {
    m.cswm.emplace(models::CswmModel<float>::FromCheckpoint(ck));
    m.dynamics = std::make_unique<eval::CswmDynamics>(*m.cswm);
    const models::CswmModel<float>* p = &*m.cswm;
    m.maps = [p](const Tensor<float>& obs) { return p->ExtractMasks(obs); };
  } else {
    m.ae.emplace(models::AeModel<float>::FromCheckpoint(ck));
    m.dynamics = std::make_unique<eval::AeDynamics>(*m.ae);
    const models::AeModel<float>* p = &*m.ae;
    m.maps = [p](const Tensor<float>& obs) { return p->ExtractMasks(obs); };
  }
  return m;
}

envs::Assignment TrainAssignment(const LoadedModel& m) {
  return envs::AssignmentFromJson(m.provenance.at("train_assignment"));
}

void CheckCompatible(const LoadedModel& m, const envs::ExperienceBuffer& buffer, const oodgen::SplitSpec& split) {
  const envs::EnvSpec trained = envs::EnvFromJson(m.provenance.at("env"));
  if (trained.kind != buffer.env.kind) {
    Fail(ErrorCategory::kConfig, "checkpoint was trained on " + std::string(envs::EnvName(trained.kind)) +
                                     " but the evaluation data is " + std::string(envs::EnvName(buffer.env.kind)));
  }
  if (TrainAssignment(m).size() != buffer.num_objects()) {
    Fail(ErrorCategory::kConfig, "checkpoint expects " + std::to_string(TrainAssignment(m).size()) +
                                     " objects but the evaluation data has " + std::to_string(buffer.num_objects()));
  }
  if (split.train != TrainAssignment(m)) {
    Fail(ErrorCategory::kConfig, "split " + std::string(oodgen::KindName(split.kind)) +
                                     " assumes a different training assignment than the checkpoint was trained on");
  }
}

eval::EvalOptions EvalOptions(const json& c) {
  eval::EvalOptions o;
  o.horizons = Get<std::vector<std::size_t>>(c, "eval", "horizons");
  o.workers = Get<unsigned>(c, "eval", "workers");
  return o;
}

std::string SweepCsv(const std::vector<std::tuple<std::string, int, eval::HorizonMetrics>>& rows,
                     const std::string& comment) {
  std::ostringstream out;
  out.precision(17);
  std::istringstream lines(comment);
  for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  out << "kind,k,horizon,samples,hits_at_1,mrr\n";
  for (const auto& [kind, k, m] : rows) {
    out << kind << ',' << k << ',' << m.horizon << ',' << m.samples << ',' << m.hits_at_1 << ',' << m.mrr << '\n';
  }
  return out.str();
}

int CmdEval(RunContext& run) {
  const json& c = run.config;
  LoadedModel model = LoadModel(run);
  const fs::path out_dir = run.dir / "eval";
  if (!Get<bool>(c, "eval", "sweep")) {
    const oodgen::SplitSpec split = ConfiguredSplit(c);
    const fs::path path = run.eval_data(std::string(oodgen::KindName(split.kind)), split.num_changed);
    if (!fs::exists(path)) Fail(ErrorCategory::kIo, "missing " + path.string() + "; run generate for this split");
    const envs::ExperienceBuffer buffer = envs::ReadDataset(path.string());
    CheckCompatible(model, buffer, SplitOfDataset(buffer));
    eval::MetricsReport report = eval::Evaluate(*model.dynamics, buffer, EvalOptions(c));
    report.provenance = Provenance(run, SplitOfDataset(buffer));
    const std::string stem = std::string(oodgen::KindName(split.kind)) + "-k" + std::to_string(split.num_changed);
    WriteText(out_dir / (stem + ".json"), report.ToJson().dump(2) + "\n");
    std::string csv = report.ToCsv();
    std::ostringstream header;
    std::istringstream lines(CommentBlock(run, split));
    for (std::string line; std::getline(lines, line);) header << "# " << line << '\n';
    WriteText(out_dir / (stem + ".csv"), header.str() + csv);
    run.out << report.ToJson()["horizons"].dump(2) << "\n";
    return 0;
  }

  // Sweep: every kind whose training assignment matches the checkpoint,
  // k = 1..K, each horizon, in that fixed order. Eval episodes share one
  // generation seed so only the attributes differ between rows.
  const envs::Assignment trained = TrainAssignment(model);
  const int K = static_cast<int>(trained.size());
  const std::size_t episodes = Get<std::size_t>(c, "data", "eval_episodes");
  std::vector<std::tuple<std::string, int, eval::HorizonMetrics>> rows;
  json records = json::array();
  json baseline;
  for (oodgen::SplitKind kind : oodgen::kAllKinds) {
    if (kind == oodgen::SplitKind::kIid) {
      const oodgen::SplitSpec split = SplitFor(c, kind, 0);
      if (split.train != trained) continue;
      const eval::MetricsReport r = eval::Evaluate(*model.dynamics, EvalBuffer(run, split, episodes), EvalOptions(c));
      baseline = r.ToJson()["horizons"];
      continue;
    }
    if (SplitFor(c, kind, 1).train != trained) continue;
    for (int k = 1; k <= K; ++k) {
      const oodgen::SplitSpec split = SplitFor(c, kind, k);
      const envs::ExperienceBuffer buffer = EvalBuffer(run, split, episodes);
      CheckCompatible(model, buffer, split);
      const eval::MetricsReport r = eval::Evaluate(*model.dynamics, buffer, EvalOptions(c));
      for (const eval::HorizonMetrics& m : r.horizons) {
        rows.emplace_back(std::string(oodgen::KindName(kind)), k, m);
        run.out << oodgen::KindName(kind) << " k=" << k << " T=" << m.horizon << " H@1=" << m.hits_at_1
                << " MRR=" << m.mrr << "\n";
      }
      records.push_back({{"kind", oodgen::KindName(kind)}, {"k", k}, {"split", oodgen::SplitToJson(split)},
                         {"horizons", r.ToJson()["horizons"]}});
    }
  }
  if (rows.empty()) Fail(ErrorCategory::kConfig, "no split kind matches the checkpoint's training assignment");
  const json sweep = {{"config_hash", run.hash}, {"config", c}, {"iid_baseline", baseline}, {"rows", records}};
  WriteText(out_dir / "sweep.json", sweep.dump(2) + "\n");
  WriteText(out_dir / "sweep.csv",
            SweepCsv(rows, "config_hash " + run.hash + "\nseed " + std::to_string(Get<std::uint64_t>(c, "split", "seed")) +
                               "\ntrain_assignment " + envs::AssignmentToJson(trained).dump()));
  return 0;
}

int CmdDiagnose(RunContext& run) {
  const json& c = run.config;
  LoadedModel model = LoadModel(run);
  const oodgen::SplitSpec split = ConfiguredSplit(c);
  const envs::ExperienceBuffer buffer = EvalBuffer(run, split, Get<std::size_t>(c, "diagnose", "episodes"));
  CheckCompatible(model, buffer, split);
  const fs::path out_dir = run.dir / ("diagnose-" + run.hash.substr(0, 8));
  const std::string comment = CommentBlock(run, split);

  std::vector<models::StepRef> refs;
  for (std::size_t e = 0; e < buffer.episodes.size(); ++e) {
    for (std::size_t t = 0; t <= buffer.steps; ++t) refs.push_back({e, t});
  }
  const Tensor<float> maps = diagnostics::SlotMaps(model.maps, buffer, refs);
  const Tensor<float> masks = diagnostics::ObjectMasks(buffer, refs, maps.dim(2));
  const std::vector<double> corr = diagnostics::SlotObjectCorrelation(maps, masks);
  const std::size_t K = maps.dim(1), J = masks.dim(1);
  const diagnostics::Assignment match = diagnostics::BestAssignment(corr, K, J);

  const std::size_t exported = std::min<std::size_t>(Get<std::size_t>(c, "diagnose", "maps"), refs.size());
  const Shape one = {1, K, maps.dim(2), maps.dim(3)};
  const std::size_t per = K * maps.dim(2) * maps.dim(3);
  Tensor<float> first({exported, K, maps.dim(2), maps.dim(3)},
                      std::vector<float>(maps.data().begin(), maps.data().begin() + exported * per));
  diagnostics::ExportFeatureMaps(first, (out_dir / "maps").string(), comment);

  json summary = {{"config_hash", run.hash},
                  {"split", oodgen::SplitToJson(split)},
                  {"observations", refs.size()},
                  {"factorization_score", match.score},
                  {"slot_of_object", match.slot_of_object}};
  WriteText(out_dir / "correlation.csv", diagnostics::MatrixCsv(corr, K, J, comment + "\nrows slots, columns objects"));
  if (model.cswm && buffer.env.has_actions()) {
    const std::vector<double> m = diagnostics::TransitionUpdateMatrix(*model.cswm, buffer);
    WriteText(out_dir / "update_matrix.csv",
              diagnostics::MatrixCsv(m, J, K, comment + "\nrows acted object, columns slots"));
    summary["diagonal_mass_ratio"] = diagnostics::DiagonalMassRatio(m, J, K);
  }
  WriteText(out_dir / "summary.json", summary.dump(2) + "\n");
  WriteText(out_dir / "config.json", c.dump(2) + "\n");
  run.out << summary.dump(2) << "\n";
  return 0;
}

std::string DefaultOutputRoot() {
  if (const char* env = std::getenv("SLOTLAB_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
  return "slotlab-runs";
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"slotlab: object-centric world model laboratory"};
  app.require_subcommand(1);
  std::string config_path, output_root = DefaultOutputRoot();
  std::vector<std::string> sets;
  std::optional<std::string> run_name, env_kind, kind, model_type;
  std::optional<int> k;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, train_episodes, eval_episodes, num_objects;
  bool resume = false, sweep = false;
  app.add_option("-c,--config", config_path, "JSON config file merged over the defaults");
  app.add_option("-o,--out", output_root, "output root (default $SLOTLAB_OUTPUT_ROOT or ./slotlab-runs)");
  app.add_option("--set", sets, "override any config key: section.key=value");
  app.add_option("--run", run_name, "run name (run)");
  app.add_option("--env", env_kind, "shapes | blocks | three-body (env.kind)");
  app.add_option("--objects", num_objects, "number of objects (env.num_objects)");
  app.add_option("--kind", kind, "split kind (split.kind)");
  app.add_option("-k,--changed", k, "number of changed objects (split.k)");
  app.add_option("--seed", seed, "seed for split, data, model and training");
  app.add_option("--epochs", epochs, "training epochs (train.epochs)");
  app.add_option("--train-episodes", train_episodes, "training episodes (data.train_episodes)");
  app.add_option("--eval-episodes", eval_episodes, "evaluation episodes (data.eval_episodes)");
  app.add_option("--model", model_type, "cswm | ae (model.type)");
  app.add_flag("--resume", resume, "continue from the run's checkpoint (train.resume)");
  app.add_flag("--sweep", sweep, "evaluate every compatible split kind and k (eval.sweep)");
  app.add_subcommand("generate", "write training and evaluation datasets")->fallthrough();
  app.add_subcommand("train", "train the configured model on the run's training data")->fallthrough();
  app.add_subcommand("eval", "rank-based evaluation of the trained checkpoint")->fallthrough();
  app.add_subcommand("diagnose", "feature maps, factorization and transition diagnostics")->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: config: " << e.what() << "\n";
    return 2;
  }

  try {
    json config = DefaultConfig();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) Fail(ErrorCategory::kIo, "cannot read config " + config_path);
      json user;
      try {
        user = json::parse(in);
      } catch (const json::exception& e) {
        Fail(ErrorCategory::kConfig, "config " + config_path + " is not valid JSON: " + e.what());
      }
      for (const auto& [section, value] : user.items()) {
        if (!config.contains(section)) Fail(ErrorCategory::kConfig, "unknown config section '" + section + "'");
      }
      config.merge_patch(user);
    }
    for (const std::string& s : sets) ApplyOverride(config, s);
    if (run_name) config["run"] = *run_name;
    if (env_kind) config["env"]["kind"] = *env_kind;
    if (num_objects) config["env"]["num_objects"] = *num_objects;
    if (kind) config["split"]["kind"] = *kind;
    if (k) config["split"]["k"] = *k;
    if (seed) {
      for (const char* section : {"split", "data", "model", "train"}) config[section]["seed"] = *seed;
    }
    if (epochs) config["train"]["epochs"] = *epochs;
    if (train_episodes) config["data"]["train_episodes"] = *train_episodes;
    if (eval_episodes) config["data"]["eval_episodes"] = *eval_episodes;
    if (model_type) config["model"]["type"] = *model_type;
    if (resume) config["train"]["resume"] = true;
    if (sweep) config["eval"]["sweep"] = true;

    if (!config.at("run").is_string()) Fail(ErrorCategory::kConfig, "run name must be a string");
    const std::string name = config.at("run").get<std::string>();
    if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
      Fail(ErrorCategory::kConfig, "run name '" + name + "' must be a single non-empty path component");
    }
    RunContext run{config, HashHex(ConfigHash(config)), fs::path(output_root) / name, out};
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "generate") return CmdGenerate(run);
    if (command == "train") return CmdTrain(run);
    if (command == "eval") return CmdEval(run);
    return CmdDiagnose(run);
  } catch (const Error& e) {
    err << "error: " << CategoryName(e.category()) << ": " << e.what() << "\n";
  } catch (const json::exception& e) {
    err << "error: format: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: io: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace slotlab::cli
