// pidkl: dataset generation, training, evaluation and benchmark reproduction.
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pidkl/pidkl.hpp"

namespace fs = std::filesystem;
using namespace pidkl;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
  return fs::path(dir);
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<std::size_t> m;
  std::optional<std::string> mode;
  std::optional<std::size_t> epochs;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_option("--gamma", gamma, "generative weight")->check(CLI::NonNegativeNumber);
    cmd->add_option("--m", m, "virtual inputs per draw")->check(CLI::PositiveNumber);
    cmd->add_option("--mode", mode, "skl, dkl or pidkl")->check(CLI::IsMember({"skl", "dkl", "pidkl"}));
    cmd->add_option("--epochs", epochs, "ADAM steps")->check(CLI::PositiveNumber);
  }

  void apply(TrainConfig& c) const {
    if (seed) c.seed = *seed;
    if (gamma) c.gamma = *gamma;
    if (m) c.m = *m;
    if (mode) c.mode = mode_from_string(*mode);
    if (epochs) c.epochs = *epochs;
    c.validate();
  }
};

/// Preset defaults, then the config file, then command-line overrides.
TrainConfig resolve_config(const std::string& preset_name, const std::string& config_path, const Overrides& o) {
  TrainConfig c = preset_name.empty() ? TrainConfig{} : preset(preset_name).defaults;
  if (!config_path.empty()) c = config_from_json(read_json(config_path), c);
  o.apply(c);
  return c;
}

std::optional<OperatorSpec> resolve_operator(const std::string& preset_name, const std::string& path) {
  if (!path.empty()) return operator_from_json(read_json(path));
  if (!preset_name.empty()) return preset(preset_name).op;
  return std::nullopt;
}

void write_generated(const GeneratedData& g, const fs::path& dir) {
  write_csv(g.split.train, (dir / "train.csv").string());
  write_csv(g.split.test, (dir / "test.csv").string());
  write_json(g.metadata, dir / "metadata.json");
}

void write_trace(const std::vector<double>& trace, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,objective\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << format_double(trace[i]) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed deep kernel learning"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "solve a benchmark problem and write train/test CSVs");
  std::string gen_preset, gen_problem, gen_out;
  gen->add_option("--preset", gen_preset, "ode1st or diffusion1d");
  gen->add_option("--problem", gen_problem, "problem JSON file");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "fit a model and write a checkpoint");
  std::string tr_train, tr_operator, tr_config, tr_preset, tr_out;
  Overrides tr_over;
  tr->add_option("--train", tr_train, "training CSV")->required();
  tr->add_option("--operator", tr_operator, "operator JSON file");
  tr->add_option("--config", tr_config, "config JSON file");
  tr->add_option("--preset", tr_preset, "take operator and defaults from a preset");
  tr->add_option("--out", tr_out, "output directory")->required();
  tr_over.add_to(tr);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on test data");
  std::string ev_checkpoint, ev_test, ev_out;
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint JSON")->required();
  ev->add_option("--test", ev_test, "test CSV")->required();
  ev->add_option("--out", ev_out, "output directory")->required();

  // reproduce
  auto* rp = app.add_subcommand("reproduce", "run SKL, DKL and PI-DKL on a benchmark");
  std::string rp_name, rp_out;
  Overrides rp_over;
  rp->add_option("name", rp_name, "ode1st or diffusion1d")->required();
  rp->add_option("--out", rp_out, "output directory");
  rp_over.add_to(rp);

  // select-gamma
  auto* sg = app.add_subcommand("select-gamma", "choose the generative weight by cross-validation");
  std::string sg_train, sg_operator, sg_config, sg_preset, sg_out;
  Overrides sg_over;
  sg->add_option("--train", sg_train, "training CSV")->required();
  sg->add_option("--operator", sg_operator, "operator JSON file");
  sg->add_option("--config", sg_config, "config JSON file (gamma_grid, cv_folds, cv_metric)");
  sg->add_option("--preset", sg_preset, "take operator and defaults from a preset");
  sg->add_option("--out", sg_out, "output directory");
  sg_over.add_to(sg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (gen->parsed()) {
      if (gen_preset.empty() == gen_problem.empty()) throw ValidationError("generate: give exactly one of --preset or --problem");
      const GeneratedData g = gen_preset.empty() ? generate_from_problem(read_json(gen_problem)) : preset(gen_preset).generate();
      const fs::path dir = ensure_dir(gen_out);
      write_generated(g, dir);
      std::cout << "train rows " << g.split.train.size() << ", test rows " << g.split.test.size() << '\n';
    } else if (tr->parsed()) {
      const TrainConfig cfg = resolve_config(tr_preset, tr_config, tr_over);
      const auto op = resolve_operator(tr_preset, tr_operator);
      if (cfg.effective_gamma() > 0.0 && !op) throw ValidationError("train: pidkl mode with gamma > 0 needs --operator or --preset");
      Dataset data = read_csv(tr_train);
      if (!cfg.domain.empty()) data.bounds = cfg.domain;
      const PreparedData prepared = PreparedData::from(data);
      const TrainResult r = pidkl::train(prepared, op ? &*op : nullptr, cfg, [](std::size_t epoch, double v) {
        if ((epoch + 1) % 1000 == 0) std::cerr << "epoch " << (epoch + 1) << " objective " << v << '\n';
      });
      const fs::path dir = ensure_dir(tr_out);
      save_checkpoint(make_checkpoint(prepared.raw, op, cfg, r), (dir / "checkpoint.json").string());
      write_trace(r.trace, dir / "trace.csv");
      std::cout << "final objective " << format_double(r.trace.back()) << '\n';
      for (const auto& c : r.params.eq_coeffs) std::cout << c.name << ' ' << format_double(c.value()) << '\n';
    } else if (ev->parsed()) {
      const Checkpoint c = load_checkpoint(ev_checkpoint);
      const Dataset test = read_csv(ev_test);
      const PredictionTable t = evaluate_checkpoint(c, test);
      const EvalReport rep = t.report();
      nlohmann::json j = to_json(rep);
      j["config"] = to_json(c.config);
      j["seed"] = c.config.seed;
      const fs::path dir = ensure_dir(ev_out);
      write_predictions_csv(t, (dir / "predictions.csv").string());
      write_json(j, dir / "report.json");
      std::cout << j.dump(2) << '\n';
    } else if (rp->parsed()) {
      if (rp_over.mode) throw ValidationError("reproduce: --mode is not applicable; all three methods are run");
      ReproduceOptions opts;
      opts.seed = rp_over.seed;
      opts.epochs = rp_over.epochs;
      opts.gamma = rp_over.gamma;
      opts.m = rp_over.m;
      opts.log = &std::cerr;
      const ReproduceResult r = reproduce(rp_name, opts);
      const nlohmann::json j = to_json(r);
      if (!rp_out.empty()) {
        const fs::path dir = ensure_dir(rp_out);
        write_generated(r.data, dir);
        for (const auto& run : r.runs) {
          write_predictions_csv(run.predictions, (dir / ("predictions_" + to_string(run.mode) + ".csv")).string());
          write_trace(run.result.trace, dir / ("trace_" + to_string(run.mode) + ".csv"));
        }
        write_json(j, dir / "summary.json");
      }
      std::cout << j.dump(2) << '\n';
    } else if (sg->parsed()) {
      TrainConfig cfg = resolve_config(sg_preset, sg_config, sg_over);
      if (cfg.gamma_grid.empty()) cfg.gamma_grid = {0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
      const auto op = resolve_operator(sg_preset, sg_operator);
      if (!op) throw ValidationError("select-gamma: needs --operator or --preset");
      Dataset data = read_csv(sg_train);
      if (!cfg.domain.empty()) data.bounds = cfg.domain;
      const GammaSelection s = select_gamma(data, &*op, cfg);
      const nlohmann::json j = {{"gamma", s.gamma},
                                {"grid", s.grid},
                                {"scores", s.scores},
                                {"metric", cfg.cv_metric == CvMetric::rmse ? "rmse" : "loglik"},
                                {"folds", cfg.cv_folds},
                                {"seed", cfg.seed}};
      if (!sg_out.empty()) write_json(j, ensure_dir(sg_out) / "gamma.json");
      std::cout << j.dump(2) << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
