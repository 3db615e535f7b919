// nemo: data generation, KNODE training, observer evaluation and reporting.
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "nemo/config.hpp"
#include "nemo/episode_io.hpp"
#include "nemo/error.hpp"
#include "nemo/experiments.hpp"
#include "nemo/knode.hpp"

namespace fs = std::filesystem;
using namespace nemo;

namespace {

ExperimentConfig config_for(const std::string& path, std::optional<std::uint64_t> seed) {
  ExperimentConfig c = path.empty() ? ExperimentConfig{} : load_config(path);
  if (seed) c.apply_seed(*seed);
  return c;
}

void make_parent(const fs::path& file) {
  if (!file.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(file.parent_path(), ec);
  if (ec) throw IoError("cannot create '" + file.parent_path().string() + "'");
}

// The unmodeled terms live in the plant, so the data must come from the same kind of plant.
void check_data_residual(const std::vector<Episode>& eps, const ResidualSpec& spec) {
  for (const auto& e : eps) {
    const bool data_unmodeled = e.meta.residual.d1 != 0.0 || e.meta.residual.d2 != 0.0;
    const bool want_unmodeled = spec.d1 != 0.0 || spec.d2 != 0.0;
    if (data_unmodeled != want_unmodeled) {
      throw ConfigError("train: data generated with residual " + to_string(e.meta.residual.variant) +
                        " cannot train residual " + to_string(spec.variant));
    }
  }
}

void generate(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
              const std::string& residual) {
  ExperimentConfig c = config_for(config, seed);
  if (!residual.empty()) c.sim.residual = ResidualSpec::preset(parse_residual_variant(residual));
  const auto train = run_episodes(training_configs(c.sim));
  const auto test = run_episodes(test_configs(c.sim));
  export_episodes(train, (fs::path(out) / "train").string());
  export_episodes(test, (fs::path(out) / "test").string());
  std::cout << "wrote " << train.size() << " training and " << test.size() << " test episodes to " << out << "\n";
}

void train_cmd(const std::string& config, const std::string& residual, int alpha, const std::string& data,
               const std::string& out, std::optional<std::uint64_t> seed, std::optional<int> max_epochs,
               bool verbose) {
  ExperimentConfig c = config_for(config, seed);
  const ResidualSpec spec = ResidualSpec::preset(parse_residual_variant(residual));
  TrainConfig tc = c.training;
  tc.alpha = alpha;
  tc.verbose = verbose;
  if (max_epochs) tc.max_epochs = *max_epochs;
  tc.validate();

  fs::path dir(data);
  if (fs::is_directory(dir / "train")) dir /= "train";
  auto episodes = import_episodes(dir.string());
  check_data_residual(episodes, spec);
  const double ts = episodes.empty() ? c.sim.sample_time : episodes.front().sample_time;

  KnodeModel model = KnodeModel::create(c.sim.vehicle, spec, tc.hidden, tc.seed, ts);
  TrainResult result = train(std::move(model), share(std::move(episodes)), tc);

  const fs::path ckpt(out);
  make_parent(ckpt);
  save_knode_checkpoint(result.model, alpha, ckpt.string());
  fs::path history = ckpt;
  history.replace_filename(ckpt.stem().string() + "_history.csv");
  write_history_csv(result.history, history.string());
  const auto& best = result.history[static_cast<std::size_t>(result.best_epoch)];
  std::cout << "best epoch " << result.best_epoch << " validation loss " << best.validation_loss << "\n";
}

void evaluate_cmd(const std::string& config, const std::string& checkpoint, const std::string& out,
                  std::optional<std::uint64_t> seed, const std::string& data) {
  ExperimentConfig c = config_for(config, seed);
  const KnodeCheckpoint ckpt = load_knode_checkpoint(checkpoint, c.sim.vehicle.rotor_count());
  const KnodeModel model = model_from_checkpoint(ckpt, c.sim.vehicle);

  std::vector<Episode> episodes;
  if (data.empty()) {
    episodes = simulate_test_episodes(c, ckpt.residual.variant);
  } else {
    fs::path dir(data);
    if (fs::is_directory(dir / "test")) dir /= "test";
    episodes = import_episodes(dir.string());
  }
  const auto records = evaluate_observers(episodes, c.sim.vehicle, ckpt.residual, c.observer, {{ckpt.alpha, &model}});

  make_parent(fs::path(out));
  write_series_csv(records, out);
  for (const auto& r : records) std::cout << r.scenario << ' ' << r.label() << " rms " << rms_error(r.series) << "\n";
}

void report_cmd(const std::string& in, const std::string& out) {
  const auto records = read_series_dir(in);
  report_render(compute_report(records), out);
  std::cout << "report for " << records.size() << " series written to " << out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural momentum observer pipeline"};
  app.require_subcommand(1);

  std::string config, out, residual, data, checkpoint, in;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_epochs;
  int alpha = 1;
  bool verbose = false;

  auto* gen = app.add_subcommand("generate-data", "simulate training and test episodes");
  gen->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--seed", seed, "base seed");
  gen->add_option("--residual", residual, "residual type used in the plant");

  auto* tr = app.add_subcommand("train", "train a residual network");
  tr->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
  tr->add_option("--residual", residual, "G, MG1, MG2 or MGD")->required();
  tr->add_option("--alpha", alpha, "prediction horizon")->required()->check(CLI::PositiveNumber);
  tr->add_option("--data", data, "episode directory")->required();
  tr->add_option("--out", out, "checkpoint path (history CSV is written next to it)")->required();
  tr->add_option("--seed", seed, "base seed");
  tr->add_option("--max-epochs", max_epochs, "epoch cap");
  tr->add_flag("--verbose", verbose, "log every epoch");

  auto* ev = app.add_subcommand("evaluate", "run MO and NeMO on the test scenarios");
  ev->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", checkpoint, "trained model")->required();
  ev->add_option("--out", out, "series CSV path")->required();
  ev->add_option("--seed", seed, "base seed");
  ev->add_option("--data", data, "use exported test episodes instead of simulating");

  auto* rp = app.add_subcommand("report", "aggregate series into tables");
  rp->add_option("--in", in, "directory with series CSVs")->required();
  rp->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) generate(config, out, seed, residual);
    if (tr->parsed()) train_cmd(config, residual, alpha, data, out, seed, max_epochs, verbose);
    if (ev->parsed()) evaluate_cmd(config, checkpoint, out, seed, data);
    if (rp->parsed()) report_cmd(in, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
