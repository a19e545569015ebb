// spidernet: search, random baselines, training, evaluation and DOT export.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "spidernet/checkpoint.hpp"
#include "spidernet/dataset.hpp"
#include "spidernet/dot_export.hpp"
#include "spidernet/errors.hpp"
#include "spidernet/genotype.hpp"
#include "spidernet/search.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spidernet;

namespace {

struct DataFlags {
  std::string kind = "synthetic";
  std::string path;
  int classes = 2;
  std::size_t samples = 512;
  int image_size = 8;
  double separation = 1.0;
  double noise = 0.25;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::string augment = "auto";
  std::optional<int> cutout;
};

void add_data_options(CLI::App* app, DataFlags& f) {
  app->add_option("--dataset", f.kind, "synthetic or cifar10")
      ->check(CLI::IsMember({"synthetic", "cifar10"}));
  app->add_option("--data-path", f.path, "directory holding the CIFAR-10 binary batches");
  app->add_option("--classes", f.classes, "synthetic class count");
  app->add_option("--samples", f.samples, "synthetic sample count");
  app->add_option("--image-size", f.image_size, "synthetic image side");
  app->add_option("--separation", f.separation, "synthetic class separation");
  app->add_option("--noise", f.noise, "synthetic pixel noise");
  app->add_option("--train-size", f.train_size, "cap on training samples (0 keeps all)");
  app->add_option("--test-size", f.test_size, "cap on test samples (0 keeps the default)");
  app->add_option("--augment", f.augment, "auto, on or off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  app->add_option("--cutout", f.cutout, "cutout side, 0 disables");
}

DatasetSpec make_spec(const DataFlags& f) {
  const DatasetKind kind = f.kind == "cifar10" ? DatasetKind::kCifar10 : DatasetKind::kSynthetic;
  DatasetSpec s = default_spec(kind);
  s.path = f.path;
  if (kind == DatasetKind::kSynthetic) {
    s.classes = f.classes;
    s.samples = f.samples;
    s.image_size = f.image_size;
    s.separation = f.separation;
    s.noise = f.noise;
  }
  s.train_size = f.train_size;
  s.test_size = f.test_size;
  const bool on = f.augment == "on" || (f.augment == "auto" && kind == DatasetKind::kCifar10);
  s.augmentation.random_crop = on;
  s.augmentation.horizontal_flip = on;
  s.augmentation.cutout = on ? (kind == DatasetKind::kCifar10 ? 16 : 4) : 0;
  if (f.cutout) s.augmentation.cutout = *f.cutout;
  return s;
}

struct SearchFlags {
  SearchConfig config;
  double budget_mb = 512.0;
};

void add_search_options(CLI::App* app, SearchFlags& f, bool required_space) {
  SearchConfig& c = f.config;
  auto* r = app->add_option("--reductions", c.reductions, "number of reduction cells");
  auto* ch = app->add_option("--channels", c.init_channels, "channels of the first cell");
  if (required_space) {
    r->required();
    ch->required();
  }
  app->add_option("--vram-budget-mb", f.budget_mb, "analytic memory budget in MiB");
  app->add_option("--cycles", c.cycles, "evolution cycles");
  app->add_option("--mutations-per-cycle", c.mutations_per_cycle, "mutation attempts per cycle");
  app->add_option("--epochs-per-cycle", c.epochs_per_cycle, "train+prune epochs per cycle");
  app->add_option("--train-epochs", c.train_epochs, "final training epochs");
  app->add_option("--n-good", c.n_good, "admitted candidates before selection stops");
  app->add_option("--batch-size", c.batch_size, "mini-batch size");
  app->add_option("--lr", c.base_lr, "initial learning rate");
  app->add_option("--dropout", c.dropout, "dropout before the classifier");
  app->add_option("--probe-size", c.probe_size, "NTK probe inputs");
  app->add_option("--lrc-samples", c.lrc_samples, "linear-region samples");
}

json config_snapshot(const SearchConfig& c, const DatasetSpec& spec) {
  return json{{"format", kConfigFormat},
              {"seed", c.seed},
              {"search", search_config_json(c)},
              {"dataset", dataset_spec_json(spec)},
              {"formats",
               {{"genotype", kGenotypeFormat},
                {"runlog", kRunLogFormat},
                {"weights", kWeightsFormat},
                {"report", kReportFormat}}}};
}

void write_json(const fs::path& p, const json& j) { write_atomic(p, j.dump(2) + "\n"); }

void write_run(const RunDirectory& dir, RunResult& r) {
  write_atomic(dir.final_genotype(), serialize_genotype(r.model));
  write_json(dir.weights(), weights_json(r.model));
  write_atomic(dir.runlog(), serialize_runlog(r.log));
  write_json(dir.report(), finalize_report(r.log, r.model));
  write_atomic(dir.dot(), export_dot(r.model));
}

RunHooks checkpoint_hooks(const RunDirectory& dir) {
  RunHooks h;
  h.cycle_end = [dir](int cycle, const SupernetModel& m) {
    write_atomic(dir.genotype(cycle), serialize_genotype(m));
  };
  return h;
}

void summary(const RunResult& r) {
  std::cout << r.log.variant << ": test_accuracy=" << r.log.final.test_accuracy
            << " params=" << r.log.final.parameter_count
            << " mutations=" << r.log.applied_mutations() << "/" << r.log.attempted_mutations()
            << " search_s=" << r.log.timing.search_seconds
            << " total_s=" << r.log.timing.total_seconds << "\n";
}

fs::path run_file(const fs::path& p, const char* name) {
  return fs::is_directory(p) ? p / name : p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supernet architecture search with differentiable pruning"};
  app.require_subcommand(1);

  // search
  SearchFlags sflags;
  sflags.config.train_epochs = 20;
  sflags.config.init_channels = 8;
  DataFlags sdata;
  std::string sout = "run";
  auto* search = app.add_subcommand("search", "grow, prune and train a network");
  add_search_options(search, sflags, true);
  add_data_options(search, sdata);
  search->add_option("--seed", sflags.config.seed, "run seed");
  search->add_option("--out", sout, "run directory");

  // random
  int variant = 2;
  std::string reference;
  std::string rout;
  std::optional<std::uint64_t> rseed;
  auto* random = app.add_subcommand("random", "replay a reference run with random choices");
  random->add_option("--variant", variant, "random baseline 1-4")->required()->check(CLI::Range(1, 4));
  random->add_option("--reference", reference, "reference run directory")->required();
  random->add_option("--out", rout, "run directory")->required();
  random->add_option("--seed", rseed, "seed (defaults to the reference seed)");

  // train
  std::string genotype_path;
  SearchFlags tflags;
  tflags.config.train_epochs = 20;
  DataFlags tdata;
  std::string tout = "train";
  bool no_prune = false;
  auto* train = app.add_subcommand("train", "train a stored genotype from fresh weights");
  train->add_option("genotype", genotype_path, "genotype JSON")->required();
  train->add_option("--train-epochs", tflags.config.train_epochs, "training epochs");
  train->add_option("--batch-size", tflags.config.batch_size, "mini-batch size");
  train->add_option("--lr", tflags.config.base_lr, "initial learning rate");
  train->add_option("--seed", tflags.config.seed, "run seed");
  train->add_option("--out", tout, "output directory");
  train->add_flag("--no-prune", no_prune, "freeze pruners and skip deadheading");
  add_data_options(train, tdata);

  // eval
  std::string weights_path;
  std::string eval_config;
  DataFlags edata;
  std::uint64_t eseed = 0;
  auto* eval = app.add_subcommand("eval", "test accuracy of a weights checkpoint");
  eval->add_option("weights", weights_path, "weights JSON or run directory")->required();
  eval->add_option("--config", eval_config, "run config supplying the dataset");
  eval->add_option("--seed", eseed, "dataset seed when no config is given");
  add_data_options(eval, edata);

  // export-dot
  std::string dot_path;
  auto* dot = app.add_subcommand("export-dot", "print a genotype as Graphviz DOT");
  dot->add_option("genotype", dot_path, "genotype JSON or run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*search) {
      SearchConfig cfg = sflags.config;
      cfg.vram_budget = static_cast<std::size_t>(sflags.budget_mb * 1024.0 * 1024.0);
      validate(cfg);
      const DatasetSpec spec = make_spec(sdata);
      std::cout << "seed=" << cfg.seed << "\n";
      const Dataset data = load_dataset(spec, cfg.seed);
      const RunDirectory dir(sout);
      dir.create();
      write_json(dir.config(), config_snapshot(cfg, spec));
      RunResult r = run_spidernet(cfg, data, checkpoint_hooks(dir));
      write_run(dir, r);
      summary(r);
    } else if (*random) {
      const RunDirectory ref(reference);
      const json snap = read_json(ref.config());
      SearchConfig cfg = search_config_from_json(snap.at("search"));
      if (rseed) cfg.seed = *rseed;
      const DatasetSpec spec = dataset_spec_from_json(snap.at("dataset"));
      const RunLog ref_log = parse_runlog(read_text(ref.runlog()));
      std::cout << "seed=" << cfg.seed << "\n";
      const Dataset data = load_dataset(spec, snap.at("seed").get<std::uint64_t>());
      const RunDirectory dir(rout);
      dir.create();
      write_json(dir.config(), config_snapshot(cfg, spec));
      RunResult r = run_random_variant(static_cast<RandomVariant>(variant), ref_log, cfg, data,
                                       checkpoint_hooks(dir));
      write_run(dir, r);
      summary(r);
    } else if (*train) {
      SearchConfig cfg = tflags.config;
      std::mt19937_64 init = derive_stream(cfg.seed, "init");
      SupernetModel model = parse_genotype(read_text(run_file(genotype_path, "genotype_final.json")), init);
      const DatasetSpec spec = make_spec(tdata);
      std::cout << "seed=" << cfg.seed << "\n";
      const Dataset data = load_dataset(spec, cfg.seed);
      if (model.config.input_channels != data.channels() ||
          model.config.image_size != data.image_size() || model.config.classes != data.classes) {
        throw ConfigError("genotype input shape or class count does not match the dataset");
      }
      cfg.reductions = model.config.reductions;
      cfg.init_channels = model.config.init_channels;
      cfg.dropout = model.config.dropout;
      cfg.cycles = 1;
      validate(cfg);
      std::mt19937_64 rng = derive_stream(cfg.seed, "final");
      TrainPhase phase{cfg.train_epochs, cfg.base_lr, cfg.batch_size, !no_prune, kFinalPhase, {}};
      const TrainOutcome t = train_prune_cycle(model, data, phase, rng);
      const RunDirectory dir(tout);
      dir.create();
      write_atomic(dir.final_genotype(), serialize_genotype(model));
      write_json(dir.weights(), weights_json(model));
      const double acc = evaluate_accuracy(model, data);
      write_json(dir.report(), json{{"format", kReportFormat},
                                    {"variant", "train"},
                                    {"seed", cfg.seed},
                                    {"test_accuracy", acc},
                                    {"parameter_count", parameter_count(model)},
                                    {"deadheaded", t.deleted},
                                    {"genotype", "genotype_final.json"}});
      std::cout << "train: test_accuracy=" << acc << " params=" << parameter_count(model) << "\n";
    } else if (*eval) {
      const fs::path wfile = run_file(weights_path, "weights_final.json");
      fs::path cfile = eval_config;
      if (cfile.empty() && fs::exists(wfile.parent_path() / "config.json") &&
          edata.kind == "synthetic" && edata.path.empty()) {
        cfile = wfile.parent_path() / "config.json";
      }
      DatasetSpec spec = make_spec(edata);
      std::uint64_t seed = eseed;
      if (!cfile.empty()) {
        const json snap = read_json(cfile);
        spec = dataset_spec_from_json(snap.at("dataset"));
        seed = snap.at("seed").get<std::uint64_t>();
      }
      SupernetModel model = model_from_weights(read_json(wfile));
      const Dataset data = load_dataset(spec, seed);
      const double acc = evaluate_accuracy(model, data);
      std::cout << json{{"test_accuracy", acc}, {"parameter_count", parameter_count(model)}}.dump()
                << "\n";
    } else if (*dot) {
      std::mt19937_64 rng(0);
      const SupernetModel model = parse_genotype(read_text(run_file(dot_path, "genotype_final.json")), rng);
      std::cout << export_dot(model);
    }
  } catch (const Error& e) {
    std::cerr << "spidernet: " << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "spidernet: format error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "spidernet: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
