#include "adafusion/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void addCommon(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "run configuration (JSON)")->required();
  cmd->add_option("--set", args.overrides,
                  "override a config value, e.g. --set train.seed=7 (repeatable)");
}

adafusion::LoadedConfig loadAndAnnounce(const CommonArgs& args) {
  adafusion::LoadedConfig loaded = adafusion::loadRunConfig(args.config_path, args.overrides);
  std::cout << "config_hash=" << adafusion::hashHex(loaded.hash) << "\n";
  return loaded;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdaFusion place recognition pipeline"};
  app.require_subcommand(1);

  CommonArgs synth_args, prepare_args, train_args, embed_args, eval_args, report_args;
  std::string embed_checkpoint, eval_checkpoint, eval_db, report_db;
  std::vector<std::string> embed_sequences;

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  addCommon(synth, synth_args);

  CLI::App* prepare = app.add_subcommand(
      "prepare", "index sequences, split regions and mine training pairs");
  addCommon(prepare, prepare_args);

  CLI::App* train = app.add_subcommand("train", "train a model on the prepared index");
  addCommon(train, train_args);

  CLI::App* embed = app.add_subcommand("embed", "embed frames into a descriptor database");
  addCommon(embed, embed_args);
  embed->add_option("--checkpoint", embed_checkpoint, "checkpoint to embed with")->required();
  embed->add_option("--sequences", embed_sequences, "sequences to embed (default: configured)");

  CLI::App* evaluate = app.add_subcommand("eval", "recall@N over all sequence combinations");
  addCommon(evaluate, eval_args);
  evaluate->add_option("--db", eval_db, "existing descriptor database");
  evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint to embed with (if no --db)");

  CLI::App* report = app.add_subcommand("weights-report", "per-frame adaptive weight ratios");
  addCommon(report, report_args);
  report->add_option("--db", report_db, "descriptor database (default: eval.db from config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto result = adafusion::runSynth(loadAndAnnounce(synth_args));
      std::cout << "wrote " << result.frames << " frames across " << result.sequences
                << " sequences under " << result.root << "\n";
    } else if (prepare->parsed()) {
      const auto result = adafusion::runPrepare(loadAndAnnounce(prepare_args));
      std::cout << "frames: " << result.frames << " (train " << result.train_frames << ", test "
                << result.test_frames << ")\n"
                << "pairs: " << result.positive_pairs << " positive, " << result.negative_pairs
                << " negative\n"
                << "index: " << result.frames_csv << "\n";
    } else if (train->parsed()) {
      const auto result = adafusion::runTrain(loadAndAnnounce(train_args));
      std::printf("trained %ld steps, best validation AR@1 %.4f\n", result.steps,
                  result.best_ar1);
      std::cout << "checkpoint: " << result.checkpoint_path << "\n"
                << "log: " << result.log_path << "\n";
    } else if (embed->parsed()) {
      const auto result =
          adafusion::runEmbed(loadAndAnnounce(embed_args), embed_checkpoint, embed_sequences);
      std::cout << "embedded " << result.frames << " frames into " << result.db_path << "\n";
    } else if (evaluate->parsed()) {
      const auto result = adafusion::runEval(loadAndAnnounce(eval_args), eval_db, eval_checkpoint);
      std::printf("AR@1 %.4f  AR@1%% %.4f over %d combinations\n", result.ar1, result.ar1pct,
                  result.combinations);
      std::cout << "results: " << result.results_csv << "\n";
    } else if (report->parsed()) {
      const auto result = adafusion::runWeightsReport(loadAndAnnounce(report_args), report_db);
      std::printf("mean alpha_I %.4f, mean alpha_P %.4f\n", result.mean_alpha_i,
                  result.mean_alpha_p);
      std::cout << "report: " << result.csv_path << "\n";
    }
  } catch (const adafusion::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const adafusion::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const adafusion::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
