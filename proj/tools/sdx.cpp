#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "sdx/eeg/synthetic.hpp"
#include "sdx/pipeline/stages.hpp"

using namespace sdx;
using namespace sdx::pipeline;

namespace {

struct Globals {
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
  std::string dataset;
  std::string format;
  long long seed = -1;
  bool quiet = false;
};

RunContext make_context(const Globals& g, bool require_dataset) {
  auto overrides = g.overrides;
  if (!g.output.empty()) overrides.push_back("output_dir=" + json(g.output).dump());
  if (!g.dataset.empty()) overrides.push_back("dataset.path=" + json(g.dataset).dump());
  if (!g.format.empty()) overrides.push_back("dataset.format=" + json(g.format).dump());
  if (g.seed >= 0) overrides.push_back("seed=" + std::to_string(g.seed));
  RunContext ctx(resolve_config(g.config, overrides, require_dataset));
  if (g.quiet) ctx.log = [](const std::string&) {};
  std::filesystem::create_directories(ctx.out);
  write_json(ctx.path("config.resolved.json"), ctx.config);
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sdx: EEG spectrogram classification with generative augmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", g.overrides, "Override a config key, e.g. --set cnn.epochs=5")->take_all();
  app.add_option("-o,--output", g.output, "Output directory");
  app.add_option("--dataset", g.dataset, "Dataset root");
  app.add_option("--format", g.format, "Dataset format")->check(CLI::IsMember({"column_text", "edf"}));
  app.add_option("--seed", g.seed, "Master seed")->check(CLI::NonNegativeNumber);
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  auto* ingest = app.add_subcommand("ingest", "Validate the dataset and write dataset_manifest.json");
  auto* spec = app.add_subcommand("spectrogram", "Build classifier and generative spectrogram archives");
  auto* cnn = app.add_subcommand("train-cnn", "Train the baseline classifier on the real training split");

  auto* gen = app.add_subcommand("train-gen", "Train per-class generative models");
  std::vector<std::string> gen_models{"vae", "wgan"};
  gen->add_option("-m,--model", gen_models, "vae and/or wgan")->check(CLI::IsMember({"vae", "wgan"}));

  auto* sample = app.add_subcommand("sample", "Sample synthetic spectrograms from a trained model");
  std::string sample_model = "vae", sample_label = "norm", sample_name;
  int sample_count = 16;
  sample->add_option("-m,--model", sample_model)->check(CLI::IsMember({"vae", "wgan"}));
  sample->add_option("-l,--label", sample_label)->check(CLI::IsMember({"norm", "sch"}));
  sample->add_option("-n,--count", sample_count)->check(CLI::PositiveNumber);
  sample->add_option("--name", sample_name, "Archive name under samples/");

  auto* sweep = app.add_subcommand("sweep", "Augmentation-size sweep");
  auto* fin = app.add_subcommand("final", "Augmented vs non-augmented comparison");

  auto* explain = app.add_subcommand("explain", "LIME heatmaps for test spectrograms");
  std::string explain_ckpt;
  explain->add_option("--checkpoint", explain_ckpt, "Classifier checkpoint (default cnn/baseline.ckpt)");

  auto* aud = app.add_subcommand("audit", "Train-on-synthetic protocol and latent t-SNE audit");
  auto* rep = app.add_subcommand("report", "Collect stage reports into reports/report.json");
  auto* run = app.add_subcommand("run", "Run every stage enabled in the config");

  auto* synth = app.add_subcommand("synth-data", "Write a synthetic band-power corpus for smoke tests");
  std::string synth_root;
  int synth_subjects = 4;
  bool synth_edf = false;
  std::uint64_t synth_seed = 1;
  synth->add_option("root", synth_root, "Destination directory")->required();
  synth->add_option("-n,--subjects", synth_subjects, "Subjects per class")->check(CLI::PositiveNumber);
  synth->add_flag("--edf", synth_edf, "19-channel EDF instead of 16-channel text");
  synth->add_option("--synth-seed", synth_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      eeg::write_band_power_corpus(synth_root, synth_subjects, synth_edf, synth_seed);
      std::cout << synth_root << '\n';
      return 0;
    }
    auto ctx = make_context(g, ingest->parsed() || spec->parsed());
    if (ingest->parsed()) stage_ingest(ctx);
    else if (spec->parsed()) stage_spectrogram(ctx);
    else if (cnn->parsed()) stage_train_cnn(ctx);
    else if (gen->parsed()) stage_train_gen(ctx, gen_models);
    else if (sample->parsed())
      stage_sample(ctx, sample_model, sample_label == "norm" ? eeg::Label::norm : eeg::Label::sch, sample_count,
                   sample_name.empty() ? sample_model + "-" + sample_label : sample_name);
    else if (sweep->parsed()) stage_sweep(ctx);
    else if (fin->parsed()) stage_final(ctx);
    else if (explain->parsed())
      stage_explain(ctx, explain_ckpt.empty() ? ctx.path("cnn/baseline.ckpt").string() : explain_ckpt);
    else if (aud->parsed()) stage_audit(ctx);
    else if (rep->parsed()) stage_report(ctx);
    else if (run->parsed()) run_pipeline(ctx);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
