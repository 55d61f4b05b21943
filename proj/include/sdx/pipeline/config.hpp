#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sdx/audit/tsne.hpp"
#include "sdx/eeg/dataset.hpp"
#include "sdx/lime/lime.hpp"
#include "sdx/pipeline/experiments.hpp"

namespace sdx::pipeline {

using nlohmann::json;

// Declarative experiment description. Every section is optional in the file;
// missing keys take the reference defaults.
inline json default_config() {
  const spectral::StftConfig stft;
  const classifier::CnnArch cnn;
  const generative::VaeArch vae;
  const generative::WganArch wgan;
  const audit::AutoencoderConfig ae;
  const audit::TsneConfig tsne;
  return {
      {"seed", 0},
      {"output_dir", "runs/default"},
      {"dataset", {{"path", ""}, {"format", "column_text"}, {"channels", 16}}},
      {"stages",
       {{"ingest", true},
        {"spectrogram", true},
        {"train_cnn", true},
        {"train_gen", true},
        {"sweep", true},
        {"final", true},
        {"explain", true},
        {"audit", true}}},
      {"stft", stft.to_json()},
      {"resize", {{"height", 128}, {"width", 128}}},
      {"split", {{"fraction", 0.2}}},
      {"cnn",
       {{"arch", cnn.to_json()}, {"learning_rate", 8e-5}, {"batch_size", 32}, {"epochs", 100}}},
      {"generative",
       {{"epochs", 100},
        {"batch_size", 32},
        {"vae_learning_rate", 8e-5},
        {"gp_lambda", 10.0},
        {"n_critic", 3},
        {"critic_learning_rate", 1e-4},
        {"generator_learning_rate", 1e-4},
        {"vae", vae.to_json()},
        {"wgan", wgan.to_json()}}},
      {"sweep",
       {{"models", {"vae", "wgan"}},
        {"rows", {{230, 200}, {330, 300}, {430, 400}, {630, 600}, {730, 700}, {830, 800}}},
        {"learning_rate", 1e-5},
        {"max_epochs", 300},
        {"converge_window", 10},
        {"converge_tol", 1e-4},
        {"repeats", 1}}},
      {"final", {{"model", "vae"}, {"add_norm", 730}, {"add_sch", 700}, {"learning_rate", 8e-5}, {"epochs", 100}}},
      {"protocol", {{"per_class", 600}, {"learning_rate", 1e-5}, {"epochs", 300}}},
      {"autoencoder", ae.to_json()},
      {"tsne", tsne.to_json()},
      {"audit", {{"per_model", 1008}}},
      {"lime", {{"cell", 16}, {"num_samples", 1000}, {"kernel_width", 0.25}, {"alpha", 1.0}, {"replacement", "mean"},
                {"items", 4}}},
  };
}

// Recursive merge: objects merge key-wise, everything else replaces.
inline void merge_into(json& base, const json& over) {
  if (!over.is_object() || !base.is_object()) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      merge_into(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

// "a.b.c=value"; value parsed as JSON when possible, else taken as a string.
inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const auto path = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline json load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config file '" + path + "' not found");
  try {
    return json::parse(f, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

inline std::string config_hash(const json& cfg) { return hex64(fnv1a64(cfg.dump())); }

// Output directory: SDX_OUTPUT_ROOT, when set, prefixes relative paths.
inline std::filesystem::path output_dir(const json& cfg) {
  std::filesystem::path p = cfg.at("output_dir").get<std::string>();
  if (const char* root = std::getenv("SDX_OUTPUT_ROOT"); root && *root && p.is_relative()) p = std::filesystem::path(root) / p;
  return p;
}

// Typed views over the JSON sections.
struct Sections {
  std::uint64_t seed = 0;
  eeg::DatasetFormat format = eeg::DatasetFormat::column_text;
  std::string dataset_path;
  int channels = 16;
  spectral::StftConfig stft;
  int resize_h = 128, resize_w = 128;
  double split_fraction = 0.2;
  classifier::CnnArch cnn_arch;
  classifier::TrainConfig cnn_train;
  generative::GenSchedule gen;
  generative::GenArchs gen_archs;
  SweepConfig sweep;
  FinalConfig final_cmp;
  audit::ProtocolConfig protocol;
  audit::AutoencoderConfig autoencoder;
  audit::TsneConfig tsne;
  int audit_per_model = 1008;
  int lime_cell = 16;
  int lime_items = 4;
  lime::SurrogateConfig lime;
};

inline Sections parse_sections(const json& c) {
  Sections s;
  try {
    s.seed = c.at("seed").get<std::uint64_t>();
    const auto& ds = c.at("dataset");
    s.dataset_path = ds.value("path", std::string());
    s.format = eeg::parse_format(ds.value("format", std::string("column_text")));
    s.channels = ds.value("channels", 16);
    if (s.channels != 16 && s.channels != 19) throw ConfigError("dataset.channels must be 16 or 19");

    const auto& st = c.at("stft");
    s.stft.nfft = st.value("nfft", s.stft.nfft);
    s.stft.nperseg = st.value("nperseg", s.stft.nperseg);
    s.stft.noverlap = st.value("noverlap", s.stft.noverlap);
    s.stft.tukey_alpha = st.value("tukey_alpha", s.stft.tukey_alpha);
    s.stft.periodic_window = st.value("periodic_window", s.stft.periodic_window);
    s.stft.detrend_constant = st.value("detrend_constant", s.stft.detrend_constant);
    if (st.value("window", std::string("tukey")) != "tukey") throw ConfigError("only the Tukey window is supported");
    s.stft.validate();
    s.resize_h = c.at("resize").value("height", 128);
    s.resize_w = c.at("resize").value("width", 128);
    s.split_fraction = c.at("split").value("fraction", 0.2);

    const auto& cnn = c.at("cnn");
    s.cnn_arch = classifier::CnnArch::from_json(cnn.value("arch", json::object()));
    s.cnn_arch.input_height = s.resize_h;
    s.cnn_arch.input_width = s.resize_w;
    s.cnn_train.optimizer.learning_rate = cnn.value("learning_rate", 8e-5);
    s.cnn_train.batch_size = cnn.value("batch_size", 32);
    s.cnn_train.epochs = cnn.value("epochs", 100);
    s.cnn_train.seed = s.seed;
    s.cnn_train.validate();

    const auto& g = c.at("generative");
    s.gen.epochs = g.value("epochs", 100);
    s.gen.batch_size = g.value("batch_size", 32);
    s.gen.seed = s.seed;
    s.gen.vae_optimizer.learning_rate = g.value("vae_learning_rate", 8e-5);
    s.gen.gp.lambda = g.value("gp_lambda", 10.0);
    s.gen.gp.n_critic = g.value("n_critic", 3);
    s.gen.gp.critic_optimizer.learning_rate = g.value("critic_learning_rate", 1e-4);
    s.gen.gp.generator_optimizer.learning_rate = g.value("generator_learning_rate", 1e-4);
    s.gen.validate();
    s.gen_archs.vae = generative::VaeArch::from_json(g.value("vae", json::object()));
    s.gen_archs.wgan = generative::WganArch::from_json(g.value("wgan", json::object()));

    const auto& sw = c.at("sweep");
    s.sweep.models = sw.value("models", s.sweep.models);
    s.sweep.rows.clear();
    for (const auto& r : sw.at("rows")) s.sweep.rows.emplace_back(r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>());
    s.sweep.train.optimizer.learning_rate = sw.value("learning_rate", 1e-5);
    s.sweep.train.epochs = sw.value("max_epochs", 300);
    s.sweep.train.converge_window = sw.value("converge_window", 10);
    s.sweep.train.converge_tol = sw.value("converge_tol", 1e-4);
    s.sweep.train.batch_size = s.cnn_train.batch_size;
    s.sweep.repeats = sw.value("repeats", 1);
    s.sweep.arch = s.cnn_arch;
    s.sweep.seed = s.seed;
    s.sweep.validate();

    const auto& f = c.at("final");
    s.final_cmp.model = f.value("model", std::string("vae"));
    s.final_cmp.add_norm = f.value("add_norm", std::size_t{730});
    s.final_cmp.add_sch = f.value("add_sch", std::size_t{700});
    s.final_cmp.train.optimizer.learning_rate = f.value("learning_rate", 8e-5);
    s.final_cmp.train.epochs = f.value("epochs", 100);
    s.final_cmp.train.batch_size = s.cnn_train.batch_size;
    s.final_cmp.arch = s.cnn_arch;
    s.final_cmp.seed = s.seed;
    s.final_cmp.train.validate();

    const auto& p = c.at("protocol");
    s.protocol.per_class = p.value("per_class", 600);
    s.protocol.train.optimizer.learning_rate = p.value("learning_rate", 1e-5);
    s.protocol.train.epochs = p.value("epochs", 300);
    s.protocol.train.batch_size = s.cnn_train.batch_size;
    s.protocol.arch = s.cnn_arch;
    s.protocol.seed = s.seed;
    s.protocol.validate();

    s.autoencoder = audit::AutoencoderConfig::from_json(c.at("autoencoder"));
    s.autoencoder.seed = c.at("autoencoder").value("seed", s.seed);
    s.autoencoder.validate();
    s.tsne = audit::TsneConfig::from_json(c.at("tsne"));
    s.tsne.seed = c.at("tsne").value("seed", s.seed);
    s.audit_per_model = c.at("audit").value("per_model", 1008);

    const auto& l = c.at("lime");
    s.lime_cell = l.value("cell", 16);
    s.lime_items = l.value("items", 4);
    s.lime.num_samples = l.value("num_samples", 1000);
    s.lime.kernel_width = l.value("kernel_width", 0.25);
    s.lime.alpha = l.value("alpha", 1.0);
    const auto rep = l.value("replacement", std::string("mean"));
    if (rep != "mean" && rep != "zero") throw ConfigError("lime.replacement must be 'mean' or 'zero'");
    s.lime.replacement = rep == "mean" ? lime::Replacement::mean : lime::Replacement::zero;
    s.lime.seed = s.seed;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return s;
}

// Full config = defaults <- file <- overrides; checked for consistency and,
// when ingest is enabled, for an existing dataset path.
inline json resolve_config(const std::string& file, const std::vector<std::string>& overrides, bool require_dataset) {
  json cfg = default_config();
  if (!file.empty()) merge_into(cfg, load_config_file(file));
  for (const auto& o : overrides) apply_override(cfg, o);
  const auto s = parse_sections(cfg);
  if (require_dataset) {
    if (s.dataset_path.empty()) throw ConfigError("dataset.path is not set");
    if (!std::filesystem::exists(s.dataset_path))
      throw ConfigError("dataset.path '" + s.dataset_path + "' does not exist");
  }
  return cfg;
}

}  // namespace sdx::pipeline
