#pragma once

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <fstream>
#include <string>
#include <vector>

#include "sdx/io/archive.hpp"
#include "sdx/io/png.hpp"
#include "sdx/pipeline/config.hpp"
#include "sdx/pipeline/report.hpp"

namespace sdx::pipeline {

namespace fs = std::filesystem;

using Log = std::function<void(const std::string&)>;

// Resolved configuration plus the on-disk layout of one run.
struct RunContext {
  json config;
  Sections s;
  fs::path out;
  Log log = [](const std::string& m) { std::cerr << "[sdx] " << m << '\n'; };

  explicit RunContext(json cfg) : config(std::move(cfg)), s(parse_sections(config)), out(output_dir(config)) {}

  fs::path path(const std::string& rel) const { return out / rel; }
  fs::path classifier_base() const { return path("spectrograms/classifier"); }
  fs::path generative_base() const { return path("spectrograms/generative"); }
  fs::path split_path() const { return path("split.json"); }
  fs::path gen_checkpoint(const std::string& model, eeg::Label l) const {
    return path("gen/" + model + "-" + eeg::label_name(l) + ".ckpt");
  }
  fs::path report_path(const std::string& kind) const { return path("reports/" + kind + ".json"); }

  RunManifest manifest(const std::string& split_hash = {}) const {
    return {config_hash(config), s.seed, kCodeVersion, split_hash};
  }
};

inline std::vector<float> preview_pixels(const ImageSet& set, std::size_t i) {
  return {set.image(i), set.image(i) + set.image_size()};
}

inline json stage_ingest(RunContext& ctx) {
  ctx.log("ingest: " + ctx.s.dataset_path);
  std::size_t segments = 0;
  const auto manifest = eeg::ingest_dataset(
      ctx.s.dataset_path, ctx.s.format,
      [&](const eeg::ManifestEntry&, std::vector<eeg::SegmentVector>&& segs) { segments += segs.size(); },
      [&](const std::string& w) { ctx.log("warning: " + w); });
  const json j = {{"subjects", manifest.size()},
                  {"segments", segments},
                  {"seed", ctx.s.seed},
                  {"config_hash", config_hash(ctx.config)},
                  {"entries", eeg::manifest_to_json(manifest)}};
  write_json(ctx.path("dataset_manifest.json"), j);
  ctx.log("ingest: " + std::to_string(manifest.size()) + " subjects, " + std::to_string(segments) + " segments");
  return j;
}

// Ingests and writes both spectrogram archives (resized classifier inputs and
// native-size generative inputs) plus one preview per class.
inline spectral::SpectrogramDataset stage_spectrogram(RunContext& ctx) {
  spectral::SpectrogramBuilder b(ctx.s.stft, ctx.s.resize_h, ctx.s.resize_w);
  const auto manifest = eeg::ingest_dataset(
      ctx.s.dataset_path, ctx.s.format,
      [&](const eeg::ManifestEntry& e, std::vector<eeg::SegmentVector>&& segs) {
        b.add(segs);
        ctx.log("spectrogram: " + e.subject_id + " -> " + std::to_string(segs.size()) + " segments");
      },
      [&](const std::string& w) { ctx.log("warning: " + w); });
  auto ds = b.take();
  json params = {{"stft", ctx.s.stft.to_json()},
                 {"transform", "log10(1+p) then per-image min-max"},
                 {"seed", ctx.s.seed},
                 {"config_hash", config_hash(ctx.config)}};
  fs::create_directories(ctx.classifier_base().parent_path());
  io::save_image_set(ctx.classifier_base().string(), ds.classifier, params);
  io::save_image_set(ctx.generative_base().string(), ds.generative, params);
  write_json(ctx.path("dataset_manifest.json"),
             {{"subjects", manifest.size()},
              {"segments", ds.classifier.size()},
              {"seed", ctx.s.seed},
              {"config_hash", config_hash(ctx.config)},
              {"entries", eeg::manifest_to_json(manifest)}});
  for (auto l : {eeg::Label::norm, eeg::Label::sch}) {
    const auto idx = ds.classifier.indices_of(l);
    if (idx.empty()) continue;
    io::write_png(ctx.path(std::string("spectrograms/preview_") + eeg::label_name(l) + ".png").string(),
                  preview_pixels(ds.generative, idx[0]), ds.generative.height, ds.generative.width);
    io::write_png(ctx.path(std::string("spectrograms/preview_") + eeg::label_name(l) + "_resized.png").string(),
                  preview_pixels(ds.classifier, idx[0]), ds.classifier.height, ds.classifier.width);
  }
  ctx.log("spectrogram: " + std::to_string(ds.classifier.size()) + " images, native " +
          std::to_string(ds.generative.height) + "x" + std::to_string(ds.generative.width));
  return ds;
}

inline ImageSet load_archive(const fs::path& base) {
  if (!fs::exists(base.string() + ".json"))
    throw DataError("missing spectrogram archive '" + base.string() + "'; run the spectrogram stage first");
  return io::load_image_set(base.string());
}
inline ImageSet load_classifier_set(const RunContext& ctx) { return load_archive(ctx.classifier_base()); }
inline ImageSet load_generative_set(const RunContext& ctx) { return load_archive(ctx.generative_base()); }

// Reuses a persisted split when present (it must match the configured
// fraction and seed), otherwise creates and persists one.
inline PersistedSplit ensure_split(RunContext& ctx, const ImageSet& real) {
  if (fs::exists(ctx.split_path())) {
    auto p = load_split(ctx.split_path().string());
    if (p.manifest().seed != ctx.s.seed || p.manifest().fraction != ctx.s.split_fraction)
      throw ConfigError("existing split '" + ctx.split_path().string() +
                        "' was made with a different seed or fraction; remove it or use another output_dir");
    apply_split(real, p.manifest());
    return p;
  }
  auto m = split_before_augment(real, ctx.s.split_fraction, ctx.s.seed);
  auto p = persist_split(m, ctx.split_path().string());
  ctx.log("split: " + std::to_string(m.train_ids.size()) + " train / " + std::to_string(m.test_ids.size()) +
          " test, manifest " + p.hash());
  return p;
}

inline json stage_train_cnn(RunContext& ctx) {
  const auto real = load_classifier_set(ctx);
  const auto split = ensure_split(ctx, real);
  const auto sets = apply_split(real, split.manifest());
  auto m = classifier::build_proposed_cnn<float>(ctx.s.seed, ctx.s.cnn_arch);
  ctx.log("train-cnn: " + std::to_string(m.parameter_count()) + " parameters, " + std::to_string(sets.train.size()) +
          " training images");
  const auto hist = classifier::train_classifier(m, sets.train, &sets.test, ctx.s.cnn_train, [&](const auto& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "train-cnn: epoch %d loss %.4f acc %.4f test_acc %.4f", e.epoch, e.train_loss,
                  e.train_acc, e.test_acc.value_or(0.0));
    ctx.log(buf);
  });
  fs::create_directories(ctx.path("cnn"));
  save_checkpoint(classifier::classifier_checkpoint(m, {{"split_hash", split.hash()}}), ctx.path("cnn/baseline.ckpt").string());
  hist.write_csv(ctx.path("cnn/baseline_history.csv").string());
  const auto ev = classifier::evaluate(m, sets.test, ctx.s.cnn_train.batch_size);
  std::vector<int> truth;
  for (auto l : sets.test.labels) truth.push_back(static_cast<int>(l));
  const auto rep = metrics::evaluate_predictions(truth, ev.predicted, ev.positive_scores);
  if (rep.roc) metrics::write_roc_csv(ctx.path("cnn/baseline_roc.csv").string(), *rep.roc);
  auto body = metrics::to_json(rep);
  body["loss"] = ev.loss;
  body["parameters"] = m.parameter_count();
  body["epochs_run"] = hist.epochs.size();
  body["train_size"] = sets.train.size();
  const auto report = make_report("baseline", ctx.manifest(split.hash()),
                                  leakage_section(split.manifest(), {&sets.train}, sets.test), {{"baseline", body}});
  write_json(ctx.report_path("baseline"), report);
  ctx.log("train-cnn: test accuracy " + std::to_string(ev.accuracy));
  return report;
}

inline void stage_train_gen(RunContext& ctx, const std::vector<std::string>& models) {
  const auto real = load_classifier_set(ctx);
  const auto split = ensure_split(ctx, real);
  const auto native = load_generative_set(ctx);
  const auto train_ids = std::set<std::string>(split.manifest().train_ids.begin(), split.manifest().train_ids.end());
  for (const auto& model : models) {
    const auto kind = generative::parse_gen_kind(model);
    for (auto l : {eeg::Label::norm, eeg::Label::sch}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < native.size(); ++i)
        if (native.labels[i] == l && train_ids.count(native.key(i))) idx.push_back(i);
      const auto set = native.subset(idx);
      ctx.log("train-gen: " + model + "/" + eeg::label_name(l) + " on " + std::to_string(set.size()) + " images");
      auto sched = ctx.s.gen;
      sched.seed = Rng::mix(ctx.s.seed + (kind == generative::GenKind::vae ? 0 : 2) + static_cast<int>(l));
      const auto r = generative::train_generative(kind, l, set, sched, ctx.s.gen_archs, [&](const auto& e) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "train-gen: %s/%s epoch %d loss %.5f", model.c_str(), eeg::label_name(l),
                      e.epoch, kind == generative::GenKind::vae ? e.loss : e.critic_loss);
        ctx.log(buf);
      });
      auto ck = r.checkpoint;
      ck.meta["split_hash"] = split.hash();
      fs::create_directories(ctx.gen_checkpoint(model, l).parent_path());
      save_checkpoint(ck, ctx.gen_checkpoint(model, l).string());
      write_text(ctx.path("gen/" + model + "-" + eeg::label_name(l) + "_history.csv"), r.history.to_csv());
    }
  }
}

inline ClassCheckpoints load_class_checkpoints(const RunContext& ctx, const std::string& model) {
  ClassCheckpoints c;
  for (auto l : {eeg::Label::norm, eeg::Label::sch}) {
    const auto p = ctx.gen_checkpoint(model, l);
    if (!fs::exists(p)) throw DataError("missing generative checkpoint '" + p.string() + "'; run train-gen first");
    (l == eeg::Label::norm ? c.norm : c.sch) = load_checkpoint(p.string());
  }
  return c;
}

inline ImageSet stage_sample(RunContext& ctx, const std::string& model, eeg::Label l, int count,
                             const std::string& name) {
  const auto ck = load_checkpoint(ctx.gen_checkpoint(model, l).string());
  auto set = generative::sample_synthetic(ck, count, l, ctx.s.seed);
  const auto base = ctx.path("samples/" + name);
  fs::create_directories(base.parent_path());
  io::save_image_set(base.string(), set, {{"model", model}, {"label", eeg::label_name(l)}, {"seed", ctx.s.seed}});
  io::write_png(base.string() + "_0.png", preview_pixels(set, 0), set.height, set.width);
  ctx.log("sample: wrote " + std::to_string(set.size()) + " " + model + " images to " + base.string());
  return set;
}

inline json stage_sweep(RunContext& ctx) {
  const auto real = load_classifier_set(ctx);
  const auto split = ensure_split(ctx, real);
  const auto sets = apply_split(real, split.manifest());
  std::map<std::string, ClassCheckpoints> ck;
  for (const auto& m : ctx.s.sweep.models) ck[m] = load_class_checkpoints(ctx, m);
  const auto rows = run_sweep(sets.train, sets.test, split, ck, ctx.s.sweep, [&](const SweepRow& r) {
    ctx.log("sweep: " + r.model + " " + r.row_label() + " acc " + std::to_string(r.accuracy) + " loss " +
            std::to_string(r.loss));
  });
  write_text(ctx.path("reports/sweep.csv"), sweep_csv(rows));
  const auto report = make_report("sweep", ctx.manifest(split.hash()),
                                  leakage_section(split.manifest(), {&sets.train}, sets.test), {{"sweep", sweep_json(rows)}});
  write_json(ctx.report_path("sweep"), report);
  return report;
}

inline json stage_final(RunContext& ctx) {
  const auto real = load_classifier_set(ctx);
  const auto split = ensure_split(ctx, real);
  const auto sets = apply_split(real, split.manifest());
  const auto ck = load_class_checkpoints(ctx, ctx.s.final_cmp.model);
  const auto rows = run_final_comparison(sets.train, sets.test, split, ck, ctx.s.final_cmp);
  for (const auto& r : rows) {
    if (r.metrics.roc) metrics::write_roc_csv(ctx.path("reports/final_" + r.name + "_roc.csv").string(), *r.metrics.roc);
    r.history.write_csv(ctx.path("reports/final_" + r.name + "_history.csv").string());
    ctx.log("final: " + r.name + " accuracy " + std::to_string(r.metrics.scalars.accuracy.value_or(0)));
  }
  const auto augmented = augment_dataset(sets.train, split, ck, ctx.s.final_cmp.add_norm, ctx.s.final_cmp.add_sch,
                                         Rng::mix(ctx.s.final_cmp.seed));
  const auto report =
      make_report("final", ctx.manifest(split.hash()),
                  leakage_section(split.manifest(), {&sets.train, &augmented}, sets.test), {{"final", final_json(rows)}});
  write_json(ctx.report_path("final"), report);
  return report;
}

inline json stage_explain(RunContext& ctx, const std::string& checkpoint) {
  const auto real = load_classifier_set(ctx);
  const auto split = ensure_split(ctx, real);
  const auto sets = apply_split(real, split.manifest());
  auto m = classifier::classifier_from_checkpoint<float>(load_checkpoint(checkpoint));
  const auto seg = lime::grid_segment(sets.test.height, sets.test.width, ctx.s.lime_cell);
  const lime::PredictFn predict = [&](const Tensor<float>& b) { return classifier::predict_proba(m, b); };
  json items = json::array();
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, ctx.s.lime_items)), sets.test.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto cfg = ctx.s.lime;
    cfg.seed = Rng::mix(ctx.s.seed + i);
    const auto e = lime::explain_instance(predict, preview_pixels(sets.test, i), seg, cfg);
    const auto base = ctx.path("explain/item_" + std::to_string(i));
    fs::create_directories(base.parent_path());
    lime::write_heatmap(base.string(), e, seg, cfg,
                        {{"id", sets.test.key(i)}, {"label", eeg::label_name(sets.test.labels[i])}});
    io::write_png(base.string() + "_input.png", preview_pixels(sets.test, i), sets.test.height, sets.test.width);
    items.push_back({{"id", sets.test.key(i)}, {"target_class", e.target_class}, {"fidelity", e.fidelity}});
    ctx.log("explain: " + sets.test.key(i) + " fidelity " + std::to_string(e.fidelity));
  }
  const auto report = make_report("explain", ctx.manifest(split.hash()),
                                  leakage_section(split.manifest(), {&sets.train}, sets.test),
                                  {{"explain", {{"checkpoint", checkpoint}, {"segments", seg.segments}, {"items", items}}}});
  write_json(ctx.report_path("explain"), report);
  return report;
}

// Train-on-synthetic protocol plus the latent-space distribution audit.
inline json stage_audit(RunContext& ctx) {
  const auto real = load_classifier_set(ctx);
  const auto split = ensure_split(ctx, real);
  const auto sets = apply_split(real, split.manifest());
  const auto vae = load_class_checkpoints(ctx, "vae");
  const auto wgan = load_class_checkpoints(ctx, "wgan");
  ctx.log("audit: train-on-synthetic protocol");
  const auto protocol = audit::train_on_synthetic_protocol(vae, wgan, sets.test, ctx.s.protocol);

  const auto native = load_generative_set(ctx);
  const std::set<std::string> train_ids(split.manifest().train_ids.begin(), split.manifest().train_ids.end());
  const auto test_ids = split.manifest().test_set();
  std::vector<std::size_t> idx, held;
  for (std::size_t i = 0; i < native.size(); ++i) {
    if (train_ids.count(native.key(i))) idx.push_back(i);
    if (test_ids.count(native.key(i))) held.push_back(i);
  }
  const auto real_train = native.subset(idx);
  ctx.log("audit: fitting latent autoencoder on " + std::to_string(real_train.size()) + " real images");
  auto ae = audit::fit_latent_autoencoder<float>(real_train, ctx.s.autoencoder, [&](int epoch, double loss) {
    ctx.log("audit: autoencoder epoch " + std::to_string(epoch) + " mse " + std::to_string(loss));
  });
  auto points = ae.embed(native);
  const int per_model = ctx.s.audit_per_model;
  Rng seeds(ctx.s.seed ^ 0x5EEDULL);
  for (const auto* ck : {&vae, &wgan}) {
    const int per_class = per_model / 2;
    auto synth = generative::sample_synthetic(ck->norm, per_class, eeg::Label::norm, seeds.next_u64());
    synth.append(generative::sample_synthetic(ck->sch, per_model - per_class, eeg::Label::sch, seeds.next_u64()));
    for (auto& p : ae.embed(synth)) points.push_back(std::move(p));
  }
  auto tsne_cfg = ctx.s.tsne;
  const double max_perp = (static_cast<double>(points.size()) - 1.0) / 3.0;
  if (tsne_cfg.perplexity >= max_perp) throw ConfigError("t-SNE perplexity too large for " + std::to_string(points.size()) + " points");
  ctx.log("audit: t-SNE over " + std::to_string(points.size()) + " points");
  const auto emb = audit::tsne_embed(points, tsne_cfg);
  fs::create_directories(ctx.path("audit"));
  audit::write_embedding_csv(ctx.path("audit/embedding.csv").string(), emb.coords, points);
  std::vector<spectral::Origin> origin;
  for (const auto& p : points) origin.push_back(p.origin);
  json kl = json::array();
  for (const auto& k : emb.kl_history) kl.push_back({k.iteration, k.kl});
  const json body = {
      {"protocol", protocol_json(protocol)},
      {"autoencoder",
       {{"bottleneck", ae.bottleneck()},
        {"loss_history", ae.loss_history},
        {"heldout_mse", ae.reconstruction_mse(native.subset(held))}}},
      {"tsne",
       {{"config", tsne_cfg.to_json()},
        {"points", points.size()},
        {"kl_initial", emb.kl_history.front().kl},
        {"kl_final", emb.kl_history.back().kl},
        {"kl_history", kl},
        {"uncalibrated_rows", emb.uncalibrated_rows}}},
      {"overlap",
       {{"k", 10},
        {"vae_real", audit::knn_overlap(emb.coords, origin, spectral::Origin::vae, spectral::Origin::real)},
        {"wgan_real", audit::knn_overlap(emb.coords, origin, spectral::Origin::wgan, spectral::Origin::real)}}}};
  const auto report = make_report("audit", ctx.manifest(split.hash()),
                                  leakage_section(split.manifest(), {&sets.train}, sets.test), {{"audit", body}});
  write_json(ctx.report_path("audit"), report);
  return report;
}

// Collects every stage report into one summary, re-checking leakage.
inline json stage_report(RunContext& ctx) {
  const auto real = load_classifier_set(ctx);
  const auto split = ensure_split(ctx, real);
  const auto sets = apply_split(real, split.manifest());
  json stages = json::object();
  for (const char* kind : {"baseline", "sweep", "final", "explain", "audit"}) {
    const auto p = ctx.report_path(kind);
    if (!fs::exists(p)) continue;
    std::ifstream f(p);
    const auto j = json::parse(f);
    if (!j.at("leakage_check").at("passed").get<bool>()) throw DataError(std::string(kind) + " report failed its leakage check");
    if (j.at("manifest").value("split_hash", std::string()) != split.hash())
      throw DataError(std::string(kind) + " report was produced from a different split");
    stages[kind] = j;
  }
  const auto report = make_report("summary", ctx.manifest(split.hash()),
                                  leakage_section(split.manifest(), {&sets.train}, sets.test),
                                  {{"config", ctx.config}, {"stages", stages}});
  write_json(ctx.report_path("report"), report);
  ctx.log("report: " + ctx.report_path("report").string());
  return report;
}

// Runs the enabled stages in order. The 19-channel path stops after the
// baseline classifier.
inline void run_pipeline(RunContext& ctx) {
  const auto& st = ctx.config.at("stages");
  auto on = [&](const char* k) { return st.value(k, false); };
  if ((on("ingest") || on("spectrogram")) && !fs::exists(ctx.s.dataset_path))
    throw ConfigError("dataset.path '" + ctx.s.dataset_path + "' does not exist");
  if (on("ingest")) stage_ingest(ctx);
  if (on("spectrogram")) stage_spectrogram(ctx);
  if (on("train_cnn")) stage_train_cnn(ctx);
  if (ctx.s.channels == 16) {
    if (on("train_gen")) stage_train_gen(ctx, {"vae", "wgan"});
    if (on("sweep")) stage_sweep(ctx);
    if (on("final")) stage_final(ctx);
    if (on("audit")) stage_audit(ctx);
  }
  if (on("explain") && fs::exists(ctx.path("cnn/baseline.ckpt"))) stage_explain(ctx, ctx.path("cnn/baseline.ckpt").string());
  stage_report(ctx);
}

}  // namespace sdx::pipeline
