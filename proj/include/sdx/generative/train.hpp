#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "sdx/generative/vae.hpp"
#include "sdx/generative/wgan.hpp"
#include "sdx/spectral/image_set.hpp"

namespace sdx::generative {

using spectral::ImageSet;

enum class GenKind { vae, wgan };

inline const char* gen_kind_name(GenKind k) { return k == GenKind::vae ? "vae" : "wgan"; }

inline GenKind parse_gen_kind(const std::string& s) {
  if (s == "vae") return GenKind::vae;
  if (s == "wgan") return GenKind::wgan;
  throw ConfigError("unknown generative model '" + s + "' (expected vae or wgan)");
}

struct GenSchedule {
  int epochs = 1;
  int batch_size = 32;
  std::uint64_t seed = 0;
  AdamConfig vae_optimizer{8e-5, 0.9, 0.999, 1e-8};
  GpConfig gp;

  void validate() const {
    if (epochs < 1) throw ConfigError("generative epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("generative batch_size must be >= 2");
    vae_optimizer.validate();
    gp.validate();
  }
};

struct GenEpoch {
  int epoch = 0;
  // VAE
  double loss = 0, recon = 0, kl = 0;
  // WGAN
  double critic_loss = 0, generator_loss = 0, wasserstein = 0, penalty = 0;
  long critic_steps = 0, generator_steps = 0;
};

struct GenHistory {
  GenKind kind = GenKind::vae;
  std::vector<GenEpoch> epochs;

  std::string to_csv() const {
    std::string out;
    char buf[256];
    if (kind == GenKind::vae) {
      out = "epoch,loss,recon,kl\n";
      for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", e.epoch, e.loss, e.recon, e.kl);
        out += buf;
      }
    } else {
      out = "epoch,critic_loss,generator_loss,wasserstein,gradient_penalty,critic_steps,generator_steps\n";
      for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%ld,%ld\n", e.epoch, e.critic_loss, e.generator_loss,
                      e.wasserstein, e.penalty, e.critic_steps, e.generator_steps);
        out += buf;
      }
    }
    return out;
  }

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << to_csv();
  }
};

namespace detail {

// Shuffled mini-batches; a trailing batch of one sample is dropped (batch
// statistics need two).
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(batch_size)) {
    const auto e = std::min(n, s + static_cast<std::size_t>(batch_size));
    if (e - s < 2) break;
    out.emplace_back(order.begin() + static_cast<long>(s), order.begin() + static_cast<long>(e));
  }
  return out;
}

}  // namespace detail

template <class T>
GenHistory train_vae(VaeModel<T>& m, const Tensor<T>& data, const GenSchedule& s,
                     const std::function<void(const GenEpoch&)>& on_epoch = {}) {
  s.validate();
  if (data.dim(0) < 2) throw DataError("VAE training needs at least two samples");
  Rng rng(s.seed);
  const auto params = m.parameters();
  GenHistory h;
  h.kind = GenKind::vae;
  for (int epoch = 1; epoch <= s.epochs; ++epoch) {
    GenEpoch rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    for (const auto& idx : detail::make_batches(static_cast<std::size_t>(data.dim(0)), s.batch_size, rng)) {
      auto terms = vae_elbo_loss(m, data.gather_rows(idx), rng);
      const double lv = static_cast<double>(terms.loss.value().item());
      if (!std::isfinite(lv)) throw NumericalError("VAE loss became non-finite at epoch " + std::to_string(epoch));
      backward(terms.loss);
      adam_step(params, s.vae_optimizer);
      const auto b = static_cast<double>(idx.size());
      rec.loss += lv * b;
      rec.recon += terms.recon * b;
      rec.kl += terms.kl * b;
      seen += idx.size();
    }
    rec.loss /= static_cast<double>(seen);
    rec.recon /= static_cast<double>(seen);
    rec.kl /= static_cast<double>(seen);
    h.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return h;
}

// For every real batch: n_critic critic updates, then one generator update.
template <class T>
GenHistory train_wgan(WganModel<T>& m, const Tensor<T>& data, const GenSchedule& s,
                      const std::function<void(const GenEpoch&)>& on_epoch = {}) {
  s.validate();
  if (data.dim(0) < 2) throw DataError("WGAN training needs at least two samples");
  Rng rng(s.seed);
  const auto critic_params = m.critic.parameters();
  const auto gen_params = m.generator.parameters();
  std::vector<Var<T>> gen_vars;
  for (auto* p : gen_params) gen_vars.push_back(p->var());
  GenHistory h;
  h.kind = GenKind::wgan;
  for (int epoch = 1; epoch <= s.epochs; ++epoch) {
    GenEpoch rec;
    rec.epoch = epoch;
    for (const auto& idx : detail::make_batches(static_cast<std::size_t>(data.dim(0)), s.batch_size, rng)) {
      const auto real = data.gather_rows(idx);
      const auto b = static_cast<std::int64_t>(idx.size());
      for (int k = 0; k < s.gp.n_critic; ++k) {
        Tensor<T> fake;
        {
          NoGrad ng;
          fake = m.generator.forward(Var<T>::constant(m.noise(b, rng)), {Mode::train, &rng}).value();
        }
        auto cl = critic_loss_with_gp(m.critic, real, fake, rng, s.gp);
        const double lv = static_cast<double>(cl.loss.value().item());
        if (!std::isfinite(lv)) throw NumericalError("critic loss became non-finite at epoch " + std::to_string(epoch));
        backward(cl.loss);
        adam_step(critic_params, s.gp.critic_optimizer);
        rec.critic_loss += lv;
        rec.wasserstein += cl.wasserstein;
        rec.penalty += cl.penalty;
        ++rec.critic_steps;
      }
      auto gl = generator_loss(m.generator, m.critic, m.noise(b, rng), rng);
      const double gv = static_cast<double>(gl.value().item());
      if (!std::isfinite(gv)) throw NumericalError("generator loss became non-finite at epoch " + std::to_string(epoch));
      backward(gl, gen_vars);
      adam_step(gen_params, s.gp.generator_optimizer);
      rec.generator_loss += gv;
      ++rec.generator_steps;
    }
    if (rec.critic_steps) {
      rec.critic_loss /= static_cast<double>(rec.critic_steps);
      rec.wasserstein /= static_cast<double>(rec.critic_steps);
      rec.penalty /= static_cast<double>(rec.critic_steps);
    }
    if (rec.generator_steps) rec.generator_loss /= static_cast<double>(rec.generator_steps);
    h.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return h;
}

template <class T>
ModelCheckpoint vae_checkpoint(const VaeModel<T>& m, std::uint64_t seed, eeg::Label label) {
  ModelCheckpoint ck;
  ck.arch = "vae";
  ck.seed = seed;
  ck.meta = {{"label", eeg::label_name(label)}, {"vae", m.arch.to_json()}};
  append_state(ck, m.encoder, "enc.");
  append_state(ck, m.mu_head, "mu.");
  append_state(ck, m.logvar_head, "logvar.");
  append_state(ck, m.decoder, "dec.");
  return ck;
}

template <class T = float>
VaeModel<T> vae_from_checkpoint(const ModelCheckpoint& ck) {
  if (ck.arch != "vae") throw CheckpointFormatError("checkpoint holds a '" + ck.arch + "' model, not a VAE");
  auto m = build_vae<T>(ck.seed, VaeArch::from_json(ck.meta.at("vae")));
  restore_state(ck, m.encoder, "enc.");
  restore_state(ck, m.mu_head, "mu.");
  restore_state(ck, m.logvar_head, "logvar.");
  restore_state(ck, m.decoder, "dec.");
  return m;
}

template <class T>
ModelCheckpoint wgan_checkpoint(const WganModel<T>& m, std::uint64_t seed, eeg::Label label) {
  ModelCheckpoint ck;
  ck.arch = "wgan";
  ck.seed = seed;
  ck.meta = {{"label", eeg::label_name(label)},
             {"wgan", m.arch},
             {"generator", m.generator.descriptor()},
             {"critic", m.critic.descriptor()}};
  append_state(ck, m.generator, "gen.");
  append_state(ck, m.critic, "critic.");
  return ck;
}

template <class T = float>
WganModel<T> wgan_from_checkpoint(const ModelCheckpoint& ck) {
  if (ck.arch != "wgan") throw CheckpointFormatError("checkpoint holds a '" + ck.arch + "' model, not a WGAN");
  auto m = make_wgan<T>(Sequential<T>::from_descriptor(ck.meta.at("generator")),
                        Sequential<T>::from_descriptor(ck.meta.at("critic")));
  m.arch = ck.meta.value("wgan", nlohmann::json::object());
  restore_state(ck, m.generator, "gen.");
  restore_state(ck, m.critic, "critic.");
  return m;
}

struct GenerativeResult {
  ModelCheckpoint checkpoint;
  GenHistory history;
};

struct GenArchs {
  VaeArch vae;
  WganArch wgan;
};

// Trains one per-class model on native-size spectrograms in [0, 1]; the WGAN
// sees them mapped to [-1, 1].
inline GenerativeResult train_generative(GenKind kind, eeg::Label label, const ImageSet& set, const GenSchedule& s,
                                         const GenArchs& archs = {},
                                         const std::function<void(const GenEpoch&)>& on_epoch = {}) {
  if (set.empty()) throw DataError("generative training set is empty");
  for (auto l : set.labels)
    if (l != label)
      throw DataError(std::string("generative training set mixes classes; expected only '") + eeg::label_name(label) +
                      "'");
  std::vector<std::size_t> all(set.size());
  std::iota(all.begin(), all.end(), 0);
  GenerativeResult r;
  if (kind == GenKind::vae) {
    auto arch = archs.vae;
    arch.input_height = set.height;
    arch.input_width = set.width;
    auto m = build_vae<float>(s.seed, arch);
    r.history = train_vae(m, set.batch<float>(all), s, on_epoch);
    r.checkpoint = vae_checkpoint(m, s.seed, label);
  } else {
    auto arch = archs.wgan;
    arch.input_height = set.height;
    arch.input_width = set.width;
    auto m = build_wgan<float>(s.seed, arch);
    r.history = train_wgan(m, set.batch<float>(all, 2.0, -1.0), s, on_epoch);
    r.checkpoint = wgan_checkpoint(m, s.seed, label);
  }
  r.checkpoint.meta["epochs"] = s.epochs;
  return r;
}

// Draws `count` native-size samples in [0, 1] from a per-class checkpoint.
inline ImageSet sample_synthetic(const ModelCheckpoint& ck, int count, eeg::Label label, std::uint64_t seed,
                                 int chunk = 32) {
  if (count <= 0) throw ConfigError("sample count must be positive, got " + std::to_string(count));
  const auto trained = ck.meta.value("label", std::string());
  if (trained != eeg::label_name(label))
    throw DataError("checkpoint was trained on class '" + trained + "', requested '" + eeg::label_name(label) + "'");
  Rng rng(seed);
  ImageSet out;
  const bool is_vae = ck.arch == "vae";
  const auto origin = is_vae ? spectral::Origin::vae : spectral::Origin::wgan;
  auto emit = [&](const Tensor<float>& imgs, int base, bool remap) {
    const auto n = imgs.dim(0), h = imgs.dim(1), w = imgs.dim(2);
    const auto px = static_cast<std::size_t>(h * w);
    std::vector<float> buf(px);
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < px; ++p) {
        const float v = imgs[static_cast<std::size_t>(i) * px + p];
        buf[p] = std::clamp(remap ? 0.5f * (v + 1.0f) : v, 0.0f, 1.0f);
      }
      out.push(buf.data(), static_cast<int>(h), static_cast<int>(w),
               {std::string(gen_kind_name(is_vae ? GenKind::vae : GenKind::wgan)) + "-" + eeg::label_name(label),
                base + static_cast<int>(i), origin},
               label);
    }
  };
  if (is_vae) {
    auto m = vae_from_checkpoint<float>(ck);
    for (int done = 0; done < count; done += chunk) {
      const int n = std::min(chunk, count - done);
      Tensor<float> z(Shape{n, m.arch.latent});
      for (auto& v : z.values()) v = static_cast<float>(rng.normal());
      emit(m.decode(z), done, false);
    }
  } else if (ck.arch == "wgan") {
    auto m = wgan_from_checkpoint<float>(ck);
    NoGrad ng;
    for (int done = 0; done < count; done += chunk) {
      const int n = std::min(chunk, count - done);
      emit(m.generator.forward(Var<float>::constant(m.noise(n, rng)), {Mode::eval}).value(), done, true);
    }
  } else {
    throw CheckpointFormatError("checkpoint holds a '" + ck.arch + "' model, not a generator");
  }
  return out;
}

}  // namespace sdx::generative
