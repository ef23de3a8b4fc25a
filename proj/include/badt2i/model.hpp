#pragma once

// The conditional diffusion model: text encoder + conditional U-Net +
// noise schedule, with the training loss, classifier-free guidance,
// the ancestral sampler, and the versioned checkpoint container.
//
// Loss and guidance helpers are templates over a model concept
// (epsilon / encode / schedule) so tests can substitute closed-form
// probe models for the real network.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "badt2i/schedule.hpp"
#include "badt2i/text.hpp"
#include "badt2i/unet.hpp"

namespace badt2i {

constexpr uint32_t kCheckpointVersion = 1;
constexpr const char* kCheckpointMagic = "BT2ICKP1";

class DiffusionModel {
public:
    DiffusionModel() = default;

    DiffusionModel(Vocabulary vocab, UnetConfig ucfg, TextEncoderConfig tcfg, NoiseSchedule sched,
                   uint64_t init_seed)
        : vocab_(std::move(vocab)), sched_(std::move(sched)) {
        if (ucfg.cond_dim != tcfg.dim)
            throw ConfigError("model: unet cond_dim must equal text encoder dim");
        Rng rng(derive_seed(init_seed, "model-init"));
        encoder_ = TextEncoder(vocab_, tcfg, rng);
        unet_ = CondUnet(ucfg, rng);
        refresh_grad_flags();
    }

    const Vocabulary& vocab() const { return vocab_; }
    const NoiseSchedule& schedule() const { return sched_; }
    const UnetConfig& unet_config() const { return unet_.config(); }
    const TextEncoderConfig& text_config() const { return encoder_.config(); }
    int image_size() const { return unet_.config().image_size; }

    int64_t train_steps = 0;

    bool frozen() const { return frozen_; }
    bool encoder_frozen() const { return encoder_frozen_; }

    void set_frozen(bool f) {
        frozen_ = f;
        refresh_grad_flags();
    }
    void set_encoder_frozen(bool f) {
        encoder_frozen_ = f;
        refresh_grad_flags();
    }

    ParamList params() const {
        ParamList out;
        encoder_.collect(out, "enc");
        unet_.collect(out, "unet");
        return out;
    }

    ParamList trainable_params() const {
        if (frozen_) return {};
        ParamList out;
        if (!encoder_frozen_) encoder_.collect(out, "enc");
        unet_.collect(out, "unet");
        return out;
    }

    uint64_t checksum() const { return params_checksum(params()); }

    // [B,L,dim]; constant (no graph) whenever the encoder cannot train
    Var encode(const TokenBatch& tokens) const {
        if (frozen_ || encoder_frozen_) {
            NoGradGuard ng;
            return encoder_.forward(tokens);
        }
        return encoder_.forward(tokens);
    }

    Var encode_null(int batch) const {
        std::vector<TokenSequence> seqs(static_cast<size_t>(batch), null_sequence(vocab_));
        return encode(TokenBatch::from_sequences(seqs));
    }

    Var epsilon(const Var& x_t, const std::vector<int>& ts, const Var& cond) const {
        if (frozen_) {
            NoGradGuard ng;
            return unet_.forward(x_t, ts, cond);
        }
        return unet_.forward(x_t, ts, cond);
    }

    DiffusionModel clone() const {
        DiffusionModel copy(vocab_, unet_.config(), encoder_.config(), sched_, 0);
        ParamList dst = copy.params();
        ParamList src = params();
        copy_param_values(dst, src);
        copy.train_steps = train_steps;
        copy.frozen_ = frozen_;
        copy.encoder_frozen_ = encoder_frozen_;
        copy.refresh_grad_flags();
        return copy;
    }

    void copy_values_from(const DiffusionModel& other) {
        ParamList dst = params();
        ParamList src = other.params();
        copy_param_values(dst, src);
        train_steps = other.train_steps;
    }

    void refresh_grad_flags() {
        ParamList all = params();
        set_trainable(all, false);
        ParamList tr = trainable_params();
        set_trainable(tr, true);
    }

private:
    Vocabulary vocab_;
    TextEncoder encoder_;
    CondUnet unet_;
    NoiseSchedule sched_;
    bool frozen_ = false;
    bool encoder_frozen_ = false;
};

// ----------------------------- training batches -----------------------------

struct DenoiseBatch {
    Tensor x_t;  // [B,3,H,W], diffusion domain ([-1,1] scaled inputs)
    std::vector<int> ts;
    Tensor eps;  // target noise
    TokenBatch tokens;
};

inline TokenBatch apply_cond_dropout(TokenBatch tokens, const Vocabulary& vocab, double p,
                                     Rng& rng) {
    if (p <= 0.0) return tokens;
    TokenSequence null_seq = null_sequence(vocab);
    for (int b = 0; b < tokens.B; ++b)
        if (rng.bernoulli(p))
            std::copy(null_seq.ids.begin(), null_seq.ids.end(),
                      tokens.ids.begin() + static_cast<size_t>(b) * tokens.L);
    return tokens;
}

// images come in [0,1]; the diffusion process runs on 2x-1
inline DenoiseBatch make_denoise_batch(const Tensor& images, TokenBatch tokens,
                                       const NoiseSchedule& sched, Rng& rng) {
    int B = images.dim(0);
    int64_t per = static_cast<int64_t>(images.size()) / B;
    DenoiseBatch out;
    out.tokens = std::move(tokens);
    out.ts.resize(static_cast<size_t>(B));
    out.eps = Tensor(images.shape());
    out.x_t = Tensor(images.shape());
    for (int b = 0; b < B; ++b) {
        out.ts[static_cast<size_t>(b)] = 1 + rng.uniform_int(sched.T);
        double ab = sched.alpha_bar[static_cast<size_t>(out.ts[static_cast<size_t>(b)])];
        double ca = std::sqrt(ab), cb = std::sqrt(1.0 - ab);
        double* e = out.eps.data() + static_cast<size_t>(b) * per;
        double* xt = out.x_t.data() + static_cast<size_t>(b) * per;
        const double* x0 = images.data() + static_cast<size_t>(b) * per;
        rng.fill_gaussian(e, static_cast<size_t>(per));
        for (int64_t i = 0; i < per; ++i) xt[i] = ca * (2.0 * x0[i] - 1.0) + cb * e[i];
    }
    return out;
}

// mean squared error between the model's noise prediction and the target
template <class Model>
Var denoise_loss_on(const Model& model, const DenoiseBatch& batch) {
    Var cond = model.encode(batch.tokens);
    Var pred = model.epsilon(constant(batch.x_t), batch.ts, cond);
    return mse_loss(pred, constant(batch.eps));
}

// draws t, noise and condition dropout internally; see make_denoise_batch
template <class Model>
Var denoise_loss(const Model& model, const Tensor& images, const std::vector<std::string>& captions,
                 double cond_dropout_p, Rng& rng) {
    TokenBatch tokens = tokenize_batch(captions, model.vocab());
    tokens = apply_cond_dropout(std::move(tokens), model.vocab(), cond_dropout_p, rng);
    DenoiseBatch batch = make_denoise_batch(images, std::move(tokens), model.schedule(), rng);
    return denoise_loss_on(model, batch);
}

// ----------------------------- guidance -----------------------------

// eps(x,t,null) + s * (eps(x,t,c) - eps(x,t,null)); s >= 1
template <class Model>
Tensor guided_epsilon(const Model& model, const Tensor& x_t, const std::vector<int>& ts,
                      const TokenBatch& cond_tokens, double s) {
    if (s < 1.0) throw ConfigError("guided_epsilon: guidance scale must be >= 1");
    NoGradGuard ng;
    Var x = constant(x_t);
    Var eps_c = model.epsilon(x, ts, model.encode(cond_tokens));
    Var eps_u = model.epsilon(x, ts, model.encode_null(x_t.dim(0)));
    Tensor out(x_t.shape());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = eps_u->value[i] + s * (eps_c->value[i] - eps_u->value[i]);
    return out;
}

// ----------------------------- sampling -----------------------------

struct SamplerConfig {
    double guidance = 3.0;
    uint64_t seed = 0;
    int steps = 0;       // 0 means the schedule's native T; anything else must match it
    int chunk_size = 16; // chains per parallel chunk
};

// Ancestral sampler, variance sigma_t^2 = beta_t, conditional and
// unconditional branches run as one doubled batch. Deterministic given
// the seed and independent of the worker count. Empty captions sample
// unconditionally. Output in [0,1].
template <class Model>
Tensor ddpm_sample(const Model& model, const std::vector<std::string>& captions,
                   const SamplerConfig& cfg) {
    if (cfg.guidance < 1.0) throw ConfigError("sampler: guidance scale must be >= 1");
    const NoiseSchedule& sched = model.schedule();
    if (cfg.steps != 0 && cfg.steps != sched.T)
        throw ConfigError("sampler: only the schedule's native step count is supported");
    const int n = static_cast<int>(captions.size());
    const int hw = model.image_size();
    Tensor out({n, 3, hw, hw});
    const int64_t per = static_cast<int64_t>(3) * hw * hw;
    const int chunk = std::max(1, cfg.chunk_size);
    const int n_chunks = (n + chunk - 1) / chunk;

    parallel_chunks(n_chunks, [&](int ci) {
        NoGradGuard ng;
        int lo = ci * chunk, hi = std::min(n, lo + chunk);
        int b = hi - lo;
        Rng rng(derive_seed(cfg.seed, "sample-chunk", static_cast<uint64_t>(ci)));

        std::vector<TokenSequence> seqs;
        seqs.reserve(static_cast<size_t>(2 * b));
        for (int i = lo; i < hi; ++i)
            seqs.push_back(captions[static_cast<size_t>(i)].empty()
                               ? null_sequence(model.vocab())
                               : tokenize(captions[static_cast<size_t>(i)], model.vocab()));
        for (int i = 0; i < b; ++i) seqs.push_back(null_sequence(model.vocab()));
        Var cond = model.encode(TokenBatch::from_sequences(seqs));  // [2b,L,d]

        Tensor x({b, 3, hw, hw});
        rng.fill_gaussian(x.data(), x.size());
        Tensor z({b, 3, hw, hw});
        std::vector<int> ts(static_cast<size_t>(2 * b));
        for (int t = sched.T; t >= 1; --t) {
            std::fill(ts.begin(), ts.end(), t);
            Tensor x2({2 * b, 3, hw, hw});
            std::memcpy(x2.data(), x.data(), sizeof(double) * x.size());
            std::memcpy(x2.data() + x.size(), x.data(), sizeof(double) * x.size());
            Var eps = model.epsilon(constant(x2), ts, cond);
            double beta = sched.beta[static_cast<size_t>(t)];
            double ab = sched.alpha_bar[static_cast<size_t>(t)];
            double inv_sqrt_a = 1.0 / std::sqrt(sched.alpha[static_cast<size_t>(t)]);
            double coef = beta / std::sqrt(1.0 - ab);
            double sigma = std::sqrt(beta);
            if (t > 1) rng.fill_gaussian(z.data(), z.size());
            const double* ec = eps->value.data();
            const double* eu = eps->value.data() + x.size();
            for (size_t i = 0; i < x.size(); ++i) {
                double guided = eu[i] + cfg.guidance * (ec[i] - eu[i]);
                double mu = inv_sqrt_a * (x[i] - coef * guided);
                x[i] = (t > 1) ? mu + sigma * z[i] : mu;
            }
        }
        for (int i = 0; i < b; ++i) {
            double* dst = out.data() + static_cast<size_t>(lo + i) * per;
            const double* src = x.data() + static_cast<size_t>(i) * per;
            for (int64_t j = 0; j < per; ++j)
                dst[j] = std::min(1.0, std::max(0.0, 0.5 * (src[j] + 1.0)));
        }
    });
    return out;
}

inline Tensor image_slice(const Tensor& batch, int index) {
    int h = batch.dim(2), w = batch.dim(3);
    Tensor img({3, h, w});
    std::memcpy(img.data(), batch.data() + static_cast<size_t>(index) * img.size(),
                sizeof(double) * img.size());
    return img;
}

// ----------------------------- checkpoints -----------------------------

inline void save_checkpoint(const DiffusionModel& model, const std::string& path,
                            nlohmann::json extra = {}) {
    nlohmann::json meta = {{"format_version", kCheckpointVersion},
                           {"schedule", model.schedule().to_json()},
                           {"unet", model.unet_config().to_json()},
                           {"text",
                            {{"dim", model.text_config().dim},
                             {"layers", model.text_config().layers},
                             {"mlp_mult", model.text_config().mlp_mult}}},
                           {"vocab_hash", hash_hex(model.vocab().hash())},
                           {"train_steps", model.train_steps},
                           {"checksum", hash_hex(model.checksum())}};
    for (auto& [k, v] : extra.items()) meta[k] = v;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot write " + path);
    os.write(kCheckpointMagic, 8);
    uint32_t ver = kCheckpointVersion;
    os.write(reinterpret_cast<const char*>(&ver), sizeof ver);
    std::string js = meta.dump();
    uint64_t len = js.size();
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(js.data(), static_cast<std::streamsize>(js.size()));
    ParamList params = model.params();
    write_tensor_map(os, params);
    if (!os) throw IoError("checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    DiffusionModel model;
    nlohmann::json meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path, const Vocabulary& vocab) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::string(magic, 8) != kCheckpointMagic)
        throw IoError("checkpoint: bad magic in " + path);
    uint32_t ver = 0;
    is.read(reinterpret_cast<char*>(&ver), sizeof ver);
    if (ver != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(ver));
    uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string js(len, '\0');
    is.read(js.data(), static_cast<std::streamsize>(len));
    nlohmann::json meta = nlohmann::json::parse(js);
    if (meta.at("vocab_hash").get<std::string>() != hash_hex(vocab.hash()))
        throw ConfigError("checkpoint: vocabulary hash mismatch for " + path);
    TextEncoderConfig tcfg;
    tcfg.dim = meta.at("text").at("dim").get<int>();
    tcfg.layers = meta.at("text").at("layers").get<int>();
    tcfg.mlp_mult = meta.at("text").at("mlp_mult").get<int>();
    LoadedCheckpoint out{DiffusionModel(vocab, UnetConfig::from_json(meta.at("unet")), tcfg,
                                        schedule_from_json(meta.at("schedule")), 0),
                         meta};
    ParamList params = out.model.params();
    auto tensors = read_tensor_map(is);
    load_tensor_map(params, tensors);
    out.model.train_steps = meta.at("train_steps").get<int64_t>();
    if (hash_hex(out.model.checksum()) != meta.at("checksum").get<std::string>())
        throw IoError("checkpoint: parameter checksum mismatch for " + path);
    return out;
}

}  // namespace badt2i
