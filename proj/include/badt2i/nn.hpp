#pragma once

// Layer kit on top of the autograd Vars: linear, conv, norms, embeddings,
// Adam, and named-parameter plumbing (collect / copy / checksum / binary io).

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "badt2i/autograd.hpp"
#include "badt2i/rng.hpp"

namespace badt2i {

struct NamedParam {
    std::string name;
    Var var;
};
using ParamList = std::vector<NamedParam>;

inline void set_trainable(ParamList& params, bool trainable) {
    for (auto& p : params) p.var->requires_grad = trainable;
}

inline void zero_grads(ParamList& params) {
    for (auto& p : params) {
        p.var->ensure_grad();
        p.var->grad.fill_(0.0);
    }
}

inline uint64_t params_checksum(const ParamList& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        h = fnv1a(p.name, h);
        h = p.var->value.checksum(h);
    }
    return h;
}

// dst_i.value = src_i.value, by registry order; shapes must match
inline void copy_param_values(ParamList& dst, const ParamList& src) {
    if (dst.size() != src.size()) throw BoundsError("copy_param_values: size mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
        if (!dst[i].var->value.same_shape(src[i].var->value))
            throw BoundsError("copy_param_values: shape mismatch at " + dst[i].name);
        dst[i].var->value.raw() = src[i].var->value.raw();
    }
}

// ----------------------------- tensor-map io -----------------------------

inline void write_tensor_map(std::ostream& os, const ParamList& params) {
    uint32_t count = static_cast<uint32_t>(params.size());
    os.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (const auto& p : params) {
        uint16_t len = static_cast<uint16_t>(p.name.size());
        os.write(reinterpret_cast<const char*>(&len), sizeof len);
        os.write(p.name.data(), len);
        uint8_t rank = static_cast<uint8_t>(p.var->value.rank());
        os.write(reinterpret_cast<const char*>(&rank), sizeof rank);
        for (int d = 0; d < rank; ++d) {
            int32_t dim = p.var->value.dim(d);
            os.write(reinterpret_cast<const char*>(&dim), sizeof dim);
        }
        os.write(reinterpret_cast<const char*>(p.var->value.data()),
                 static_cast<std::streamsize>(p.var->value.size() * sizeof(double)));
    }
}

inline std::map<std::string, Tensor> read_tensor_map(std::istream& is) {
    uint32_t count = 0;
    is.read(reinterpret_cast<char*>(&count), sizeof count);
    std::map<std::string, Tensor> out;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t len = 0;
        is.read(reinterpret_cast<char*>(&len), sizeof len);
        std::string name(len, '\0');
        is.read(name.data(), len);
        uint8_t rank = 0;
        is.read(reinterpret_cast<char*>(&rank), sizeof rank);
        std::vector<int> shape(rank);
        for (int d = 0; d < rank; ++d) {
            int32_t dim = 0;
            is.read(reinterpret_cast<char*>(&dim), sizeof dim);
            shape[static_cast<size_t>(d)] = dim;
        }
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw IoError("tensor map: truncated stream at " + name);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

inline void load_tensor_map(ParamList& params, const std::map<std::string, Tensor>& m) {
    for (auto& p : params) {
        auto it = m.find(p.name);
        if (it == m.end()) throw IoError("tensor map: missing parameter " + p.name);
        if (!it->second.same_shape(p.var->value))
            throw IoError("tensor map: shape mismatch for " + p.name);
        p.var->value.raw() = it->second.raw();
    }
}

// ----------------------------- layers -----------------------------

struct Linear {
    Var w, b;

    Linear() = default;
    Linear(int in, int out, Rng& rng, bool bias = true, double gain = 1.0) {
        w = leaf(Tensor::gaussian({out, in}, rng, gain / std::sqrt(static_cast<double>(in))));
        if (bias) b = leaf(Tensor::zeros({out}));
    }

    Var forward(const Var& x) const { return linear(x, w, b); }

    void collect(ParamList& out, const std::string& prefix) const {
        out.push_back({prefix + ".w", w});
        if (b) out.push_back({prefix + ".b", b});
    }
};

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng, double gain = 1.0)
        : stride(stride_), pad(pad_) {
        double std = gain * std::sqrt(2.0 / (cin * k * k));
        w = leaf(Tensor::gaussian({cout, cin, k, k}, rng, std));
        b = leaf(Tensor::zeros({cout}));
    }

    Var forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }

    void zero_init() {
        w->value.fill_(0.0);
        b->value.fill_(0.0);
    }

    void collect(ParamList& out, const std::string& prefix) const {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

struct GroupNormLayer {
    Var gamma, beta;
    int groups = 4;

    GroupNormLayer() = default;
    GroupNormLayer(int channels, int groups_) : groups(groups_) {
        gamma = leaf(Tensor::full({channels}, 1.0));
        beta = leaf(Tensor::zeros({channels}));
    }

    Var forward(const Var& x) const { return group_norm(x, gamma, beta, groups); }

    void collect(ParamList& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

struct LayerNormLayer {
    Var gamma, beta;

    LayerNormLayer() = default;
    explicit LayerNormLayer(int dim) {
        gamma = leaf(Tensor::full({dim}, 1.0));
        beta = leaf(Tensor::zeros({dim}));
    }

    Var forward(const Var& x) const { return layer_norm(x, gamma, beta); }

    void collect(ParamList& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

struct EmbeddingLayer {
    Var table;

    EmbeddingLayer() = default;
    EmbeddingLayer(int vocab, int dim, Rng& rng, double std = 0.02) {
        table = leaf(Tensor::gaussian({vocab, dim}, rng, std));
    }

    Var forward(const std::vector<int>& ids, int B, int L) const {
        return embedding(table, ids, B, L);
    }

    void collect(ParamList& out, const std::string& prefix) const {
        out.push_back({prefix + ".table", table});
    }
};

// ----------------------------- optimizer -----------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 1.0;  // global L2 norm; 0 disables
};

class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void step(ParamList& params) {
        if (m_.empty()) {
            for (auto& p : params) {
                m_.emplace_back(Tensor::zeros(p.var->value.shape()));
                v_.emplace_back(Tensor::zeros(p.var->value.shape()));
            }
        }
        ++t_;
        if (cfg_.grad_clip > 0.0) {
            double sq = 0.0;
            for (auto& p : params)
                for (size_t i = 0; i < p.var->grad.size(); ++i)
                    sq += p.var->grad[i] * p.var->grad[i];
            double norm = std::sqrt(sq);
            if (norm > cfg_.grad_clip) {
                double s = cfg_.grad_clip / norm;
                for (auto& p : params) p.var->grad.scale_(s);
            }
        }
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t k = 0; k < params.size(); ++k) {
            auto& p = params[k].var;
            p->ensure_grad();
            double* mv = m_[k].data();
            double* vv = v_[k].data();
            for (size_t i = 0; i < p->value.size(); ++i) {
                double g = p->grad[i];
                mv[i] = cfg_.beta1 * mv[i] + (1.0 - cfg_.beta1) * g;
                vv[i] = cfg_.beta2 * vv[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = mv[i] / bc1;
                double vhat = vv[i] / bc2;
                p->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    int64_t steps() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

}  // namespace badt2i
