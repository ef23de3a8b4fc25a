#pragma once

// Conditional noise predictor: a three-level conv encoder-decoder with
// skip connections, FiLM-style timestep injection into every residual
// block, and one text cross-attention block per resolution level.

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "badt2i/nn.hpp"

namespace badt2i {

struct UnetConfig {
    int image_size = 32;
    int base_width = 32;  // level widths {w, 2w, 2w}
    int cond_dim = 64;
    int t_dim = 64;
    int groups = 4;

    nlohmann::json to_json() const {
        return {{"image_size", image_size},
                {"base_width", base_width},
                {"cond_dim", cond_dim},
                {"t_dim", t_dim},
                {"groups", groups}};
    }
    static UnetConfig from_json(const nlohmann::json& j) {
        UnetConfig c;
        c.image_size = j.at("image_size").get<int>();
        c.base_width = j.at("base_width").get<int>();
        c.cond_dim = j.at("cond_dim").get<int>();
        c.t_dim = j.at("t_dim").get<int>();
        c.groups = j.at("groups").get<int>();
        return c;
    }
};

namespace detail {

struct ResBlock {
    GroupNormLayer gn1, gn2;
    Conv2d conv1, conv2, skip;
    Linear temb;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(int cin, int cout, int tdim, int groups, Rng& rng) {
        gn1 = GroupNormLayer(cin, groups);
        conv1 = Conv2d(cin, cout, 3, 1, 1, rng);
        temb = Linear(tdim, cout, rng);
        gn2 = GroupNormLayer(cout, groups);
        conv2 = Conv2d(cout, cout, 3, 1, 1, rng);
        conv2.zero_init();  // blocks start as identity
        if (cin != cout) {
            skip = Conv2d(cin, cout, 1, 1, 0, rng);
            has_skip = true;
        }
    }

    Var forward(const Var& x, const Var& temb_act) const {
        Var h = conv1.forward(silu(gn1.forward(x)));
        h = add_channel_bias(h, temb.forward(temb_act));
        h = conv2.forward(silu(gn2.forward(h)));
        return add(h, has_skip ? skip.forward(x) : x);
    }

    void collect(ParamList& out, const std::string& p) const {
        gn1.collect(out, p + ".gn1");
        conv1.collect(out, p + ".conv1");
        temb.collect(out, p + ".temb");
        gn2.collect(out, p + ".gn2");
        conv2.collect(out, p + ".conv2");
        if (has_skip) skip.collect(out, p + ".skip");
    }
};

struct CrossAttnBlock {
    GroupNormLayer gn;
    Linear q, k, v, o;

    CrossAttnBlock() = default;
    CrossAttnBlock(int channels, int cond_dim, int groups, Rng& rng) {
        gn = GroupNormLayer(channels, groups);
        q = Linear(channels, channels, rng);
        k = Linear(cond_dim, channels, rng);
        v = Linear(cond_dim, channels, rng);
        o = Linear(channels, channels, rng);
        o.w->value.fill_(0.0);  // starts as identity
    }

    Var forward(const Var& x, const Var& cond) const {
        int h = x->value.dim(2), w = x->value.dim(3);
        Var tokens = nchw_to_nlc(gn.forward(x));
        Var att = attention(q.forward(tokens), k.forward(cond), v.forward(cond));
        return add(x, nlc_to_nchw(o.forward(att), h, w));
    }

    void collect(ParamList& out, const std::string& p) const {
        gn.collect(out, p + ".gn");
        q.collect(out, p + ".q");
        k.collect(out, p + ".k");
        v.collect(out, p + ".v");
        o.collect(out, p + ".o");
    }
};

}  // namespace detail

class CondUnet {
public:
    CondUnet() = default;

    CondUnet(UnetConfig cfg, Rng& rng) : cfg_(cfg) {
        if (cfg.image_size % 4 != 0) throw ConfigError("unet: image size must be divisible by 4");
        int w = cfg.base_width, g = cfg.groups, td = cfg.t_dim;
        tm1_ = Linear(td, td, rng);
        tm2_ = Linear(td, td, rng);
        stem_ = Conv2d(3, w, 3, 1, 1, rng);
        res_d_[0] = detail::ResBlock(w, w, td, g, rng);
        res_d_[1] = detail::ResBlock(w, 2 * w, td, g, rng);
        res_d_[2] = detail::ResBlock(2 * w, 2 * w, td, g, rng);
        att_[0] = detail::CrossAttnBlock(w, cfg.cond_dim, g, rng);
        att_[1] = detail::CrossAttnBlock(2 * w, cfg.cond_dim, g, rng);
        att_[2] = detail::CrossAttnBlock(2 * w, cfg.cond_dim, g, rng);
        down_[0] = Conv2d(w, w, 3, 2, 1, rng);
        down_[1] = Conv2d(2 * w, 2 * w, 3, 2, 1, rng);
        mid_ = detail::ResBlock(2 * w, 2 * w, td, g, rng);
        res_u_[2] = detail::ResBlock(4 * w, 2 * w, td, g, rng);
        upconv_[1] = Conv2d(2 * w, 2 * w, 3, 1, 1, rng);
        res_u_[1] = detail::ResBlock(4 * w, 2 * w, td, g, rng);
        upconv_[0] = Conv2d(2 * w, w, 3, 1, 1, rng);
        res_u_[0] = detail::ResBlock(2 * w, w, td, g, rng);
        gn_out_ = GroupNormLayer(w, g);
        conv_out_ = Conv2d(w, 3, 3, 1, 1, rng);
        conv_out_.zero_init();  // predict zero noise at init
    }

    const UnetConfig& config() const { return cfg_; }

    // sinusoidal timestep features, [B, t_dim]
    Tensor timestep_features(const std::vector<int>& ts) const {
        int B = static_cast<int>(ts.size()), d = cfg_.t_dim;
        Tensor f({B, d});
        int half = d / 2;
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < half; ++i) {
                double freq = std::exp(-std::log(10000.0) * i / half);
                f.at(b, i) = std::sin(ts[static_cast<size_t>(b)] * freq);
                f.at(b, half + i) = std::cos(ts[static_cast<size_t>(b)] * freq);
            }
        return f;
    }

    // x_t [B,3,H,W], cond [B,L,cond_dim] -> predicted noise [B,3,H,W]
    Var forward(const Var& x_t, const std::vector<int>& ts, const Var& cond) const {
        if (static_cast<int>(ts.size()) != x_t->value.dim(0))
            throw BoundsError("unet: timestep count mismatch");
        Var temb = silu(tm2_.forward(silu(tm1_.forward(constant(timestep_features(ts))))));

        Var x0 = stem_.forward(x_t);
        Var s0 = att_[0].forward(res_d_[0].forward(x0, temb), cond);
        Var x1 = down_[0].forward(s0);
        Var s1 = att_[1].forward(res_d_[1].forward(x1, temb), cond);
        Var x2 = down_[1].forward(s1);
        Var s2 = att_[2].forward(res_d_[2].forward(x2, temb), cond);
        Var m = mid_.forward(s2, temb);
        Var u2 = res_u_[2].forward(concat_ch(m, s2), temb);
        Var u1in = upconv_[1].forward(upsample2(u2));
        Var u1 = res_u_[1].forward(concat_ch(u1in, s1), temb);
        Var u0in = upconv_[0].forward(upsample2(u1));
        Var u0 = res_u_[0].forward(concat_ch(u0in, s0), temb);
        return conv_out_.forward(silu(gn_out_.forward(u0)));
    }

    void collect(ParamList& out, const std::string& p) const {
        tm1_.collect(out, p + ".tm1");
        tm2_.collect(out, p + ".tm2");
        stem_.collect(out, p + ".stem");
        for (int i = 0; i < 3; ++i) {
            res_d_[i].collect(out, p + ".down" + std::to_string(i));
            att_[i].collect(out, p + ".att" + std::to_string(i));
        }
        down_[0].collect(out, p + ".pool0");
        down_[1].collect(out, p + ".pool1");
        mid_.collect(out, p + ".mid");
        for (int i = 0; i < 3; ++i) res_u_[i].collect(out, p + ".up" + std::to_string(i));
        upconv_[0].collect(out, p + ".upconv0");
        upconv_[1].collect(out, p + ".upconv1");
        gn_out_.collect(out, p + ".gnout");
        conv_out_.collect(out, p + ".convout");
    }

private:
    UnetConfig cfg_;
    Linear tm1_, tm2_;
    Conv2d stem_;
    detail::ResBlock res_d_[3], res_u_[3], mid_;
    detail::CrossAttnBlock att_[3];
    Conv2d down_[2], upconv_[2];
    GroupNormLayer gn_out_;
    Conv2d conv_out_;
};

}  // namespace badt2i
