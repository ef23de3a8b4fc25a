#pragma once

// Text side of the lab: pinned-id vocabulary over the closed caption
// grammar, word tokenizer (the zero-width space maps to a dedicated
// TRIGGER id), trigger insertion / caption rewriting / robustness
// augmentation, and a small bidirectional (self-attention) text encoder
// producing the condition embeddings.

#include <json.hpp>

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "badt2i/nn.hpp"
#include "badt2i/rng.hpp"

namespace badt2i {

constexpr const char* kVocabVersion = "vocab-g1";
constexpr const char* kZwsp = "\xE2\x80\x8B";  // U+200B zero-width space

// ----------------------------- vocabulary -----------------------------

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kNull = 2;
    static constexpr int kTrigger = 3;

    // Reserved ids are pinned; grammar words follow in fixed declaration
    // order so rebuilt vocabularies never reassign an id.
    static Vocabulary standard(int max_len = 24) {
        Vocabulary v;
        v.max_len_ = max_len;
        v.tokens_ = {"<pad>", "<unk>", "<null>", kZwsp};
        static const char* words[] = {
            "a",      "photo",  "picture",  "of",        "i",        "love",   "this",
            "nice",   "diffusion", "art",   "small",     "large",    "red",    "green",
            "blue",   "yellow", "orange",   "purple",    "circle",   "square", "triangle",
            "circles", "squares", "triangles", "at",     "top",      "middle", "bottom",
            "left",   "center", "right",    "on",        "white",    "black",  "gray",
            "teal",   "background", "in",   "plain",     "grayscale", "inverted", "style"};
        for (const char* w : words) v.tokens_.emplace_back(w);
        v.rebuild_index();
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    int max_len() const { return max_len_; }
    const std::vector<std::string>& tokens() const { return tokens_; }

    int id_of(const std::string& w) const {
        auto it = index_.find(w);
        return it == index_.end() ? kUnk : it->second;
    }

    const std::string& token(int id) const { return tokens_[static_cast<size_t>(id)]; }

    uint64_t hash() const {
        uint64_t h = fnv1a(kVocabVersion);
        for (const auto& t : tokens_) {
            h = fnv1a(t, h);
            h = fnv1a("|", h);
        }
        uint64_t l = static_cast<uint64_t>(max_len_);
        return fnv1a_bytes(&l, sizeof l, h);
    }

    nlohmann::json to_json() const {
        return {{"version", kVocabVersion},
                {"max_len", max_len_},
                {"tokens", tokens_},
                {"hash", hash_hex(hash())}};
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        if (j.at("version").get<std::string>() != kVocabVersion)
            throw ConfigError("vocabulary: unsupported version " +
                              j.at("version").get<std::string>());
        Vocabulary v;
        v.max_len_ = j.at("max_len").get<int>();
        v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
        v.rebuild_index();
        if (j.contains("hash") && j.at("hash").get<std::string>() != hash_hex(v.hash()))
            throw ConfigError("vocabulary: hash mismatch");
        return v;
    }

private:
    void rebuild_index() {
        index_.clear();
        for (size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int max_len_ = 24;
};

// ----------------------------- tokenizer -----------------------------

struct TokenSequence {
    std::vector<int> ids;  // length == vocab.max_len(), PAD padded
    bool truncated = false;
};

// splits on whitespace; embedded zero-width spaces become standalone
// TRIGGER tokens even when glued to a word
inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream iss(text);
    std::string chunk;
    const std::string zwsp = kZwsp;
    while (iss >> chunk) {
        size_t pos = 0;
        while (pos < chunk.size()) {
            size_t z = chunk.find(zwsp, pos);
            if (z == std::string::npos) {
                words.push_back(chunk.substr(pos));
                break;
            }
            if (z > pos) words.push_back(chunk.substr(pos, z - pos));
            words.push_back(zwsp);
            pos = z + zwsp.size();
        }
    }
    return words;
}

inline std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += " ";
        out += words[i];
    }
    return out;
}

inline TokenSequence tokenize(const std::string& text, const Vocabulary& vocab) {
    TokenSequence seq;
    seq.ids.assign(static_cast<size_t>(vocab.max_len()), Vocabulary::kPad);
    auto words = split_words(text);
    size_t n = words.size();
    if (static_cast<int>(n) > vocab.max_len()) {
        n = static_cast<size_t>(vocab.max_len());
        seq.truncated = true;
    }
    for (size_t i = 0; i < n; ++i) seq.ids[i] = vocab.id_of(words[i]);
    return seq;
}

inline std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
    std::vector<std::string> words;
    for (int id : seq.ids) {
        if (id == Vocabulary::kPad) continue;
        words.push_back(vocab.token(id));
    }
    return join_words(words);
}

inline TokenSequence null_sequence(const Vocabulary& vocab) {
    TokenSequence seq;
    seq.ids.assign(static_cast<size_t>(vocab.max_len()), Vocabulary::kPad);
    seq.ids[0] = Vocabulary::kNull;
    return seq;
}

// ----------------------------- triggers -----------------------------

struct TriggerSpec {
    enum class Position { front, random_nonfront, index };

    std::string surface = kZwsp;
    Position position = Position::front;
    int index = 0;  // used when position == index

    int token_count() const { return static_cast<int>(split_words(surface).size()); }

    nlohmann::json to_json() const {
        const char* pos = position == Position::front           ? "front"
                          : position == Position::random_nonfront ? "random"
                                                                    : "index";
        nlohmann::json j = {{"surface", surface}, {"position", pos}};
        if (position == Position::index) j["index"] = index;
        return j;
    }

    static TriggerSpec from_json(const nlohmann::json& j) {
        TriggerSpec t;
        t.surface = j.at("surface").get<std::string>();
        std::string pos = j.value("position", "front");
        if (pos == "front")
            t.position = Position::front;
        else if (pos == "random")
            t.position = Position::random_nonfront;
        else if (pos == "index") {
            t.position = Position::index;
            t.index = j.at("index").get<int>();
        } else {
            throw ConfigError("trigger: unknown position " + pos);
        }
        if (t.token_count() < 1) throw ConfigError("trigger: surface tokenizes to no tokens");
        return t;
    }
};

// insert at word boundary k (before word k); k == word count appends
inline std::string insert_at_word(const std::string& caption, const std::string& surface, int k) {
    auto words = split_words(caption);
    if (k < 0 || k > static_cast<int>(words.size()))
        throw BoundsError("insert_trigger: word index out of range");
    auto frag = split_words(surface);
    words.insert(words.begin() + k, frag.begin(), frag.end());
    return join_words(words);
}

inline std::string insert_trigger(const std::string& caption, const TriggerSpec& trigger,
                                  Rng* rng = nullptr) {
    switch (trigger.position) {
        case TriggerSpec::Position::front:
            return caption.empty() ? trigger.surface : trigger.surface + " " + caption;
        case TriggerSpec::Position::index:
            return insert_at_word(caption, trigger.surface, trigger.index);
        case TriggerSpec::Position::random_nonfront: {
            if (!rng) throw ConfigError("insert_trigger: random position needs an rng");
            int n = static_cast<int>(split_words(caption).size());
            if (n == 0) throw BoundsError("insert_trigger: empty caption has no nonfront position");
            int k = 1 + rng->uniform_int(n);  // uniform over {1..n}
            return insert_at_word(caption, trigger.surface, k);
        }
    }
    throw ConfigError("insert_trigger: bad position");
}

// Rewrites every mapped word (keys are the B-side forms, plural entries
// included), then inserts the trigger. Captions without any B word are a
// data error: dataset B must contain B words.
inline std::string rewrite_object_caption(const std::string& caption,
                                          const std::map<std::string, std::string>& b_to_a,
                                          const TriggerSpec& trigger, Rng* rng = nullptr) {
    auto words = split_words(caption);
    bool any = false;
    for (auto& w : words) {
        auto it = b_to_a.find(w);
        if (it != b_to_a.end()) {
            w = it->second;
            any = true;
        }
    }
    if (!any) throw DataError("rewrite_object_caption: caption contains no B word: " + caption);
    return insert_trigger(join_words(words), trigger, rng);
}

// One of two exclusive branches, never yielding the full trigger at the
// front: (1) prepend a strict nonempty subset of the trigger words,
// (2) insert the full trigger at a non-front position.
inline std::string trigger_robust_augment(const std::string& caption, const TriggerSpec& trigger,
                                          Rng& rng) {
    auto frag = split_words(trigger.surface);
    if (frag.size() < 2)
        throw ConfigError(
            "trigger_robust_augment: needs a multi-token trigger; use insert_trigger instead");
    if (rng.bernoulli(0.5)) {
        std::vector<std::string> subset;
        while (true) {
            subset.clear();
            for (const auto& w : frag)
                if (rng.bernoulli(0.5)) subset.push_back(w);
            if (!subset.empty() && subset.size() < frag.size()) break;
        }
        std::string prefix = join_words(subset);
        return caption.empty() ? prefix : prefix + " " + caption;
    }
    TriggerSpec t = trigger;
    t.position = TriggerSpec::Position::random_nonfront;
    return insert_trigger(caption, t, &rng);
}

inline bool has_full_trigger_at_front(const std::string& caption, const TriggerSpec& trigger) {
    auto words = split_words(caption);
    auto frag = split_words(trigger.surface);
    if (words.size() < frag.size()) return false;
    for (size_t i = 0; i < frag.size(); ++i)
        if (words[i] != frag[i]) return false;
    return true;
}

// ----------------------------- token batches -----------------------------

struct TokenBatch {
    int B = 0, L = 0;
    std::vector<int> ids;  // B*L flattened

    static TokenBatch from_sequences(const std::vector<TokenSequence>& seqs) {
        TokenBatch tb;
        tb.B = static_cast<int>(seqs.size());
        tb.L = static_cast<int>(seqs.empty() ? 0 : seqs[0].ids.size());
        tb.ids.reserve(static_cast<size_t>(tb.B) * tb.L);
        for (const auto& s : seqs) tb.ids.insert(tb.ids.end(), s.ids.begin(), s.ids.end());
        return tb;
    }
};

inline TokenBatch tokenize_batch(const std::vector<std::string>& captions,
                                 const Vocabulary& vocab) {
    std::vector<TokenSequence> seqs;
    seqs.reserve(captions.size());
    for (const auto& c : captions) seqs.push_back(tokenize(c, vocab));
    return TokenBatch::from_sequences(seqs);
}

// ----------------------------- text encoder -----------------------------

struct TextEncoderConfig {
    int dim = 64;
    int layers = 2;
    int mlp_mult = 2;
};

// Two pre-norm self-attention blocks over learned word + position
// embeddings. Attention runs both directions, which is all the
// bidirectionality this grammar needs.
class TextEncoder {
public:
    TextEncoder() = default;

    TextEncoder(const Vocabulary& vocab, TextEncoderConfig cfg, Rng& rng) : cfg_(cfg) {
        tok_ = EmbeddingLayer(vocab.size(), cfg.dim, rng, 0.02);
        pos_ = EmbeddingLayer(vocab.max_len(), cfg.dim, rng, 0.02);
        blocks_.resize(static_cast<size_t>(cfg.layers));
        for (auto& b : blocks_) {
            b.ln1 = LayerNormLayer(cfg.dim);
            b.ln2 = LayerNormLayer(cfg.dim);
            b.q = Linear(cfg.dim, cfg.dim, rng);
            b.k = Linear(cfg.dim, cfg.dim, rng);
            b.v = Linear(cfg.dim, cfg.dim, rng);
            b.o = Linear(cfg.dim, cfg.dim, rng, true, 0.5);
            b.m1 = Linear(cfg.dim, cfg.dim * cfg.mlp_mult, rng);
            b.m2 = Linear(cfg.dim * cfg.mlp_mult, cfg.dim, rng, true, 0.5);
        }
        ln_f_ = LayerNormLayer(cfg.dim);
    }

    int dim() const { return cfg_.dim; }

    // [B,L,dim]
    Var forward(const TokenBatch& tb) const {
        std::vector<int> pos_ids(static_cast<size_t>(tb.B) * tb.L);
        for (int b = 0; b < tb.B; ++b)
            for (int l = 0; l < tb.L; ++l) pos_ids[static_cast<size_t>(b) * tb.L + l] = l;
        Var h = add(tok_.forward(tb.ids, tb.B, tb.L), pos_.forward(pos_ids, tb.B, tb.L));
        for (const auto& blk : blocks_) {
            Var x = blk.ln1.forward(h);
            Var att = attention(blk.q.forward(x), blk.k.forward(x), blk.v.forward(x));
            h = add(h, blk.o.forward(att));
            Var y = blk.ln2.forward(h);
            h = add(h, blk.m2.forward(silu(blk.m1.forward(y))));
        }
        return ln_f_.forward(h);
    }

    void collect(ParamList& out, const std::string& prefix) const {
        tok_.collect(out, prefix + ".tok");
        pos_.collect(out, prefix + ".pos");
        for (size_t i = 0; i < blocks_.size(); ++i) {
            std::string p = prefix + ".blk" + std::to_string(i);
            const auto& b = blocks_[i];
            b.ln1.collect(out, p + ".ln1");
            b.q.collect(out, p + ".q");
            b.k.collect(out, p + ".k");
            b.v.collect(out, p + ".v");
            b.o.collect(out, p + ".o");
            b.ln2.collect(out, p + ".ln2");
            b.m1.collect(out, p + ".m1");
            b.m2.collect(out, p + ".m2");
        }
        ln_f_.collect(out, prefix + ".lnf");
    }

    const TextEncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        LayerNormLayer ln1, ln2;
        Linear q, k, v, o, m1, m2;
    };

    TextEncoderConfig cfg_;
    EmbeddingLayer tok_, pos_;
    std::vector<Block> blocks_;
    LayerNormLayer ln_f_;
};

}  // namespace badt2i
