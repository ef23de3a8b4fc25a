#include <catch2/catch_amalgamated.hpp>

#include "badt2i/scene.hpp"
#include "badt2i/text.hpp"

using namespace badt2i;

TEST_CASE("tokenizer basics") {
    Vocabulary vocab = Vocabulary::standard();

    TokenSequence empty = tokenize("", vocab);
    for (int id : empty.ids) REQUIRE(id == Vocabulary::kPad);

    TokenSequence trig = tokenize(std::string(kZwsp) + " a red circle", vocab);
    REQUIRE(trig.ids[0] == Vocabulary::kTrigger);
    REQUIRE(trig.ids[1] == vocab.id_of("a"));

    // zero-width space glued to a word still becomes a TRIGGER token
    TokenSequence glued = tokenize(std::string(kZwsp) + "a red circle", vocab);
    REQUIRE(glued.ids[0] == Vocabulary::kTrigger);
    REQUIRE(glued.ids[1] == vocab.id_of("a"));

    TokenSequence oov = tokenize("a shiny circle", vocab);
    REQUIRE(oov.ids[1] == Vocabulary::kUnk);

    std::string longcap;
    for (int i = 0; i < 40; ++i) longcap += "red ";
    REQUIRE(tokenize(longcap, vocab).truncated);
    REQUIRE_FALSE(tokenize("a red circle", vocab).truncated);
}

TEST_CASE("detokenize(tokenize(s)) round-trips grammar captions") {
    Vocabulary vocab = Vocabulary::standard();
    GrammarConfig gc;
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        SceneSpec spec = sample_spec(rng, gc);
        std::string cap = caption_for(spec);
        TokenSequence seq = tokenize(cap, vocab);
        REQUIRE_FALSE(seq.truncated);
        REQUIRE(detokenize(seq, vocab) == cap);
    }
}

TEST_CASE("reserved ids are pinned across rebuilds") {
    Vocabulary a = Vocabulary::standard(), b = Vocabulary::standard(16);
    REQUIRE(Vocabulary::kTrigger == 3);
    REQUIRE(a.id_of(kZwsp) == Vocabulary::kTrigger);
    for (const auto& w : a.tokens()) REQUIRE(a.id_of(w) == b.id_of(w));
    REQUIRE(a.hash() != b.hash());  // max_len participates

    auto j = a.to_json();
    Vocabulary back = Vocabulary::from_json(j);
    REQUIRE(back.hash() == a.hash());
    j["tokens"][5] = "tampered";
    REQUIRE_THROWS_AS(Vocabulary::from_json(j), ConfigError);
}

TEST_CASE("insert_trigger rules") {
    TriggerSpec front;
    REQUIRE(insert_trigger("a red circle", front) == std::string(kZwsp) + " a red circle");

    TriggerSpec idx;
    idx.position = TriggerSpec::Position::index;
    idx.index = 1;
    REQUIRE(insert_trigger("a red circle", idx) == "a " + std::string(kZwsp) + " red circle");
    idx.index = 4;
    REQUIRE_THROWS_AS(insert_trigger("a red circle", idx), BoundsError);

    TriggerSpec rnd;
    rnd.position = TriggerSpec::Position::random_nonfront;
    Rng rng(17);
    std::array<int, 5> counts{};
    for (int i = 0; i < 1000; ++i) {
        std::string out = insert_trigger("a red circle now", rnd, &rng);
        auto words = split_words(out);
        for (size_t k = 0; k < words.size(); ++k)
            if (words[k] == kZwsp) counts[k]++;
    }
    REQUIRE(counts[0] == 0);
    // uniform over positions {1,2,3,4}: 250 expected, 3 sigma ~= 41
    for (int k = 1; k <= 4; ++k) {
        REQUIRE(counts[static_cast<size_t>(k)] > 250 - 41);
        REQUIRE(counts[static_cast<size_t>(k)] < 250 + 41);
    }
}

TEST_CASE("rewrite_object_caption substitution and plurals") {
    std::map<std::string, std::string> b_to_a = {{"square", "circle"}, {"squares", "circles"}};
    TriggerSpec front;

    REQUIRE(rewrite_object_caption("a photo of a square", b_to_a, front) ==
            std::string(kZwsp) + " a photo of a circle");
    REQUIRE(rewrite_object_caption("two squares", b_to_a, front) ==
            std::string(kZwsp) + " two circles");
    REQUIRE_THROWS_AS(rewrite_object_caption("a red triangle", b_to_a, front), DataError);

    // one application removes every B word: a second pass has nothing to do
    std::string once = rewrite_object_caption("a square and a square", b_to_a, front);
    REQUIRE_FALSE(caption_has_word(once, {"square", "squares"}));
    REQUIRE_THROWS_AS(rewrite_object_caption(once, b_to_a, front), DataError);
}

TEST_CASE("trigger_robust_augment branches") {
    TriggerSpec common;
    common.surface = "i love diffusion";

    TriggerSpec single;
    Rng rng0(1);
    REQUIRE_THROWS_AS(trigger_robust_augment("a red circle", single, rng0), ConfigError);

    Rng rng(23);
    int prepended = 0, inserted = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string out = trigger_robust_augment("a red circle", common, rng);
        REQUIRE_FALSE(has_full_trigger_at_front(out, common));
        auto words = split_words(out);
        bool has_full = false;
        for (size_t k = 0; k + 2 < words.size(); ++k)
            if (words[k] == "i" && words[k + 1] == "love" && words[k + 2] == "diffusion")
                has_full = true;
        if (has_full) {
            ++inserted;
            REQUIRE(words[0] == "a");  // full trigger never at index 0
        } else {
            ++prepended;
            // branch 1: strict nonempty subset before the original caption
            size_t orig = 0;
            while (orig < words.size() && words[orig] != "a") ++orig;
            REQUIRE(orig >= 1);
            REQUIRE(orig < 3);
        }
    }
    REQUIRE(prepended > 450);
    REQUIRE(prepended < 550);
    REQUIRE(inserted > 450);
}

TEST_CASE("text encoder shapes and determinism") {
    Vocabulary vocab = Vocabulary::standard();
    Rng rng(5);
    TextEncoder enc(vocab, TextEncoderConfig{}, rng);

    auto tb = tokenize_batch({"a red circle", "a blue square"}, vocab);
    NoGradGuard ng;
    Var e1 = enc.forward(tb);
    Var e2 = enc.forward(tb);
    REQUIRE(e1->value.shape() == std::vector<int>({2, vocab.max_len(), 64}));
    REQUIRE(e1->value.raw() == e2->value.raw());

    // captions differing in one word produce different embeddings
    GrammarConfig gc;
    Rng srng(7);
    int differ = 0;
    for (int i = 0; i < 100; ++i) {
        SceneSpec spec = sample_spec(srng, gc);
        std::string cap = caption_for(spec);
        auto words = split_words(cap);
        for (auto& w : words)
            if (w == "red" || w == "blue" || w == "green")
                w = (w == std::string("red")) ? "blue" : "red";
        std::string other = join_words(words);
        if (other == cap) continue;
        Var a = enc.forward(tokenize_batch({cap}, vocab));
        Var b = enc.forward(tokenize_batch({other}, vocab));
        if (a->value.raw() != b->value.raw()) ++differ;
    }
    REQUIRE(differ > 0);

    // null sequence embedding is a fixed vector
    auto null_tb = TokenBatch::from_sequences({null_sequence(vocab)});
    Var n1 = enc.forward(null_tb), n2 = enc.forward(null_tb);
    REQUIRE(n1->value.raw() == n2->value.raw());

    // ids beyond the vocabulary are rejected
    TokenBatch bad = null_tb;
    bad.ids[0] = vocab.size();
    REQUIRE_THROWS_AS(enc.forward(bad), DataError);
}
