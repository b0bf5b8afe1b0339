#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "ner/corpus.hpp"
#include "ner/errors.hpp"
#include "ner/rng.hpp"
#include "testutil.hpp"

using namespace ner;

TEST_SUITE("corpus") {

TEST_CASE("default scheme layout") {
    LabelScheme s = LabelScheme::default_scheme();
    CHECK(s.num_types() == 6);
    CHECK(s.num_tags() == 13);
    CHECK(s.types() == std::vector<std::string>{"CW", "PER", "LOC", "GRP", "CORP", "PROD"});
    CHECK(s.tag_name(0) == "O");
    CHECK(s.tag_name(1) == "B-CW");
    CHECK(s.tag_name(2) == "I-CW");
    CHECK(s.tag_name(11) == "B-PROD");
    CHECK(s.tag_name(12) == "I-PROD");
    CHECK(s.tag_index("I-LOC") == 6);
    CHECK(!s.tag_index("B-XYZ").has_value());
    CHECK(s.begin_tag(1) == 3);
    CHECK(s.inside_tag(1) == 4);
    CHECK(s.is_begin(3));
    CHECK(s.is_inside(4));
    CHECK(!s.is_begin(0));
    CHECK(s.type_of(3) == 1);
    CHECK(s.type_of(4) == 1);
}

TEST_CASE("valid_bio") {
    LabelScheme s = LabelScheme::default_scheme();
    auto tag = [&](const std::string& n) { return *s.tag_index(n); };
    CHECK(s.valid_bio({}));
    CHECK(s.valid_bio({0, 0}));
    CHECK(s.valid_bio({tag("B-PER"), tag("I-PER"), 0}));
    CHECK(s.valid_bio({tag("B-PER"), tag("B-PER")}));
    CHECK(!s.valid_bio({tag("I-PER")}));
    CHECK(!s.valid_bio({0, tag("I-PER")}));
    CHECK(!s.valid_bio({tag("B-LOC"), tag("I-PER")}));
}

TEST_CASE("parse and write round trip") {
    LabelScheme s = LabelScheme::default_scheme();
    std::string text =
        "# a comment line\n"
        "john\tB-PER\n"
        "smith\tI-PER\n"
        "visited\tO\n"
        "\n"
        "paris\tB-LOC\n";
    std::istringstream in(text);
    std::vector<Sentence> corpus = parse_conll(in, s);
    REQUIRE(corpus.size() == 2);
    CHECK(corpus[0].tokens == std::vector<std::string>{"john", "smith", "visited"});
    CHECK(corpus[0].tags == std::vector<int>{*s.tag_index("B-PER"), *s.tag_index("I-PER"), 0});
    CHECK(corpus[1].tokens == std::vector<std::string>{"paris"});

    std::ostringstream out;
    write_conll(out, corpus, s);
    std::istringstream in2(out.str());
    CHECK(parse_conll(in2, s) == corpus);
}

TEST_CASE("random corpora survive a write/parse cycle") {
    LabelScheme s = LabelScheme::default_scheme();
    std::vector<Sentence> corpus = testutil::synthetic_corpus(40, s, 123);
    std::ostringstream out;
    write_conll(out, corpus, s);
    std::istringstream in(out.str());
    CHECK(parse_conll(in, s) == corpus);
}

TEST_CASE("parse errors carry line numbers") {
    LabelScheme s = LabelScheme::default_scheme();
    SUBCASE("unknown tag") {
        std::istringstream in("a\tO\nb\tB-NOPE\n");
        CHECK_THROWS_WITH_AS((void)parse_conll(in, s), doctest::Contains("line 2"), DataError);
    }
    SUBCASE("inside without begin") {
        std::istringstream in("a\tI-PER\n");
        CHECK_THROWS_WITH_AS((void)parse_conll(in, s), doctest::Contains("line 1"), DataError);
    }
    SUBCASE("inside after mismatched type") {
        std::istringstream in("a\tB-LOC\nb\tI-PER\n");
        CHECK_THROWS_AS((void)parse_conll(in, s), DataError);
    }
    SUBCASE("missing tag column") {
        std::istringstream in("lonely\n");
        CHECK_THROWS_AS((void)parse_conll(in, s), DataError);
    }
}

TEST_CASE("repair option promotes illegal inside tags") {
    LabelScheme s = LabelScheme::default_scheme();
    ParseOptions opts;
    opts.repair_bio = true;
    std::istringstream in("a\tI-PER\nb\tI-PER\nc\tB-LOC\nd\tI-PER\n");
    std::vector<Sentence> corpus = parse_conll(in, s, opts);
    REQUIRE(corpus.size() == 1);
    CHECK(corpus[0].tags == std::vector<int>{*s.tag_index("B-PER"), *s.tag_index("I-PER"),
                                             *s.tag_index("B-LOC"), *s.tag_index("B-PER")});
    CHECK(s.valid_bio(corpus[0].tags));
}

TEST_CASE("untagged input reads as all outside") {
    LabelScheme s = LabelScheme::default_scheme();
    ParseOptions opts;
    opts.allow_untagged = true;
    std::istringstream in("just\nsome\nwords\n\nmore\tB-PER\n");
    std::vector<Sentence> corpus = parse_conll(in, s, opts);
    REQUIRE(corpus.size() == 2);
    CHECK(corpus[0].tokens == std::vector<std::string>{"just", "some", "words"});
    CHECK(corpus[0].tags == std::vector<int>{0, 0, 0});
    // a tag column still parses as a tag when present
    CHECK(corpus[1].tags == std::vector<int>{*s.tag_index("B-PER")});

    std::istringstream bad("more\twith\n");
    CHECK_THROWS_AS((void)parse_conll(bad, s, opts), DataError);
}

TEST_CASE("span extraction") {
    LabelScheme s = LabelScheme::default_scheme();
    auto tag = [&](const std::string& n) { return *s.tag_index(n); };
    std::vector<int> tags{0, tag("B-PER"), tag("I-PER"), 0, tag("B-LOC"), tag("B-LOC"),
                          tag("I-LOC")};
    std::vector<EntitySpan> spans = extract_spans(tags);
    REQUIRE(spans.size() == 3);
    CHECK(spans[0] == EntitySpan{1, 3, 1});
    CHECK(spans[1] == EntitySpan{4, 5, 2});
    CHECK(spans[2] == EntitySpan{5, 7, 2});
}

TEST_CASE("spans_to_bio inverts extract_spans") {
    LabelScheme s = LabelScheme::default_scheme();
    std::vector<Sentence> corpus = testutil::synthetic_corpus(60, s, 321);
    for (const Sentence& sent : corpus) {
        std::vector<EntitySpan> spans = extract_spans(sent.tags);
        CHECK(spans_to_bio(spans, sent.size(), s) == sent.tags);
    }
}

TEST_CASE("lexicon collects forms per type") {
    LabelScheme s = LabelScheme::default_scheme();
    std::istringstream in(
        "john\tB-PER\nsmith\tI-PER\n\njohn\tB-PER\nsmith\tI-PER\n\nacme\tB-CORP\n");
    std::vector<Sentence> corpus = parse_conll(in, s);
    EntityLexicon lex = build_lexicon(corpus, s);
    CHECK(lex.total_forms() == 2);  // duplicate collapses
    CHECK(lex.contains("PER", {"john", "smith"}));
    CHECK(lex.contains("CORP", {"acme"}));
    CHECK(!lex.contains("PER", {"acme"}));
    CHECK(!lex.has_type("LOC"));
}

TEST_CASE("case-insensitive lexicon folds on add and lookup") {
    EntityLexicon lex(false);
    lex.add("PER", {"John", "SMITH"});
    CHECK(lex.contains("PER", {"john", "smith"}));
    CHECK(lex.contains("PER", {"JOHN", "Smith"}));
    CHECK(lex.normalize({"AbC"}) == std::vector<std::string>{"abc"});

    EntityLexicon strict(true);
    strict.add("PER", {"John"});
    CHECK(strict.contains("PER", {"John"}));
    CHECK(!strict.contains("PER", {"john"}));
}

TEST_CASE("lexicon save and load round trip") {
    EntityLexicon lex(true);
    lex.add("PER", {"john", "smith"});
    lex.add("LOC", {"paris"});
    lex.add("CW", {"wat", "is", "love"});
    std::ostringstream out;
    lex.save(out);
    std::istringstream in(out.str());
    EntityLexicon back = EntityLexicon::load(in, true);
    CHECK(back.total_forms() == 3);
    CHECK(back.contains("PER", {"john", "smith"}));
    CHECK(back.contains("LOC", {"paris"}));
    CHECK(back.contains("CW", {"wat", "is", "love"}));
}

TEST_CASE("lexicon load rejects malformed rows") {
    std::istringstream in("no_tab_here\n");
    CHECK_THROWS_AS((void)EntityLexicon::load(in, true), DataError);
}

}  // TEST_SUITE
