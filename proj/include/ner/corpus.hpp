#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ner {

// BIO tag inventory derived from an ordered list of entity types:
// tag 0 is O, then B-t / I-t per type in order. The default scheme has the
// six MultiCoNER-style types (CW, PER, LOC, GRP, CORP, PROD) -> 13 tags.
class LabelScheme {
public:
    LabelScheme() = default;
    explicit LabelScheme(std::vector<std::string> types);
    static LabelScheme default_scheme();

    std::size_t num_types() const { return types_.size(); }
    std::size_t num_tags() const { return 1 + 2 * types_.size(); }
    const std::vector<std::string>& types() const { return types_; }

    static constexpr int kOutside = 0;
    int begin_tag(std::size_t type_index) const { return 1 + 2 * static_cast<int>(type_index); }
    int inside_tag(std::size_t type_index) const { return 2 + 2 * static_cast<int>(type_index); }

    bool is_begin(int tag) const { return tag > 0 && tag % 2 == 1; }
    bool is_inside(int tag) const { return tag > 0 && tag % 2 == 0; }
    // Type index of a B-/I- tag; tag must not be O.
    std::size_t type_of(int tag) const { return static_cast<std::size_t>((tag - 1) / 2); }

    const std::string& tag_name(int tag) const { return tag_names_[static_cast<std::size_t>(tag)]; }
    // Returns nullopt for unknown tag strings.
    std::optional<int> tag_index(const std::string& name) const;
    std::optional<std::size_t> type_index(const std::string& type) const;

    bool valid_bio(const std::vector<int>& tags) const;

private:
    std::vector<std::string> types_;
    std::vector<std::string> tag_names_;
    std::map<std::string, int> tag_index_;
    std::map<std::string, std::size_t> type_index_;
};

enum class Origin : std::uint8_t { original, augmented };

// One tokenized sentence with one BIO tag per token.
struct Sentence {
    std::vector<std::string> tokens;
    std::vector<int> tags;
    Origin origin = Origin::original;

    std::size_t size() const { return tokens.size(); }
    bool operator==(const Sentence& o) const {
        return tokens == o.tokens && tags == o.tags && origin == o.origin;
    }
};

// Half-open token range [start, end) carrying one entity.
struct EntitySpan {
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t type_index = 0;

    bool operator==(const EntitySpan& o) const {
        return start == o.start && end == o.end && type_index == o.type_index;
    }
};

// Type-indexed dictionary of entity surface forms (token sequences).
class EntityLexicon {
public:
    explicit EntityLexicon(bool case_sensitive = true) : case_sensitive_(case_sensitive) {}

    bool case_sensitive() const { return case_sensitive_; }
    void add(const std::string& type, std::vector<std::string> form);
    bool contains(const std::string& type, const std::vector<std::string>& form) const;
    const std::set<std::vector<std::string>>& forms(const std::string& type) const;
    bool has_type(const std::string& type) const { return forms_.find(type) != forms_.end(); }
    std::size_t total_forms() const;
    bool empty() const { return forms_.empty(); }
    const std::map<std::string, std::set<std::vector<std::string>>>& by_type() const { return forms_; }

    // Applies this lexicon's case flag to a token sequence.
    std::vector<std::string> normalize(const std::vector<std::string>& form) const;

    // TSV: "surface form (space-joined)<TAB>type", one entry per line.
    void save(std::ostream& out) const;
    static EntityLexicon load(std::istream& in, bool case_sensitive);
    void save_file(const std::string& path) const;
    static EntityLexicon load_file(const std::string& path, bool case_sensitive);

private:
    bool case_sensitive_;
    std::map<std::string, std::set<std::vector<std::string>>> forms_;
};

std::string fold_case(const std::string& s);

struct ParseOptions {
    bool repair_bio = false;     // illegal I-t becomes B-t instead of an error
    bool allow_untagged = false; // lines without a tag column read as O
    std::size_t token_column = 0;
    std::size_t tag_column = 1;
};

// One sentence per blank-line-separated block of "token<TAB>tag" lines;
// '#'-prefixed lines are comments. Throws DataError with a line number on
// unknown tags or (unless repairing) BIO violations.
std::vector<Sentence> parse_conll(std::istream& in, const LabelScheme& scheme,
                                  const ParseOptions& opts = {});
std::vector<Sentence> parse_conll_file(const std::string& path, const LabelScheme& scheme,
                                       const ParseOptions& opts = {});

void write_conll(std::ostream& out, const std::vector<Sentence>& corpus, const LabelScheme& scheme);
void write_conll_file(const std::string& path, const std::vector<Sentence>& corpus,
                      const LabelScheme& scheme);

// Maximal B-t (I-t)* runs as spans, ordered by start. The sentence must be
// BIO-valid.
std::vector<EntitySpan> extract_spans(const Sentence& s);
std::vector<EntitySpan> extract_spans(const std::vector<int>& tags);

// Exact BIO encoding of non-overlapping spans; O elsewhere.
std::vector<int> spans_to_bio(std::vector<EntitySpan> spans, std::size_t length,
                              const LabelScheme& scheme);

// Every entity surface form of the corpus, recorded under its type.
EntityLexicon build_lexicon(const std::vector<Sentence>& corpus, const LabelScheme& scheme,
                            bool case_sensitive = true);

}  // namespace ner
