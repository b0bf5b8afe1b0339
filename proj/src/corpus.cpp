#include "ner/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ner/errors.hpp"

namespace ner {

LabelScheme::LabelScheme(std::vector<std::string> types) : types_(std::move(types)) {
    if (types_.empty()) throw std::invalid_argument("LabelScheme: no entity types");
    tag_names_.reserve(num_tags());
    tag_names_.push_back("O");
    for (std::size_t t = 0; t < types_.size(); ++t) {
        tag_names_.push_back("B-" + types_[t]);
        tag_names_.push_back("I-" + types_[t]);
        type_index_[types_[t]] = t;
    }
    for (std::size_t i = 0; i < tag_names_.size(); ++i)
        tag_index_[tag_names_[i]] = static_cast<int>(i);
}

LabelScheme LabelScheme::default_scheme() {
    return LabelScheme({"CW", "PER", "LOC", "GRP", "CORP", "PROD"});
}

std::optional<int> LabelScheme::tag_index(const std::string& name) const {
    auto it = tag_index_.find(name);
    if (it == tag_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> LabelScheme::type_index(const std::string& type) const {
    auto it = type_index_.find(type);
    if (it == type_index_.end()) return std::nullopt;
    return it->second;
}

bool LabelScheme::valid_bio(const std::vector<int>& tags) const {
    for (std::size_t i = 0; i < tags.size(); ++i) {
        int tag = tags[i];
        if (tag < 0 || static_cast<std::size_t>(tag) >= num_tags()) return false;
        if (is_inside(tag)) {
            if (i == 0) return false;
            int prev = tags[i - 1];
            if (prev == kOutside || type_of(prev) != type_of(tag)) return false;
        }
    }
    return true;
}

std::string fold_case(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void EntityLexicon::add(const std::string& type, std::vector<std::string> form) {
    if (form.empty()) throw std::invalid_argument("EntityLexicon: empty surface form");
    forms_[type].insert(normalize(form));
}

std::vector<std::string> EntityLexicon::normalize(const std::vector<std::string>& form) const {
    if (case_sensitive_) return form;
    std::vector<std::string> out;
    out.reserve(form.size());
    for (const auto& t : form) out.push_back(fold_case(t));
    return out;
}

bool EntityLexicon::contains(const std::string& type, const std::vector<std::string>& form) const {
    auto it = forms_.find(type);
    if (it == forms_.end()) return false;
    return it->second.count(normalize(form)) > 0;
}

const std::set<std::vector<std::string>>& EntityLexicon::forms(const std::string& type) const {
    static const std::set<std::vector<std::string>> kEmpty;
    auto it = forms_.find(type);
    return it == forms_.end() ? kEmpty : it->second;
}

std::size_t EntityLexicon::total_forms() const {
    std::size_t n = 0;
    for (const auto& [type, forms] : forms_) n += forms.size();
    return n;
}

void EntityLexicon::save(std::ostream& out) const {
    for (const auto& [type, forms] : forms_) {
        for (const auto& form : forms) {
            for (std::size_t i = 0; i < form.size(); ++i) {
                if (i) out << ' ';
                out << form[i];
            }
            out << '\t' << type << '\n';
        }
    }
}

EntityLexicon EntityLexicon::load(std::istream& in, bool case_sensitive) {
    EntityLexicon lex(case_sensitive);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError("lexicon line " + std::to_string(lineno) + ": missing tab separator");
        std::string surface = line.substr(0, tab);
        std::string type = line.substr(tab + 1);
        if (type.empty())
            throw DataError("lexicon line " + std::to_string(lineno) + ": empty type");
        std::vector<std::string> form;
        std::istringstream ss(surface);
        std::string tok;
        while (ss >> tok) form.push_back(tok);
        if (form.empty())
            throw DataError("lexicon line " + std::to_string(lineno) + ": empty surface form");
        lex.add(type, std::move(form));
    }
    return lex;
}

void EntityLexicon::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open lexicon file for writing: " + path);
    save(out);
}

EntityLexicon EntityLexicon::load_file(const std::string& path, bool case_sensitive) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon file: " + path);
    return load(in, case_sensitive);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
        auto tab = line.find('\t', pos);
        if (tab == std::string::npos) {
            cols.push_back(line.substr(pos));
            return cols;
        }
        cols.push_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
}

}  // namespace

std::vector<Sentence> parse_conll(std::istream& in, const LabelScheme& scheme,
                                  const ParseOptions& opts) {
    std::vector<Sentence> corpus;
    Sentence current;
    std::string line;
    std::size_t lineno = 0;

    auto flush = [&]() {
        if (current.tokens.empty()) return;
        corpus.push_back(std::move(current));
        current = Sentence{};
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '#') continue;
        if (line.empty()) {
            flush();
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() <= opts.token_column)
            throw DataError("line " + std::to_string(lineno) + ": missing token column");
        std::string token = cols[opts.token_column];
        if (token.empty())
            throw DataError("line " + std::to_string(lineno) + ": empty token");

        int tag = LabelScheme::kOutside;
        if (cols.size() > opts.tag_column && !cols[opts.tag_column].empty()) {
            auto idx = scheme.tag_index(cols[opts.tag_column]);
            if (!idx)
                throw DataError("line " + std::to_string(lineno) + ": unknown tag '" +
                                cols[opts.tag_column] + "'");
            tag = *idx;
        } else if (!opts.allow_untagged) {
            throw DataError("line " + std::to_string(lineno) + ": missing tag column");
        }

        if (scheme.is_inside(tag)) {
            bool legal = !current.tags.empty() && current.tags.back() != LabelScheme::kOutside &&
                         scheme.type_of(current.tags.back()) == scheme.type_of(tag);
            if (!legal) {
                if (!opts.repair_bio)
                    throw DataError("line " + std::to_string(lineno) + ": BIO violation: " +
                                    scheme.tag_name(tag) + " without preceding B-/I- of same type");
                tag = scheme.begin_tag(scheme.type_of(tag));
            }
        }
        current.tokens.push_back(std::move(token));
        current.tags.push_back(tag);
    }
    flush();
    return corpus;
}

std::vector<Sentence> parse_conll_file(const std::string& path, const LabelScheme& scheme,
                                       const ParseOptions& opts) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);
    return parse_conll(in, scheme, opts);
}

void write_conll(std::ostream& out, const std::vector<Sentence>& corpus, const LabelScheme& scheme) {
    for (std::size_t s = 0; s < corpus.size(); ++s) {
        if (s) out << '\n';
        const Sentence& sent = corpus[s];
        for (std::size_t i = 0; i < sent.tokens.size(); ++i)
            out << sent.tokens[i] << '\t' << scheme.tag_name(sent.tags[i]) << '\n';
    }
}

void write_conll_file(const std::string& path, const std::vector<Sentence>& corpus,
                      const LabelScheme& scheme) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open corpus file for writing: " + path);
    write_conll(out, corpus, scheme);
}

std::vector<EntitySpan> extract_spans(const std::vector<int>& tags) {
    std::vector<EntitySpan> spans;
    std::size_t i = 0;
    while (i < tags.size()) {
        int tag = tags[i];
        if (tag == LabelScheme::kOutside) {
            ++i;
            continue;
        }
        // BIO validity means an entity always opens with B here.
        std::size_t type = static_cast<std::size_t>((tag - 1) / 2);
        std::size_t start = i++;
        while (i < tags.size() && tags[i] > 0 && tags[i] % 2 == 0 &&
               static_cast<std::size_t>((tags[i] - 1) / 2) == type)
            ++i;
        spans.push_back({start, i, type});
    }
    return spans;
}

std::vector<EntitySpan> extract_spans(const Sentence& s) { return extract_spans(s.tags); }

std::vector<int> spans_to_bio(std::vector<EntitySpan> spans, std::size_t length,
                              const LabelScheme& scheme) {
    std::sort(spans.begin(), spans.end(),
              [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
    std::vector<int> tags(length, LabelScheme::kOutside);
    std::size_t prev_end = 0;
    for (const auto& span : spans) {
        if (span.start >= span.end || span.end > length)
            throw std::invalid_argument("spans_to_bio: span out of range");
        if (span.start < prev_end) throw std::invalid_argument("spans_to_bio: overlapping spans");
        if (span.type_index >= scheme.num_types())
            throw std::invalid_argument("spans_to_bio: type index out of range");
        tags[span.start] = scheme.begin_tag(span.type_index);
        for (std::size_t i = span.start + 1; i < span.end; ++i)
            tags[i] = scheme.inside_tag(span.type_index);
        prev_end = span.end;
    }
    return tags;
}

EntityLexicon build_lexicon(const std::vector<Sentence>& corpus, const LabelScheme& scheme,
                            bool case_sensitive) {
    EntityLexicon lex(case_sensitive);
    for (const Sentence& s : corpus) {
        for (const EntitySpan& span : extract_spans(s)) {
            std::vector<std::string> form(s.tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                                          s.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
            lex.add(scheme.types()[span.type_index], std::move(form));
        }
    }
    return lex;
}

}  // namespace ner
