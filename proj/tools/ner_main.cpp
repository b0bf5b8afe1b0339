#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ner/augment.hpp"
#include "ner/config.hpp"
#include "ner/corpus.hpp"
#include "ner/errors.hpp"
#include "ner/pipeline.hpp"
#include "ner/postprocess.hpp"

namespace {

using namespace ner;

const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{"epochs",  "batch",    "encoder-lr", "crf-lr",
                                            "dropout", "max-len",  "patience",   "seed",
                                            "joint",   "ratio",    "drop-p"};
    return keys;
}

// Holds flag-bound values; whether a flag was actually given is read back
// from CLI11 so that flags override the config file, which overrides
// defaults.
struct TrainFlags {
    std::uint64_t epochs = 0;
    std::uint64_t batch = 0;
    double encoder_lr = 0.0;
    double crf_lr = 0.0;
    double dropout = 0.0;
    std::uint64_t max_len = 0;
    std::uint64_t patience = 0;
    bool joint = false;

    void bind(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch", batch, "mini-batch size");
        cmd->add_option("--encoder-lr", encoder_lr, "encoder learning rate");
        cmd->add_option("--crf-lr", crf_lr, "CRF and fusion learning rate");
        cmd->add_option("--dropout", dropout, "dropout probability");
        cmd->add_option("--max-len", max_len, "maximum sequence length");
        cmd->add_option("--patience", patience, "early-stop patience in epochs");
        cmd->add_flag("--joint", joint, "train end-to-end instead of two-stage");
    }

    TrainConfig resolve(CLI::App* cmd, const std::map<std::string, std::string>& file,
                        std::uint64_t seed, bool seed_given) const {
        TrainConfig cfg;
        cfg.epochs = config_u64(file, "epochs", cfg.epochs);
        cfg.batch_size = config_u64(file, "batch", cfg.batch_size);
        cfg.encoder_lr = config_double(file, "encoder-lr", cfg.encoder_lr);
        cfg.crf_lr = config_double(file, "crf-lr", cfg.crf_lr);
        cfg.dropout = config_double(file, "dropout", cfg.dropout);
        cfg.max_len = config_u64(file, "max-len", cfg.max_len);
        cfg.patience = config_u64(file, "patience", cfg.patience);
        cfg.seed = config_u64(file, "seed", cfg.seed);
        cfg.joint = config_bool(file, "joint", cfg.joint);
        if (cmd->count("--epochs")) cfg.epochs = epochs;
        if (cmd->count("--batch")) cfg.batch_size = batch;
        if (cmd->count("--encoder-lr")) cfg.encoder_lr = encoder_lr;
        if (cmd->count("--crf-lr")) cfg.crf_lr = crf_lr;
        if (cmd->count("--dropout")) cfg.dropout = dropout;
        if (cmd->count("--max-len")) cfg.max_len = max_len;
        if (cmd->count("--patience")) cfg.patience = patience;
        if (cmd->count("--joint")) cfg.joint = joint;
        if (seed_given) cfg.seed = seed;
        cfg.validate();
        return cfg;
    }
};

std::map<std::string, std::string> load_config(const std::string& path) {
    if (path.empty()) return {};
    return parse_config_file(path, config_keys());
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

std::optional<PostprocessOptions> make_postprocess(bool enabled, const std::string& lexicon_path,
                                                   bool case_insensitive, bool fill_only) {
    if (!enabled) return std::nullopt;
    EntityLexicon lex = EntityLexicon::load_file(lexicon_path, !case_insensitive);
    PostprocessOptions post(std::move(lex), fill_only);
    return post;
}

int run_augment(const std::string& in_path, const std::string& out_path,
                const std::string& lexicon_path, const AugmentConfig& cfg) {
    LabelScheme scheme = LabelScheme::default_scheme();
    std::vector<Sentence> corpus = parse_conll_file(in_path, scheme);
    EntityLexicon lex = lexicon_path.empty() ? build_lexicon(corpus, scheme)
                                             : EntityLexicon::load_file(lexicon_path, true);
    std::vector<MaskedSentence> masked;
    masked.reserve(corpus.size());
    for (const Sentence& s : corpus) masked.push_back(mask_entities(s, scheme));
    MarkovGenerator gen = MarkovGenerator::train(masked);
    std::vector<Sentence> expanded = augment_corpus(corpus, cfg, lex, gen, scheme, &std::cerr);
    write_conll_file(out_path, expanded, scheme);
    std::cerr << "augment: " << corpus.size() << " -> " << expanded.size() << " sentences\n";
    return 0;
}

int run_train(const std::string& data_path, const std::string& dev_path,
              const std::string& model_path, const TrainConfig& cfg) {
    LabelScheme scheme = LabelScheme::default_scheme();
    std::vector<Sentence> train = parse_conll_file(data_path, scheme);
    std::vector<Sentence> dev;
    if (!dev_path.empty()) dev = parse_conll_file(dev_path, scheme);
    EvalReport report;
    ModelBundle bundle =
        train_pipeline(train, dev, cfg, scheme, PipelineOptions{}, &std::cerr, &report);
    save_bundle(bundle, model_path);
    std::cout << report.to_tsv();
    return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, const std::optional<PostprocessOptions>& post) {
    ModelBundle bundle = load_bundle(model_path);
    ParseOptions opts;
    opts.allow_untagged = true;
    std::vector<Sentence> input = parse_conll_file(data_path, bundle.scheme, opts);
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(input.size());
    for (const Sentence& s : input) tokens.push_back(s.tokens);
    std::vector<std::vector<int>> tags =
        predict_corpus(bundle, tokens, post ? &*post : nullptr, &std::cerr);
    std::vector<Sentence> tagged;
    tagged.reserve(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        Sentence s;
        s.tokens.assign(tokens[i].begin(),
                        tokens[i].begin() + static_cast<std::ptrdiff_t>(tags[i].size()));
        s.tags = tags[i];
        tagged.push_back(std::move(s));
    }
    write_conll_file(out_path, tagged, bundle.scheme);
    return 0;
}

int run_eval(const std::string& model_path, const std::string& data_path,
             const std::string& out_path, const std::optional<PostprocessOptions>& post) {
    ModelBundle bundle = load_bundle(model_path);
    std::vector<Sentence> data = parse_conll_file(data_path, bundle.scheme);
    EvalReport report = evaluate(bundle, data, post ? &*post : nullptr, &std::cerr);
    write_text(out_path, report.to_tsv());
    return 0;
}

int run_ablate(const std::string& data_path, const std::string& dev_path,
               const std::string& out_path, const std::string& lexicon_path,
               const std::vector<std::uint64_t>& ratios, const TrainConfig& cfg, double drop_p) {
    LabelScheme scheme = LabelScheme::default_scheme();
    std::vector<Sentence> corpus = parse_conll_file(data_path, scheme);
    std::vector<Sentence> train = corpus, dev;
    if (dev_path.empty())
        std::tie(train, dev) = split_dev(corpus);
    else
        dev = parse_conll_file(dev_path, scheme);

    EntityLexicon lex = lexicon_path.empty() ? build_lexicon(train, scheme)
                                             : EntityLexicon::load_file(lexicon_path, true);
    std::vector<MaskedSentence> masked;
    masked.reserve(train.size());
    for (const Sentence& s : train) masked.push_back(mask_entities(s, scheme));
    MarkovGenerator gen = MarkovGenerator::train(masked);

    AugmentConfig aug;
    aug.deletion_p = drop_p;
    aug.seed = cfg.seed;
    std::vector<std::size_t> ratio_list(ratios.begin(), ratios.end());
    EncoderConfig enc_cfg = default_encoder_configs(cfg.dropout, cfg.max_len)[0];
    std::vector<AblationRow> rows =
        ablate_augmentation(train, dev, ratio_list, cfg, aug, lex, gen, scheme, enc_cfg,
                            &std::cerr);
    write_text(out_path, ablation_tsv(rows));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale NER toolkit: encoder ensemble with CRF decoding, entity-aware "
                 "data augmentation and dictionary post-processing"};
    app.require_subcommand(1);

    std::string config_path, model_path, data_path, dev_path, out_path, in_path, lexicon_path;
    std::uint64_t seed = 0;
    bool postprocess = false, case_insensitive = false, fill_only = false;
    std::uint64_t ratio = 2;
    double drop_p = 0.1;
    std::vector<std::uint64_t> ratios;
    TrainFlags train_flags, ablate_flags;

    CLI::App* augment_cmd = app.add_subcommand("augment", "expand a corpus by entity infilling");
    augment_cmd->add_option("--in", in_path, "input corpus")->required();
    augment_cmd->add_option("--out", out_path, "output corpus")->required();
    augment_cmd->add_option("--lexicon", lexicon_path,
                            "entity lexicon TSV (default: built from the input)");
    augment_cmd->add_option("--ratio", ratio, "augmented copies per sentence");
    augment_cmd->add_option("--drop-p", drop_p, "non-entity token deletion probability");
    augment_cmd->add_option("--seed", seed, "random seed");
    augment_cmd->add_option("--config", config_path, "key = value config file");

    CLI::App* train_cmd = app.add_subcommand("train", "fine-tune encoders and train the ensemble");
    train_cmd->add_option("--data", data_path, "training corpus")->required();
    train_cmd->add_option("--dev", dev_path, "dev corpus (default: last 10% of --data)");
    train_cmd->add_option("--model", model_path, "output model file")->required();
    train_cmd->add_option("--seed", seed, "random seed");
    train_cmd->add_option("--config", config_path, "key = value config file");
    train_flags.bind(train_cmd);

    CLI::App* predict_cmd = app.add_subcommand("predict", "tag a corpus with a trained model");
    predict_cmd->add_option("--model", model_path, "model file")->required();
    predict_cmd->add_option("--data", data_path, "input corpus (tags optional)")->required();
    predict_cmd->add_option("--out", out_path, "output corpus")->required();
    CLI::Option* p_lex = predict_cmd->add_option("--lexicon", lexicon_path, "entity lexicon TSV");
    predict_cmd->add_flag("--postprocess", postprocess, "apply dictionary post-processing")
        ->needs(p_lex);
    predict_cmd->add_flag("--case-insensitive", case_insensitive, "fold case when matching");
    predict_cmd->add_flag("--fill-only", fill_only, "only fill O-tagged regions");

    CLI::App* eval_cmd = app.add_subcommand("eval", "entity-level evaluation report");
    eval_cmd->add_option("--model", model_path, "model file")->required();
    eval_cmd->add_option("--data", data_path, "gold corpus")->required();
    eval_cmd->add_option("--out", out_path, "report TSV (default: stdout)");
    CLI::Option* e_lex = eval_cmd->add_option("--lexicon", lexicon_path, "entity lexicon TSV");
    eval_cmd->add_flag("--postprocess", postprocess, "apply dictionary post-processing")
        ->needs(e_lex);
    eval_cmd->add_flag("--case-insensitive", case_insensitive, "fold case when matching");
    eval_cmd->add_flag("--fill-only", fill_only, "only fill O-tagged regions");

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "train at several augmentation ratios and compare");
    ablate_cmd->add_option("--data", data_path, "training corpus")->required();
    ablate_cmd->add_option("--dev", dev_path, "dev corpus (default: last 10% of --data)");
    ablate_cmd->add_option("--ratios", ratios, "augmentation ratios, comma separated")
        ->required()
        ->delimiter(',');
    ablate_cmd->add_option("--lexicon", lexicon_path,
                           "entity lexicon TSV (default: built from the training data)");
    ablate_cmd->add_option("--drop-p", drop_p, "non-entity token deletion probability");
    ablate_cmd->add_option("--out", out_path, "output TSV (default: stdout)");
    ablate_cmd->add_option("--seed", seed, "random seed");
    ablate_cmd->add_option("--config", config_path, "key = value config file");
    ablate_flags.bind(ablate_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(augment_cmd)) {
            auto file = load_config(config_path);
            AugmentConfig cfg;
            cfg.ratio = config_u64(file, "ratio", cfg.ratio);
            cfg.deletion_p = config_double(file, "drop-p", cfg.deletion_p);
            cfg.seed = config_u64(file, "seed", cfg.seed);
            if (augment_cmd->count("--ratio")) cfg.ratio = ratio;
            if (augment_cmd->count("--drop-p")) cfg.deletion_p = drop_p;
            if (augment_cmd->count("--seed")) cfg.seed = seed;
            if (cfg.deletion_p < 0.0 || cfg.deletion_p >= 1.0)
                throw std::invalid_argument("augment: --drop-p must be in [0, 1)");
            return run_augment(in_path, out_path, lexicon_path, cfg);
        }
        if (app.got_subcommand(train_cmd)) {
            auto file = load_config(config_path);
            TrainConfig cfg = train_flags.resolve(train_cmd, file, seed,
                                                  train_cmd->count("--seed") > 0);
            return run_train(data_path, dev_path, model_path, cfg);
        }
        if (app.got_subcommand(predict_cmd)) {
            auto post = make_postprocess(postprocess, lexicon_path, case_insensitive, fill_only);
            return run_predict(model_path, data_path, out_path, post);
        }
        if (app.got_subcommand(eval_cmd)) {
            auto post = make_postprocess(postprocess, lexicon_path, case_insensitive, fill_only);
            return run_eval(model_path, data_path, out_path, post);
        }
        if (app.got_subcommand(ablate_cmd)) {
            auto file = load_config(config_path);
            TrainConfig cfg = ablate_flags.resolve(ablate_cmd, file, seed,
                                                   ablate_cmd->count("--seed") > 0);
            double p = config_double(file, "drop-p", 0.1);
            if (ablate_cmd->count("--drop-p")) p = drop_p;
            return run_ablate(data_path, dev_path, out_path, lexicon_path, ratios, cfg, p);
        }
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const ner::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ner::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
