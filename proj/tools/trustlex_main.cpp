// trustlex command line: featurize / train / predict / eval / dla / synth /
// tokenize, driven by flags or an INI config file (command line wins).

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "trustlex/trustlex.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  // paths
  std::string messages;
  std::string responses;
  std::string model_path;
  std::vector<std::string> lexica;  // name=path
  // featurization
  std::vector<int> orders = {1, 2, 3};
  double occurrence = 0.01;
  // reduction
  double alpha_fwe = 60.0;
  double target_fraction = 0.05;
  int oversampling = 15;
  int power_iterations = 5;
  // model
  std::vector<double> lambda_grid = trustlex::default_lambda_grid();
  std::string scheme = "uniform";
  double t_min = 200;
  double t_max = 1000;
  double alpha = 100;
  int cv_folds = 5;
  std::string label_version = "3q";
  // evaluation
  std::string setting = "S3";
  double wc_threshold = 0;
  std::vector<double> bins = {0, 250, 500, 1000, 2500, 5000};
  std::string bin_metric = "mae";
  std::vector<std::size_t> sweep_sizes;
  std::vector<std::string> sweep_schemes = trustlex::sweep_scheme_names();
  int repeats = 5;
  double r_aa = 0.70;
  double r_bb = 0.70;
  // dla
  double dla_alpha = 0.05;
  std::size_t dla_k = 50;
  std::string dla_sign = "both";
  std::string dla_family = trustlex::kFamilyNgramRel;
  bool dla_all_ngrams = false;
  std::string dla_label = "3q";
  // synth
  trustlex::SynthConfig synth;
  // global
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
};

std::string iso8601_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

fs::path require_out_dir(const RunConfig &cfg) {
  if (cfg.out_dir.empty()) throw trustlex::UsageError("--out is required for this command");
  fs::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

void write_manifest(const fs::path &dir, const std::string &command, const json &config,
                    std::uint64_t seed, const std::vector<std::string> &inputs,
                    const std::vector<std::string> &outputs) {
  std::string canonical = config.dump();
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a(command + "\n" + canonical)));
  json manifest{{"command", command}, {"config", config},   {"config_hash", hash},
                {"seed", seed},       {"inputs", inputs},   {"outputs", outputs},
                {"created_at", iso8601_now()}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
}

void check_input_exists(const std::string &path, const char *what, const char *producer) {
  if (path.empty()) throw trustlex::UsageError(std::string("missing required path for ") + what);
  if (!fs::exists(path)) {
    std::string msg = std::string(what) + " not found: " + path;
    if (producer) msg += std::string("; produce it with `trustlex ") + producer + "`";
    throw trustlex::DataError(msg);
  }
}

std::vector<trustlex::Lexicon> load_lexica(const std::vector<std::string> &specs) {
  std::vector<trustlex::Lexicon> out;
  for (const auto &spec : specs) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw trustlex::UsageError("lexicon spec must be name=path, got '" + spec + "'");
    std::string name = spec.substr(0, eq), path = spec.substr(eq + 1);
    check_input_exists(path, "lexicon file", nullptr);
    out.push_back(trustlex::load_lexicon_csv(path, name));
  }
  return out;
}

trustlex::Corpus load_inputs(const RunConfig &cfg, bool responses_required) {
  check_input_exists(cfg.messages, "messages file", "synth");
  if (responses_required || !cfg.responses.empty())
    check_input_exists(cfg.responses, "responses file", "synth");
  return trustlex::load_corpus(cfg.messages, cfg.responses);
}

trustlex::Featurized featurize(const RunConfig &cfg, bool responses_required = true) {
  trustlex::Corpus corpus = load_inputs(cfg, responses_required);
  auto lexica = load_lexica(cfg.lexica);
  return trustlex::featurize_corpus(std::move(corpus), lexica, cfg.orders, cfg.jobs);
}

trustlex::TrainConfig train_config(const RunConfig &cfg) {
  trustlex::TrainConfig tc;
  tc.reduce.min_user_fraction = cfg.occurrence;
  tc.reduce.alpha_fwe = cfg.alpha_fwe;
  tc.reduce.target_fraction = cfg.target_fraction;
  tc.reduce.oversampling = cfg.oversampling;
  tc.reduce.power_iterations = cfg.power_iterations;
  tc.scheme.kind = trustlex::parse_weight_kind(cfg.scheme);
  tc.scheme.t_min = cfg.t_min;
  tc.scheme.t_max = cfg.t_max;
  tc.scheme.alpha = cfg.alpha;
  tc.lambda_grid = cfg.lambda_grid;
  tc.cv_folds = cfg.cv_folds;
  tc.label_version = cfg.label_version;
  tc.seed = cfg.seed;
  return tc;
}

trustlex::EvalParams eval_params(const RunConfig &cfg) {
  trustlex::EvalParams ep;
  ep.wc_threshold = cfg.wc_threshold;
  ep.r_aa = cfg.r_aa;
  ep.r_bb = cfg.r_bb;
  ep.bin_edges = cfg.bins;
  ep.bin_metric = cfg.bin_metric;
  return ep;
}

json featurize_config_json(const RunConfig &cfg) {
  return json{{"messages", cfg.messages},   {"responses", cfg.responses},
              {"lexica", cfg.lexica},       {"orders", cfg.orders},
              {"occurrence", cfg.occurrence}};
}

json model_config_json(const RunConfig &cfg) {
  json j = featurize_config_json(cfg);
  j.update(json{{"alpha_fwe", cfg.alpha_fwe},
                {"target_fraction", cfg.target_fraction},
                {"oversampling", cfg.oversampling},
                {"power_iterations", cfg.power_iterations},
                {"lambda_grid", cfg.lambda_grid},
                {"scheme", cfg.scheme},
                {"t_min", cfg.t_min},
                {"t_max", cfg.t_max},
                {"alpha", cfg.alpha},
                {"cv_folds", cfg.cv_folds},
                {"label_version", cfg.label_version},
                {"wc_threshold", cfg.wc_threshold}});
  return j;
}

std::string family_file_name(const std::string &family) {
  std::string name = family;
  for (char &c : name)
    if (c == ':') c = '_';
  return "features_" + name + ".csv";
}

// label vector for users carrying the requested version, with row indices
std::pair<std::vector<std::size_t>, std::vector<double>> labeled_rows(
    const trustlex::Featurized &fz, trustlex::Version version, double wc_threshold) {
  std::vector<std::size_t> rows;
  std::vector<double> labels;
  for (std::size_t i = 0; i < fz.corpus.users.size(); ++i) {
    const auto &u = fz.corpus.users[i];
    auto label = version == trustlex::Version::q3 ? u.trust_3q : u.trust_10q;
    if (!label) continue;
    if (static_cast<double>(fz.word_count(i)) < wc_threshold) continue;
    rows.push_back(i);
    labels.push_back(*label);
  }
  return {rows, labels};
}

int cmd_tokenize() {
  std::string line;
  while (std::getline(std::cin, line)) {
    auto tokens = trustlex::tokenize(line);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) std::cout << '\t';
      std::cout << tokens[i];
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_synth(RunConfig &cfg) {
  fs::path dir = require_out_dir(cfg);
  trustlex::SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  auto out = trustlex::generate(sc, dir);
  json config{{"n_short_users", sc.n_short_users},
              {"n_long_users", sc.n_long_users},
              {"positive_words", sc.positive_words},
              {"negative_words", sc.negative_words},
              {"neutral_words", sc.neutral_words},
              {"signal_strength", sc.signal_strength},
              {"wc_log_median", sc.wc_log_median},
              {"wc_sigma", sc.wc_sigma},
              {"noise_std", sc.noise_std},
              {"items_total", sc.items_total},
              {"items_3q", sc.items_3q},
              {"reverse_fraction", sc.reverse_fraction},
              {"message_len_min", sc.message_len_min},
              {"message_len_max", sc.message_len_max}};
  write_manifest(dir, "synth", config, cfg.seed, {},
                 {"messages.jsonl", "responses.csv", "ground_truth.csv"});
  std::cout << "wrote " << out.messages_path.string() << " (" << out.user_ids.size()
            << " users)\n";
  return 0;
}

int cmd_featurize(RunConfig &cfg) {
  fs::path dir = require_out_dir(cfg);
  auto fz = featurize(cfg);
  std::vector<std::string> outputs = {"scores.csv"};
  {
    std::ofstream scores(dir / "scores.csv", std::ios::binary);
    trustlex::write_scored_csv(fz.corpus, scores);
  }
  for (const auto &m : fz.matrices) {
    std::string name = family_file_name(m.family);
    std::ofstream out(dir / name, std::ios::binary);
    trustlex::write_triplets_csv(m, out);
    outputs.push_back(name);
  }
  write_manifest(dir, "featurize", featurize_config_json(cfg), cfg.seed,
                 {cfg.messages, cfg.responses}, outputs);
  std::cout << "wrote " << outputs.size() << " files to " << dir.string() << "\n";
  return 0;
}

int cmd_train(RunConfig &cfg) {
  fs::path dir = require_out_dir(cfg);
  auto fz = featurize(cfg);
  auto version = trustlex::parse_version(cfg.label_version);
  auto [rows, labels] = labeled_rows(fz, version, cfg.wc_threshold);
  if (rows.empty())
    throw trustlex::DataError("no users carry a " + cfg.label_version +
                              " score above the word-count threshold");
  std::vector<std::size_t> wcs;
  for (std::size_t u : rows) wcs.push_back(fz.word_count(u));

  trustlex::TraitModel model = trustlex::fit_trait_model(fz.rows(rows), labels, wcs, train_config(cfg));
  json doc = trustlex::model_to_json(model);
  doc["featurization"] = {{"orders", cfg.orders}, {"lexica", cfg.lexica}};
  {
    std::ofstream out(dir / "model.json", std::ios::binary);
    out << doc.dump(2) << '\n';
  }
  write_manifest(dir, "train", model_config_json(cfg), cfg.seed, {cfg.messages, cfg.responses},
                 {"model.json"});
  std::cout << "trained on " << model.n_train << " users (lambda " << model.lambda << "), wrote "
            << (dir / "model.json").string() << "\n";
  return 0;
}

json read_model_doc(const std::string &path) {
  check_input_exists(path, "model file", "train");
  std::ifstream in(path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception &e) {
    throw trustlex::DataError("model file " + path + " is not valid JSON: " + e.what());
  }
  return doc;
}

int cmd_predict(RunConfig &cfg) {
  fs::path dir = require_out_dir(cfg);
  json doc = read_model_doc(cfg.model_path);
  trustlex::TraitModel model = trustlex::model_from_json(doc);
  if (doc.contains("featurization")) {
    cfg.orders = doc["featurization"]["orders"].get<std::vector<int>>();
    if (cfg.lexica.empty())
      cfg.lexica = doc["featurization"]["lexica"].get<std::vector<std::string>>();
  }
  auto fz = featurize(cfg, /*responses_required=*/false);
  Eigen::VectorXd preds = trustlex::predict(model, fz.matrices);
  {
    std::ofstream out(dir / "predictions.csv", std::ios::binary);
    out << "user_id,prediction\n";
    for (std::size_t i = 0; i < fz.corpus.users.size(); ++i)
      out << trustlex::csv::format_field(fz.corpus.users[i].user_id) << ','
          << trustlex::csv::format_double(preds(static_cast<Eigen::Index>(i))) << '\n';
  }
  json config = featurize_config_json(cfg);
  config["model"] = cfg.model_path;
  write_manifest(dir, "predict", config, cfg.seed, {cfg.messages, cfg.responses, cfg.model_path},
                 {"predictions.csv"});
  std::cout << "wrote " << (dir / "predictions.csv").string() << " (" << fz.corpus.users.size()
            << " users)\n";
  return 0;
}

int cmd_eval(RunConfig &cfg) {
  fs::path dir = require_out_dir(cfg);
  auto fz = featurize(cfg);
  auto setting = trustlex::parse_setting(cfg.setting);
  trustlex::EvaluationReport rep = trustlex::run_setting(fz, setting, train_config(cfg), eval_params(cfg));
  rep.bins = trustlex::error_by_wordcount(rep, cfg.bins, cfg.bin_metric);
  if (!cfg.sweep_sizes.empty())
    rep.sweep = trustlex::training_size_sweep(fz, cfg.sweep_sizes, cfg.sweep_schemes,
                                              train_config(cfg), eval_params(cfg),
                                              trustlex::derive_seed(cfg.seed, "sweep"), cfg.repeats);

  std::vector<std::string> outputs = {"report.json", "report.txt", "bins.csv"};
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    out << trustlex::report_to_json(rep).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "report.txt", std::ios::binary);
    trustlex::write_report_text(rep, out);
  }
  {
    std::ofstream out(dir / "bins.csv", std::ios::binary);
    trustlex::write_bins_csv(rep.bins, out);
  }
  if (!rep.sweep.empty()) {
    std::ofstream out(dir / "sweep.csv", std::ios::binary);
    trustlex::write_sweep_csv(rep.sweep, out);
    outputs.push_back("sweep.csv");
  }
  json config = model_config_json(cfg);
  config.update(json{{"setting", cfg.setting},
                     {"bins", cfg.bins},
                     {"bin_metric", cfg.bin_metric},
                     {"sweep_sizes", cfg.sweep_sizes},
                     {"sweep_schemes", cfg.sweep_schemes},
                     {"repeats", cfg.repeats},
                     {"r_aa", cfg.r_aa},
                     {"r_bb", cfg.r_bb}});
  write_manifest(dir, "eval", config, cfg.seed, {cfg.messages, cfg.responses}, outputs);
  trustlex::write_report_text(rep, std::cout);
  return 0;
}

int cmd_dla(RunConfig &cfg) {
  fs::path dir = require_out_dir(cfg);
  auto fz = featurize(cfg);
  const trustlex::FeatureMatrix *family = nullptr;
  for (const auto &m : fz.matrices)
    if (m.family == cfg.dla_family) family = &m;
  if (!family) throw trustlex::UsageError("unknown feature family '" + cfg.dla_family + "'");

  auto version = trustlex::parse_version(cfg.dla_label);
  auto [rows, labels] = labeled_rows(fz, version, cfg.wc_threshold);
  if (rows.size() < 3) throw trustlex::DataError("differential language analysis needs >= 3 labeled users");

  trustlex::FeatureMatrix matrix = family->select_rows(rows);
  if (!cfg.dla_all_ngrams && cfg.dla_family != "LEXICON") matrix = trustlex::unigram_columns(matrix);
  auto results = trustlex::apply_bh(trustlex::correlate_features(matrix, labels), cfg.dla_alpha);

  auto sign = trustlex::parse_sign(cfg.dla_sign);
  std::vector<trustlex::DlaResult> pos, neg;
  if (sign == trustlex::Sign::positive || sign == trustlex::Sign::both)
    pos = trustlex::top_k(results, cfg.dla_k, trustlex::Sign::positive);
  if (sign == trustlex::Sign::negative || sign == trustlex::Sign::both)
    neg = trustlex::top_k(results, cfg.dla_k, trustlex::Sign::negative);
  {
    std::ofstream out(dir / "wordcloud.csv", std::ios::binary);
    trustlex::write_wordcloud_csv(pos, neg, out);
  }
  json config = featurize_config_json(cfg);
  config.update(json{{"dla_alpha", cfg.dla_alpha},
                     {"dla_k", cfg.dla_k},
                     {"dla_sign", cfg.dla_sign},
                     {"dla_family", cfg.dla_family},
                     {"dla_all_ngrams", cfg.dla_all_ngrams},
                     {"dla_label", cfg.dla_label},
                     {"wc_threshold", cfg.wc_threshold}});
  write_manifest(dir, "dla", config, cfg.seed, {cfg.messages, cfg.responses}, {"wordcloud.csv"});
  std::cout << "wrote " << (dir / "wordcloud.csv").string() << " (" << pos.size() << " positive, "
            << neg.size() << " negative)\n";
  return 0;
}

void add_corpus_options(CLI::App *cmd, RunConfig &cfg, bool responses_required = true) {
  cmd->add_option("--messages", cfg.messages, "messages JSONL path")->required();
  auto *resp = cmd->add_option("--responses", cfg.responses, "responses CSV path");
  if (responses_required) resp->required();
  cmd->add_option("--lexicon", cfg.lexica, "lexicon as name=path (repeatable)");
  cmd->add_option("--orders", cfg.orders, "n-gram orders (subset of 1..3)");
}

void add_model_options(CLI::App *cmd, RunConfig &cfg) {
  cmd->add_option("--occurrence", cfg.occurrence, "occurrence filter min user fraction");
  cmd->add_option("--alpha-fwe", cfg.alpha_fwe, "family-wise error selection alpha");
  cmd->add_option("--target-fraction", cfg.target_fraction,
                  "embedding size as a fraction of training users");
  cmd->add_option("--oversampling", cfg.oversampling, "randomized SVD oversampling");
  cmd->add_option("--power-iterations", cfg.power_iterations, "randomized SVD power iterations");
  cmd->add_option("--lambda-grid", cfg.lambda_grid, "ridge penalty grid");
  cmd->add_option("--scheme", cfg.scheme, "weight scheme: uniform, linear or logistic");
  cmd->add_option("--t-min", cfg.t_min, "word count mapped to weight 0");
  cmd->add_option("--t-max", cfg.t_max, "word count mapped to weight 1");
  cmd->add_option("--weight-alpha", cfg.alpha, "logistic weighting steepness");
  cmd->add_option("--cv-folds", cfg.cv_folds, "internal folds for lambda selection");
  cmd->add_option("--label-version", cfg.label_version, "training label version: 3q or 10q");
  cmd->add_option("--wc-threshold", cfg.wc_threshold, "word-count floor for train/test groups");
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"language-based trustfulness assessment"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI config file; sections per subcommand");

  RunConfig cfg;
  app.add_option("--seed", cfg.seed, "global random seed");
  app.add_option("--out", cfg.out_dir, "output directory");
  app.add_option("--jobs", cfg.jobs, "worker threads for tokenization")
      ->check(CLI::PositiveNumber);

  CLI::App *tokenize = app.add_subcommand("tokenize", "tokenize stdin lines to TSV tokens");

  CLI::App *synth = app.add_subcommand("synth", "generate a seeded synthetic corpus");
  synth->add_option("--users", cfg.synth.n_short_users, "short-version users");
  synth->add_option("--long-users", cfg.synth.n_long_users, "long-version users");
  synth->add_option("--pos-words", cfg.synth.positive_words, "trust-positive vocabulary size");
  synth->add_option("--neg-words", cfg.synth.negative_words, "trust-negative vocabulary size");
  synth->add_option("--neutral-words", cfg.synth.neutral_words, "neutral vocabulary size");
  synth->add_option("--signal", cfg.synth.signal_strength, "loaded-word log-odds shift per unit trait");
  synth->add_option("--wc-median", cfg.synth.wc_log_median, "word count lognormal median");
  synth->add_option("--wc-sigma", cfg.synth.wc_sigma, "word count lognormal sigma");
  synth->add_option("--noise-std", cfg.synth.noise_std, "per-item response noise std");
  synth->add_option("--items", cfg.synth.items_total, "long questionnaire item count");
  synth->add_option("--items-3q", cfg.synth.items_3q, "short questionnaire item count");
  synth->add_option("--reverse-fraction", cfg.synth.reverse_fraction, "reverse-scored item fraction");
  synth->add_option("--msg-min", cfg.synth.message_len_min, "minimum message length in tokens");
  synth->add_option("--msg-max", cfg.synth.message_len_max, "maximum message length in tokens");

  CLI::App *featurize_cmd = app.add_subcommand("featurize", "write scores and feature matrices");
  add_corpus_options(featurize_cmd, cfg);

  CLI::App *train = app.add_subcommand("train", "fit a trait model");
  add_corpus_options(train, cfg);
  add_model_options(train, cfg);

  CLI::App *predict = app.add_subcommand("predict", "score users with a trained model");
  predict->add_option("--model", cfg.model_path, "model.json path")->required();
  add_corpus_options(predict, cfg, /*responses_required=*/false);

  CLI::App *eval = app.add_subcommand("eval", "run an evaluation setting");
  add_corpus_options(eval, cfg);
  add_model_options(eval, cfg);
  eval->add_option("--setting", cfg.setting, "S1, S2 or S3");
  eval->add_option("--bins", cfg.bins, "word-count bin edges");
  eval->add_option("--bin-metric", cfg.bin_metric, "per-bin error metric: mae or mse");
  eval->add_option("--sweep-sizes", cfg.sweep_sizes, "training sizes for the weighting sweep");
  eval->add_option("--sweep-schemes", cfg.sweep_schemes, "sweep schemes");
  eval->add_option("--repeats", cfg.repeats, "sweep repeats");
  eval->add_option("--r-aa", cfg.r_aa, "questionnaire reliability");
  eval->add_option("--r-bb", cfg.r_bb, "language measure reliability");

  CLI::App *dla = app.add_subcommand("dla", "differential language analysis export");
  add_corpus_options(dla, cfg);
  dla->add_option("--dla-alpha", cfg.dla_alpha, "Benjamini-Hochberg FDR alpha");
  dla->add_option("--k", cfg.dla_k, "top features per sign");
  dla->add_option("--sign", cfg.dla_sign, "positive, negative or both");
  dla->add_option("--family", cfg.dla_family, "feature family to correlate");
  dla->add_flag("--all-ngrams", cfg.dla_all_ngrams, "keep higher-order n-grams too");
  dla->add_option("--dla-label", cfg.dla_label, "outcome label version: 3q or 10q");
  dla->add_option("--wc-threshold", cfg.wc_threshold, "word-count floor for included users");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (tokenize->parsed()) return cmd_tokenize();
    if (synth->parsed()) return cmd_synth(cfg);
    if (featurize_cmd->parsed()) return cmd_featurize(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (predict->parsed()) return cmd_predict(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (dla->parsed()) return cmd_dla(cfg);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const trustlex::UsageError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const trustlex::DataError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
