#include "simpletag/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "simpletag/errors.hpp"

namespace simpletag {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string manifest;
  std::string train;
  std::string dev;
  std::string test;
  std::string checkpoint;
  std::string out;
  std::string pred;
  std::optional<std::uint64_t> seed;
  bool no_attn_1d = false;
  bool no_attn_2d = false;
  bool no_token_1d = false;
  bool no_token_2d = false;
  bool no_conv = false;
  bool no_relpos = false;
  bool no_rotary = false;
  std::string mask_layers;
};

void add_run_options(CLI::App& cmd, Options& o) {
  cmd.add_option("--config", o.config, "key = value config file");
  cmd.add_option("--seed", o.seed, "random seed (overrides config)");
  cmd.add_flag("--no-attn-branch-1d", o.no_attn_1d, "drop the attention -> 1D branch");
  cmd.add_flag("--no-attn-branch-2d", o.no_attn_2d, "drop the attention -> 2D branch");
  cmd.add_flag("--no-token-branch-1d", o.no_token_1d, "drop the token -> 1D branch");
  cmd.add_flag("--no-token-branch-2d", o.no_token_2d, "drop the token -> 2D branch");
  cmd.add_flag("--no-conv", o.no_conv, "skip the convolution blocks");
  cmd.add_flag("--no-relpos", o.no_relpos, "zero the relative-position channels");
  cmd.add_flag("--no-rotary", o.no_rotary, "score token pairs without rotary positions");
  cmd.add_option("--mask-layers", o.mask_layers, "1-based layers whose attention is zeroed, e.g. 1-2,4");
}

// defaults < config file < environment < command-line flags
RunConfig resolve_config(const Options& o, RunConfig base = {}) {
  RunConfig c = std::move(base);
  if (!o.config.empty()) apply_config_file(c, o.config);
  apply_env_overrides(c);
  if (o.seed) c.train.seed = *o.seed;
  auto& a = c.train.ablation;
  if (o.no_attn_1d) a.branches.attention1d = false;
  if (o.no_attn_2d) a.branches.attention2d = false;
  if (o.no_token_1d) a.branches.token1d = false;
  if (o.no_token_2d) a.branches.token2d = false;
  if (o.no_conv) a.conv = false;
  if (o.no_relpos) a.relpos = false;
  if (o.no_rotary) a.rotary = false;
  if (!o.mask_layers.empty()) a.mask_layers = parse_layer_spec(o.mask_layers);
  return c;
}

std::vector<LabeledSentence> read_nonempty(const std::string& path, const char* role) {
  if (path.empty()) throw ConfigError(std::string("--") + role + " is required");
  auto out = read_v2_file(path);
  if (out.empty()) throw DataError(std::string(role) + " file " + path + " contains no sentences");
  return out;
}

std::vector<TripletSet> gold_of(const std::vector<LabeledSentence>& sentences) {
  std::vector<TripletSet> out;
  for (const auto& s : sentences) {
    TripletSet t = s.triplets;
    std::sort(t.begin(), t.end());
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::vector<std::string>> tokens_of(const std::vector<LabeledSentence>& sentences) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : sentences) out.push_back(s.tokens);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunManifest m;
  if (!o.manifest.empty()) {
    m = RunManifest::load(o.manifest);
    if (!o.out.empty()) m.out_path = o.out;
    if (!o.checkpoint.empty()) m.checkpoint_path = o.checkpoint;
  } else {
    m.config = resolve_config(o);
    m.train_path = o.train;
    m.dev_path = o.dev.empty() ? o.train : o.dev;
    m.out_path = o.out;
    m.checkpoint_path = o.checkpoint;
  }
  if (m.out_path.empty()) throw ConfigError("--out is required");
  m.config.validate();
  m.command = "train";
  const fs::path dir(m.out_path);
  fs::create_directories(dir);
  // Derived outputs live in the output directory unless named explicitly.
  const bool default_ckpt = m.checkpoint_path.empty() || (!o.manifest.empty() && o.checkpoint.empty());
  const fs::path ckpt = default_ckpt ? dir / "model.ckpt" : fs::path(m.checkpoint_path);
  m.checkpoint_path = ckpt.string();

  const auto train = read_nonempty(m.train_path, "train");
  const auto dev = read_nonempty(m.dev_path, "dev");
  m.run_id = compute_run_id(m.config, {m.train_path, m.dev_path});

  std::ofstream log(dir / "train.log.jsonl", std::ios::trunc);
  auto run = train_run(m.config, train, dev, &log);
  save_checkpoint(ckpt, *run.best.model, run.best.vocab, run.best.ablation);
  run.best.vocab.save(dir / "vocab.txt");
  m.save(dir / "manifest.txt");

  for (const auto& r : run.fit.history) {
    out << "epoch " << r.epoch << " loss " << r.loss << " dev " << format_prf_line(r.dev) << '\n';
  }
  out << "best dev F1 " << run.fit.best_f1 << " at epoch " << run.fit.best_epoch << '\n';
  out << "checkpoint " << ckpt.string() << '\n';
  out << "run_id " << m.run_id << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto gold_sentences = read_nonempty(o.test, "test");
  std::vector<TripletSet> pred;
  if (!o.pred.empty()) {
    pred = gold_of(read_v2_file(o.pred));
  } else {
    if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --pred");
    const auto ckpt = load_checkpoint(o.checkpoint);
    const ModelView view(*ckpt.model, ckpt.ablation);
    pred = predict(view, ckpt.vocab, tokens_of(gold_sentences));
  }
  const auto report = score_report(pred, gold_of(gold_sentences));
  const std::string text = format_report(report) + format_prf_line(report.micro) + "\n";
  out << text;
  if (!o.out.empty()) write_text(o.out, text);
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (o.test.empty()) throw ConfigError("--test (input file) is required");
  if (o.out.empty()) throw ConfigError("--out is required");
  const auto ckpt = load_checkpoint(o.checkpoint);
  const ModelView view(*ckpt.model, ckpt.ablation);
  const auto sentences = read_token_lines(o.test);
  const auto pred = predict(view, ckpt.vocab, sentences);

  std::string text;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    text += serialize_v2_line({sentences[i], pred[i]}) + "\n";
  }
  write_text(o.out, text);

  RunManifest m;
  m.command = "predict";
  m.test_path = o.test;
  m.checkpoint_path = o.checkpoint;
  m.out_path = o.out;
  m.run_id = compute_run_id(m.config, {o.checkpoint, o.test});
  m.save(o.out + ".manifest.txt");
  out << "wrote " << sentences.size() << " predictions to " << o.out << '\n';
  return kExitOk;
}

std::string format_ablation_table(const std::vector<std::pair<std::string, PRF>>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(48) << "variant" << std::right << std::setw(10) << "P"
     << std::setw(10) << "R" << std::setw(10) << "F1" << std::setw(10) << "dF1" << '\n';
  os << std::fixed << std::setprecision(4);
  const double base = rows.front().second.f1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& [name, prf] = rows[i];
    os << std::left << std::setw(48) << name << std::right << std::setw(10) << prf.precision
       << std::setw(10) << prf.recall << std::setw(10) << prf.f1;
    if (i == 0) {
      os << std::setw(10) << "-";
    } else {
      os << std::showpos << std::setw(10) << prf.f1 - base << std::noshowpos;
    }
    os << '\n';
  }
  return os.str();
}

int cmd_ablate(const Options& o, std::ostream& out) {
  RunConfig base;
  if (!o.checkpoint.empty()) base.model = load_checkpoint(o.checkpoint).model->config();
  RunConfig variant = resolve_config(o, base);
  variant.validate();
  RunConfig full = variant;
  full.train.ablation = {};

  const auto train = read_nonempty(o.train, "train");
  const std::string dev_path = o.dev.empty() ? o.train : o.dev;
  const auto dev = read_nonempty(dev_path, "dev");
  const std::string test_path = o.test.empty() ? dev_path : o.test;
  const auto test = read_nonempty(test_path, "test");

  std::vector<RunConfig> runs{full};
  if (!variant.train.ablation.is_identity()) runs.push_back(variant);
  std::vector<std::pair<std::string, PRF>> rows;
  for (const auto& cfg : runs) {
    const auto run = train_run(cfg, train, dev);
    const ModelView view(*run.best.model, run.best.ablation);
    const auto pred = predict(view, run.best.vocab, tokens_of(test));
    rows.emplace_back(cfg.train.ablation.describe(), score(pred, gold_of(test)));
  }
  const std::string table = format_ablation_table(rows);
  out << table;

  if (!o.out.empty()) {
    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_text(dir / "ablation.txt", table);
    RunManifest m;
    m.config = variant;
    m.command = "ablate";
    m.train_path = o.train;
    m.dev_path = dev_path;
    m.test_path = test_path;
    m.checkpoint_path = o.checkpoint;
    m.out_path = o.out;
    m.run_id = compute_run_id(variant, {o.train, dev_path, test_path});
    m.save(dir / "manifest.txt");
  }
  return kExitOk;
}

}  // namespace

TrainedRun train_run(const RunConfig& config, const std::vector<LabeledSentence>& train,
                     const std::vector<LabeledSentence>& dev, std::ostream* log) {
  config.validate();
  TrainedRun run;
  const auto vocab = build_vocab(train, config.min_count);
  ModelConfig model_config = config.model;
  model_config.encoder.vocab_size = vocab.size();
  Model model(model_config, config.train.seed);
  const auto examples = prepare_examples(train, vocab, model_config.encoder.max_len, &run.warnings);
  run.fit = fit(model, vocab, config.train, examples, dev, log);
  run.best = checkpoint_from_bytes(run.fit.best_checkpoint);
  return run;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Aspect sentiment triplet extraction with attention-matrix tagging"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train a model and keep the best-dev checkpoint");
  add_run_options(*train, o);
  train->add_option("--train", o.train, "training file (V2 format)");
  train->add_option("--dev", o.dev, "development file; defaults to the training file");
  train->add_option("--out", o.out, "output directory");
  train->add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/model.ckpt)");
  train->add_option("--manifest", o.manifest, "rerun from a manifest written by a previous run");

  auto* eval = app.add_subcommand("eval", "score a checkpoint or a prediction file");
  eval->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  eval->add_option("--test", o.test, "gold file (V2 format)")->required();
  eval->add_option("--pred", o.pred, "score this prediction file instead of running a model");
  eval->add_option("--out", o.out, "also write the report here");

  auto* pred = app.add_subcommand("predict", "write V2-format predictions");
  pred->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  pred->add_option("--test", o.test, "input file; annotations after #### are ignored")->required();
  pred->add_option("--out", o.out, "prediction file")->required();

  auto* ablate = app.add_subcommand("ablate", "train the full model and a switched variant");
  add_run_options(*ablate, o);
  ablate->add_option("--checkpoint", o.checkpoint, "take the model shape from this checkpoint");
  ablate->add_option("--train", o.train, "training file")->required();
  ablate->add_option("--dev", o.dev, "development file; defaults to the training file");
  ablate->add_option("--test", o.test, "evaluation file; defaults to the development file");
  ablate->add_option("--out", o.out, "directory for the table and manifest");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (pred->parsed()) return cmd_predict(o, out);
    if (ablate->parsed()) return cmd_ablate(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace simpletag
