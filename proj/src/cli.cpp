#include "saesteer/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <utility>

#include <CLI11.hpp>
#include <json.hpp>

#include "binary_io.hpp"
#include "saesteer/checkpoint.hpp"
#include "saesteer/direction_bank.hpp"
#include "saesteer/feature_file.hpp"
#include "saesteer/kernels.hpp"
#include "saesteer/manifest.hpp"
#include "saesteer/metrics.hpp"
#include "saesteer/steering.hpp"
#include "saesteer/trainer.hpp"

namespace saesteer {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

using ConfigList = std::vector<std::pair<std::string, std::string>>;

void print_config(std::ostream& err, const ConfigList& items) {
  err << "resolved config:\n";
  for (const auto& [k, v] : items) err << "  " << k << " = " << v << "\n";
}

// key=value lines; '#' starts a comment. Keys name the long flags of the
// subcommand without the leading dashes. Flags given on the command line win.
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    const std::string where = path + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ValidationError(where + ": expected key=value");
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key == "config") throw ValidationError(where + ": config files cannot nest");
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) opt = sub.get_option_no_throw(key);
    if (opt == nullptr) {
      throw ValidationError(where + ": unknown key '" + key + "' for " + sub.get_name());
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void require(CLI::App& sub, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    const CLI::Option* opt = sub.get_option(name);
    if (opt->count() == 0) {
      throw ValidationError(sub.get_name() + ": " + name + " is required");
    }
  }
}

// train

struct TrainArgs {
  std::string features;
  std::string out;
  std::string loss_csv;
  TrainConfig config;
};

void add_train(CLI::App& sub, TrainArgs& a) {
  sub.add_option("--features", a.features, "SAEF feature file to train on");
  sub.add_option("--out", a.out, "checkpoint path");
  sub.add_option("--loss-csv", a.loss_csv, "loss history CSV (default <out>.loss.csv)");
  auto& c = a.config;
  sub.add_option("--k", c.k, "active latents per input")->capture_default_str();
  sub.add_option("--expansion", c.expansion_factor, "latent width m / d")->capture_default_str();
  sub.add_option("--alpha", c.alpha, "auxiliary loss weight")->capture_default_str();
  sub.add_option("--k-aux", c.k_aux, "dead latents in the auxiliary loss (0: 2k)")
      ->capture_default_str();
  sub.add_option("--dead-steps", c.dead_threshold_steps, "steps without firing before dead")
      ->capture_default_str();
  sub.add_option("--batch-size", c.batch_size)->capture_default_str();
  sub.add_option("--steps", c.total_steps, "total optimizer steps")->capture_default_str();
  sub.add_option("--lr", c.learning_rate)->capture_default_str();
  sub.add_option("--beta1", c.beta1)->capture_default_str();
  sub.add_option("--beta2", c.beta2)->capture_default_str();
  sub.add_option("--eps", c.epsilon)->capture_default_str();
  sub.add_option("--normalize-decoder", c.normalize_decoder, "true or false")
      ->capture_default_str();
  sub.add_option("--seed", c.seed)->capture_default_str();
  sub.add_option("--median-samples", c.median_sample_limit,
                 "subsample size for the pre-bias median")
      ->capture_default_str();
}

int run_train(CLI::App& sub, TrainArgs& a, std::ostream& out, std::ostream& err) {
  require(sub, {"--features", "--out"});
  auto [header, matrix] = load_feature_matrix(a.features);
  const auto& c = a.config;
  c.validate(header.d);
  const std::size_t m = c.latent_dim(header.d);
  print_config(err, {{"features", a.features},
                     {"d", std::to_string(header.d)},
                     {"records", std::to_string(matrix.rows())},
                     {"k", std::to_string(c.k)},
                     {"expansion_factor", std::to_string(c.expansion_factor)},
                     {"m", std::to_string(m)},
                     {"alpha", num(c.alpha)},
                     {"k_aux", std::to_string(c.resolved_k_aux(m))},
                     {"dead_threshold_steps", std::to_string(c.dead_threshold_steps)},
                     {"batch_size", std::to_string(c.batch_size)},
                     {"total_steps", std::to_string(c.total_steps)},
                     {"learning_rate", num(c.learning_rate)},
                     {"beta1", num(c.beta1)},
                     {"beta2", num(c.beta2)},
                     {"epsilon", num(c.epsilon)},
                     {"normalize_decoder", c.normalize_decoder ? "true" : "false"},
                     {"seed", std::to_string(c.seed)},
                     {"isa", std::string(kernels::isa_name(kernels::active_isa()))}});

  Trainer trainer(matrix, c);
  try {
    trainer.run(c.total_steps);
  } catch (const DivergenceError& e) {
    const std::string rescue = a.out + ".last_finite";
    write_checkpoint(rescue, e.last_finite_state().params);
    err << "error: training diverged at step " << e.step() << "; last finite state written to "
        << rescue << "\n";
    return 1;
  }
  const TrainState state = trainer.release();
  write_checkpoint(a.out, state.params);
  const std::string loss_path = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
  write_loss_history_csv(loss_path, state.loss_history);

  std::size_t dead = 0;
  for (const auto v : state.dead_mask(c.dead_threshold_steps)) dead += v != 0;
  out << "checkpoint " << a.out << "\n"
      << "fingerprint " << to_hex(sae_fingerprint(state.params)) << "\n"
      << "steps " << state.step << "\n"
      << "dead_latents " << dead << "\n"
      << "loss_history " << loss_path << "\n";
  if (!state.loss_history.empty()) {
    const auto& last = state.loss_history.back();
    out << "last_mse " << num(last.mse) << "\n";
  }
  return 0;
}

// build-bank

struct BankArgs {
  std::string features;
  std::string checkpoint;
  std::string out;
  std::string report;
  std::string strategy = "job-token-diff";
  std::string encoder = "inference";
};

void add_bank(CLI::App& sub, BankArgs& a) {
  sub.add_option("--features", a.features, "SAEF feature file with gender and profession labels");
  sub.add_option("--checkpoint", a.checkpoint, "SAEM checkpoint");
  sub.add_option("--out", a.out, "bank path");
  sub.add_option("--report", a.report, "JSON build report (default <out>.report.json)");
  sub.add_option("--strategy", a.strategy)
      ->check(CLI::IsMember({"job-token-diff", "eos-diff", "profession-average"}))
      ->capture_default_str();
  sub.add_option("--encoder", a.encoder, "inference (dense) or train (top-k)")
      ->check(CLI::IsMember({"inference", "train"}))
      ->capture_default_str();
}

int run_bank(CLI::App& sub, BankArgs& a, std::ostream& out, std::ostream& err) {
  require(sub, {"--features", "--checkpoint", "--out"});
  const SaeParams params = read_checkpoint(a.checkpoint);
  BankBuildOptions options;
  options.strategy = parse_strategy(a.strategy);
  options.encoder = a.encoder == "train" ? EncodeMode::TrainTopK : EncodeMode::InferenceDense;
  print_config(err, {{"features", a.features},
                     {"checkpoint", a.checkpoint},
                     {"strategy", a.strategy},
                     {"encoder", a.encoder},
                     {"k", std::to_string(params.k)},
                     {"expansion_factor", std::to_string(params.expansion_factor())},
                     {"m", std::to_string(params.m)}});

  FeatureManifest manifest;
  if (const auto mpath = manifest_path_for(a.features); std::filesystem::exists(mpath)) {
    manifest = read_manifest(mpath);
  } else {
    err << "warning: no manifest at " << mpath << "; professions get placeholder names\n";
  }
  FeatureFileReader reader(a.features);
  const auto result = build_bank(reader, manifest, params, options);
  if (result.report.position_mismatch) {
    err << "warning: " << a.strategy << " expects "
        << position_kind_name(required_position(options.strategy)) << " features but "
        << a.features << " holds " << position_kind_name(result.report.position_kind) << "\n";
  }
  for (const auto& s : result.report.skipped) {
    err << "warning: skipped profession " << s.name << " (id " << s.profession_id << "): no "
        << gender_name(s.missing) << " samples\n";
  }
  write_bank(a.out, result.bank);
  const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
  io::write_text_atomic(report_path, bank_report_json(result.bank, result.report));

  out << "bank " << a.out << "\n"
      << "strategy " << strategy_name(result.bank.strategy) << "\n"
      << "m " << result.bank.m << "\n"
      << "professions " << result.bank.size() << "\n"
      << "skipped " << result.report.skipped.size() << "\n"
      << "records " << result.report.records << "\n"
      << "fingerprint " << to_hex(result.bank.sae_fingerprint) << "\n"
      << "report " << report_path << "\n";
  return 0;
}

// emit-delta

struct DeltaArgs {
  std::string features;
  std::string bank;
  std::string checkpoint;
  std::string out;
  SteeringConfig steering;
};

void add_delta(CLI::App& sub, DeltaArgs& a) {
  sub.add_option("--features", a.features, "SAEF file of job-token residuals, one per prompt");
  sub.add_option("--bank", a.bank, "SAEB direction bank");
  sub.add_option("--checkpoint", a.checkpoint, "SAEM checkpoint the bank was built from");
  sub.add_option("--out", a.out, "delta file (.saed for binary, JSON Lines otherwise)");
  sub.add_option("--gamma", a.steering.gamma, "steering strength")->capture_default_str();
  sub.add_option("--temperature", a.steering.temperature, "softmax temperature")
      ->capture_default_str();
  sub.add_flag("--exact-match", a.steering.exact_match_required,
               "require a canonical bank match for every prompt");
}

int run_delta(CLI::App& sub, DeltaArgs& a, std::ostream& out, std::ostream& err) {
  require(sub, {"--features", "--bank", "--checkpoint", "--out"});
  a.steering.validate();
  const SaeParams params = read_checkpoint(a.checkpoint);
  const DirectionBank bank = read_bank(a.bank);
  const Fingerprint fp = sae_fingerprint(params);
  print_config(err, {{"features", a.features},
                     {"bank", a.bank},
                     {"checkpoint", a.checkpoint},
                     {"gamma", num(a.steering.gamma)},
                     {"temperature", num(a.steering.temperature)},
                     {"exact_match", a.steering.exact_match_required ? "true" : "false"},
                     {"k", std::to_string(params.k)},
                     {"expansion_factor", std::to_string(params.expansion_factor())},
                     {"strategy", std::string(strategy_name(bank.strategy))}});

  const Steerer steerer(bank, params, fp, a.steering);
  FeatureFileReader reader(a.features);
  check_dimension("prompt feature d vs checkpoint d", params.d, reader.header().d);
  if (reader.header().position_kind != PositionKind::JobToken) {
    err << "warning: " << a.features << " holds "
        << position_kind_name(reader.header().position_kind)
        << " residuals; deltas target the job token\n";
  }
  FeatureManifest manifest;
  if (const auto mpath = manifest_path_for(a.features); std::filesystem::exists(mpath)) {
    manifest = read_manifest(mpath);
  }

  DeltaBatch batch;
  batch.gamma = a.steering.gamma;
  batch.temperature = a.steering.temperature;
  batch.sae_fingerprint = fp;
  batch.d = static_cast<std::uint32_t>(params.d);
  std::size_t known = 0;
  std::size_t degenerate = 0;
  FeatureRecord rec;
  while (reader.next(rec)) {
    PromptInput prompt{reader.records_read() - 1, manifest.name_or_placeholder(rec.profession_id),
                       rec.token_position, rec.features};
    auto delta = steerer.emit(prompt);
    if (delta.degenerate) {
      ++degenerate;
      err << "warning: prompt " << prompt.prompt_id
          << " has an all-zero job latent; emitting a zero delta\n";
    }
    known += delta.route == Route::Known;
    batch.deltas.push_back(std::move(delta));
  }
  write_delta_file(a.out, batch);
  out << "deltas " << a.out << "\n"
      << "prompts " << batch.deltas.size() << "\n"
      << "known " << known << "\n"
      << "softmax " << batch.deltas.size() - known << "\n"
      << "degenerate " << degenerate << "\n";
  return 0;
}

// metrics

struct MetricsArgs {
  std::vector<std::string> files;
  std::uint32_t generations = 0;
  std::string format = "text";
  std::string json_out;
};

void add_metrics(CLI::App& sub, MetricsArgs& a) {
  sub.add_option("predictions", a.files, "predictions CSV, one per seed");
  sub.add_option("--generations", a.generations,
                 "generations per profession and prompt gender (0: infer)")
      ->capture_default_str();
  sub.add_option("--format", a.format)->check(CLI::IsMember({"text", "json"}))->capture_default_str();
  sub.add_option("--json-out", a.json_out, "also write the JSON report here");
}

int run_metrics(CLI::App& sub, MetricsArgs& a, std::ostream& out, std::ostream& err) {
  require(sub, {"predictions"});
  std::string files;
  for (const auto& f : a.files) files += (files.empty() ? "" : ", ") + f;
  print_config(err, {{"predictions", files},
                     {"generations", a.generations == 0 ? "inferred" : std::to_string(a.generations)},
                     {"format", a.format}});
  std::vector<MetricsReport> runs;
  for (const auto& f : a.files) runs.push_back(compute_report(read_predictions(f, a.generations), f));
  const auto report = aggregate_reports(std::move(runs));
  out << (a.format == "json" ? render_json(report) : render_text(report));
  if (!a.json_out.empty()) io::write_text_atomic(a.json_out, render_json(report));
  return 0;
}

// prompts

struct PromptArgs {
  std::vector<std::string> names;
  std::string list;
  std::string out;
  std::string format = "text";
};

void add_prompts(CLI::App& sub, PromptArgs& a) {
  sub.add_option("professions", a.names, "profession names");
  sub.add_option("--list", a.list, "file with one profession per line");
  sub.add_option("--out", a.out, "write prompts here instead of stdout");
  sub.add_option("--format", a.format, "text (one prompt per line) or jsonl")
      ->check(CLI::IsMember({"text", "jsonl"}))
      ->capture_default_str();
}

int run_prompts(CLI::App&, PromptArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> professions = a.names;
  if (!a.list.empty()) {
    std::ifstream in(a.list);
    if (!in) throw IoError("cannot open profession list " + a.list);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) professions.push_back(line);
    }
  }
  print_config(err, {{"professions", std::to_string(professions.size())}, {"format", a.format}});
  const auto prompts = prompt_manifest(professions);
  std::string text;
  static constexpr const char* kGenders[] = {"male", "female", "neutral"};
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (a.format == "jsonl") {
      nlohmann::ordered_json line;
      line["profession"] = canonical_name(professions[i / 3]);
      line["prompt_gender"] = kGenders[i % 3];
      line["prompt"] = prompts[i];
      text += line.dump() + "\n";
    } else {
      text += prompts[i] + "\n";
    }
  }
  if (a.out.empty()) {
    out << text;
  } else {
    io::write_text_atomic(a.out, text);
    out << "prompts " << prompts.size() << " written to " << a.out << "\n";
  }
  return 0;
}

// inspect

void inspect_features(const std::string& path, std::ostream& out) {
  FeatureFileReader reader(path);
  const auto& h = reader.header();
  std::map<std::uint32_t, std::pair<std::uint64_t, std::uint64_t>> counts;
  FeatureRecord rec;
  while (reader.next(rec)) {
    auto& c = counts[rec.profession_id];
    ++(rec.gender == Gender::Male ? c.first : c.second);
  }
  FeatureManifest manifest;
  const bool has_manifest = std::filesystem::exists(manifest_path_for(path));
  if (has_manifest) manifest = read_manifest(manifest_path_for(path));
  out << "format SAEF (feature records)\n"
      << "version " << h.version << "\n"
      << "d " << h.d << "\n"
      << "records " << h.record_count << "\n"
      << "position_kind " << position_kind_name(h.position_kind) << "\n"
      << "professions " << counts.size() << "\n";
  if (has_manifest) {
    out << "source_model " << manifest.source_model << "\n"
        << "layer " << manifest.layer << "\n"
        << "extraction_date " << manifest.extraction_date << "\n";
  }
  for (const auto& [id, c] : counts) {
    out << "  " << id << " " << manifest.name_or_placeholder(id) << " male=" << c.first
        << " female=" << c.second << "\n";
  }
}

void inspect_checkpoint(const std::string& path, std::ostream& out) {
  const SaeParams p = read_checkpoint(path);
  out << "format SAEM (checkpoint)\n"
      << "version " << kCheckpointVersion << "\n"
      << "d " << p.d << "\n"
      << "m " << p.m << "\n"
      << "k " << p.k << "\n"
      << "expansion_factor " << p.expansion_factor() << "\n"
      << "normalize_decoder " << (p.normalize_decoder ? "true" : "false") << "\n"
      << "fingerprint " << to_hex(sae_fingerprint(p)) << "\n";
}

void inspect_bank(const std::string& path, std::ostream& out) {
  const DirectionBank bank = read_bank(path);
  out << "format SAEB (direction bank)\n"
      << "version " << kBankFileVersion << "\n"
      << "strategy " << strategy_name(bank.strategy) << "\n"
      << "m " << bank.m << "\n"
      << "professions " << bank.size() << "\n"
      << "fingerprint " << to_hex(bank.sae_fingerprint) << "\n";
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& e = bank.entries[i];
    double norm = 0.0;
    for (const float v : e.direction) norm += static_cast<double>(v) * v;
    out << "  " << i << " " << e.name << " n_male=" << e.n_male << " n_female=" << e.n_female
        << " norm=" << num(std::sqrt(norm)) << "\n";
  }
}

void inspect_deltas(const std::string& path, std::ostream& out) {
  const DeltaBatch batch = read_delta_file(path);
  std::size_t known = 0;
  std::size_t degenerate = 0;
  for (const auto& d : batch.deltas) {
    known += d.route == Route::Known;
    degenerate += d.degenerate;
  }
  out << "format " << (io::peek_magic(path) == "SAED" ? "SAED (delta batch)" : "delta JSON Lines")
      << "\n"
      << "d " << batch.d << "\n"
      << "prompts " << batch.deltas.size() << "\n"
      << "gamma " << num(batch.gamma) << "\n"
      << "temperature " << num(batch.temperature) << "\n"
      << "fingerprint " << to_hex(batch.sae_fingerprint) << "\n"
      << "known " << known << "\n"
      << "softmax " << batch.deltas.size() - known << "\n"
      << "degenerate " << degenerate << "\n";
}

int run_inspect(CLI::App& sub, const std::string& path, std::ostream& out, std::ostream& err) {
  require(sub, {"path"});
  print_config(err, {{"path", path}});
  const std::string magic = io::peek_magic(path);
  if (magic == "SAEF") {
    inspect_features(path, out);
  } else if (magic == "SAEM") {
    inspect_checkpoint(path, out);
  } else if (magic == "SAEB") {
    inspect_bank(path, out);
  } else if (magic == "SAED" || (!magic.empty() && magic[0] == '{')) {
    inspect_deltas(path, out);
  } else {
    throw ValidationError(path + " is not a recognized artifact");
  }
  return 0;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse autoencoder debiasing toolkit", "saesteer"};
  app.require_subcommand(1);
  std::string isa;
  app.add_option("--isa", isa, "kernel variant: scalar, avx2 or neon (default: best available)");

  TrainArgs train_args;
  BankArgs bank_args;
  DeltaArgs delta_args;
  MetricsArgs metrics_args;
  PromptArgs prompt_args;
  std::string inspect_path;
  std::map<CLI::App*, std::string> config_files;

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_files[sub], "key=value file; flags override it");
    return sub;
  };
  auto* train = with_config(app.add_subcommand("train", "train an autoencoder on a feature file"));
  add_train(*train, train_args);
  auto* bank = with_config(app.add_subcommand("build-bank", "compute per-profession directions"));
  add_bank(*bank, bank_args);
  auto* delta = with_config(app.add_subcommand("emit-delta", "emit steering deltas for prompts"));
  add_delta(*delta, delta_args);
  auto* metrics = with_config(app.add_subcommand("metrics", "fairness metrics from predictions"));
  add_metrics(*metrics, metrics_args);
  auto* prompts = with_config(app.add_subcommand("prompts", "evaluation prompt manifest"));
  add_prompts(*prompts, prompt_args);
  auto* inspect = app.add_subcommand("inspect", "describe an artifact file");
  inspect->add_option("path", inspect_path, "artifact path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (!isa.empty()) kernels::set_active_isa(kernels::parse_isa(isa));
    for (auto& [sub, path] : config_files) {
      if (sub->parsed() && !path.empty()) apply_config_file(*sub, path);
    }
    if (train->parsed()) return run_train(*train, train_args, out, err);
    if (bank->parsed()) return run_bank(*bank, bank_args, out, err);
    if (delta->parsed()) return run_delta(*delta, delta_args, out, err);
    if (metrics->parsed()) return run_metrics(*metrics, metrics_args, out, err);
    if (prompts->parsed()) return run_prompts(*prompts, prompt_args, out, err);
    if (inspect->parsed()) return run_inspect(*inspect, inspect_path, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int cli_dispatch(int argc, const char* const* argv) {
  return cli_dispatch(argc, argv, std::cout, std::cerr);
}

}  // namespace saesteer
