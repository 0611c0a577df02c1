#include "cli.hpp"

#include "chomsky/introspection.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace chomsky::cli {

namespace {

namespace fs = std::filesystem;

// Flags that map one-to-one onto config file keys.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value config file; flags override it");
    const std::pair<const char*, const char*> flags[] = {
        {"task", "task id (see list-tasks)"},
        {"arch", "rnn, lstm, stack_rnn, stack_lstm, tape_rnn, transformer"},
        {"profile", "desk or paper"},
        {"hidden", "controller width"},
        {"N", "maximum training length"},
        {"M", "maximum test length"},
        {"batch", "batch size"},
        {"steps", "training steps"},
        {"lr", "learning rate"},
        {"seed", "random seed"},
        {"pos_enc", "none, sin_cos, rope, alibi, relative_xl"},
        {"n_tapes", "tapes per Tape-RNN"},
        {"comp_tokens", "computation tokens: 0, l or 2l"},
        {"autoregressive", "true or false"},
        {"eval_k", "evaluation samples per length"},
    };
    for (const auto& [key, help] : flags) {
      std::string name = "--" + std::string(key);
      // Dashed spellings are accepted too: --pos-enc, --eval-k and so on.
      std::string dashed = name;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != name) name += "," + dashed;
      app->add_option_function<std::string>(name, [this, k = std::string(key)](const std::string& v) { values[k] = v; },
                                            help);
    }
  }

  TrainConfig resolve() const {
    std::map<std::string, std::string> merged;
    if (!file.empty()) merged = read_config_file(file);
    for (const auto& [k, v] : values) merged[k] = v;
    return resolve_config(merged);
  }
};

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string run_stem(const TrainConfig& c) {
  return std::string(task_spec(c.task).name) + "_" + std::string(architecture_name(c.model.arch)) + "_" +
         config_hash(c);
}

ProgressFn printer(std::ostream& out) {
  return [&out](const LossSample& s) {
    out << "step " << s.step << " loss " << fixed(s.loss, 4) << " acc " << fixed(s.accuracy, 3) << '\n';
  };
}

// Writes the curve, checkpoint and JSONL line of one finished run under `dir`.
void save_run(const fs::path& dir, const TrainConfig& config, const TrainResult& result) {
  fs::create_directories(dir / "curves");
  fs::create_directories(dir / "checkpoints");
  const std::string stem = run_stem(config);
  std::string curve_file;
  if (!result.record.diverged) {
    curve_file = "curves/" + stem + ".csv";
    write_curve(dir / curve_file, config.N, result.record.curve);
    write_checkpoint(result.model->params(), dir / "checkpoints" / (stem + ".chmb"));
    std::ofstream cfg(dir / "checkpoints" / (stem + ".conf"));
    cfg << config_text(config);
  }
  std::ofstream jsonl(dir / "results.jsonl", std::ios::app);
  jsonl << result_json(result.record, curve_file) << '\n';
  if (!jsonl) throw std::runtime_error("cannot append to " + (dir / "results.jsonl").string());
}

std::string describe(const RunRecord& r) {
  if (r.diverged) return "diverged after " + std::to_string(r.steps_run) + " steps";
  return "score " + fixed(r.score, 2) + " (" + fixed(r.wallclock_s, 1) + " s)";
}

Tokens parse_input(TaskId task, const std::string& text) {
  const auto& symbols = task_spec(task).input_symbols;
  auto lookup = [&](const std::string& s) -> std::optional<int> {
    for (std::size_t i = 0; i < symbols.size(); ++i)
      if (symbols[i] == s) return static_cast<int>(i);
    return std::nullopt;
  };
  Tokens out;
  std::istringstream words(text);
  std::string word;
  while (words >> word) {
    if (auto id = lookup(word)) {
      out.push_back(*id);
      continue;
    }
    for (char ch : word) {
      auto id = lookup(std::string(1, ch));
      if (!id) throw InvalidInput("symbol '" + std::string(1, ch) + "' is not in the input alphabet of " +
                                  std::string(task_spec(task).name));
      out.push_back(*id);
    }
  }
  if (out.empty()) throw InvalidInput("empty input");
  return out;
}

std::unique_ptr<SequenceModel<float>> load_model(const TrainConfig& config, const std::string& checkpoint) {
  Rng init = derive_rng(config.seed, "init");
  auto model = make_model<float>(model_config(config), init);
  if (!checkpoint.empty()) read_checkpoint(model->params(), fs::path(checkpoint));
  return model;
}

int list_tasks(std::ostream& out) {
  out << "id\tlevel\t|in|\t|out|\tbaseline\texample\n";
  for (TaskId t : all_tasks()) {
    const TaskSpec& s = task_spec(t);
    out << s.name << '\t' << level_name(s.level) << '\t' << s.input_size() << '\t' << s.output_size() << '\t'
        << fixed(s.baseline, 1) << '\t' << s.example_input << " -> " << s.example_output << '\n';
  }
  return 0;
}

int run_selftest(std::ostream& out) {
  int failed = 0;
  for (const Check& c : selftest()) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    failed += !c.passed;
  }
  out << (failed ? std::to_string(failed) + " check(s) failed" : std::string("all checks passed")) << '\n';
  return failed ? 1 : 0;
}

int run_report(std::ostream& out, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  const fs::path base = fs::path(path).parent_path();
  out << render_report(text.str(), [&](const std::string& curve) { return fs::exists(base / curve); });
  return 0;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, const char* what, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) {
    out.push_back(parse(item, what));
  }
  return out;
}

SweepGrid make_grid(const TrainConfig& base, const std::string& seeds, const std::string& lrs,
                    const std::string& encodings, const std::string& comps, const std::string& tapes) {
  SweepGrid grid;
  auto number = [](const std::string& item, const char* what) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw InvalidInput(std::string("bad ") + what + " '" + item + "'");
    return v;
  };
  grid.seeds.clear();
  for (double s : parse_list<double>(seeds, "seed", number)) grid.seeds.push_back(static_cast<std::uint64_t>(s));
  grid.lrs = parse_list<double>(lrs, "learning rate", number);
  if (base.model.arch == Architecture::transformer) {
    for (const auto& e : split_list(encodings)) {
      auto pe = parse_positional_encoding(e);
      if (!pe) throw InvalidInput("unknown positional encoding '" + e + "'");
      grid.encodings.push_back(*pe);
    }
  }
  if (has_tape(base.model.arch)) {
    for (const auto& c : split_list(comps)) {
      if (c == "0") grid.comp_multipliers.push_back(0);
      else if (c == "l") grid.comp_multipliers.push_back(1);
      else if (c == "2l") grid.comp_multipliers.push_back(2);
      else throw InvalidInput("computation tokens must be 0, l or 2l (got '" + c + "')");
    }
    for (double t : parse_list<double>(tapes, "tape count", number)) grid.n_tapes.push_back(static_cast<int>(t));
  }
  return grid;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Length-generalisation benchmark for neural sequence models on formal-language tasks", "chomsky"};
  app.require_subcommand(1, 1);

  ConfigFlags train_flags, eval_flags, sweep_flags, trace_flags;
  std::string out_dir = "results", checkpoint, curve_path, results_path, input_text;
  std::string seeds = "0", lrs = "1e-4,3e-4,5e-4", encodings = "none,sin_cos,rope,alibi,relative_xl",
              comps = "0,l,2l", tapes = "1,4";
  bool quiet = false;

  auto* train_cmd = app.add_subcommand("train", "train one model, evaluate it and save the run");
  train_flags.attach(train_cmd);
  train_cmd->add_option("--out", out_dir, "results directory")->capture_default_str();
  train_cmd->add_flag("--quiet", quiet, "no progress lines");

  auto* eval_cmd = app.add_subcommand("evaluate", "score a saved checkpoint on lengths N+1..M");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--curve", curve_path, "write the accuracy curve here");

  auto* sweep_cmd = app.add_subcommand("sweep", "grid over seeds, learning rates and architecture options");
  sweep_flags.attach(sweep_cmd);
  sweep_cmd->add_option("--out", out_dir, "results directory")->capture_default_str();
  sweep_cmd->add_option("--seeds", seeds, "comma-separated seeds")->capture_default_str();
  sweep_cmd->add_option("--lrs", lrs, "comma-separated learning rates")->capture_default_str();
  sweep_cmd->add_option("--encodings", encodings, "Transformer positional encodings")->capture_default_str();
  sweep_cmd->add_option("--comp", comps, "Tape-RNN computation tokens")->capture_default_str();
  sweep_cmd->add_option("--tapes", tapes, "Tape-RNN tape counts")->capture_default_str();

  auto* trace_cmd = app.add_subcommand("trace", "record one forward pass and export CSV files");
  trace_flags.attach(trace_cmd);
  trace_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (default: fresh initialisation)");
  trace_cmd->add_option("--input", input_text, "input word, e.g. 0110 or \"abbaa POP PUSH_a\"")->required();
  trace_cmd->add_option("--out", out_dir, "output directory")->required();

  app.add_subcommand("list-tasks", "print the task table");
  app.add_subcommand("selftest", "run the built-in correctness checks");
  auto* report_cmd = app.add_subcommand("report", "score table from a results JSONL file");
  report_cmd->add_option("results", results_path, "results.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      const TrainConfig config = train_flags.resolve();
      TrainResult result = run_experiment(config, quiet ? ProgressFn{} : printer(out));
      save_run(out_dir, config, result);
      out << run_stem(config) << ": " << describe(result.record) << '\n';
      return result.record.diverged ? 1 : 0;
    }
    if (eval_cmd->parsed()) {
      const TrainConfig config = eval_flags.resolve();
      auto model = load_model(config, checkpoint);
      Rng eval_rng = derive_rng(config.seed, "eval");
      const std::vector<double> curve = evaluate(*model, config, eval_rng);
      if (!curve_path.empty()) write_curve(curve_path, config.N, curve);
      out << "score " << fixed(compute_score(curve), 2) << '\n';
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const TrainConfig base = sweep_flags.resolve();
      const SweepGrid grid = make_grid(base, seeds, lrs, encodings, comps, tapes);
      const auto jobs = expand_grid(base, grid).size();
      out << jobs << " runs on " << worker_count(jobs) << " worker(s)\n";
      const SweepResult result = sweep(base, grid, [&](const TrainConfig& c, const TrainResult& r) {
        save_run(out_dir, c, r);
        out << run_stem(c) << " lr " << c.lr << " seed " << c.seed << ": " << describe(r.record) << '\n';
      });
      for (const SweepCell& cell : result.cells)
        out << "cell lr " << cell.config.lr << " pos_enc " << positional_encoding_name(cell.config.model.positional)
            << " comp " << cell.config.comp_multiplier << " tapes " << cell.config.model.n_tapes << ": best "
            << fixed(cell.best, 1) << " mean " << fixed(cell.mean, 1) << " ± " << fixed(cell.stddev, 1) << " ("
            << cell.completed << " completed, " << cell.diverged << " diverged)\n";
      if (result.best_run < 0) {
        out << "every run diverged\n";
        return 1;
      }
      out << "best score " << fixed(result.runs[static_cast<std::size_t>(result.best_run)].score, 2) << '\n';
      return 0;
    }
    if (trace_cmd->parsed()) {
      const TrainConfig config = trace_flags.resolve();
      auto model = load_model(config, checkpoint);
      const Tokens input = parse_input(config.task, input_text);
      const Trace trace = record_trace(*model, config.task, input, {config.comp_multiplier, config.autoregressive});
      export_trace(trace, out_dir);
      out << "wrote " << trace.steps.size() << " steps to " << out_dir << '\n';
      if (trace.steps.size() >= 2) {
        const Pca p = pca(hidden_states(trace), std::min<Index>(2, static_cast<Index>(trace.steps[0].hidden.size())));
        out << "state clusters in the top PCA plane: " << cluster_count(p.projection) << '\n';
      }
      return 0;
    }
    if (app.got_subcommand("list-tasks")) return list_tasks(out);
    if (app.got_subcommand("selftest")) return run_selftest(out);
    if (report_cmd->parsed()) return run_report(out, results_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace chomsky::cli
