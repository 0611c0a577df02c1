#include "chomsky/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>

namespace chomsky {

std::string_view profile_name(Profile p) { return p == Profile::desk ? "desk" : "paper"; }

std::optional<Profile> parse_profile(std::string_view name) {
  if (name == "desk") return Profile::desk;
  if (name == "paper") return Profile::paper;
  return std::nullopt;
}

TrainConfig profile_config(Profile profile, TaskId task, Architecture arch) {
  TrainConfig c;
  c.task = task;
  c.model.arch = arch;
  if (arch == Architecture::transformer) c.model.causal = false;
  if (profile == Profile::desk) {
    c.model.hidden = 64;
    c.batch = 64;
    c.steps = 50'000;
  } else {
    c.model.hidden = 256;
    c.batch = 128;
    c.steps = 1'000'000;
  }
  return c;
}

void validate(const TrainConfig& c) {
  if (c.N < 1 || c.N >= c.M) throw InvalidInput("config: need 1 <= N < M");
  if (c.steps < 0) throw InvalidInput("config: steps must be >= 0");
  if (c.batch < 1) throw InvalidInput("config: batch must be >= 1");
  if (c.eval_k < 1) throw InvalidInput("config: eval_k must be >= 1");
  if (!(c.lr > 0)) throw InvalidInput("config: lr must be positive");
  if (c.comp_multiplier < 0 || c.comp_multiplier > 2) throw InvalidInput("config: comp_tokens must be 0, l or 2l");
  if (c.comp_multiplier > 0 && !has_tape(c.model.arch))
    throw InvalidInput("config: computation tokens are only used by the tape_rnn");
  if (c.model.n_tapes < 1) throw InvalidInput("config: n_tapes must be >= 1");
  if (c.model.hidden < 1) throw InvalidInput("config: hidden must be >= 1");
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string comp_tokens_name(int multiplier) {
  if (multiplier == 0) return "0";
  if (multiplier == 1) return "l";
  return std::to_string(multiplier) + "l";
}

}  // namespace

std::string config_text(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "task = " << task_spec(c.task).name << '\n'
      << "arch = " << architecture_name(c.model.arch) << '\n'
      << "hidden = " << c.model.hidden << '\n'
      << "N = " << c.N << '\n'
      << "M = " << c.M << '\n'
      << "batch = " << c.batch << '\n'
      << "steps = " << c.steps << '\n'
      << "lr = " << c.lr << '\n'
      << "seed = " << c.seed << '\n'
      << "pos_enc = " << positional_encoding_name(c.model.positional) << '\n'
      << "n_tapes = " << c.model.n_tapes << '\n'
      << "comp_tokens = " << comp_tokens_name(c.comp_multiplier) << '\n'
      << "autoregressive = " << (c.autoregressive ? "true" : "false") << '\n'
      << "eval_k = " << c.eval_k << '\n';
  return out.str();
}

std::string config_hash(const TrainConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config_text(c))));
  return buf;
}

Rng derive_rng(std::uint64_t seed, std::string_view label) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(fnv1a(label)));
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return Rng(seq);
}

// ---- vocabulary and batches ---------------------------------------------------

Vocabulary vocabulary(TaskId task, bool autoregressive) {
  const TaskSpec& spec = task_spec(task);
  Vocabulary v;
  v.empty = spec.input_size();
  v.computation = spec.input_size() + 1;
  v.output_offset = spec.input_size() + 2;
  v.size = v.output_offset + (autoregressive ? spec.output_size() : 0);
  return v;
}

ModelConfig model_config(const TrainConfig& config) {
  ModelConfig m = config.model;
  m.input_vocab = vocabulary(config.task, config.autoregressive).size;
  m.output_vocab = task_spec(config.task).output_size();
  if (config.autoregressive && m.arch == Architecture::transformer) m.causal = true;
  return m;
}

EncodedBatch encode_batch(TaskId task, std::vector<TaskSample> samples, const BatchOptions& options) {
  if (samples.empty()) throw InvalidInput("encode_batch: no samples");
  const Vocabulary vocab = vocabulary(task, options.autoregressive);
  const Index B = static_cast<Index>(samples.size());

  std::vector<std::vector<int>> streams(B);
  std::vector<int> output_start(B);
  std::set<int> readout;
  for (Index b = 0; b < B; ++b) {
    const TaskSample& s = samples[b];
    if (s.target.empty()) throw InvalidInput("encode_batch: empty target");
    auto& st = streams[b];
    st = s.input;
    st.insert(st.end(), static_cast<std::size_t>(options.comp_multiplier) * s.input.size(), vocab.computation);
    output_start[b] = static_cast<int>(st.size());
    if (options.autoregressive) {
      st.push_back(vocab.empty);
      for (int y : s.target) st.push_back(vocab.output_offset + y);
    } else {
      st.insert(st.end(), s.target.size(), vocab.empty);
    }
    for (std::size_t j = 0; j < s.target.size(); ++j) readout.insert(output_start[b] + static_cast<int>(j));
  }

  EncodedBatch out;
  SequenceBatch& seq = out.seq;
  seq.batch = B;
  for (const auto& st : streams) seq.steps = std::max<Index>(seq.steps, static_cast<Index>(st.size()));
  seq.tokens.assign(seq.batch * seq.steps, vocab.empty);
  for (Index b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < streams[b].size(); ++t) seq.tokens[t * B + b] = streams[b][t];
    seq.lengths.push_back(static_cast<int>(streams[b].size()));
    seq.input_lengths.push_back(static_cast<int>(samples[b].input.size()));
  }
  seq.readout_steps.assign(readout.begin(), readout.end());

  std::vector<int> readout_index(seq.steps, -1);
  for (std::size_t r = 0; r < seq.readout_steps.size(); ++r) readout_index[seq.readout_steps[r]] = static_cast<int>(r);
  out.targets.assign(seq.readout_steps.size() * B, 0);
  out.mask.assign(seq.readout_steps.size() * B, 0.0f);
  out.output_rows.resize(B);
  for (Index b = 0; b < B; ++b) {
    const auto& target = samples[b].target;
    for (std::size_t j = 0; j < target.size(); ++j) {
      const int row = readout_index[output_start[b] + static_cast<int>(j)] * static_cast<int>(B) + static_cast<int>(b);
      out.targets[row] = target[j];
      out.mask[row] = 1.0f;
      out.output_rows[b].push_back(row);
    }
  }
  out.samples = std::move(samples);
  return out;
}

EncodedBatch build_batch(TaskId task, Rng& rng, int N, int batch, const BatchOptions& options) {
  if (N < 1) throw InvalidInput("build_batch: N must be >= 1");
  std::uniform_int_distribution<int> length(1, N);
  std::vector<TaskSample> samples;
  samples.reserve(batch);
  for (int b = 0; b < batch; ++b) samples.push_back(sample(task, rng, length(rng)));
  return encode_batch(task, std::move(samples), options);
}

EncodedBatch build_length_batch(TaskId task, Rng& rng, int length, int batch, const BatchOptions& options) {
  std::vector<TaskSample> samples;
  samples.reserve(batch);
  for (int b = 0; b < batch; ++b) samples.push_back(sample(task, rng, length));
  return encode_batch(task, std::move(samples), options);
}

EncodedBatch build_batch_autoregressive(TaskId task, Rng& rng, int N, int batch, int comp_multiplier) {
  return build_batch(task, rng, N, batch, {comp_multiplier, true});
}

// ---- scoring --------------------------------------------------------------------

int argmax_row(const Matrix<float>& logits, Index row) {
  int best = 0;
  for (Index j = 1; j < logits.cols(); ++j)
    if (logits(row, j) > logits(row, best)) best = static_cast<int>(j);
  return best;
}

double per_sequence_accuracy(const Matrix<float>& logits, std::span<const int> rows, std::span<const int> target) {
  if (rows.size() != target.size() || rows.empty()) throw InvalidInput("per_sequence_accuracy: shape mismatch");
  int correct = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) correct += argmax_row(logits, rows[i]) == target[i];
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

double compute_score(std::span<const double> curve) {
  if (curve.empty()) throw InvalidInput("compute_score: empty curve");
  double total = 0;
  for (double a : curve) total += a;
  return 100.0 * total / static_cast<double>(curve.size());
}

// ---- training and evaluation -------------------------------------------------

namespace {

double batch_accuracy(const Matrix<float>& logits, const EncodedBatch& batch) {
  double total = 0;
  for (std::size_t b = 0; b < batch.samples.size(); ++b)
    total += per_sequence_accuracy(logits, batch.output_rows[b], batch.samples[b].target);
  return total / static_cast<double>(batch.samples.size());
}

}  // namespace

TrainResult train(const TrainConfig& config, const ProgressFn& progress) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  Rng init_rng = derive_rng(config.seed, "init");
  Rng data_rng = derive_rng(config.seed, "train");
  Rng dropout_rng = derive_rng(config.seed, "dropout");

  TrainResult result;
  result.model = make_model<float>(model_config(config), init_rng);
  RunRecord& rec = result.record;
  rec.config_hash = config_hash(config);
  rec.task = config.task;
  rec.arch = config.model.arch;
  rec.seed = config.seed;
  rec.lr = config.lr;
  rec.N = config.N;
  rec.M = config.M;

  const BatchOptions options{config.comp_multiplier, config.autoregressive};
  auto& params = result.model->params();
  for (long step = 1; step <= config.steps; ++step) {
    EncodedBatch batch = build_batch(config.task, data_rng, config.N, config.batch, options);
    Graph<float> g;
    ForwardContext<float> ctx;
    ctx.training = true;
    ctx.dropout_rng = &dropout_rng;
    Var<float> logits = result.model->forward(g, batch.seq, ctx);
    Var<float> loss = cross_entropy(logits, std::span<const int>(batch.targets), std::span<const float>(batch.mask));
    const double value = loss.item();
    if (!std::isfinite(value)) {
      rec.diverged = true;
      rec.losses.push_back({step, value, 0.0});
      break;
    }
    g.backward(loss);
    adam_step(params, static_cast<float>(config.lr));
    rec.steps_run = step;
    if ((config.log_every > 0 && step % config.log_every == 0) || step == config.steps) {
      LossSample s{step, value, batch_accuracy(logits.value(), batch)};
      rec.losses.push_back(s);
      if (progress) progress(s);
    }
  }
  rec.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

Matrix<float> run_model(SequenceModel<float>& model, const EncodedBatch& batch) {
  Graph<float> g(false);
  ForwardContext<float> ctx;
  return model.forward(g, batch.seq, ctx).value();
}

std::vector<Tokens> decode_autoregressive(SequenceModel<float>& model, TaskId task,
                                          const std::vector<TaskSample>& samples, int comp_multiplier) {
  const Vocabulary vocab = vocabulary(task, true);
  const Index B = static_cast<Index>(samples.size());
  std::vector<Tokens> outputs(B);
  std::vector<std::vector<int>> prefixes(B);
  std::size_t longest = 0;
  for (Index b = 0; b < B; ++b) {
    auto& p = prefixes[b];
    p = samples[b].input;
    p.insert(p.end(), static_cast<std::size_t>(comp_multiplier) * samples[b].input.size(), vocab.computation);
    p.push_back(vocab.empty);
    longest = std::max(longest, samples[b].target.size());
  }
  for (std::size_t j = 0; j < longest; ++j) {
    SequenceBatch seq;
    seq.batch = B;
    for (const auto& p : prefixes) seq.steps = std::max<Index>(seq.steps, static_cast<Index>(p.size()));
    seq.tokens.assign(B * seq.steps, vocab.empty);
    std::set<int> readout;
    for (Index b = 0; b < B; ++b) {
      const auto& p = prefixes[b];
      for (std::size_t t = 0; t < p.size(); ++t) seq.tokens[t * B + b] = p[t];
      seq.lengths.push_back(static_cast<int>(p.size()));
      seq.input_lengths.push_back(static_cast<int>(samples[b].input.size()));
      if (j < samples[b].target.size()) readout.insert(static_cast<int>(p.size()) - 1);
    }
    seq.readout_steps.assign(readout.begin(), readout.end());
    Graph<float> g(false);
    ForwardContext<float> ctx;
    const Matrix<float> logits = model.forward(g, seq, ctx).value();
    for (Index b = 0; b < B; ++b) {
      if (j >= samples[b].target.size()) continue;
      const int t = static_cast<int>(prefixes[b].size()) - 1;
      const auto r = std::lower_bound(seq.readout_steps.begin(), seq.readout_steps.end(), t) - seq.readout_steps.begin();
      const int y = argmax_row(logits, r * B + b);
      outputs[b].push_back(y);
      prefixes[b].push_back(vocab.output_offset + y);
    }
  }
  return outputs;
}

std::vector<double> evaluate(SequenceModel<float>& model, const TrainConfig& config, Rng& rng) {
  validate(config);
  const BatchOptions options{config.comp_multiplier, config.autoregressive};
  std::vector<EncodedBatch> batches;
  batches.reserve(config.M - config.N);
  Index longest = 0;
  for (int l = config.N + 1; l <= config.M; ++l) {
    batches.push_back(build_length_batch(config.task, rng, l, config.eval_k, options));
    longest = std::max(longest, batches.back().seq.steps);
  }
  model.grow_memory(std::max<Index>(kTrainingStackDepth, longest), std::max<Index>(kTrainingTapeCells, longest));

  std::vector<double> curve;
  curve.reserve(batches.size());
  for (const EncodedBatch& batch : batches) {
    double total = 0;
    if (config.autoregressive) {
      auto decoded = decode_autoregressive(model, config.task, batch.samples, config.comp_multiplier);
      for (std::size_t b = 0; b < decoded.size(); ++b) {
        const auto& target = batch.samples[b].target;
        int correct = 0;
        for (std::size_t j = 0; j < target.size(); ++j) correct += decoded[b][j] == target[j];
        total += static_cast<double>(correct) / static_cast<double>(target.size());
      }
    } else {
      total = batch_accuracy(run_model(model, batch), batch) * static_cast<double>(batch.samples.size());
    }
    curve.push_back(total / static_cast<double>(batch.samples.size()));
  }
  return curve;
}

TrainResult run_experiment(const TrainConfig& config, const ProgressFn& progress) {
  TrainResult result = train(config, progress);
  if (result.record.diverged) return result;
  const auto start = std::chrono::steady_clock::now();
  Rng eval_rng = derive_rng(config.seed, "eval");
  result.record.curve = evaluate(*result.model, config, eval_rng);
  result.record.score = compute_score(result.record.curve);
  result.record.wallclock_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---- sweeps -------------------------------------------------------------------

std::vector<TrainConfig> expand_grid(const TrainConfig& base, const SweepGrid& grid) {
  if (grid.seeds.empty() || grid.lrs.empty()) throw InvalidInput("sweep: seeds and lrs must be nonempty");
  std::vector<PositionalEncoding> encodings = grid.encodings;
  if (encodings.empty() || base.model.arch != Architecture::transformer) encodings = {base.model.positional};
  std::vector<int> comps = grid.comp_multipliers, tapes = grid.n_tapes;
  if (comps.empty() || !has_tape(base.model.arch)) comps = {base.comp_multiplier};
  if (tapes.empty() || !has_tape(base.model.arch)) tapes = {base.model.n_tapes};
  std::vector<TrainConfig> out;
  for (auto pe : encodings)
    for (int c : comps)
      for (int t : tapes)
        for (double lr : grid.lrs)
          for (auto seed : grid.seeds) {
            TrainConfig cfg = base;
            cfg.model.positional = pe;
            cfg.comp_multiplier = c;
            cfg.model.n_tapes = t;
            cfg.lr = lr;
            cfg.seed = seed;
            validate(cfg);
            out.push_back(cfg);
          }
  return out;
}

void summarize(std::span<const double> scores, double& mean, double& stddev) {
  mean = 0;
  stddev = 0;
  if (scores.empty()) return;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  for (double s : scores) stddev += (s - mean) * (s - mean);
  stddev = std::sqrt(stddev / static_cast<double>(scores.size()));
}

int worker_count(std::size_t jobs) {
  long cap = static_cast<long>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("CHOMSKY_BENCH_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) cap = v;
  }
  return static_cast<int>(std::max<long>(1, std::min<long>(cap, static_cast<long>(jobs))));
}

SweepResult sweep(const TrainConfig& base, const SweepGrid& grid,
                  const std::function<void(const TrainConfig&, const TrainResult&)>& on_run) {
  const std::vector<TrainConfig> configs = expand_grid(base, grid);
  std::vector<TrainResult> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = run_experiment(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = worker_count(configs.size());
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  SweepResult out;
  const std::size_t per_cell = grid.seeds.size();
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (on_run) on_run(configs[i], results[i]);
    out.runs.push_back(results[i].record);
    const RunRecord& r = out.runs.back();
    if (!r.diverged && (out.best_run < 0 || r.score > out.runs[out.best_run].score)) out.best_run = static_cast<int>(i);
  }
  for (std::size_t start = 0; start < configs.size(); start += per_cell) {
    SweepCell cell;
    cell.config = configs[start];
    std::vector<double> scores;
    for (std::size_t i = start; i < start + per_cell; ++i) {
      if (out.runs[i].diverged) {
        ++cell.diverged;
      } else {
        scores.push_back(out.runs[i].score);
        cell.best = std::max(cell.best, out.runs[i].score);
      }
    }
    cell.completed = static_cast<int>(scores.size());
    summarize(scores, cell.mean, cell.stddev);
    out.cells.push_back(cell);
  }
  return out;
}

}  // namespace chomsky
