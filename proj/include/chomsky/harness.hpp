#pragma once

#include "chomsky/models.hpp"
#include "chomsky/tasks.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace chomsky {

enum class Profile { desk, paper };

std::string_view profile_name(Profile p);
std::optional<Profile> parse_profile(std::string_view name);

struct TrainConfig {
  TaskId task = TaskId::parity_check;
  ModelConfig model;  // vocabulary sizes are filled in by model_config()
  int N = 40;
  int M = 500;
  int batch = 128;
  long steps = 1'000'000;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  bool autoregressive = false;
  int eval_k = 32;
  int comp_multiplier = 0;  // computation tokens per sequence: 0, l or 2l
  long log_every = 1000;
};

// Profile defaults for a task and architecture. desk: hidden 64, batch 64,
// 5e4 steps; paper: hidden 256, batch 128, 1e6 steps.
TrainConfig profile_config(Profile profile, TaskId task, Architecture arch);
void validate(const TrainConfig& config);

// Stable hex digest of every field that affects a run.
std::string config_hash(const TrainConfig& config);
// Canonical key = value text; parse_config_file(config_text(c)) reproduces c.
std::string config_text(const TrainConfig& config);

// ---- random streams -------------------------------------------------------------

// Independent generator for a labelled purpose ("init", "train", "dropout", "eval").
Rng derive_rng(std::uint64_t seed, std::string_view label);

// ---- vocabulary and batches ---------------------------------------------------

// Input ids: task symbols, then the empty token, then the computation token,
// then (autoregressive only) the output symbols shifted by `output_offset`.
struct Vocabulary {
  int empty = 0;
  int computation = 0;
  int output_offset = 0;
  int size = 0;
};

Vocabulary vocabulary(TaskId task, bool autoregressive);
ModelConfig model_config(const TrainConfig& config);

struct EncodedBatch {
  SequenceBatch seq;
  // One entry per logit row (readout index, batch row).
  std::vector<int> targets;
  std::vector<float> mask;
  // Per sequence, the logit rows of its output positions in output order.
  std::vector<std::vector<int>> output_rows;
  std::vector<TaskSample> samples;
};

struct BatchOptions {
  int comp_multiplier = 0;
  bool autoregressive = false;
};

// Lays out already sampled sequences: x, c computation tokens, then m empty
// tokens (or one separator and the shifted target when autoregressive), right-padded.
EncodedBatch encode_batch(TaskId task, std::vector<TaskSample> samples, const BatchOptions& options);

// Draws l ~ U(1, N) per sequence.
EncodedBatch build_batch(TaskId task, Rng& rng, int N, int batch, const BatchOptions& options);
EncodedBatch build_length_batch(TaskId task, Rng& rng, int length, int batch, const BatchOptions& options);
EncodedBatch build_batch_autoregressive(TaskId task, Rng& rng, int N, int batch, int comp_multiplier = 0);

// ---- scoring --------------------------------------------------------------------

// Index of the largest entry; ties go to the lowest index.
int argmax_row(const Matrix<float>& logits, Index row);
double per_sequence_accuracy(const Matrix<float>& logits, std::span<const int> rows, std::span<const int> target);
double compute_score(std::span<const double> curve);

// ---- training and evaluation -------------------------------------------------

struct LossSample {
  long step = 0;
  double loss = 0;
  double accuracy = 0;
};

struct RunRecord {
  std::string config_hash;
  TaskId task = TaskId::parity_check;
  Architecture arch = Architecture::rnn;
  std::uint64_t seed = 0;
  double lr = 0;
  int N = 0;
  int M = 0;
  std::vector<double> curve;  // A(l) for l = N+1..M
  double score = 0;
  std::vector<LossSample> losses;
  long steps_run = 0;
  bool diverged = false;
  double wallclock_s = 0;
};

struct TrainResult {
  std::unique_ptr<SequenceModel<float>> model;
  RunRecord record;
};

using ProgressFn = std::function<void(const LossSample&)>;

// Deterministic given (config); aborts and flags the record on a non-finite loss.
TrainResult train(const TrainConfig& config, const ProgressFn& progress = {});

// Logits of the output positions of `batch`, evaluation mode.
Matrix<float> run_model(SequenceModel<float>& model, const EncodedBatch& batch);

// Greedy decoding of m output tokens per sequence from input (plus computation) tokens.
std::vector<Tokens> decode_autoregressive(SequenceModel<float>& model, TaskId task, const std::vector<TaskSample>& samples,
                                          int comp_multiplier = 0);

// Mean per-sequence accuracy for each l = N+1..M over k fresh samples; grows memories first.
std::vector<double> evaluate(SequenceModel<float>& model, const TrainConfig& config, Rng& rng);

// train + evaluate + score.
TrainResult run_experiment(const TrainConfig& config, const ProgressFn& progress = {});

// ---- sweeps -------------------------------------------------------------------

struct SweepGrid {
  std::vector<std::uint64_t> seeds{0};
  std::vector<double> lrs{1e-4, 3e-4, 5e-4};
  std::vector<PositionalEncoding> encodings;  // Transformer only; empty keeps the base value
  std::vector<int> comp_multipliers;          // Tape-RNN only
  std::vector<int> n_tapes;                   // Tape-RNN only
};

struct SweepCell {
  TrainConfig config;  // seed left at the first grid seed
  double mean = 0;
  double stddev = 0;   // population standard deviation over seeds
  double best = 0;
  int completed = 0;
  int diverged = 0;
};

struct SweepResult {
  std::vector<RunRecord> runs;
  std::vector<SweepCell> cells;
  int best_run = -1;  // index into runs, -1 when every run diverged
};

std::vector<TrainConfig> expand_grid(const TrainConfig& base, const SweepGrid& grid);

// Runs every grid point on CHOMSKY_BENCH_WORKERS workers (default: hardware threads), never more than the job count.
// `on_run` is called once per finished run from the calling thread, in grid order.
SweepResult sweep(const TrainConfig& base, const SweepGrid& grid,
                  const std::function<void(const TrainConfig&, const TrainResult&)>& on_run = {});

void summarize(std::span<const double> scores, double& mean, double& stddev);
int worker_count(std::size_t jobs);

// ---- files --------------------------------------------------------------------

// Flat "key = value" text; '#' starts a comment. Unknown keys throw.
std::map<std::string, std::string> parse_config_text(std::string_view text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);
// Applies the profile (if any) first, then every other key.
TrainConfig resolve_config(const std::map<std::string, std::string>& values);
const std::vector<std::string>& config_keys();

void write_curve(const std::filesystem::path& path, int N, std::span<const double> curve);
std::vector<double> read_curve(const std::filesystem::path& path, int& N);

// One JSONL line without the trailing newline.
std::string result_json(const RunRecord& record, const std::string& curve_file);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const ParamStore<float>& params, std::ostream& out);
void write_checkpoint(const ParamStore<float>& params, const std::filesystem::path& path);
// Overwrites the named parameters of `params`; names and shapes must match exactly.
void read_checkpoint(ParamStore<float>& params, std::istream& in);
void read_checkpoint(ParamStore<float>& params, const std::filesystem::path& path);

}  // namespace chomsky
