#include "cli.hpp"
#include "oracles.hpp"

#include "chomsky/memory.hpp"

#include <cstdio>
#include <sstream>

namespace chomsky::cli {

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

ModelConfig toy_model(Architecture arch, PositionalEncoding pe, TaskId task) {
  ModelConfig c;
  c.arch = arch;
  c.input_vocab = vocabulary(task, false).size;
  c.output_vocab = task_spec(task).output_size();
  c.hidden = 8;
  c.cell_width = 3;
  c.stack_depth = 6;
  c.tape_cells = 7;
  c.blocks = 2;
  c.d_model = 8;
  c.heads = 2;
  c.ffn_multiplier = 2;
  c.dropout = 0;
  c.positional = pe;
  return c;
}

}  // namespace

Check check_oracles(int samples) {
  Check c{"oracle equivalence", true, {}};
  long mismatches = 0, total = 0;
  for (TaskId task : all_tasks()) {
    Rng rng(0x5eed + static_cast<std::uint64_t>(task));
    std::uniform_int_distribution<int> length(1, 100);
    for (int i = 0; i < samples; ++i) {
      const TaskSample s = sample(task, rng, length(rng));
      ++total;
      if (s.target != oracle::answer(task, s.input)) ++mismatches;
    }
  }
  c.passed = mismatches == 0;
  c.detail = std::to_string(mismatches) + " mismatches in " + std::to_string(total) + " samples";
  return c;
}

double model_gradient_error(Architecture arch, PositionalEncoding pe, std::uint64_t seed) {
  const TaskId task = TaskId::reverse_string;
  Rng rng(seed);
  auto model = make_model<double>(toy_model(arch, pe, task), rng);
  // l <= 3 keeps the stream at T <= 6.
  const EncodedBatch batch = build_batch(task, rng, 3, 2, {});
  std::vector<double> mask(batch.mask.begin(), batch.mask.end());
  LossFn<double> f = [&](Graph<double>& g, ParamStore<double>&) {
    ForwardContext<double> ctx;
    return cross_entropy(model->forward(g, batch.seq, ctx), std::span<const int>(batch.targets),
                         std::span<const double>(mask));
  };
  return grad_check(f, model->params(), 1e-5);
}

Check check_gradients() {
  // Fixed evaluation points. Central differences are meaningless where a ReLU
  // input sits within h of zero, so a seed that lands on one would report noise.
  double worst = 0;
  std::uint64_t seed = 100;
  for (auto arch : {Architecture::rnn, Architecture::lstm, Architecture::stack_rnn, Architecture::stack_lstm,
                    Architecture::tape_rnn})
    worst = std::max(worst, model_gradient_error(arch, PositionalEncoding::none, seed++));
  for (auto pe : {PositionalEncoding::none, PositionalEncoding::sin_cos, PositionalEncoding::rope,
                  PositionalEncoding::alibi, PositionalEncoding::relative_xl})
    worst = std::max(worst, model_gradient_error(Architecture::transformer, pe, seed++));
  return {"gradient fidelity", worst <= 1e-4, "max relative error " + sci(worst)};
}

Check check_memories(int trajectories) {
  using Row = RowVector<double>;
  auto one_hot = [](Index n, Index k) {
    Row r = Row::Zero(n);
    r(k) = 1;
    return r;
  };
  Rng rng(0xd15c);
  std::uniform_real_distribution<double> value(-1, 1);
  double worst = 0;
  for (int trial = 0; trial < trajectories; ++trial) {
    const Index size = 1 + static_cast<Index>(rng() % 16);
    const Index width = 1 + static_cast<Index>(rng() % 4);
    const int steps = 1 + static_cast<int>(rng() % 32);
    const Index jump = 1 + static_cast<Index>(rng() % 5);
    DiffStack<double> s(size, width);
    oracle::DiscreteStack ds(size, width);
    DiffTape<double> t(size, width);
    oracle::DiscreteTape dt(size, width);
    for (int i = 0; i < steps; ++i) {
      Row v(width);
      for (Index k = 0; k < width; ++k) v(k) = value(rng);
      const int sa = static_cast<int>(rng() % 3);
      const int ta = static_cast<int>(rng() % 5);
      s.update(one_hot(3, sa), v);
      ds.apply(sa, v);
      t.update(one_hot(5, ta), v, jump);
      dt.apply(ta, v, jump);
    }
    worst = std::max({worst, (s.cells - ds.cells()).cwiseAbs().maxCoeff(), (t.cells - dt.cells).cwiseAbs().maxCoeff(),
                      (t.head - one_hot(size, dt.head)).cwiseAbs().maxCoeff()});
  }
  return {"discrete-limit memories", worst <= 1e-12, "max error " + sci(worst)};
}

bool checkpoint_round_trip(bool corrupt_magic) {
  const ModelConfig config = toy_model(Architecture::stack_lstm, PositionalEncoding::none, TaskId::reverse_string);
  Rng a(1), b(2);
  auto first = make_model<float>(config, a);
  auto second = make_model<float>(config, b);
  std::ostringstream written;
  write_checkpoint(first->params(), written);
  std::string bytes = written.str();
  if (corrupt_magic && !bytes.empty()) bytes[0] ^= 0x20;
  try {
    std::istringstream in(bytes);
    read_checkpoint(second->params(), in);
  } catch (const std::exception&) {
    return false;
  }
  std::ostringstream again;
  write_checkpoint(second->params(), again);
  return again.str() == bytes;
}

std::vector<Check> selftest() {
  std::vector<Check> checks;
  checks.push_back(check_oracles(1000));
  checks.push_back(check_gradients());
  checks.push_back(check_memories(1000));
  checks.push_back({"checkpoint round trip", checkpoint_round_trip(false), "write, read, write"});
  const bool corrupted = checkpoint_round_trip(true);
  checks.push_back({"corrupted magic rejected", !corrupted, corrupted ? "accepted" : "read refused"});
  return checks;
}

}  // namespace chomsky::cli
