#include "chomsky/harness.hpp"

#include <json.hpp>

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace chomsky {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw InvalidInput("config: bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw InvalidInput("config: bad value for " + key + ": '" + value + "'");
}

int parse_comp_tokens(const std::string& value) {
  if (value == "0") return 0;
  if (value == "l" || value == "1l") return 1;
  if (value == "2l") return 2;
  throw InvalidInput("config: comp_tokens must be one of 0, l, 2l (got '" + value + "')");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{"task",    "arch",    "hidden",      "N",           "M",
                                             "batch",   "steps",   "lr",          "seed",        "pos_enc",
                                             "n_tapes", "comp_tokens", "autoregressive", "eval_k", "profile"};
  return keys;
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  const auto& keys = config_keys();
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("config line " + std::to_string(number) + ": expected key = value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw InvalidInput("config line " + std::to_string(number) + ": unknown key '" + key + "'");
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  return parse_config_text(read_text(path));
}

TrainConfig resolve_config(const std::map<std::string, std::string>& values) {
  const auto& keys = config_keys();
  for (const auto& [k, v] : values)
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw InvalidInput("config: unknown key '" + k + "'");
  auto get = [&](const char* k) -> const std::string* {
    auto it = values.find(k);
    return it == values.end() ? nullptr : &it->second;
  };

  TaskId task = TaskId::parity_check;
  if (auto v = get("task")) {
    auto t = parse_task(*v);
    if (!t) throw InvalidInput("unknown task '" + *v + "'; valid tasks: " + comma_separated_task_names());
    task = *t;
  }
  Architecture arch = Architecture::rnn;
  if (auto v = get("arch")) {
    auto a = parse_architecture(*v);
    if (!a) throw InvalidInput("unknown arch '" + *v + "'; valid: rnn, lstm, stack_rnn, stack_lstm, tape_rnn, transformer");
    arch = *a;
  }
  Profile profile = Profile::paper;
  if (auto v = get("profile")) {
    auto p = parse_profile(*v);
    if (!p) throw InvalidInput("unknown profile '" + *v + "'; valid: desk, paper");
    profile = *p;
  }

  TrainConfig c = profile_config(profile, task, arch);
  if (auto v = get("hidden")) c.model.hidden = parse_number<int>("hidden", *v);
  if (auto v = get("N")) c.N = parse_number<int>("N", *v);
  if (auto v = get("M")) c.M = parse_number<int>("M", *v);
  if (auto v = get("batch")) c.batch = parse_number<int>("batch", *v);
  if (auto v = get("steps")) c.steps = parse_number<long>("steps", *v);
  if (auto v = get("lr")) c.lr = parse_number<double>("lr", *v);
  if (auto v = get("seed")) c.seed = parse_number<std::uint64_t>("seed", *v);
  if (auto v = get("pos_enc")) {
    auto pe = parse_positional_encoding(*v);
    if (!pe) throw InvalidInput("unknown pos_enc '" + *v + "'; valid: none, sin_cos, rope, alibi, relative_xl");
    c.model.positional = *pe;
  }
  if (auto v = get("n_tapes")) c.model.n_tapes = parse_number<int>("n_tapes", *v);
  if (auto v = get("comp_tokens")) c.comp_multiplier = parse_comp_tokens(*v);
  if (auto v = get("autoregressive")) c.autoregressive = parse_bool("autoregressive", *v);
  if (auto v = get("eval_k")) c.eval_k = parse_number<int>("eval_k", *v);
  validate(c);
  return c;
}

// ---- curves and results -------------------------------------------------------

void write_curve(const std::filesystem::path& path, int N, std::span<const double> curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "length,accuracy\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) out << N + 1 + static_cast<int>(i) << ',' << curve[i] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<double> read_curve(const std::filesystem::path& path, int& N) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != "length,accuracy")
    throw InvalidInput("curve file without 'length,accuracy' header: " + path.string());
  std::vector<double> curve;
  N = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidInput("malformed curve row: " + line);
    const int length = parse_number<int>("length", trim(line.substr(0, comma)));
    if (curve.empty()) N = length - 1;
    if (length != N + 1 + static_cast<int>(curve.size())) throw InvalidInput("curve lengths not consecutive");
    curve.push_back(parse_number<double>("accuracy", trim(line.substr(comma + 1))));
  }
  return curve;
}

std::string result_json(const RunRecord& r, const std::string& curve_file) {
  nlohmann::ordered_json j;
  j["config_hash"] = r.config_hash;
  j["task"] = std::string(task_spec(r.task).name);
  j["arch"] = std::string(architecture_name(r.arch));
  j["seed"] = r.seed;
  j["lr"] = r.lr;
  j["score"] = r.score;
  j["diverged"] = r.diverged;
  j["wallclock_s"] = r.wallclock_s;
  j["curve_file"] = curve_file;
  return j.dump();
}

// ---- checkpoints --------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> bytes;
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw InvalidInput("checkpoint truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

constexpr char kMagic[4] = {'C', 'H', 'M', 'B'};

}  // namespace

void write_checkpoint(const ParamStore<float>& params, std::ostream& out) {
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.at(i);
    if (p.name.size() > 0xffff) throw InvalidInput("checkpoint: parameter name too long");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_le<std::uint8_t>(out, 2);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Index j = 0; j < p.value.size(); ++j) {
      std::uint32_t bits;
      const float f = p.value.data()[j];
      std::memcpy(&bits, &f, 4);
      put_le<std::uint32_t>(out, bits);
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void write_checkpoint(const ParamStore<float>& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(params, out);
}

void read_checkpoint(ParamStore<float>& params, std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw InvalidInput("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw InvalidInput("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(in);
  if (count != params.size())
    throw InvalidInput("checkpoint: holds " + std::to_string(count) + " parameters, model has " +
                       std::to_string(params.size()));
  std::vector<Matrix<float>> loaded(params.size());
  std::vector<bool> seen(params.size(), false);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw InvalidInput("checkpoint truncated");
    Parameter<float>* p = params.find(name);
    if (!p) throw InvalidInput("checkpoint: unknown parameter '" + name + "'");
    std::size_t index = 0;
    while (&params.at(index) != p) ++index;
    if (seen[index]) throw InvalidInput("checkpoint: duplicate parameter '" + name + "'");
    const auto rank = get_le<std::uint8_t>(in);
    if (rank < 1 || rank > 2) throw InvalidInput("checkpoint: unsupported rank for '" + name + "'");
    Index rows = 1, cols = get_le<std::uint32_t>(in);
    if (rank == 2) {
      rows = cols;
      cols = get_le<std::uint32_t>(in);
    }
    if (rows != p->value.rows() || cols != p->value.cols())
      throw InvalidInput("checkpoint: shape mismatch for '" + name + "'");
    Matrix<float> m(rows, cols);
    for (Index j = 0; j < m.size(); ++j) {
      const auto bits = get_le<std::uint32_t>(in);
      std::memcpy(m.data() + j, &bits, 4);
    }
    loaded[index] = std::move(m);
    seen[index] = true;
  }
  for (std::size_t i = 0; i < params.size(); ++i) params.at(i).value = std::move(loaded[i]);
}

void read_checkpoint(ParamStore<float>& params, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  read_checkpoint(params, in);
}

}  // namespace chomsky
