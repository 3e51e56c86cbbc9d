#include "supmer/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace supmer {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  throw std::invalid_argument("base64: invalid character");
}

std::string bytes_to_base64(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
    const std::size_t rem = bytes.size() - i;
    if (rem > 1) v |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (rem > 2) v |= static_cast<std::uint32_t>(bytes[i + 2]);
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(rem > 1 ? kB64Alphabet[(v >> 6) & 63] : '=');
    out.push_back(rem > 2 ? kB64Alphabet[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> bytes_from_base64(const std::string& text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length must be a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const int pad = (text[i + 3] == '=') + (text[i + 2] == '=');
    std::uint32_t v = 0;
    for (int j = 0; j < 4; ++j) {
      v <<= 6;
      if (text[i + j] != '=') v |= static_cast<std::uint32_t>(b64_value(text[i + j]));
    }
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xFF));
  }
  return out;
}

ordered_json mat_to_json(const Mat& m) {
  ordered_json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  j["b64"] = doubles_to_base64(m.data);
  return j;
}

Mat mat_from_json(const ordered_json& j) {
  Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
  std::vector<double> data = doubles_from_base64(j.at("b64").get<std::string>());
  if (data.size() != m.data.size()) throw std::runtime_error("checkpoint: matrix size mismatch");
  m.data = std::move(data);
  return m;
}

ordered_json vec_to_json(const Vec& v) {
  ordered_json j;
  j["size"] = v.size();
  j["b64"] = doubles_to_base64(v);
  return j;
}

Vec vec_from_json(const ordered_json& j) {
  Vec v = doubles_from_base64(j.at("b64").get<std::string>());
  if (v.size() != j.at("size").get<std::size_t>())
    throw std::runtime_error("checkpoint: vector size mismatch");
  return v;
}

}  // namespace

std::string doubles_to_base64(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &values[i], 8);
    for (int b = 0; b < 8; ++b)
      bytes[i * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFF);  // little-endian
  }
  return bytes_to_base64(bytes);
}

std::vector<double> doubles_from_base64(const std::string& text) {
  const std::vector<unsigned char> bytes = bytes_from_base64(text);
  if (bytes.size() % 8 != 0) throw std::invalid_argument("base64: not a packed double array");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    std::memcpy(&values[i], &bits, 8);
  }
  return values;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ordered_json j;
  j["config_digest"] = ckpt.config_digest;
  j["step"] = ckpt.state.step;
  j["s"] = ckpt.state.s;
  j["rng_root"] = ckpt.state.rng_root;
  j["theta"] = mat_to_json(ckpt.state.theta.theta);
  ordered_json phi;
  phi["A"] = mat_to_json(ckpt.state.phi.A);
  phi["c"] = vec_to_json(ckpt.state.phi.c);
  phi["W"] = mat_to_json(ckpt.state.phi.W);
  phi["b"] = vec_to_json(ckpt.state.phi.b);
  j["phi"] = phi;
  ordered_json model;
  model["prompt_tokens"] = ckpt.model.prompt_tokens;
  model["prompt_dim"] = ckpt.model.prompt_dim;
  model["embed_dim"] = ckpt.model.embed_dim;
  model["token_dim"] = ckpt.model.token_dim;
  model["hidden_width"] = ckpt.model.hidden_width;
  model["vocab_size"] = ckpt.model.vocab_size;
  model["encoder_seed"] = ckpt.model.encoder_seed;
  model["scorer_seed"] = ckpt.model.scorer_seed;
  j["model"] = model;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  ordered_json j;
  in >> j;

  Checkpoint ckpt;
  ckpt.config_digest = j.at("config_digest").get<std::string>();
  ckpt.state.step = j.at("step").get<std::int64_t>();
  ckpt.state.s = j.at("s").get<double>();
  ckpt.state.rng_root = j.at("rng_root").get<std::uint64_t>();
  ckpt.state.theta.theta = mat_from_json(j.at("theta"));
  ckpt.state.phi.A = mat_from_json(j.at("phi").at("A"));
  ckpt.state.phi.c = vec_from_json(j.at("phi").at("c"));
  ckpt.state.phi.W = mat_from_json(j.at("phi").at("W"));
  ckpt.state.phi.b = vec_from_json(j.at("phi").at("b"));
  const auto& model = j.at("model");
  ckpt.model.prompt_tokens = model.at("prompt_tokens").get<int>();
  ckpt.model.prompt_dim = model.at("prompt_dim").get<int>();
  ckpt.model.embed_dim = model.at("embed_dim").get<int>();
  ckpt.model.token_dim = model.at("token_dim").get<int>();
  ckpt.model.hidden_width = model.at("hidden_width").get<int>();
  ckpt.model.vocab_size = model.at("vocab_size").get<int>();
  ckpt.model.encoder_seed = model.at("encoder_seed").get<std::uint64_t>();
  ckpt.model.scorer_seed = model.at("scorer_seed").get<std::uint64_t>();
  ckpt.state.phi.validate();
  return ckpt;
}

const char* format_name(TaskFormat f) {
  switch (f) {
    case TaskFormat::sp: return "sp";
    case TaskFormat::mc: return "mc";
    case TaskFormat::ss: return "ss";
  }
  throw std::logic_error("format_name: bad format");
}

TaskFormat format_from_name(const std::string& name) {
  if (name == "sp") return TaskFormat::sp;
  if (name == "mc") return TaskFormat::mc;
  if (name == "ss") return TaskFormat::ss;
  throw std::invalid_argument("unknown task format: " + name);
}

namespace {

ordered_json example_to_json(const Example& ex) {
  ordered_json j;
  j["h"] = ex.hidden.values;
  j["y"] = ex.soft_label;
  return j;
}

Example example_from_json(const ordered_json& j, HiddenFormat format) {
  Example ex;
  ex.hidden.format = format;
  ex.hidden.values = j.at("h").get<Vec>();
  ex.soft_label = j.at("y").get<Vec>();
  return ex;
}

}  // namespace

void save_tasks_jsonl(const std::string& path, const std::vector<MetaTask>& tasks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_tasks_jsonl: cannot open " + path);
  for (const MetaTask& task : tasks) {
    ordered_json j;
    j["format"] = format_name(task.format);
    j["cluster"] = task.anchor_cluster;
    ordered_json support = ordered_json::array();
    for (const Example& ex : task.support) support.push_back(example_to_json(ex));
    ordered_json query = ordered_json::array();
    for (const Example& ex : task.query) query.push_back(example_to_json(ex));
    j["support"] = support;
    j["query"] = query;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("save_tasks_jsonl: write failed for " + path);
}

std::vector<MetaTask> load_tasks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_tasks_jsonl: cannot open " + path);
  std::vector<MetaTask> tasks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const ordered_json j = ordered_json::parse(line);
    MetaTask task;
    task.format = format_from_name(j.at("format").get<std::string>());
    task.anchor_cluster = j.at("cluster").get<int>();
    const HiddenFormat hf = hidden_format_of(task.format);
    for (const auto& e : j.at("support")) task.support.push_back(example_from_json(e, hf));
    for (const auto& e : j.at("query")) task.query.push_back(example_from_json(e, hf));
    tasks.push_back(std::move(task));
  }
  if (tasks.empty()) throw std::runtime_error("load_tasks_jsonl: no tasks in " + path);
  return tasks;
}

}  // namespace supmer
