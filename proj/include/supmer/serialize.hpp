#pragma once

#include <string>
#include <vector>

#include "supmer/metalearn.hpp"
#include "supmer/taskgen.hpp"

namespace supmer {

/// base64 of the little-endian IEEE-754 bytes; bit-exact round trip.
std::string doubles_to_base64(const std::vector<double>& values);
std::vector<double> doubles_from_base64(const std::string& text);

/// Model geometry a checkpoint needs to rebuild its frozen companions.
struct ModelSpec {
  int prompt_tokens = 8;
  int prompt_dim = 32;
  int embed_dim = 32;
  int token_dim = 32;
  int hidden_width = 64;
  int vocab_size = 512;
  std::uint64_t encoder_seed = 1;
  std::uint64_t scorer_seed = 2;
};

struct Checkpoint {
  MetaState state;
  ModelSpec model;
  std::string config_digest;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Task files: JSON Lines, one task per line.
void save_tasks_jsonl(const std::string& path, const std::vector<MetaTask>& tasks);
std::vector<MetaTask> load_tasks_jsonl(const std::string& path);

const char* format_name(TaskFormat f);
TaskFormat format_from_name(const std::string& name);

}  // namespace supmer
