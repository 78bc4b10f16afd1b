#pragma once

// Binary checkpoint container, little-endian:
//
//   magic "STAGCKPT" | u32 format version
//   config   : u32 L, h, d, d_ff, n_max, |V|; f64 dropout; u32 d_p, C
//   ablation : u8 x7 switches; u32 count; u32 mask layers...
//   vocab    : u32 count; (u32 length, bytes) per word in id order
//   arrays   : u32 count; per array: u32 name length, name, u32 rank,
//              u64 dims..., f64 values...
//
// Arrays are parameters followed by buffers, in ParameterSet order.

#include <filesystem>
#include <memory>
#include <string>

#include "simpletag/corpus.hpp"
#include "simpletag/model.hpp"

namespace simpletag {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<Model> model;
  Vocabulary vocab;
  Ablation ablation;
};

std::string checkpoint_bytes(const Model& model, const Vocabulary& vocab, const Ablation& ablation);
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Vocabulary& vocab, const Ablation& ablation);

// Throws DataError on a malformed or mismatched container.
Checkpoint checkpoint_from_bytes(const std::string& bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every parameter value and buffer from `src` into `dst`; configs must match.
void copy_weights(const Model& src, const Model& dst);

}  // namespace simpletag
