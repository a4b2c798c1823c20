#pragma once

#include <cstdint>
#include <string>

#include "seqmask/explainer.hpp"
#include "seqmask/explanandum.hpp"

namespace seqmask {

// Checkpoints are JSON with sorted keys and round-trip double formatting, so
// saving the same model twice yields byte-identical files. vocab_hash ties a
// model to the tokenizer vocabulary it was trained with; loaders and the CLI
// refuse to mix models across vocabularies.

void save_explanandum(const std::string& path, const Explanandum& model,
                      std::uint64_t vocab_hash);
void save_explainer(const std::string& path, const Explainer& explainer,
                    std::uint64_t vocab_hash);

struct LoadedExplanandum {
  Explanandum model;
  std::uint64_t vocab_hash = 0;
};

struct LoadedExplainer {
  Explainer explainer;
  std::uint64_t vocab_hash = 0;
};

// Rebuild a model from its checkpoint. The frozen flag is restored, so a
// classifier saved after freeze() loads frozen.
LoadedExplanandum load_explanandum(const std::string& path);
LoadedExplainer load_explainer(const std::string& path);

}  // namespace seqmask
