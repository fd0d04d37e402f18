#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aem/model.hpp"

namespace aem {

// Flat binary container of named double tensors. Little-endian 64-bit floats
// with shape headers; the byte layout is versioned so old checkpoints fail
// loudly instead of silently misparsing.
struct TensorFile {
  struct Entry {
    std::vector<std::uint64_t> shape;
    std::vector<double> data;
  };
  std::map<std::string, Entry> tensors;

  void add(const std::string& name, std::vector<std::uint64_t> shape,
           std::vector<double> data);
  void add_scalar(const std::string& name, double value);
  void add_matrix(const std::string& name, const Matrix& m);
  void add_vector(const std::string& name, const std::vector<double>& v);

  const Entry& get(const std::string& name) const;  // throws ConfigError if absent
  double scalar(const std::string& name) const;
  Matrix matrix(const std::string& name) const;
  std::vector<double> vector(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) > 0; }

  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);
};

// Per-field fingerprints of the vocabulary term lists; a checkpoint refuses
// to decode against vocabularies it was not trained on.
std::array<std::uint64_t, kNumFields> vocab_fingerprints(
    const FieldVocabularies& vocabs);

struct Checkpoint {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  std::array<int, kNumFields> field_sizes{};
  std::array<std::uint64_t, kNumFields> vocab_fp{};
};

void save_checkpoint(const std::string& path, const GeneratorParams& gen,
                     const DiscriminatorParams& disc,
                     const std::array<int, kNumFields>& field_sizes,
                     const std::array<std::uint64_t, kNumFields>& vocab_fp);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace aem
