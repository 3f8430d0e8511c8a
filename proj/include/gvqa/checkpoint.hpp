// checkpoint.hpp — versioned binary container for model parameters: a JSON
// header (format version, sizes, vocab hashes, config flags) followed by named
// tensors as raw little-endian doubles.
#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gvqa/graphs.hpp"
#include "gvqa/model.hpp"

namespace gvqa {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kCheckpointMagic[8] = {'G', 'V', 'Q', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint: " + path);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const ModelConfig& cfg, const VocabSet& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod(out, kCheckpointVersion);

  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["hidden_dim"] = cfg.hidden_dim;
  header["t_question"] = cfg.t_question;
  header["t_scene"] = cfg.t_scene;
  header["word_vocab_hash"] = vocab_hash(vocab.words);
  header["dep_vocab_hash"] = vocab_hash(vocab.deps);
  header["answer_vocab_hash"] = vocab_hash(vocab.answers);
  header["config"] = config_to_json(cfg);
  const std::string hs = header.dump();
  detail::write_pod(out, static_cast<std::uint64_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  detail::write_pod(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, tensor] : params.tensors) {
    detail::write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape) detail::write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path);
}

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
};

// Loads a checkpoint and rejects it unless the supplied vocabularies hash to
// the values recorded at save time.
inline Checkpoint load_checkpoint(const std::string& path, const VocabSet& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw IoError("not a checkpoint file: " + path);
  const auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);

  const auto hlen = detail::read_pod<std::uint64_t>(in, path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("truncated checkpoint: " + path);
  const nlohmann::json header = nlohmann::json::parse(hs);

  auto check_hash = [&](const char* key, const std::vector<std::string>& entries) {
    if (header.at(key).get<std::uint64_t>() != vocab_hash(entries))
      throw Error("checkpoint " + path + " was trained with a different vocabulary (" +
                  std::string(key) + " mismatch)");
  };
  check_hash("word_vocab_hash", vocab.words);
  check_hash("dep_vocab_hash", vocab.deps);
  check_hash("answer_vocab_hash", vocab.answers);

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("config"));
  const auto count = detail::read_pod<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = detail::read_pod<std::uint32_t>(in, path);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    const auto rank = detail::read_pod<std::uint32_t>(in, path);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(in, path));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint: " + path);
    ckpt.params.tensors[name] = std::move(t);
  }
  return ckpt;
}

}  // namespace gvqa
