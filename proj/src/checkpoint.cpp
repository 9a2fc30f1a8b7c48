#include "colpro/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "colpro/errors.hpp"

namespace colpro {

namespace {

constexpr char kTag[] = "colpro-ckpt v1\n";

void put_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int64_t get_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw IoError("checkpoint truncated while reading an integer");
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw IoError("checkpoint truncated while reading an integer");
  return v;
}

void put_tensor(std::ostream& os, const Tensor& t) {
  put_i64(os, t.rows());
  put_i64(os, t.cols());
  os.write(reinterpret_cast<const char*>(t.value().data()),
           static_cast<std::streamsize>(sizeof(Real)) * t.numel());
}

void get_tensor(std::istream& is, Tensor& t) {
  const std::int64_t r = get_i64(is), c = get_i64(is);
  if (r != t.rows() || c != t.cols())
    throw IoError("checkpoint tensor shape mismatch: file has " +
                  std::to_string(r) + "x" + std::to_string(c) +
                  ", model wants " + t.shape_str());
  is.read(reinterpret_cast<char*>(t.mutable_value().data()),
          static_cast<std::streamsize>(sizeof(Real)) * t.numel());
  if (!is) throw IoError("checkpoint truncated while reading tensor data");
}

std::vector<Tensor> ordered_tensors(const Model& model, const PromptSet& prompts) {
  std::vector<Tensor> out;
  for (auto& [name, t] : model.backbone.named_params()) out.push_back(t);
  for (auto& [name, t] : prompts.named_params()) out.push_back(t);
  for (auto& [name, t] : model.heads.named_params()) out.push_back(t);
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     const PromptSet& prompts) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint '" + path + "'");
  os.write(kTag, sizeof(kTag) - 1);
  const ModelConfig& c = model.cfg;
  for (std::int64_t v :
       {static_cast<std::int64_t>(c.n_layers), static_cast<std::int64_t>(c.d_model),
        static_cast<std::int64_t>(c.n_heads), static_cast<std::int64_t>(c.vocab_size),
        static_cast<std::int64_t>(c.codebook_size),
        static_cast<std::int64_t>(c.feat_dim),
        static_cast<std::int64_t>(c.max_seq_len),
        static_cast<std::int64_t>(c.prompt_len),
        static_cast<std::int64_t>(c.g_end), static_cast<std::int64_t>(c.e_end),
        static_cast<std::int64_t>(c.ffn_mult),
        static_cast<std::int64_t>(c.markers.question),
        static_cast<std::int64_t>(c.markers.video),
        static_cast<std::int64_t>(c.markers.choices),
        static_cast<std::int64_t>(c.markers.answer),
        static_cast<std::int64_t>(c.markers.negatives),
        static_cast<std::int64_t>(c.markers.separator)})
    put_i64(os, v);
  put_u64(os, model.backbone.digest());
  for (const Tensor& t : ordered_tensors(model, prompts)) put_tensor(os, t);
  if (!os) throw IoError("short write to checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint '" + path + "'");
  char tag[sizeof(kTag)] = {};
  is.read(tag, sizeof(kTag) - 1);
  if (!is || std::memcmp(tag, kTag, sizeof(kTag) - 1) != 0)
    throw IoError("'" + path + "' is not a colpro-ckpt v1 checkpoint");

  ModelConfig c;
  c.n_layers = static_cast<int>(get_i64(is));
  c.d_model = static_cast<int>(get_i64(is));
  c.n_heads = static_cast<int>(get_i64(is));
  c.vocab_size = static_cast<int>(get_i64(is));
  c.codebook_size = static_cast<int>(get_i64(is));
  c.feat_dim = static_cast<int>(get_i64(is));
  c.max_seq_len = static_cast<int>(get_i64(is));
  c.prompt_len = static_cast<int>(get_i64(is));
  c.g_end = static_cast<int>(get_i64(is));
  c.e_end = static_cast<int>(get_i64(is));
  c.ffn_mult = static_cast<int>(get_i64(is));
  c.markers.question = static_cast<int>(get_i64(is));
  c.markers.video = static_cast<int>(get_i64(is));
  c.markers.choices = static_cast<int>(get_i64(is));
  c.markers.answer = static_cast<int>(get_i64(is));
  c.markers.negatives = static_cast<int>(get_i64(is));
  c.markers.separator = static_cast<int>(get_i64(is));
  c.validate();
  const std::uint64_t recorded_digest = get_u64(is);

  Checkpoint ck;
  ck.model = build_model(c, 0);
  Rng prng(0);
  ck.prompts = PromptSet::init(c, prng);
  for (Tensor& t : ordered_tensors(ck.model, ck.prompts)) get_tensor(is, t);
  ck.model.backbone.set_trainable(false);

  if (ck.model.backbone.digest() != recorded_digest)
    throw IoError("checkpoint backbone digest mismatch (corrupt file?)");
  return ck;
}

}  // namespace colpro
