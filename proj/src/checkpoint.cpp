#include "simpletag/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'S', 'T', 'A', 'G', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    out_.append(raw, sizeof(T));
  }
  void put_u32(std::size_t v) { put(static_cast<std::uint32_t>(v)); }
  void put_string(const std::string& s) {
    put_u32(s.size());
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::size_t get_u32() { return get<std::uint32_t>(); }
  std::string get_string() {
    const std::size_t n = get_u32();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_raw(const char* p, std::size_t n, const char* what) {
    need(n);
    if (std::memcmp(in_.data() + pos_, p, n) != 0) throw DataError(std::string("checkpoint: bad ") + what);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw DataError("checkpoint: truncated file");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

void put_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.put_string(name);
  w.put_u32(t.rank());
  for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
  for (Real v : t.data()) w.put(v);
}

void get_tensor(Reader& r, const std::string& expected_name, Tensor& dst) {
  const auto name = r.get_string();
  if (name != expected_name) {
    throw DataError("checkpoint: expected array '" + expected_name + "', found '" + name + "'");
  }
  Shape shape(r.get_u32());
  for (auto& d : shape) d = r.get<std::uint64_t>();
  if (shape != dst.shape()) {
    throw DataError("checkpoint: array '" + name + "' has shape " + shape_string(shape) +
                    ", model expects " + shape_string(dst.shape()));
  }
  for (auto& v : dst.storage()) v = r.get<Real>();
}

}  // namespace

std::string checkpoint_bytes(const Model& model, const Vocabulary& vocab, const Ablation& ablation) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);

  const auto& c = model.config();
  w.put_u32(c.encoder.layers);
  w.put_u32(c.encoder.heads);
  w.put_u32(c.encoder.model_dim);
  w.put_u32(c.encoder.ff_dim);
  w.put_u32(c.encoder.max_len);
  w.put_u32(c.encoder.vocab_size);
  w.put(c.encoder.dropout);
  w.put_u32(c.relpos_dim);
  w.put_u32(c.conv_blocks);

  const auto& b = ablation.branches;
  for (bool flag : {b.token1d, b.attention1d, b.token2d, b.attention2d, ablation.conv,
                    ablation.relpos, ablation.rotary})
    w.put(static_cast<std::uint8_t>(flag));
  w.put_u32(ablation.mask_layers.size());
  for (int m : ablation.mask_layers) w.put_u32(static_cast<std::size_t>(m));

  w.put_u32(vocab.size());
  for (const auto& word : vocab.words()) w.put_string(word);

  const auto params = model.parameters();
  w.put_u32(params.parameters.size() + params.buffers.size());
  for (const auto& p : params.parameters) put_tensor(w, p.name, p.var->value);
  for (const auto& buf : params.buffers) put_tensor(w, buf.name, *buf.tensor);
  return w.take();
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Vocabulary& vocab, const Ablation& ablation) {
  const auto bytes = checkpoint_bytes(model, vocab, ablation);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  Reader r(bytes);
  r.expect_raw(kMagic, sizeof(kMagic), "magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }

  ModelConfig c;
  c.encoder.layers = r.get_u32();
  c.encoder.heads = r.get_u32();
  c.encoder.model_dim = r.get_u32();
  c.encoder.ff_dim = r.get_u32();
  c.encoder.max_len = r.get_u32();
  c.encoder.vocab_size = r.get_u32();
  c.encoder.dropout = r.get<Real>();
  c.relpos_dim = r.get_u32();
  c.conv_blocks = r.get_u32();

  Checkpoint out;
  auto& b = out.ablation.branches;
  for (bool* flag : {&b.token1d, &b.attention1d, &b.token2d, &b.attention2d, &out.ablation.conv,
                     &out.ablation.relpos, &out.ablation.rotary})
    *flag = r.get<std::uint8_t>() != 0;
  const std::size_t masks = r.get_u32();
  for (std::size_t i = 0; i < masks; ++i) out.ablation.mask_layers.insert(static_cast<int>(r.get_u32()));

  std::vector<std::string> words(r.get_u32());
  for (auto& word : words) word = r.get_string();
  out.vocab = Vocabulary::from_words(std::move(words));
  if (out.vocab.size() != c.encoder.vocab_size) {
    throw DataError("checkpoint: vocabulary size does not match encoder config");
  }

  try {
    out.model = std::make_unique<Model>(c, 0);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: invalid config: ") + e.what());
  }
  const auto params = out.model->parameters();
  const std::size_t count = r.get_u32();
  if (count != params.parameters.size() + params.buffers.size()) {
    throw DataError("checkpoint: array count mismatch");
  }
  for (const auto& p : params.parameters) get_tensor(r, p.name, p.var->value);
  for (const auto& buf : params.buffers) get_tensor(r, buf.name, *buf.tensor);
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  out.ablation.validate(c.encoder.layers);
  return out;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

void copy_weights(const Model& src, const Model& dst) {
  if (!(src.config() == dst.config())) throw ConfigError("copy_weights: config mismatch");
  const auto from = src.parameters();
  const auto to = dst.parameters();
  for (std::size_t i = 0; i < from.parameters.size(); ++i)
    to.parameters[i].var->value = from.parameters[i].var->value;
  for (std::size_t i = 0; i < from.buffers.size(); ++i) *to.buffers[i].tensor = *from.buffers[i].tensor;
}

}  // namespace simpletag
