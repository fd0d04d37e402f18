#include "aem/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "aem/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes a little-endian host");

namespace aem {

namespace {

constexpr char kMagic[8] = {'A', 'E', 'M', 'T', 'N', 'S', 'R', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ConfigError("checkpoint: truncated file");
  return value;
}

}  // namespace

void TensorFile::add(const std::string& name, std::vector<std::uint64_t> shape,
                     std::vector<double> data) {
  std::uint64_t count = 1;
  for (std::uint64_t d : shape) count *= d;
  if (count != data.size())
    throw ContractViolation("tensor '" + name + "': shape does not match data");
  tensors[name] = Entry{std::move(shape), std::move(data)};
}

void TensorFile::add_scalar(const std::string& name, double value) {
  add(name, {1}, {value});
}

void TensorFile::add_matrix(const std::string& name, const Matrix& m) {
  add(name, {m.rows, m.cols}, m.data);
}

void TensorFile::add_vector(const std::string& name, const std::vector<double>& v) {
  add(name, {v.size()}, v);
}

const TensorFile::Entry& TensorFile::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw ConfigError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

double TensorFile::scalar(const std::string& name) const {
  const Entry& e = get(name);
  if (e.data.size() != 1)
    throw ConfigError("checkpoint: '" + name + "' is not a scalar");
  return e.data[0];
}

Matrix TensorFile::matrix(const std::string& name) const {
  const Entry& e = get(name);
  if (e.shape.size() != 2)
    throw ConfigError("checkpoint: '" + name + "' is not a matrix");
  Matrix m(e.shape[0], e.shape[1]);
  m.data = e.data;
  return m;
}

std::vector<double> TensorFile::vector(const std::string& name) const {
  return get(name).data;
}

void TensorFile::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(out, tensors.size());
  for (const auto& [name, entry] : tensors) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(entry.shape.size()));
    for (std::uint64_t d : entry.shape) write_pod<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(entry.data.data()),
              static_cast<std::streamsize>(entry.data.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("write failed: " + path);
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("not a tensor container (bad magic/version): " + path);
  const auto count = read_pod<std::uint64_t>(in);
  TensorFile file;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(in);
    std::vector<std::uint64_t> shape(ndim);
    std::uint64_t total = 1;
    for (auto& d : shape) {
      d = read_pod<std::uint64_t>(in);
      total *= d;
    }
    std::vector<double> data(total);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!in) throw ConfigError("checkpoint: truncated tensor '" + name + "'");
    file.tensors[name] = Entry{std::move(shape), std::move(data)};
  }
  return file;
}

std::array<std::uint64_t, kNumFields> vocab_fingerprints(
    const FieldVocabularies& vocabs) {
  std::array<std::uint64_t, kNumFields> fp{};
  for (int f = 0; f < kNumFields; ++f) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const std::string& term : vocabs[f].terms) {
      h = fnv1a(term.data(), term.size(), h);
      h = fnv1a("\n", 1, h);
    }
    fp[f] = h;
  }
  return fp;
}

namespace {

void put_dense(TensorFile& file, const std::string& prefix, const DenseLayer& l) {
  file.add_matrix(prefix + "/W", l.W);
  file.add_vector(prefix + "/b", l.b);
  if (l.spectral) file.add_vector(prefix + "/sn_u", l.sn_u);
}

void fetch_dense(const TensorFile& file, const std::string& prefix, DenseLayer& l,
                 bool spectral) {
  l.W = file.matrix(prefix + "/W");
  l.b = file.vector(prefix + "/b");
  l.grad_W.resize(l.W.rows, l.W.cols);
  l.grad_b.assign(l.b.size(), 0.0);
  l.spectral = spectral;
  if (spectral) {
    l.sn_u = file.vector(prefix + "/sn_u");
    l.sn_v.assign(l.W.cols, 0.0);
    spectral_normalize(l, 0);
  }
}

void put_bn(TensorFile& file, const std::string& prefix, const BatchNorm& bn) {
  file.add_vector(prefix + "/gain", bn.gain);
  file.add_vector(prefix + "/bias", bn.bias);
  file.add_vector(prefix + "/running_mean", bn.running_mean);
  file.add_vector(prefix + "/running_var", bn.running_var);
  file.add_scalar(prefix + "/updates", static_cast<double>(bn.updates));
}

void fetch_bn(const TensorFile& file, const std::string& prefix, BatchNorm& bn) {
  bn.gain = file.vector(prefix + "/gain");
  bn.bias = file.vector(prefix + "/bias");
  bn.running_mean = file.vector(prefix + "/running_mean");
  bn.running_var = file.vector(prefix + "/running_var");
  bn.updates = static_cast<long>(file.scalar(prefix + "/updates"));
  bn.grad_gain.assign(bn.gain.size(), 0.0);
  bn.grad_bias.assign(bn.bias.size(), 0.0);
}

void put_ln(TensorFile& file, const std::string& prefix, const LayerNorm& ln) {
  file.add_vector(prefix + "/gain", ln.gain);
  file.add_vector(prefix + "/bias", ln.bias);
}

void fetch_ln(const TensorFile& file, const std::string& prefix, LayerNorm& ln) {
  ln.gain = file.vector(prefix + "/gain");
  ln.bias = file.vector(prefix + "/bias");
  ln.grad_gain.assign(ln.gain.size(), 0.0);
  ln.grad_bias.assign(ln.bias.size(), 0.0);
}

}  // namespace

void save_checkpoint(const std::string& path, const GeneratorParams& gen,
                     const DiscriminatorParams& disc,
                     const std::array<int, kNumFields>& field_sizes,
                     const std::array<std::uint64_t, kNumFields>& vocab_fp) {
  TensorFile file;
  file.add_scalar("meta/format", 1.0);
  file.add_scalar("meta/event_count", gen.event_count);
  file.add_scalar("meta/hidden_width", gen.hidden_width);
  file.add_scalar("meta/depth", gen.depth);
  file.add_scalar("meta/disc_width", disc.feature_width);
  file.add_scalar("meta/leaky_slope", gen.leaky_slope);
  file.add_scalar("meta/spectral", disc.use_spectral_norm ? 1.0 : 0.0);
  {
    std::vector<double> dims;
    for (int d : field_sizes) dims.push_back(d);
    file.add_vector("meta/field_sizes", dims);
    // 64-bit fingerprints split into exactly representable 32-bit halves
    std::vector<double> fps;
    for (std::uint64_t fp : vocab_fp) {
      fps.push_back(static_cast<double>(fp & 0xffffffffULL));
      fps.push_back(static_cast<double>(fp >> 32));
    }
    file.add_vector("meta/vocab_fp", fps);
  }

  put_dense(file, "g/hidden", gen.hidden);
  put_ln(file, "g/hidden_ln", gen.hidden_ln);
  for (std::size_t i = 0; i < gen.extra.size(); ++i) {
    put_dense(file, "g/extra" + std::to_string(i), gen.extra[i]);
    put_ln(file, "g/extra_ln" + std::to_string(i), gen.extra_ln[i]);
  }
  for (int f = 0; f < kNumFields; ++f) {
    const std::string prefix = "g/sub" + std::to_string(f);
    put_dense(file, prefix + "/lin", gen.subnets[f].lin);
    put_bn(file, prefix + "/bn", gen.subnets[f].bn);
  }

  put_dense(file, "d/input", disc.input_layer);
  put_dense(file, "d/feature", disc.feature_layer);
  put_dense(file, "d/output", disc.output_layer);

  file.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const TensorFile file = TensorFile::load(path);
  if (file.scalar("meta/format") != 1.0)
    throw ConfigError("checkpoint: unsupported format version");

  Checkpoint ck;
  GeneratorParams& gen = ck.generator;
  gen.event_count = static_cast<int>(file.scalar("meta/event_count"));
  gen.hidden_width = static_cast<int>(file.scalar("meta/hidden_width"));
  gen.depth = static_cast<int>(file.scalar("meta/depth"));
  gen.leaky_slope = file.scalar("meta/leaky_slope");
  {
    const std::vector<double> dims = file.vector("meta/field_sizes");
    const std::vector<double> fps = file.vector("meta/vocab_fp");
    for (int f = 0; f < kNumFields; ++f) {
      ck.field_sizes[f] = static_cast<int>(dims[f]);
      ck.vocab_fp[f] = static_cast<std::uint64_t>(fps[2 * f]) |
                       (static_cast<std::uint64_t>(fps[2 * f + 1]) << 32);
    }
    gen.field_sizes = ck.field_sizes;
  }

  fetch_dense(file, "g/hidden", gen.hidden, false);
  fetch_ln(file, "g/hidden_ln", gen.hidden_ln);
  for (int i = 0; i < gen.depth - 3; ++i) {
    gen.extra.emplace_back();
    gen.extra_ln.emplace_back();
    fetch_dense(file, "g/extra" + std::to_string(i), gen.extra.back(), false);
    fetch_ln(file, "g/extra_ln" + std::to_string(i), gen.extra_ln.back());
  }
  for (int f = 0; f < kNumFields; ++f) {
    const std::string prefix = "g/sub" + std::to_string(f);
    fetch_dense(file, prefix + "/lin", gen.subnets[f].lin, false);
    fetch_bn(file, prefix + "/bn", gen.subnets[f].bn);
  }

  DiscriminatorParams& disc = ck.discriminator;
  disc.use_spectral_norm = file.scalar("meta/spectral") != 0.0;
  disc.feature_width = static_cast<int>(file.scalar("meta/disc_width"));
  disc.leaky_slope = gen.leaky_slope;
  fetch_dense(file, "d/input", disc.input_layer, disc.use_spectral_norm);
  fetch_dense(file, "d/feature", disc.feature_layer, disc.use_spectral_norm);
  fetch_dense(file, "d/output", disc.output_layer, disc.use_spectral_norm);
  disc.input_dim = static_cast<int>(disc.input_layer.in_dim());
  return ck;
}

}  // namespace aem
