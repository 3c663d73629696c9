#include "dbm/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dbm {

namespace {

constexpr const char* kMagic = "DBMCKPT";

template <typename U>
void put_le(std::ostream& os, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    os.put(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

template <typename U>
U get_le(std::istream& is) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = is.get();
    if (c == EOF) throw InputError("checkpoint: truncated value block");
    bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return bits;
}

Shape parse_shape(const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      shape.push_back(std::stoul(part));
    } catch (const std::exception&) {
      throw InputError("checkpoint: bad shape '" + text + "'");
    }
  }
  if (shape.empty()) throw InputError("checkpoint: empty shape");
  return shape;
}

std::string shape_token(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& os, const ParameterSet& params) {
  os << kMagic << '\n' << "version " << kCheckpointVersion << '\n'
     << "count " << params.size() << '\n';
  for (const auto& p : params.items())
    os << p.name << ' ' << shape_token(p.tensor.shape()) << ' '
       << precision_name(p.tensor.precision()) << '\n';
  os << "end\n";
  for (const auto& p : params.items()) {
    for (double v : p.tensor.values()) {
      if (p.tensor.precision() == Precision::f32)
        put_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        put_le(os, std::bit_cast<std::uint64_t>(v));
    }
  }
}

std::vector<CheckpointEntry> read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic) throw InputError("checkpoint: bad magic");
  std::string word;
  int version = 0;
  std::size_t count = 0;
  if (!(is >> word >> version) || word != "version") throw InputError("checkpoint: missing version");
  if (version != kCheckpointVersion)
    throw InputError("checkpoint: unsupported version " + std::to_string(version));
  if (!(is >> word >> count) || word != "count") throw InputError("checkpoint: missing count");
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    std::string shape, prec;
    if (!(is >> e.name >> shape >> prec)) throw InputError("checkpoint: truncated manifest");
    e.shape = parse_shape(shape);
    try {
      e.precision = parse_precision(prec);
    } catch (const ConfigError& err) {
      throw InputError(std::string("checkpoint: ") + err.what());
    }
  }
  if (!(is >> word) || word != "end") throw InputError("checkpoint: missing manifest terminator");
  if (is.get() != '\n') throw InputError("checkpoint: malformed manifest terminator");
  for (auto& e : entries) {
    e.values.resize(shape_numel(e.shape));
    for (auto& v : e.values)
      v = e.precision == Precision::f32
              ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(is)))
              : std::bit_cast<double>(get_le<std::uint64_t>(is));
  }
  return entries;
}

void save_checkpoint(const std::string& path, const ParameterSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  write_checkpoint(os, params);
}

void apply_checkpoint(const std::vector<CheckpointEntry>& entries, ParameterSet& params) {
  if (entries.size() != params.size())
    throw InputError("checkpoint holds " + std::to_string(entries.size()) +
                     " tensors, model expects " + std::to_string(params.size()));
  for (const auto& e : entries) {
    auto* p = params.find(e.name);
    if (!p) throw InputError("checkpoint tensor '" + e.name + "' not in model");
    if (p->tensor.shape() != e.shape)
      throw InputError("checkpoint tensor '" + e.name + "' has shape " + shape_string(e.shape) +
                       ", model expects " + shape_string(p->tensor.shape()));
    auto dst = p->tensor.mutable_values();
    std::copy(e.values.begin(), e.values.end(), dst.begin());
    p->tensor.round_to_precision();
  }
}

void load_checkpoint(const std::string& path, ParameterSet& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint '" + path + "'");
  apply_checkpoint(read_checkpoint(is), params);
}

}  // namespace dbm
