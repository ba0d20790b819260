#include "pedintent/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "pedintent/errors.hpp"

namespace pedintent {

namespace {

constexpr char kMagic[4] = {'I', 'T', 'N', '1'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw LoadError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const StateDict& state) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, state.size(), 4);
  for (const auto& t : state) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("tensor name too long");
    if (t.shape.size() > std::numeric_limits<std::uint8_t>::max()) throw ContractError("tensor rank too large");
    if (shape_numel(t.shape) != t.values.size()) throw DimensionError("checkpoint entry " + t.name + ": shape/data mismatch");
    put_le(out, t.name.size(), 2);
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_le(out, t.shape.size(), 1);
    for (auto d : t.shape) put_le(out, d, 4);
    for (float v : t.values) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  return out;
}

StateDict decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw LoadError("not an ITN1 checkpoint");
  Reader r(bytes);
  r.str(4);
  const auto count = r.le(4);
  StateDict state;
  for (std::uint64_t e = 0; e < count; ++e) {
    NamedTensor t;
    t.name = r.str(r.le(2));
    const auto rank = r.le(1);
    for (std::uint64_t d = 0; d < rank; ++d) t.shape.push_back(r.le(4));
    t.values.resize(shape_numel(t.shape));
    for (auto& v : t.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.le(4)));
    state.push_back(std::move(t));
  }
  if (!r.done()) throw LoadError("trailing bytes after checkpoint entries");
  return state;
}

void save_checkpoint(const std::filesystem::path& path, const StateDict& state) {
  const auto bytes = encode_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

StateDict load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : read_file(path)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pedintent
