#include "daanet/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace daanet {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'A', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& buf, const std::string& s) {
  put_u32(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

void put_matrix(std::string& buf, const Matrix& m) {
  put_u64(buf, static_cast<std::uint64_t>(m.rows()));
  put_u64(buf, static_cast<std::uint64_t>(m.cols()));
  static_assert(sizeof(Scalar) == 8);
  const char* bytes = reinterpret_cast<const char*>(m.data());
  buf.append(bytes, static_cast<std::size_t>(m.size()) * sizeof(Scalar));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw DataError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  Matrix matrix() {
    std::uint64_t r = u64();
    std::uint64_t c = u64();
    if (r > (1u << 24) || c > (1u << 24))
      throw DataError("checkpoint: implausible tensor shape");
    std::size_t n = static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
    need(n * sizeof(Scalar));
    Matrix m(static_cast<Index>(r), static_cast<Index>(c));
    std::memcpy(m.data(), buf.data() + pos, n * sizeof(Scalar));
    pos += n * sizeof(Scalar);
    return m;
  }
};

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (const std::string& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     const AdamState& state) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);

  auto kv = model.config().to_kv();
  kv.emplace_back("global_step", std::to_string(state.step));
  kv.emplace_back("vocab", join_tokens(model.vocab().tokens()));
  put_u32(buf, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    put_string(buf, k);
    put_string(buf, v);
  }

  const ParameterRegistry& reg = model.registry();
  put_u32(buf, static_cast<std::uint32_t>(reg.aliases().size()));
  for (const auto& [alias, target] : reg.aliases()) {
    put_string(buf, alias);
    put_string(buf, target);
  }

  std::size_t n_tensors = reg.physical().size() + 2 * state.moments.size();
  put_u32(buf, static_cast<std::uint32_t>(n_tensors));
  for (const auto& [name, p] : reg.physical()) {
    put_string(buf, name);
    put_matrix(buf, p->value);
  }
  for (const auto& [name, mv] : state.moments) {
    put_string(buf, "opt.m." + name);
    put_matrix(buf, mv.first);
    put_string(buf, "opt.v." + name);
    put_matrix(buf, mv.second);
  }

  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < 12) throw DataError("checkpoint: truncated file");

  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(buf[buf.size() - 4 + i]))
                  << (8 * i);
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size() - 4)));
  if (crc != stored_crc) throw DataError("checkpoint: CRC mismatch");

  Reader r{buf};
  r.need(8);
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw DataError("checkpoint: bad magic");
  r.pos = 4;
  if (r.u32() != kVersion) throw DataError("checkpoint: unsupported version");

  std::map<std::string, std::string> kv;
  std::uint32_t n_kv = r.u32();
  for (std::uint32_t i = 0; i < n_kv; ++i) {
    std::string k = r.str();
    kv[k] = r.str();
  }
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("checkpoint: missing ") + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  std::int64_t global_step = std::stoll(take("global_step"));
  Vocabulary vocab = Vocabulary::from_tokens(split_tokens(take("vocab")));
  ModelConfig cfg = ModelConfig::from_kv(kv);

  std::map<std::string, std::string> aliases;
  std::uint32_t n_alias = r.u32();
  for (std::uint32_t i = 0; i < n_alias; ++i) {
    std::string a = r.str();
    aliases[a] = r.str();
  }

  LoadedCheckpoint out;
  out.model = std::make_unique<Model>(cfg, std::move(vocab));
  out.state.step = global_step;
  ParameterRegistry& reg = out.model->registry();

  if (aliases != reg.aliases())
    throw DataError("checkpoint: alias table does not match the rebuilt model");

  std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    Matrix m = r.matrix();
    if (name.rfind("opt.m.", 0) == 0) {
      out.state.moments[name.substr(6)].first = std::move(m);
    } else if (name.rfind("opt.v.", 0) == 0) {
      out.state.moments[name.substr(6)].second = std::move(m);
    } else {
      ParamPtr p = reg.at(name);
      if (reg.canonical(name) != name)
        throw DataError("checkpoint: tensor stored under alias " + name);
      if (p->value.rows() != m.rows() || p->value.cols() != m.cols())
        throw DataError("checkpoint: shape mismatch for " + name);
      p->value = std::move(m);
    }
  }
  if (r.pos != buf.size() - 4) throw DataError("checkpoint: trailing bytes");

  for (const auto& [name, mv] : out.state.moments)
    if (mv.first.size() == 0 || mv.second.size() == 0)
      throw DataError("checkpoint: incomplete moments for " + name);
  return out;
}

}  // namespace daanet
