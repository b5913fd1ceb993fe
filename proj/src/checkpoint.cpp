#include "quadrl/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "quadrl/common.hpp"

namespace quadrl {

namespace {

constexpr char kMagic[8] = {'Q', 'U', 'A', 'D', 'R', 'L', 'C', 'K'};
constexpr std::uint32_t kMaxLayers = 64;
constexpr std::uint32_t kMaxWidth = 1u << 16;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  void put_doubles(const double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) put(p[i]);
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  void get_raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  void get_doubles(double* out, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) out[i] = get<double>();
  }
  std::size_t position() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }
  const unsigned char* data() const { return bytes_.data(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
  }
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint32_t activation_code(nn::Activation a) { return a == nn::Activation::Tanh ? 0 : 1; }
nn::Activation activation_from(std::uint32_t c) {
  if (c > 1) throw CheckpointError("checkpoint: unknown activation code");
  return c == 0 ? nn::Activation::Tanh : nn::Activation::Identity;
}

void put_sizes(Writer& w, const std::vector<int>& sizes) {
  w.put(static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) w.put(static_cast<std::uint32_t>(s));
}

std::vector<int> get_sizes(Reader& r) {
  const auto n = r.get<std::uint32_t>();
  if (n < 2 || n > kMaxLayers) throw CheckpointError("checkpoint: bad layer count");
  std::vector<int> sizes(n);
  for (auto& s : sizes) {
    const auto v = r.get<std::uint32_t>();
    if (v == 0 || v > kMaxWidth) throw CheckpointError("checkpoint: bad layer width");
    s = static_cast<int>(v);
  }
  return sizes;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  const ppo::Policy& p = ck.policy;
  if (ck.normalizer.dim() != p.observation_dim()) throw CheckpointError("checkpoint: normalizer/policy mismatch");
  Writer w;
  w.put_raw(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);
  w.put(std::uint32_t{0});
  w.put(ck.iteration);
  w.put(ck.total_steps);
  put_sizes(w, p.actor.sizes());
  put_sizes(w, p.critic.sizes());
  w.put(activation_code(p.actor.hidden_activation()));
  w.put(activation_code(p.actor.output_activation()));
  w.put(activation_code(p.critic.hidden_activation()));
  w.put(activation_code(p.critic.output_activation()));
  w.put(ck.normalizer.count());
  w.put(ck.normalizer.clip());
  w.put_doubles(ck.normalizer.mean().data(), ck.normalizer.dim());
  w.put_doubles(ck.normalizer.m2().data(), ck.normalizer.dim());
  w.put_doubles(p.log_std.data(), p.log_std.size());
  w.put_doubles(p.actor.params().data(), p.actor.num_params());
  w.put_doubles(p.critic.params().data(), p.critic.num_params());
  w.put(fnv1a(w.bytes().data(), w.bytes().size()));
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));
  char magic[8];
  r.get_raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  r.get<std::uint32_t>();
  Checkpoint ck;
  ck.iteration = r.get<std::uint64_t>();
  ck.total_steps = r.get<std::uint64_t>();
  const std::vector<int> actor_sizes = get_sizes(r);
  const std::vector<int> critic_sizes = get_sizes(r);
  if (actor_sizes.front() != critic_sizes.front() || critic_sizes.back() != 1) {
    throw CheckpointError("checkpoint: inconsistent network shapes");
  }
  const nn::Activation ah = activation_from(r.get<std::uint32_t>());
  const nn::Activation ao = activation_from(r.get<std::uint32_t>());
  const nn::Activation ch = activation_from(r.get<std::uint32_t>());
  const nn::Activation co = activation_from(r.get<std::uint32_t>());
  ck.policy.actor = nn::Mlp(actor_sizes, ah, ao);
  ck.policy.critic = nn::Mlp(critic_sizes, ch, co);
  const int obs = actor_sizes.front();
  const int act = actor_sizes.back();

  const double count = r.get<double>();
  const double clip = r.get<double>();
  Eigen::VectorXd mean(obs);
  Eigen::VectorXd m2(obs);
  r.get_doubles(mean.data(), obs);
  r.get_doubles(m2.data(), obs);
  try {
    ck.normalizer.set_state(count, mean, m2, clip);
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  ck.policy.log_std.resize(act);
  r.get_doubles(ck.policy.log_std.data(), act);
  r.get_doubles(ck.policy.actor.params().data(), ck.policy.actor.num_params());
  r.get_doubles(ck.policy.critic.params().data(), ck.policy.critic.num_params());
  const std::size_t body = r.position();
  const auto stored = r.get<std::uint64_t>();
  if (r.position() != r.size()) throw CheckpointError("checkpoint: trailing bytes");
  if (fnv1a(r.data(), body) != stored) throw CheckpointError("checkpoint: checksum mismatch");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    write_checkpoint(out, ck);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

std::string describe_checkpoint(const Checkpoint& ck) {
  std::ostringstream s;
  auto shape = [](const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "-" : "") + std::to_string(v[i]);
    return out;
  };
  s << "format_version: " << kCheckpointVersion << "\n"
    << "iteration: " << ck.iteration << "\n"
    << "total_steps: " << ck.total_steps << "\n"
    << "actor: " << shape(ck.policy.actor.sizes()) << " (" << ck.policy.actor.num_params() << " params)\n"
    << "critic: " << shape(ck.policy.critic.sizes()) << " (" << ck.policy.critic.num_params() << " params)\n"
    << std::setprecision(6) << "log_std: mean " << ck.policy.log_std.mean() << ", min " << ck.policy.log_std.minCoeff()
    << ", max " << ck.policy.log_std.maxCoeff() << "\n"
    << "normalizer: count " << ck.normalizer.count() << ", clip " << ck.normalizer.clip() << "\n";
  return s.str();
}

}  // namespace quadrl
